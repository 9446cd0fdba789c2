"""Model-free smooth fictitious play on a random zero-sum game.

Prints the duality gap and the distance to the regularized value as the
learner runs, then the oracle's values for comparison.
"""

import numpy as np

from smoothfp import GameClass, initial_state, random_ergodic_game, run, solve
from smoothfp.learners import max_duality_gap

beta = 0.1
game = random_ergodic_game(2, (2, 2), GameClass("ZeroSum"), 0.2, np.random.default_rng(7), 0.5)
oracle = solve(game, beta)


def metrics(state, g):
    return {"gap": max_duality_gap(state, g, estimated=False),
            "u_err": float(np.abs(state.u[0] - oracle.u).max())}


init = initial_state(game, beta, rng=1, model_free=True)
trace, final = run(init, game, 200_000, metrics, every=20_000, algorithm="mfp")

print(f"{'step':>8} {'gap':>10} {'u_err':>10}")
for step, gap, err in trace.rows:
    print(f"{int(step):8d} {gap:10.3e} {err:10.3e}")
print("oracle u:", np.round(oracle.u, 6), " learned u:", np.round(final.u[0], 6))

"""Continuous-time dynamics with a learned model on an identical-interest game.

Integrates the model-learning system under three state-rate selections and
prints the fixed-point residuals and the transition-estimate error.
"""

import numpy as np

from smoothfp import (
    BestResponseField,
    GameClass,
    LambdaPolicy,
    equilibrium_residuals,
    initial_continuous_state,
    integrate,
    random_ergodic_game,
)
from smoothfp.regularizers import ENTROPY

beta = 0.1
game = random_ergodic_game(3, (2, 2), GameClass("IdenticalInterest"), 0.2, np.random.default_rng(3), 0.5)

for lam in (LambdaPolicy("constant", 0.2), LambdaPolicy("per_state", 0.2), LambdaPolicy("sinusoidal", 0.2)):
    field = BestResponseField(game, lam=lam, beta=beta)
    _, cs = integrate(field, initial_continuous_state(game, learn_model=True), 100.0, h=0.01)
    res = equilibrium_residuals(game, beta, ENTROPY, cs.x, cs.u)
    q_err = np.abs(cs.q_hat - game.transitions).max()
    print(f"{lam.kind:>10}: rho_val {res.max_val:.2e}  rho_br {res.max_br:.2e}  q_err {q_err:.2e}")

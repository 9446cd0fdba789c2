import numpy as np
import pytest

from smoothfp.game import NO_NOISE, GameClass, NoiseSpec, StochasticGame, matching_pennies, random_ergodic_game
from smoothfp.learners import (
    LearnerState,
    ModelEstimate,
    Schedule,
    Trace,
    advance,
    doubling_trick_update,
    initial_state,
    max_duality_gap,
    mfp_step,
    run,
    sfp_step,
)
from smoothfp.regularizers import ENTROPY, TSALLIS_NONSTEEP

from conftest import one_state_mdp, seeded_game


def test_schedule_rates():
    assert Schedule().rate(0) == 1.0 and Schedule().rate(3) == 0.25
    assert Schedule("constant", 0.2).rate(10**6) == 0.2
    assert Schedule("power", scale=2.0, exponent=0.5).rate(3) == pytest.approx(1.0)
    assert np.allclose(Schedule().rate(np.array([0, 1])), [1.0, 0.5])
    with pytest.raises(ValueError):
        Schedule("power", exponent=1.5)
    with pytest.raises(ValueError):
        Schedule("cosine")


def test_schedule_monotone_and_divergent():
    n = np.arange(100_000)
    for sched in (Schedule(), Schedule("power", scale=0.5, exponent=0.6)):
        r = sched.rate(n)
        assert np.all(np.diff(r) <= 0) and r.min() >= 0
        assert r.sum() > 5.0


def test_doubling_update():
    s = Schedule("doubling", 0.1, threshold=0.1)
    assert doubling_trick_update(s, 0.2) == s
    t = doubling_trick_update(s, 0.05)
    assert t.value == pytest.approx(0.05) and t.threshold == pytest.approx(0.05)
    vals = []
    for _ in range(30):
        s = doubling_trick_update(s, 0.0)
        vals.append(s.value)
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-9


def test_model_estimate_means_and_rows():
    g = random_ergodic_game(2, (2,), "General", 0.5, 0)
    est = ModelEstimate.empty(g)
    est.observe(0, 1, np.array([1.0]), 1)
    est.observe(0, 1, np.array([3.0]), 1)
    assert est.rewards_hat[0, 0, 1] == 2.0
    assert np.array_equal(est.transitions_hat[0, 1], [0.0, 1.0])
    rng = np.random.default_rng(1)
    obs = rng.normal(size=1000)
    for k, o in enumerate(obs):
        est.observe(1, 0, np.array([o]), k % 2)
    assert est.rewards_hat[0, 1, 0] == pytest.approx(obs.mean(), abs=1e-12)
    assert abs(est.transitions_hat.sum(axis=-1) - 1).max() <= 1e-12


def test_sfp_single_action_reaches_reward():
    g = one_state_mdp([0.7], 0.0)
    st = initial_state(g, 0.1, rng=0)
    sfp_step(st, g)
    assert st.u[0, 0] == 0.7
    for _ in range(20):
        sfp_step(st, g)
    assert st.u[0, 0] == 0.7
    g = one_state_mdp([0.7], 0.5)
    st = initial_state(g, 0.1, rng=0)
    advance(st, g, 10_000)
    # u_n - r = prod_k (1 - (1 - delta) / (k + 1)) (u_0 - r), which decays like n^-(1 - delta)
    factor = np.prod(1 - 0.5 / np.arange(1, 10_001))
    assert st.u[0, 0] == pytest.approx(0.7 - 0.7 * factor, abs=1e-12)


def test_profile_update_arithmetic():
    g = one_state_mdp([-100.0, 100.0], 0.5)
    st = LearnerState(step=5, state=0, x=[np.array([[1.0, 0.0]])], u=np.zeros((1, 1)),
                      visits=np.array([1]), schedule=Schedule(), rng=np.random.default_rng(0))
    sfp_step(st, g)
    assert np.array_equal(st.x[0][0], [0.5, 0.5])
    assert st.visits[0] == 2


def test_value_update_running_mean():
    # gamma sequence (1, 3): pure action 0 pays 1, then the profile jumps to action 1 paying 3
    g = one_state_mdp([1.0, 3.0], 0.0)
    st = LearnerState(step=0, state=0, x=[np.array([[1.0, 0.0]])], u=np.ones((1, 1)),
                      visits=np.array([0]), schedule=Schedule(), rng=np.random.default_rng(0), beta=1e-3)
    sfp_step(st, g)
    assert st.u[0, 0] == 1.0 and np.array_equal(st.x[0][0], [0.0, 1.0])
    sfp_step(st, g)
    assert st.u[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_actions_use_pre_update_values():
    g, _ = seeded_game(0, 3, (2, 2), "General")
    a = initial_state(g, 0.1, rng=3)
    b = a.copy()
    sfp_step(a, g)
    # replay: draw from b's pre-step profile with the same uniforms
    from smoothfp.auxiliary import own_action_payoffs, stage_tables
    from smoothfp.regularizers import logit_response
    v = np.random.default_rng(3).random(3)
    tables = stage_tables(g.rewards, g.transitions, g.discount, b.u)
    acts = []
    for i in range(2):
        p = logit_response(own_action_payoffs(tables[i, 0], [x[0] for x in b.x], i, (2, 2)), 0.1)
        acts.append(int(np.searchsorted(np.cumsum(p), v[i], side="right")))
    for i in range(2):
        assert a.x[i][0, acts[i]] == 1.0


def test_mfp_truth_seeded_equals_sfp():
    for cls, counts in [("ZeroSum", (2, 2)), ("General", (2, 3)), ("IdenticalInterest", (2, 2))]:
        g, _ = seeded_game(1, 3, counts, cls)
        a = initial_state(g, 0.1, rng=7)
        b = initial_state(g, 0.1, rng=7, model_free=True, noise=NO_NOISE)
        b.model = ModelEstimate.exact(g)
        for _ in range(300):
            sfp_step(a, g)
            mfp_step(b, g)
        assert np.array_equal(a.u, b.u) and a.state == b.state
        assert all(np.array_equal(p, q) for p, q in zip(a.x, b.x))
        c = initial_state(g, 0.1, rng=7, model_free=True, noise=NO_NOISE)
        c.model = ModelEstimate.exact(g)
        d = initial_state(g, 0.1, rng=7)
        advance(c, g, 5000, "mfp")
        advance(d, g, 5000, "sfp")
        assert np.array_equal(c.u, d.u) and all(np.array_equal(p, q) for p, q in zip(c.x, d.x))


def test_mfp_deterministic_transition_estimate_exact():
    q = np.array([[[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]])
    g = StochasticGame(2, (2,), np.zeros((1, 2, 2)), q, 0.5)
    st = initial_state(g, 0.1, rng=0, model_free=True, noise=NoiseSpec("gaussian", 0.1))
    mfp_step(st, g)
    s, a = 0, int(np.argmax(st.model.visits[0]))
    assert np.array_equal(st.model.transitions_hat[s, a], q[s, a])


def test_mfp_requires_model():
    g = matching_pennies()
    with pytest.raises(ValueError):
        mfp_step(initial_state(g, 0.1, rng=0), g)
    with pytest.raises(ValueError):
        advance(initial_state(g, 0.1, rng=0), g, 10, "mfp")


CASES = [("ZeroSum", (2, 3)), ("IdenticalInterest", (2, 2)), ("General", (2, 2, 2)), (GameClass("Team", (0.0, 0.5, -1.0)), (2, 3, 2))]


@pytest.mark.parametrize("cls,counts", CASES)
@pytest.mark.parametrize("algorithm", ["sfp", "mfp"])
@pytest.mark.parametrize("schedule", [Schedule(), Schedule("power", 0.1, 0.8, 0.7), Schedule(per_visit=True),
                                      Schedule("constant", 0.05)])
def test_compiled_stepper_matches_reference(cls, counts, algorithm, schedule):
    g, _ = seeded_game(2, 3, counts, cls)
    noise = NoiseSpec("bernoulli_shift", 0.3, 0.4) if cls == "General" else NoiseSpec("uniform", 0.2) if isinstance(cls, GameClass) else NoiseSpec("gaussian", 0.2)
    a = initial_state(g, 0.1, schedule=schedule, rng=11, model_free=algorithm == "mfp", noise=noise)
    b = a.copy()
    step = mfp_step if algorithm == "mfp" else sfp_step
    for _ in range(400):
        step(a, g)
    advance(b, g, 123, algorithm)
    advance(b, g, 277, algorithm)
    assert a.state == b.state and a.step == b.step == 400
    assert np.abs(a.u - b.u).max() <= 1e-12
    assert max(np.abs(p - q).max() for p, q in zip(a.x, b.x)) <= 1e-12
    assert np.array_equal(a.visits, b.visits)
    if algorithm == "mfp":
        assert np.array_equal(a.model.visits, b.model.visits)
        assert np.abs(a.model.rewards_hat - b.model.rewards_hat).max() <= 1e-12


def test_generic_regularizer_path_runs():
    g, _ = seeded_game(3, 2, (2, 2), "ZeroSum")
    st = initial_state(g, 0.3, TSALLIS_NONSTEEP, rng=0)
    advance(st, g, 200)
    assert st.step == 200
    assert all(abs(b.sum(axis=1) - 1).max() <= 1e-12 for b in st.x)


def test_simplex_preserved_and_values_bounded():
    g, _ = seeded_game(4, 3, (3, 2), "General")
    st = initial_state(g, 0.1, rng=2)
    bound = 1 + 0.1 * np.log(3) * 2
    for _ in range(20):
        advance(st, g, 5000)
        assert all(abs(b.sum(axis=1) - 1).max() <= 1e-12 and b.min() >= 0 for b in st.x)
        assert np.abs(st.u).max() <= bound


def test_boundedness_with_correct_discount_factor():
    # single player, r = 1, two actions: the fixed point is 1 + beta log 2 / (1 - delta)
    g = one_state_mdp([1.0, 1.0], 0.5)
    st = initial_state(g, 0.1, rng=0)
    advance(st, g, 200_000)
    bound = 1 + 0.1 * np.log(2) / (1 - 0.5)
    assert st.u[0, 0] <= bound + 1e-12
    assert st.u[0, 0] == pytest.approx(bound, abs=5e-3)
    # the naive bound without the 1 / (1 - delta) factor is exceeded
    assert st.u[0, 0] > 1 + 0.1 * np.log(2)


def test_zero_sum_values_are_opposite():
    g, _ = seeded_game(5, 2, (2, 2), "ZeroSum")
    st = initial_state(g, 0.1, rng=1, model_free=True)
    for _ in range(200):
        mfp_step(st, g)
        assert np.array_equal(st.u[0], -st.u[1])
    advance(st, g, 10_000, "mfp")
    assert np.array_equal(st.u[0], -st.u[1])


def test_identical_interest_values_shared():
    g, _ = seeded_game(6, 2, (2, 2), "IdenticalInterest")
    st = initial_state(g, 0.1, rng=1, model_free=True)
    advance(st, g, 10_000, "mfp")
    assert np.array_equal(st.u[0], st.u[1])


def test_unvisited_states_keep_profile_but_values_move():
    g, _ = seeded_game(7, 3, (2, 2), "General")
    st = initial_state(g, 0.1, rng=4)
    for _ in range(50):
        s = st.state
        before_x = [b.copy() for b in st.x]
        before_u = st.u.copy()
        sfp_step(st, g)
        others = [k for k in range(3) if k != s]
        for b, c in zip(before_x, st.x):
            assert np.array_equal(b[others], c[others])
        assert np.all(st.u[:, others] != before_u[:, others])


def test_every_pair_visited_eventually():
    g, _ = seeded_game(8, 3, (2, 2), "General")
    st = initial_state(g, 0.1, rng=5, model_free=True)
    advance(st, g, 100_000, "mfp")
    assert st.model.visits.min() >= 1


def test_run_contract():
    g, _ = seeded_game(9, 2, (2, 2), "ZeroSum")
    init = initial_state(g, 0.1, rng=6)
    cb = lambda s, _g: {"u0": float(s.u[0, 0])}
    with pytest.raises(ValueError):
        run(init, g, 0, cb)
    t1, f1 = run(init, g, 1000, cb, every=100)
    t2, f2 = run(init, g, 1000, cb, every=100)
    assert len(t1) == 10 and t1.rows == t2.rows
    assert init.step == 0  # run works on a copy
    assert list(t1.column("step")) == list(range(100, 1001, 100))


def test_run_doubling_schedule_shrinks_rate():
    g, _ = seeded_game(10, 2, (2, 2), "ZeroSum")
    init = initial_state(g, 0.1, schedule=Schedule("doubling", 0.1, threshold=0.1, check_every=1000), rng=0)
    _, fin = run(init, g, 20_000, every=1000)
    assert fin.schedule.value < 0.1 and fin.schedule.threshold < 0.1
    assert max_duality_gap(fin, g) < fin.schedule.threshold / fin.schedule.shrink


def test_trace_csv_round_trip(tmp_path):
    t = Trace()
    t.append({"step": 1, "a": 0.1, "b": 1 / 3})
    t.append({"step": 2, "a": np.pi, "b": -1e-300})
    t.to_csv(tmp_path / "t.csv")
    back = Trace.from_csv(tmp_path / "t.csv")
    assert back.columns == t.columns and back.rows == [[float(v) for v in r] for r in t.rows]
    with pytest.raises(ValueError):
        t.append({"step": 3, "b": 0.0, "a": 0.0})
    with pytest.raises(ValueError):
        t.append({"step": 2, "a": 0.0, "b": 0.0})
    with pytest.raises(KeyError, match="available"):
        t.column("c")

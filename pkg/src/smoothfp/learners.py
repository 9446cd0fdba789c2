"""Smooth fictitious play along one simulated play of a stochastic game.

Both steppers share one update. At step ``n`` in state ``s``:

1. every player draws an action from its smooth best reply at ``s``, computed
   from the current values and empirical profile;
2. the values of *all* states move towards the regularized auxiliary payoff
   of the empirical profile, at rate ``beta_n``;
3. the empirical profile at ``s`` absorbs the drawn joint action at rate
   ``1 / (visits(s) + 1)``;
4. the next state is drawn from the true kernel.

The model-based stepper (SFP) evaluates auxiliary payoffs with the true
rewards and kernel. The model-free stepper (MFP) uses empirical estimates
instead and updates them with the noisy reward and the observed transition.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from . import _kernels
from .auxiliary import (
    PER_PLAYER_MODE,
    SHARED_MODE,
    ZERO_SUM_MODE,
    component_values,
    joint_probs,
    joint_probs_at,
    matrix_duality_gap,
    own_action_payoffs,
    regularizer_signs,
    stage_tables,
    uniform_profile,
    value_mode,
)
from .game import NO_NOISE, NoiseSpec, StochasticGame, classify
from .regularizers import DEFAULT_BETA, ENTROPY, Regularizer, logit_response, smooth_argmax

SCHEDULE_KINDS = ("harmonic", "constant", "power", "doubling")


@dataclass(frozen=True)
class Schedule:
    """Value-update rate ``beta_s(n)``.

    ``harmonic``: ``1 / (n + 1)``. ``constant``: ``value``. ``power``:
    ``scale / (1 + n) ** exponent``. ``doubling``: constant ``value`` that
    :func:`doubling_trick_update` shrinks, together with ``threshold``, each
    time the duality gap falls below the threshold. With ``per_visit`` the
    counter ``n`` is the visit count of each state instead of the global step.
    """

    kind: str = "harmonic"
    value: float = 0.1
    scale: float = 1.0
    exponent: float = 1.0
    threshold: float = 0.1
    shrink: float = 0.5
    check_every: int = 1000
    per_visit: bool = False

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; choose from {SCHEDULE_KINDS}")
        if self.kind == "power" and not 0.0 < self.exponent <= 1.0:
            raise ValueError("power schedule exponent must lie in (0, 1]")
        if self.value < 0 or self.scale < 0:
            raise ValueError("rates must be nonnegative")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must lie in (0, 1)")

    def rate(self, n):
        if self.kind == "harmonic":
            return 1.0 / (n + 1.0)
        if self.kind == "power":
            return self.scale / (1.0 + n) ** self.exponent
        return self.value * np.ones_like(n, dtype=float) if np.ndim(n) else self.value


def doubling_trick_update(schedule: Schedule, gap: float) -> Schedule:
    """Shrink the constant rate and the threshold once ``gap`` drops below it."""
    if gap < schedule.threshold:
        return replace(schedule, value=schedule.value * schedule.shrink,
                       threshold=schedule.threshold * schedule.shrink)
    return schedule


@dataclass
class ModelEstimate:
    """Empirical rewards and transitions per (state, joint action).

    Unvisited pairs default to reward 0 and a uniform next-state
    distribution. A ``frozen`` estimate ignores observations; it is how a
    model-free learner is seeded with the exact model.
    """

    visits: np.ndarray
    reward_sums: np.ndarray
    transition_counts: np.ndarray
    rewards_hat: np.ndarray
    transitions_hat: np.ndarray
    frozen: bool = False

    @classmethod
    def empty(cls, game: StochasticGame) -> "ModelEstimate":
        S, A, n = game.num_states, game.num_joint_actions, game.num_players
        return cls(
            visits=np.zeros((S, A), dtype=np.int64),
            reward_sums=np.zeros((n, S, A)),
            transition_counts=np.zeros((S, A, S), dtype=np.int64),
            rewards_hat=np.zeros((n, S, A)),
            transitions_hat=np.full((S, A, S), 1.0 / S),
        )

    @classmethod
    def exact(cls, game: StochasticGame) -> "ModelEstimate":
        est = cls.empty(game)
        est.rewards_hat = np.array(game.rewards)
        est.transitions_hat = np.array(game.transitions)
        est.frozen = True
        return est

    def observe(self, s: int, a: int, rewards: np.ndarray, s_next: int) -> None:
        if self.frozen:
            return
        self.visits[s, a] += 1
        k = self.visits[s, a]
        self.reward_sums[:, s, a] += rewards
        self.rewards_hat[:, s, a] = self.reward_sums[:, s, a] / k
        self.transition_counts[s, a, s_next] += 1
        self.transitions_hat[s, a] = self.transition_counts[s, a] / k

    def errors(self, game: StochasticGame) -> tuple[float, float]:
        """Sup-norm errors of the transition and reward estimates."""
        return (float(np.max(np.abs(self.transitions_hat - game.transitions))),
                float(np.max(np.abs(self.rewards_hat - game.rewards))))


@dataclass
class LearnerState:
    """Mutable state of one SFP or MFP run.

    ``x`` holds one ``(num_states, A_i)`` array per player; they are views
    into one padded array so the compiled stepper can update them in place.
    ``u`` always has one row per player. In zero-sum and identical-interest
    modes the rows are driven by a single table: row 0 is updated and copied
    (negated for player 2 in zero-sum) so the relation is exact.
    """

    step: int
    state: int
    x: list
    u: np.ndarray
    visits: np.ndarray
    schedule: Schedule
    rng: np.random.Generator
    beta: float = DEFAULT_BETA
    reg: Regularizer = ENTROPY
    mode: str = PER_PLAYER_MODE
    model: ModelEstimate | None = None
    noise: NoiseSpec = NO_NOISE

    def __post_init__(self):
        blocks = [np.asarray(b, dtype=float) for b in self.x]
        S = blocks[0].shape[0]
        self._xpad = np.zeros((len(blocks), S, max(b.shape[1] for b in blocks)))
        for i, b in enumerate(blocks):
            self._xpad[i, :, : b.shape[1]] = b
        self.x = [self._xpad[i, :, : b.shape[1]] for i, b in enumerate(blocks)]
        self.u = np.array(self.u, dtype=float)
        self.visits = np.array(self.visits, dtype=np.int64)
        self._joint = joint_probs(self.x)
        self._phi = component_values(self.x, self.reg)

    @property
    def values(self) -> np.ndarray:
        """The shared value table, or the per-player table in general mode."""
        return self.u if self.mode == PER_PLAYER_MODE else self.u[0]

    @property
    def noise_draws(self) -> int:
        """Noise variates consumed per step."""
        if self.model is None or self.noise.kind == "none":
            return 0
        return len(self.x) if self.mode == PER_PLAYER_MODE else 1

    def copy(self) -> "LearnerState":
        return LearnerState(
            step=self.step, state=self.state, x=[b.copy() for b in self.x],
            u=self.u.copy(), visits=self.visits.copy(), schedule=self.schedule,
            rng=copy.deepcopy(self.rng), beta=self.beta, reg=self.reg, mode=self.mode,
            model=copy.deepcopy(self.model), noise=self.noise,
        )


def initial_state(
    game: StochasticGame,
    beta: float = DEFAULT_BETA,
    reg: Regularizer = ENTROPY,
    schedule: Schedule | None = None,
    rng: np.random.Generator | int | None = None,
    *,
    model_free: bool = False,
    noise: NoiseSpec | None = None,
    mode: str | None = None,
    start: int = 0,
) -> LearnerState:
    """Uniform profile, zero values, no visits."""
    if mode is None:
        mode = value_mode(classify(game))
    return LearnerState(
        step=0,
        state=start,
        x=uniform_profile(game),
        u=np.zeros((game.num_players, game.num_states)),
        visits=np.zeros(game.num_states, dtype=np.int64),
        schedule=schedule or Schedule(),
        rng=np.random.default_rng(rng),
        beta=beta,
        reg=reg,
        mode=mode,
        model=ModelEstimate.empty(game) if model_free else None,
        noise=(noise if noise is not None else NoiseSpec()) if model_free else NO_NOISE,
    )


def _draw(p: np.ndarray, uniform: float) -> int:
    k = int(np.searchsorted(np.cumsum(p), uniform, side="right"))
    return min(k, p.size - 1)


def _advance(state: LearnerState, game: StochasticGame, rewards, transitions) -> LearnerState:
    rng = state.rng
    s = state.state
    counts = game.action_counts
    n = len(counts)
    x = state.x
    variates = rng.random(n + 1 + state.noise_draws)
    tables = stage_tables(rewards, transitions, game.discount, state.u)

    # 1. actions from the pre-update values and profile
    blocks = [b[s] for b in x]
    actions = []
    for i in range(n):
        g = own_action_payoffs(tables[i, s], blocks, i, counts)
        if state.reg is ENTROPY:
            y = logit_response(g, state.beta)
        else:
            y = smooth_argmax(g, state.beta, state.reg)
        actions.append(_draw(y, variates[i]))

    # 2. synchronous value update over all states
    target = (tables * state._joint).sum(axis=-1)
    target += state.beta * (regularizer_signs(n, state.mode) @ state._phi)
    sched = state.schedule
    rate = sched.rate(state.visits) if sched.per_visit else sched.rate(state.step)
    u = state.u
    if state.mode == PER_PLAYER_MODE:
        u += rate * (target - u)
    else:
        row = u[0] + rate * (target[0] - u[0])
        u[:] = row
        if state.mode == ZERO_SUM_MODE:
            u[1] = -row

    # 3. empirical profile at the current state
    k = state.visits[s] + 1
    for i, a_i in enumerate(actions):
        xs = x[i][s]
        xs *= 1.0 - 1.0 / k
        xs[a_i] += 1.0 / k
    state.visits[s] = k
    new_blocks = [b[s] for b in x]
    state._joint[s] = joint_probs_at(new_blocks)
    state._phi[:, s] = [state.reg.component(b) for b in new_blocks]

    # 4. transition, then (model-free) observation
    a = int(np.ravel_multi_index(actions, counts))
    s_next = int(np.searchsorted(game.transition_cdf[s, a], variates[n], side="right"))
    s_next = min(s_next, game.num_states - 1)
    if state.model is not None:
        obs = game.rewards[:, s, a].copy()
        if state.noise_draws:
            eps = state.noise.from_uniform(variates[n + 1:])
            if state.mode == PER_PLAYER_MODE:
                obs += eps
            elif state.mode == ZERO_SUM_MODE:
                obs += np.array([eps[0], -eps[0]])
            else:
                obs += eps[0]
        state.model.observe(s, a, obs, s_next)

    state.state = s_next
    state.step += 1
    return state


def sfp_step(state: LearnerState, game: StochasticGame) -> LearnerState:
    """One step of model-based smooth fictitious play (in place)."""
    return _advance(state, game, game.rewards, game.transitions)


def mfp_step(state: LearnerState, game: StochasticGame, noise: NoiseSpec | None = None) -> LearnerState:
    """One step of model-free smooth fictitious play (in place).

    ``game`` only supplies the environment: realized rewards and next states.
    The learner's auxiliary payoffs come from ``state.model``.
    """
    if state.model is None:
        raise ValueError("model-free stepping needs a ModelEstimate in the state")
    if noise is not None:
        state.noise = noise
    return _advance(state, game, state.model.rewards_hat, state.model.transitions_hat)


_MODE_CODES = {PER_PLAYER_MODE: _kernels.PER_PLAYER, SHARED_MODE: _kernels.SHARED,
               ZERO_SUM_MODE: _kernels.ZERO_SUM}
_SCHEDULE_CODES = {"harmonic": _kernels.HARMONIC, "constant": _kernels.CONSTANT,
                   "doubling": _kernels.CONSTANT, "power": _kernels.POWER}


def advance(state: LearnerState, game: StochasticGame, steps: int, algorithm: str = "sfp") -> LearnerState:
    """Apply ``steps`` SFP or MFP steps in place.

    Uses the compiled stepper for the entropy regularizer and falls back to
    repeated :func:`sfp_step` / :func:`mfp_step` otherwise. Both paths draw
    the same variates from ``state.rng`` in the same order.
    """
    if algorithm not in ("sfp", "mfp"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    model_free = algorithm == "mfp"
    if model_free and state.model is None:
        raise ValueError("model-free stepping needs a ModelEstimate in the state")
    if steps <= 0:
        return state
    if state.reg is not ENTROPY:
        stepper = mfp_step if model_free else sfp_step
        for _ in range(steps):
            stepper(state, game)
        return state

    n = game.num_players
    variates = state.rng.random((steps, n + 1 + state.noise_draws))
    noise = state.noise.from_uniform(variates[:, n + 1:]) if state.noise_draws else np.zeros((steps, 0))
    if model_free:
        model = state.model
        r_l, q_l = model.rewards_hat, model.transitions_hat
    else:
        model = ModelEstimate.exact(game)
        r_l, q_l = np.asarray(game.rewards), np.asarray(game.transitions)
    sched = state.schedule
    s, step = _kernels.sfp_entropy_steps(
        steps, state.state, state.step, state._xpad, state.u, state.visits,
        state._joint, state._phi, np.array(game.action_counts, dtype=np.int64),
        _joint_action_table(game), r_l, q_l, np.asarray(game.rewards), game.transition_cdf,
        game.discount, state.beta, _MODE_CODES[state.mode],
        regularizer_signs(n, state.mode), _SCHEDULE_CODES[sched.kind], sched.value,
        sched.scale, sched.exponent, sched.per_visit, variates, noise,
        model_free, model.frozen, model.visits, model.reward_sums,
        model.transition_counts, model.rewards_hat, model.transitions_hat,
    )
    state.state, state.step = int(s), int(step)
    return state


def _joint_action_table(game: StochasticGame) -> np.ndarray:
    return np.array(np.unravel_index(np.arange(game.num_joint_actions), game.action_counts),
                    dtype=np.int64).T.copy()


def max_duality_gap(state: LearnerState, game: StochasticGame, estimated: bool = True) -> float:
    """Largest regularized duality gap over states, seen by the learner."""
    if state.mode != ZERO_SUM_MODE:
        raise ValueError("duality gap needs zero-sum mode")
    if estimated and state.model is not None:
        r, q = state.model.rewards_hat, state.model.transitions_hat
    else:
        r, q = game.rewards, game.transitions
    tables = stage_tables(r, q, game.discount, state.u)
    gaps = [
        matrix_duality_gap(tables[0, s].reshape(game.action_counts), state.x[0][s],
                           state.x[1][s], state.beta, state.reg)[0]
        for s in range(game.num_states)
    ]
    return float(max(gaps))


class Trace:
    """Metric rows with a fixed column order."""

    def __init__(self, columns: Iterable[str] | None = None):
        self.columns = list(columns) if columns is not None else None
        self.rows: list[list[float]] = []

    def append(self, row: dict) -> None:
        if self.columns is None:
            self.columns = list(row)
        elif list(row) != self.columns:
            raise ValueError("metric row does not match the trace schema")
        if self.rows and row[self.columns[0]] <= self.rows[-1][0]:
            raise ValueError("trace time column must increase strictly")
        self.rows.append([row[c] for c in self.columns])

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if self.columns is None or name not in self.columns:
            raise KeyError(f"unknown metric {name!r}; available: {self.columns}")
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns or [])
            for row in self.rows:
                writer.writerow([_csv_number(v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            trace = cls(header)
            trace.rows = [[float(v) for v in row] for row in reader]
        return trace


def _csv_number(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


MetricCallback = Callable[[LearnerState, StochasticGame], dict]


def run(
    initial: LearnerState,
    game: StochasticGame,
    steps: int,
    callbacks: MetricCallback | list[MetricCallback] | None = None,
    every: int = 100,
    algorithm: str = "sfp",
) -> tuple[Trace, LearnerState]:
    """Advance a copy of ``initial`` by ``steps`` steps.

    Callbacks are called after every ``every`` steps; their dicts are merged
    into one trace row, prefixed by the step counter. A doubling schedule is
    checked against the learner's own duality gap every
    ``schedule.check_every`` steps. Returns the trace and the final state.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if every < 1:
        raise ValueError("metric cadence must be at least 1")
    if algorithm not in ("sfp", "mfp"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if callable(callbacks):
        callbacks = [callbacks]
    callbacks = callbacks or []
    state = initial.copy()
    trace = Trace()
    doubling = state.schedule.kind == "doubling"
    check = state.schedule.check_every if doubling else steps + 1
    end = state.step + steps
    while state.step < end:
        nxt = min(end, (state.step // every + 1) * every)
        if doubling:
            nxt = min(nxt, (state.step // check + 1) * check)
        advance(state, game, nxt - state.step, algorithm)
        if doubling and state.step % check == 0:
            state.schedule = doubling_trick_update(state.schedule, max_duality_gap(state, game))
        if state.step % every == 0 or state.step == end:
            row = {"step": state.step}
            for cb in callbacks:
                row.update(cb(state, game))
            trace.append(row)
    return trace, state

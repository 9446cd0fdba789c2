"""Finite discounted stochastic games: representation, checks, sampling, I/O.

Joint actions are flattened row-major over players in declared order, so for
two players with ``A1`` and ``A2`` actions the pair ``(a1, a2)`` lives at
index ``a1 * A2 + a2``. Reward tensors are indexed ``[player, state, joint]``
and transition tensors ``[state, joint, next_state]``.
"""

from __future__ import annotations

import json
from importlib import resources
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtri

ROW_SUM_TOL = 1e-12
CLASS_TOL = 1e-12

ZERO_SUM = "ZeroSum"
IDENTICAL_INTEREST = "IdenticalInterest"
TEAM = "Team"
GENERAL = "General"
GAME_CLASSES = (ZERO_SUM, IDENTICAL_INTEREST, TEAM, GENERAL)


class GameFormatError(ValueError):
    """Raised when a game file cannot be parsed into a game."""


@dataclass(frozen=True)
class PlayerSpec:
    action_count: int


@dataclass(frozen=True, eq=False)
class StochasticGame:
    """A finite discounted stochastic game.

    Arrays are copied and made read-only on construction. Shapes are checked
    here; numerical invariants (row sums, finiteness) are left to
    :func:`validate` so that malformed games can still be inspected.
    """

    num_states: int
    action_counts: tuple[int, ...]
    rewards: np.ndarray
    transitions: np.ndarray
    discount: float

    def __post_init__(self):
        counts = tuple(int(c) for c in self.action_counts)
        if self.num_states < 1:
            raise ValueError("num_states must be positive")
        if not counts or min(counts) < 1:
            raise ValueError("every player needs at least one action")
        n_joint = int(np.prod(counts))
        rewards = np.array(self.rewards, dtype=float)
        transitions = np.array(self.transitions, dtype=float)
        if rewards.shape != (len(counts), self.num_states, n_joint):
            raise ValueError(
                f"rewards shape {rewards.shape} != "
                f"{(len(counts), self.num_states, n_joint)}"
            )
        if transitions.shape != (self.num_states, n_joint, self.num_states):
            raise ValueError(
                f"transitions shape {transitions.shape} != "
                f"{(self.num_states, n_joint, self.num_states)}"
            )
        rewards.flags.writeable = False
        transitions.flags.writeable = False
        object.__setattr__(self, "action_counts", counts)
        object.__setattr__(self, "num_states", int(self.num_states))
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_players(self) -> int:
        return len(self.action_counts)

    @property
    def num_joint_actions(self) -> int:
        return int(np.prod(self.action_counts))

    @property
    def players(self) -> list[PlayerSpec]:
        return [PlayerSpec(c) for c in self.action_counts]

    @property
    def reward_bound(self) -> float:
        """Sup-norm of the reward tensor."""
        return float(np.max(np.abs(self.rewards)))

    def joint_index(self, actions: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(actions), self.action_counts))

    def joint_actions(self, index: int) -> tuple[int, ...]:
        return tuple(int(a) for a in np.unravel_index(index, self.action_counts))

    @cached_property
    def transition_cdf(self) -> np.ndarray:
        cdf = np.cumsum(self.transitions, axis=-1)
        cdf[..., -1] = 1.0
        return cdf

    def __eq__(self, other):
        if not isinstance(other, StochasticGame):
            return NotImplemented
        return (
            self.num_states == other.num_states
            and self.action_counts == other.action_counts
            and self.discount == other.discount
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.transitions, other.transitions)
        )

    __hash__ = object.__hash__


@dataclass(frozen=True)
class GameClass:
    tag: str
    constants: tuple[float, ...] = ()

    def __post_init__(self):
        if self.tag not in GAME_CLASSES:
            raise ValueError(f"unknown game class {self.tag!r}; expected one of {GAME_CLASSES}")

    def __str__(self):
        if self.tag == TEAM:
            return f"{TEAM}(c={list(self.constants)})"
        return self.tag


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean payoff perturbation.

    ``kind`` is one of ``none``, ``gaussian`` (``scale`` is the standard
    deviation), ``uniform`` (``scale`` is the half-width) or
    ``bernoulli_shift`` (adds ``scale * (B - prob)`` with ``B ~ Bernoulli(prob)``).
    """

    kind: str = "gaussian"
    scale: float = 0.1
    prob: float = 0.5

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "uniform", "bernoulli_shift"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("noise scale must be nonnegative")
        if not 0.0 < self.prob < 1.0:
            raise ValueError("bernoulli prob must lie in (0, 1)")

    @property
    def variance(self) -> float:
        if self.kind == "gaussian":
            return self.scale**2
        if self.kind == "uniform":
            return self.scale**2 / 3.0
        if self.kind == "bernoulli_shift":
            return self.scale**2 * self.prob * (1.0 - self.prob)
        return 0.0

    def from_uniform(self, v):
        """Map uniform variates in [0, 1) to noise by inverse CDF.

        Every draw consumes exactly one uniform, so a run's random stream is
        the same whether variates are drawn one step at a time or in blocks.
        """
        v = np.asarray(v, dtype=float)
        if self.kind == "none":
            out = np.zeros_like(v)
        elif self.kind == "gaussian":
            out = self.scale * ndtri(np.clip(v, 1e-300, None))
        elif self.kind == "uniform":
            out = self.scale * (2.0 * v - 1.0)
        else:
            out = self.scale * ((v < self.prob) - self.prob)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "none":
            return np.zeros(size) if size is not None else 0.0
        return self.from_uniform(rng.random(size))


NO_NOISE = NoiseSpec("none", 0.0)


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    rule: str
    index: tuple[int, ...]
    message: str

    def __str__(self):
        return f"{self.rule} at {self.index}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


def validate(game: StochasticGame) -> ValidationReport:
    """List every violated game invariant with its tensor index."""
    out = []
    if not 0.0 < game.discount < 1.0:
        out.append(Violation("discount", (), f"discount {game.discount} not in (0, 1)"))
    for idx in zip(*np.nonzero(~np.isfinite(game.rewards))):
        out.append(Violation("reward_finite", tuple(int(i) for i in idx), "reward is not finite"))
    q = game.transitions
    for idx in zip(*np.nonzero(~np.isfinite(q))):
        out.append(Violation("transition_finite", tuple(int(i) for i in idx), "transition is not finite"))
    for idx in zip(*np.nonzero(q < 0)):
        out.append(
            Violation("transition_nonnegative", tuple(int(i) for i in idx),
                      f"negative probability {q[idx]}")
        )
    sums = q.sum(axis=-1)
    bad = ~(np.abs(sums - 1.0) <= ROW_SUM_TOL)
    for s, a in zip(*np.nonzero(bad)):
        out.append(
            Violation("transition_row_sum", (int(s), int(a)),
                      f"row sums to {float(sums[s, a]):.17g}")
        )
    return ValidationReport(out)


# -- classification -----------------------------------------------------------


def classify(game: StochasticGame, tol: float = CLASS_TOL) -> GameClass:
    """Return the most specific payoff class of ``game``.

    Two-player zero-sum structure takes precedence, so a game whose rewards
    are identically zero is reported as zero-sum.
    """
    r = game.rewards
    if game.num_players == 2 and np.all(np.abs(r[0] + r[1]) <= tol):
        return GameClass(ZERO_SUM)
    diffs = r - r[0]
    constants = []
    for d in diffs:
        c = float(d.flat[0])
        if not np.all(np.abs(d - c) <= tol):
            return GameClass(GENERAL)
        constants.append(c)
    if all(abs(c) <= tol for c in constants):
        return GameClass(IDENTICAL_INTEREST)
    return GameClass(TEAM, tuple(constants))


# -- ergodicity ---------------------------------------------------------------


@dataclass(frozen=True)
class ErgodicityReport:
    certified: bool
    horizon: int | None
    support: np.ndarray

    def __str__(self):
        if self.certified:
            return f"ergodic: certified T={self.horizon}"
        return "ergodic: not certified"


def check_ergodicity(game: StochasticGame) -> ErgodicityReport:
    """Certify ergodicity via the common-support matrix.

    ``B[s, s'] = 1`` iff every joint action moves ``s`` to ``s'`` with positive
    probability. If some power ``B^T`` with ``T <= S**2`` is entrywise positive,
    every state is reachable from every state in exactly ``T`` steps whatever
    actions are played. Failing this test does not prove the game is not
    ergodic.
    """
    support = np.all(game.transitions > 0, axis=1)
    power = support.copy()
    for t in range(1, game.num_states**2 + 1):
        if power.all():
            return ErgodicityReport(True, t, support)
        power = (power.astype(np.int64) @ support.astype(np.int64)) > 0
    return ErgodicityReport(False, None, support)


# -- sampling -----------------------------------------------------------------


def _check_index(name, value, bound):
    if not 0 <= value < bound:
        raise IndexError(f"{name} index {value} out of range [0, {bound})")


def sample_transition(game: StochasticGame, s: int, a: int, rng: np.random.Generator) -> int:
    """Draw the next state from ``q_s(a)`` using a single uniform variate."""
    _check_index("state", s, game.num_states)
    _check_index("joint action", a, game.num_joint_actions)
    return int(np.searchsorted(game.transition_cdf[s, a], rng.random(), side="right"))


def sample_reward(game: StochasticGame, noise: NoiseSpec, i: int, s: int, a: int,
                  rng: np.random.Generator) -> float:
    _check_index("player", i, game.num_players)
    _check_index("state", s, game.num_states)
    _check_index("joint action", a, game.num_joint_actions)
    return float(game.rewards[i, s, a] + noise.sample(rng))


# -- generation ---------------------------------------------------------------


def random_ergodic_game(
    num_states: int,
    action_counts: Sequence[int],
    game_class: GameClass | str = GENERAL,
    mixing: float = 0.5,
    rng: np.random.Generator | int | None = None,
    discount: float = 0.5,
) -> StochasticGame:
    """Random game whose every transition row mixes in ``mixing`` of uniform.

    Rewards are drawn uniformly in [-1, 1] and then symmetrized to the
    requested class. Team constants come from ``game_class.constants`` (one
    per player, the first is ignored and treated as 0).
    """
    if isinstance(game_class, str):
        game_class = GameClass(game_class)
    if not 0.0 < mixing <= 1.0:
        raise ValueError("mixing must lie in (0, 1]")
    if num_states < 1 or not action_counts or min(action_counts) < 1:
        raise ValueError("invalid dimensions")
    rng = np.random.default_rng(rng)
    n = len(action_counts)
    n_joint = int(np.prod(action_counts))

    raw = rng.dirichlet(np.ones(num_states), size=(num_states, n_joint))
    transitions = (1.0 - mixing) * raw + mixing / num_states
    transitions /= transitions.sum(axis=-1, keepdims=True)

    base = rng.uniform(-1.0, 1.0, size=(n, num_states, n_joint))
    if game_class.tag == ZERO_SUM:
        if n != 2:
            raise ValueError("zero-sum games need exactly two players")
        rewards = np.stack([base[0], -base[0]])
    elif game_class.tag == IDENTICAL_INTEREST:
        rewards = np.broadcast_to(base[0], base.shape).copy()
    elif game_class.tag == TEAM:
        if len(game_class.constants) != n:
            raise ValueError(f"a Team game needs {n} constants, got {len(game_class.constants)}")
        c = np.zeros(n)
        c[1:] = np.asarray(game_class.constants, dtype=float)[1:n]
        rewards = base[0][None] + c[:, None, None]
    else:
        rewards = base
    return StochasticGame(num_states, tuple(action_counts), rewards, transitions, discount)


def matching_pennies(discount: float = 0.5) -> StochasticGame:
    """Matching pennies repeated on a single absorbing state."""
    r1 = np.array([[1.0, -1.0, -1.0, 1.0]])
    return StochasticGame(1, (2, 2), np.stack([r1, -r1]), np.ones((1, 4, 1)), discount)


def swap_chain(discount: float = 0.5) -> StochasticGame:
    """Single-player two-state chain that deterministically alternates states."""
    q = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    return StochasticGame(2, (1,), np.zeros((1, 2, 1)), q, discount)


# -- persistence --------------------------------------------------------------

_FIELDS = ("num_states", "players", "discount", "rewards", "transitions")


def _fmt(value) -> str:
    if isinstance(value, np.ndarray):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return format(float(value), ".17g")


def dumps(game: StochasticGame) -> str:
    """Serialize a game as JSON text with 17 significant digits per number."""
    players = ", ".join(f'{{"action_count": {c}}}' for c in game.action_counts)
    return (
        "{\n"
        f'  "num_states": {game.num_states},\n'
        f'  "players": [{players}],\n'
        f'  "discount": {_fmt(game.discount)},\n'
        f'  "rewards": {_fmt(game.rewards)},\n'
        f'  "transitions": {_fmt(game.transitions)}\n'
        "}\n"
    )


def loads(text: str) -> StochasticGame:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise GameFormatError("top-level value must be an object")
    for name in _FIELDS:
        if name not in obj:
            raise GameFormatError(f"missing field {name!r}")
    try:
        counts = tuple(int(p["action_count"]) for p in obj["players"])
    except (TypeError, KeyError) as exc:
        raise GameFormatError("field 'players' must be a list of {action_count} objects") from exc
    try:
        rewards = np.array(obj["rewards"], dtype=float)
        transitions = np.array(obj["transitions"], dtype=float)
        return StochasticGame(int(obj["num_states"]), counts, rewards, transitions,
                              float(obj["discount"]))
    except (TypeError, ValueError) as exc:
        raise GameFormatError(f"malformed tensor field: {exc}") from exc


def save(game: StochasticGame, path) -> None:
    Path(path).write_text(dumps(game), encoding="utf-8")


def load(path) -> StochasticGame:
    return loads(Path(path).read_text(encoding="utf-8"))


FIXTURES = ("matching_pennies", "swap_chain", "single_player_logit", "three_state_zero_sum")


def fixture(name: str) -> StochasticGame:
    """Load one of the bundled example games by name."""
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    text = resources.files(__package__).joinpath("data", f"{name}.json").read_text(encoding="utf-8")
    return loads(text)

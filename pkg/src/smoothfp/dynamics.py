"""Continuous-time smooth best-response dynamics.

The state is ``(x, u)`` and, for the model-learning variant, the estimates
``(q_hat, r_hat)``. With ``br`` the players' smooth best replies at each
state::

    u'_s = beta(t) * (f_s(x_s) + temp * h(x_s) - u_s)
    x'_s = lam_s(t) * (br_s(u, x_s) - x_s)

and, when the model is learned, every estimate moves towards the truth at
rate ``lam_s(t) * x~_s(b)``, where ``x~_s`` is the product of the players'
smooth best replies. Payoffs and replies then use the estimates.

``lam_s(t)`` is a selection from ``[lam_0, 1]`` chosen by a
:class:`LambdaPolicy`; the convergence results hold for any such selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import softmax

from . import _kernels
from .auxiliary import (
    ZERO_SUM_MODE,
    component_values,
    joint_probs,
    regularizer_signs,
    stage_tables,
    uniform_profile,
    value_mode,
)
from .game import StochasticGame, classify
from .learners import Trace
from .regularizers import DEFAULT_BETA, ENTROPY, Regularizer, smooth_argmax

GUARD_TOL = 1e-9
DEFAULT_FLOOR = 0.2
LAMBDA_KINDS = ("constant", "one", "per_state", "sinusoidal")
RATE_KINDS = ("harmonic", "constant", "power")


class IntegrationError(RuntimeError):
    """Non-finite state, or a simplex violation too large for the guard."""


@dataclass
class ContinuousState:
    """Point of the continuous-time system.

    ``x`` is a list of ``(num_states, A_i)`` arrays, ``u`` has shape
    ``(num_players, num_states)``. ``q_hat`` and ``r_hat`` are ``None`` for
    the exact-model system. The same class carries time derivatives, in
    which case ``t`` is the time at which they were evaluated.
    """

    t: float
    x: list
    u: np.ndarray
    q_hat: np.ndarray | None = None
    r_hat: np.ndarray | None = None

    @property
    def learns_model(self) -> bool:
        return self.q_hat is not None


def initial_continuous_state(game: StochasticGame, learn_model: bool = False, u0=None) -> ContinuousState:
    """Uniform profile, ``u0`` (default zero) and, optionally, uninformed estimates."""
    u = np.zeros((game.num_players, game.num_states)) if u0 is None else np.array(u0, dtype=float)
    if u.ndim == 1:
        u = np.tile(u, (game.num_players, 1))
    cs = ContinuousState(0.0, uniform_profile(game), u)
    if learn_model:
        S, A = game.num_states, game.num_joint_actions
        cs.q_hat = np.full((S, A, S), 1.0 / S)
        cs.r_hat = np.zeros((game.num_players, S, A))
    return cs


@dataclass(frozen=True)
class LambdaPolicy:
    """Selection ``lam_s(t)`` in ``[floor, 1]``.

    ``constant``: ``floor`` everywhere. ``one``: 1 everywhere. ``per_state``:
    fixed ``values`` (default: evenly spread from ``floor`` to 1).
    ``sinusoidal``: oscillates over ``[floor, 1]`` with period ``period``,
    phase-shifted across states.
    """

    kind: str = "constant"
    floor: float = DEFAULT_FLOOR
    values: tuple = ()
    period: float = 10.0

    def __post_init__(self):
        if self.kind not in LAMBDA_KINDS:
            raise ValueError(f"unknown lambda policy {self.kind!r}; choose from {LAMBDA_KINDS}")
        if not 0.0 < self.floor <= 1.0:
            raise ValueError("lambda floor must lie in (0, 1]")
        if any(not self.floor <= v <= 1.0 for v in self.values):
            raise ValueError("per-state lambdas must lie in [floor, 1]")
        if self.period <= 0:
            raise ValueError("period must be positive")

    def __call__(self, t: float, num_states: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(num_states, self.floor)
        if self.kind == "one":
            return np.ones(num_states)
        if self.kind == "per_state":
            if self.values:
                if len(self.values) != num_states:
                    raise ValueError(f"need {num_states} per-state lambdas, got {len(self.values)}")
                return np.array(self.values, dtype=float)
            return np.linspace(self.floor, 1.0, num_states) if num_states > 1 else np.ones(1)
        phase = 2.0 * np.pi * np.arange(num_states) / num_states
        wave = 0.5 * (1.0 + np.sin(2.0 * np.pi * t / self.period + phase))
        return self.floor + (1.0 - self.floor) * wave


@dataclass(frozen=True)
class RateFunction:
    """Value rate ``beta(t)``: ``1/(t+1)``, ``value``, or ``scale/(1+t)**exponent``."""

    kind: str = "harmonic"
    value: float = 0.1
    scale: float = 1.0
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise ValueError(f"unknown rate {self.kind!r}; choose from {RATE_KINDS}")
        if self.kind == "power" and not 0.0 < self.exponent <= 1.0:
            raise ValueError("power rate exponent must lie in (0, 1]")
        if self.value < 0 or self.scale < 0:
            raise ValueError("rates must be nonnegative")

    def __call__(self, t: float) -> float:
        if self.kind == "harmonic":
            return 1.0 / (t + 1.0)
        if self.kind == "power":
            return self.scale / (1.0 + t) ** self.exponent
        return self.value


def action_payoffs(table: np.ndarray, x: Sequence[np.ndarray], i: int, counts) -> np.ndarray:
    """Payoff of each of player ``i``'s actions at every state, shape ``(S, A_i)``.

    ``table`` is one player's stage table ``(S, A)``.
    """
    t = table.reshape((table.shape[0],) + tuple(counts))
    for j in range(len(counts) - 1, -1, -1):
        if j != i:
            shape = [1] * t.ndim
            shape[0], shape[j + 1] = x[j].shape
            t = (t * x[j].reshape(shape)).sum(axis=j + 1)
    return t


def smooth_replies(tables: np.ndarray, x, counts, beta: float, reg: Regularizer) -> list[np.ndarray]:
    """Every player's smooth best reply at every state."""
    out = []
    for i in range(len(counts)):
        g = action_payoffs(tables[i], x, i, counts)
        if reg is ENTROPY:
            out.append(softmax(g / beta, axis=1))
        else:
            out.append(np.array([smooth_argmax(row, beta, reg) for row in g]))
    return out


@dataclass
class BestResponseField:
    """Vector field of the continuous-time dynamics.

    Uses the true model when the state carries no estimates and the
    estimates otherwise. ``beta`` is the regularization temperature, ``rate``
    the value rate ``beta(t)``.
    """

    game: StochasticGame
    rate: RateFunction = field(default_factory=RateFunction)
    lam: LambdaPolicy = field(default_factory=LambdaPolicy)
    reg: Regularizer = ENTROPY
    beta: float = DEFAULT_BETA
    mode: str | None = None

    def __post_init__(self):
        if self.mode is None:
            self.mode = value_mode(classify(self.game))
        self._signs = regularizer_signs(self.game.num_players, self.mode)

    def flat(self, t: float, y: np.ndarray, like: ContinuousState) -> np.ndarray:
        """Derivative of a packed state laid out like ``like``.

        Compiled for the entropy regularizer; other regularizers go through
        :meth:`__call__`.
        """
        if self.reg is not ENTROPY:
            return pack(self(unpack(t, y, like)))
        g = self.game
        if not hasattr(self, "_layout"):
            sizes = [b.size for b in like.x]
            x_off = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
            u_off = int(sum(sizes))
            q_off = u_off + like.u.size
            self._layout = (np.array(g.action_counts, dtype=np.int64), x_off, u_off, q_off,
                            q_off + g.num_states * g.num_joint_actions * g.num_states,
                            np.array(np.unravel_index(np.arange(g.num_joint_actions), g.action_counts),
                                     dtype=np.int64).T.copy(),
                            np.ascontiguousarray(g.rewards), np.ascontiguousarray(g.transitions))
        counts, x_off, u_off, q_off, r_off, jact, r_true, q_true = self._layout
        return _kernels.brd_entropy_rhs(
            y, np.empty_like(y), counts, x_off, u_off, q_off, r_off, jact, r_true, q_true,
            g.discount, self.beta, float(self.rate(t)), self.lam(t, g.num_states),
            self._signs, like.learns_model)

    def __call__(self, cs: ContinuousState) -> ContinuousState:
        g = self.game
        counts = g.action_counts
        if cs.learns_model:
            r, q = cs.r_hat, cs.q_hat
        else:
            r, q = g.rewards, g.transitions
        tables = stage_tables(r, q, g.discount, cs.u)
        joint = joint_probs(cs.x)
        target = (tables * joint).sum(axis=-1)
        target += self.beta * (self._signs @ component_values(cs.x, self.reg))
        du = self.rate(cs.t) * (target - cs.u)
        lam = self.lam(cs.t, g.num_states)
        br = smooth_replies(tables, cs.x, counts, self.beta, self.reg)
        dx = [lam[:, None] * (b - xi) for b, xi in zip(br, cs.x)]
        if not cs.learns_model:
            return ContinuousState(cs.t, dx, du)
        weight = lam[:, None] * joint_probs(br)
        dq = weight[:, :, None] * (g.transitions - cs.q_hat)
        dr = weight[None] * (g.rewards - cs.r_hat)
        return ContinuousState(cs.t, dx, du, dq, dr)


def sbrd_rhs(cs: ContinuousState, game: StochasticGame, rate: RateFunction | None = None,
             lam: LambdaPolicy | None = None, reg: Regularizer = ENTROPY,
             beta: float = DEFAULT_BETA, mode: str | None = None) -> ContinuousState:
    """Time derivative of the exact-model dynamics; estimates, if any, are ignored."""
    exact = ContinuousState(cs.t, cs.x, cs.u)
    return BestResponseField(game, rate or RateFunction(), lam or LambdaPolicy(), reg, beta, mode)(exact)


def mbrd_rhs(cs: ContinuousState, game: StochasticGame, rate: RateFunction | None = None,
             lam: LambdaPolicy | None = None, reg: Regularizer = ENTROPY,
             beta: float = DEFAULT_BETA, mode: str | None = None) -> ContinuousState:
    """Time derivative of the model-learning dynamics."""
    if not cs.learns_model:
        raise ValueError("model-learning dynamics need q_hat and r_hat in the state")
    return BestResponseField(game, rate or RateFunction(), lam or LambdaPolicy(), reg, beta, mode)(cs)


# -- flat packing for the integrators ------------------------------------------------


def pack(cs: ContinuousState) -> np.ndarray:
    parts = [b.ravel() for b in cs.x] + [np.asarray(cs.u).ravel()]
    if cs.learns_model:
        parts += [cs.q_hat.ravel(), cs.r_hat.ravel()]
    return np.concatenate(parts)


def unpack(t: float, y: np.ndarray, like: ContinuousState) -> ContinuousState:
    k = 0
    x = []
    for b in like.x:
        x.append(y[k: k + b.size].reshape(b.shape))
        k += b.size
    u = y[k: k + like.u.size].reshape(like.u.shape)
    k += like.u.size
    if not like.learns_model:
        return ContinuousState(t, x, u)
    q = y[k: k + like.q_hat.size].reshape(like.q_hat.shape)
    k += like.q_hat.size
    r = y[k:].reshape(like.r_hat.shape)
    return ContinuousState(t, x, u, q, r)


def _guard(cs: ContinuousState) -> int:
    """Clamp tiny negatives and renormalize simplex blocks; count activations."""
    hits = 0
    blocks = list(cs.x) + ([cs.q_hat] if cs.learns_model else [])
    for b in blocks:
        low = b.min()
        drift = np.abs(b.sum(axis=-1) - 1.0).max()
        if low < -GUARD_TOL or drift > GUARD_TOL:
            raise IntegrationError(
                f"simplex violated at t={cs.t:.6g}: min entry {low:.3e}, sum drift {drift:.3e}; "
                "reduce the step size")
        if low < 0.0:
            hits += 1
            np.clip(b, 0.0, None, out=b)
        b /= b.sum(axis=-1, keepdims=True)
    return hits


class ContinuousTrace(Trace):
    """Trace with time column ``t`` plus the number of guard activations."""

    def __init__(self, columns=None):
        super().__init__(columns)
        self.guard_activations = 0


ContinuousCallback = Callable[[ContinuousState, BestResponseField], dict]


def integrate(
    rhs: BestResponseField | Callable[[ContinuousState], ContinuousState],
    initial: ContinuousState,
    t_end: float,
    h: float = 0.01,
    method: str = "rk4",
    callbacks: ContinuousCallback | list[ContinuousCallback] | None = None,
    every: int = 100,
) -> tuple[ContinuousTrace, ContinuousState]:
    """Fixed-step integration from ``initial.t`` to ``t_end``.

    After each step the simplex blocks pass through a guard that clamps
    negatives at 0 and renormalizes; a violation larger than ``GUARD_TOL``
    raises instead. Callbacks are evaluated every ``every`` steps and at the
    final time. Returns the trace and the final state.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    span = t_end - initial.t
    if span < h:
        raise ValueError(f"integration span {span} is shorter than the step {h}")
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown method {method!r}; choose 'euler' or 'rk4'")
    if callable(callbacks):
        callbacks = [callbacks]
    callbacks = callbacks or []

    if isinstance(rhs, BestResponseField):
        def f(t, y):
            return rhs.flat(t, y, initial)
    else:
        def f(t, y):
            return pack(rhs(unpack(t, y, initial)))

    nsteps = int(np.floor(span / h + 1e-9))
    times = initial.t + h * np.arange(1, nsteps + 1)
    if t_end - times[-1] > 1e-12:
        times = np.append(times, t_end)
    trace = ContinuousTrace()
    y = pack(initial).copy()
    t = initial.t
    cs = unpack(t, y, initial)
    for k, t_next in enumerate(times, start=1):
        dt = t_next - t
        if method == "euler":
            y = y + dt * f(t, y)
        else:
            k1 = f(t, y)
            k2 = f(t + dt / 2, y + dt / 2 * k1)
            k3 = f(t + dt / 2, y + dt / 2 * k2)
            k4 = f(t + dt, y + dt * k3)
            y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = float(t_next)
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y))[0])
            raise IntegrationError(f"non-finite state at t={t:.6g} (component {bad})")
        cs = unpack(t, y, initial)
        trace.guard_activations += _guard(cs)
        if callbacks and (k % every == 0 or k == len(times)):
            row = {"t": t}
            for cb in callbacks:
                row.update(cb(cs, rhs))
            trace.append(row)
    final = unpack(t, y.copy(), initial)
    return trace, final


def scalar_field(fn: Callable[[float, np.ndarray], np.ndarray]):
    """Adapt a plain ODE ``y' = fn(t, y)`` on ``u`` alone for :func:`integrate`."""

    def rhs(cs: ContinuousState) -> ContinuousState:
        return ContinuousState(cs.t, [np.zeros_like(b) for b in cs.x], fn(cs.t, cs.u))

    return rhs

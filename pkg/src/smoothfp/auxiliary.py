"""The auxiliary (Shapley) game at each state and its regularized solutions.

Given continuation values ``u``, player ``i`` at state ``s`` faces the one-shot
payoff ``(1 - delta) r^i_s(a) + delta * sum_s' q_s(a)(s') u^i(s')``. Stacking
these over joint actions gives the *stage table* ``G[i, s, a]`` that every
other computation contracts against mixed actions.

Profiles are lists with one array of shape ``(num_states, A_i)`` per player.
Value tables have shape ``(num_players, num_states)``; a 1-D table is
interpreted according to the value mode (``zero_sum``: player 2 holds
``-u``; ``shared`` and ``per_player``: every player starts from ``u``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .game import IDENTICAL_INTEREST, ZERO_SUM, GameClass, StochasticGame, classify
from .regularizers import (
    DEFAULT_BETA,
    ENTROPY,
    Regularizer,
    smooth_argmax,
    smooth_max,
)

ZERO_SUM_MODE = "zero_sum"
SHARED_MODE = "shared"
PER_PLAYER_MODE = "per_player"


class GameClassError(ValueError):
    """Raised when an operation needs a game class the game does not have."""


class SaddlePointError(RuntimeError):
    def __init__(self, gap: float, iterations: int):
        super().__init__(f"saddle solver stopped after {iterations} iterations with gap {gap:.3e}")
        self.gap = gap
        self.iterations = iterations


def value_mode(game_class: GameClass) -> str:
    if game_class.tag == ZERO_SUM:
        return ZERO_SUM_MODE
    if game_class.tag == IDENTICAL_INTEREST:
        return SHARED_MODE
    return PER_PLAYER_MODE


def expand_values(u, num_players: int, mode: str) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        return u
    if mode == ZERO_SUM_MODE:
        return np.stack([u, -u])
    return np.tile(u, (num_players, 1))


def regularizer_signs(num_players: int, mode: str) -> np.ndarray:
    """``signs[i, j]``: weight of player ``j``'s component in player ``i``'s regularizer."""
    if mode == ZERO_SUM_MODE:
        return np.array([[1.0, -1.0], [-1.0, 1.0]])
    return np.ones((num_players, num_players))


# -- vectorized building blocks ------------------------------------------------


def stage_tables(rewards: np.ndarray, transitions: np.ndarray, discount: float,
                 values: np.ndarray) -> np.ndarray:
    """``G[i, s, a] = (1 - delta) r[i, s, a] + delta * q[s, a] . u[i]``."""
    S, A, _ = transitions.shape
    cont = (transitions.reshape(S * A, S) @ values.T).T.reshape(values.shape[0], S, A)
    return (1.0 - discount) * rewards + discount * cont


def joint_probs(x: Sequence[np.ndarray]) -> np.ndarray:
    """Product distribution over joint actions, one row per state."""
    p = x[0]
    for block in x[1:]:
        p = (p[:, :, None] * block[:, None, :]).reshape(p.shape[0], -1)
    return p


def joint_probs_at(blocks: Sequence[np.ndarray]) -> np.ndarray:
    p = blocks[0]
    for b in blocks[1:]:
        p = np.outer(p, b).ravel()
    return p


def component_values(x: Sequence[np.ndarray], reg: Regularizer) -> np.ndarray:
    """``phi(x^j_s)`` for every player ``j`` and state ``s``, shape ``(n, S)``."""
    return np.array([[reg.component(row) for row in block] for block in x])


def own_action_payoffs(table_s: np.ndarray, blocks: Sequence[np.ndarray], i: int,
                       counts: Sequence[int]) -> np.ndarray:
    """Payoff of each of player ``i``'s actions against the others' mixed actions."""
    t = table_s.reshape(counts)
    if len(counts) == 2:
        return t @ blocks[1] if i == 0 else blocks[0] @ t
    for j in range(len(counts) - 1, -1, -1):
        if j != i:
            t = np.tensordot(t, blocks[j], axes=([j], [0]))
    return t


def profile_at(x: Sequence[np.ndarray], s: int) -> list[np.ndarray]:
    return [block[s] for block in x]


def uniform_profile(game: StochasticGame) -> list[np.ndarray]:
    return [np.full((game.num_states, c), 1.0 / c) for c in game.action_counts]


# -- context-level operations ----------------------------------------------------


@dataclass
class AuxiliaryContext:
    """Everything needed to evaluate the auxiliary game at any state.

    ``model`` is an optional object exposing ``rewards_hat`` and
    ``transitions_hat`` (a :class:`~smoothfp.learners.ModelEstimate`); when
    present the estimated operations and best responses use it.
    """

    game: StochasticGame
    values: np.ndarray
    beta: float = DEFAULT_BETA
    reg: Regularizer = ENTROPY
    model: object = None
    mode: str | None = None

    def __post_init__(self):
        if self.mode is None:
            self.mode = value_mode(classify(self.game))
        self.values = expand_values(self.values, self.game.num_players, self.mode)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("continuation values must be finite")

    @property
    def zero_sum(self) -> bool:
        return self.mode == ZERO_SUM_MODE

    def tables(self, estimated: bool | None = None) -> np.ndarray:
        if estimated is None:
            estimated = self.model is not None
        if estimated:
            if self.model is None:
                raise ValueError("context has no model estimate")
            r, q = self.model.rewards_hat, self.model.transitions_hat
        else:
            r, q = self.game.rewards, self.game.transitions
        return stage_tables(r, q, self.game.discount, self.values)

    def regularizer(self, i: int, blocks: Sequence[np.ndarray]) -> float:
        signs = regularizer_signs(self.game.num_players, self.mode)[i]
        return float(sum(sg * self.reg.component(b) for sg, b in zip(signs, blocks)))


def _payoff(ctx: AuxiliaryContext, i, s, x, estimated) -> float:
    blocks = [np.asarray(b, dtype=float) for b in x]
    if estimated:
        r, q = ctx.model.rewards_hat, ctx.model.transitions_hat
    else:
        r, q = ctx.game.rewards, ctx.game.transitions
    delta = ctx.game.discount
    table = (1.0 - delta) * r[i, s] + delta * (q[s] @ ctx.values[i])
    return float(joint_probs_at(blocks) @ table)


def auxiliary_payoff(ctx: AuxiliaryContext, i: int, s: int, x: Sequence[np.ndarray]) -> float:
    """Player ``i``'s one-shot payoff at state ``s`` under the true model.

    ``x`` holds one mixed action per player at ``s``. Multilinear in the blocks.
    """
    return _payoff(ctx, i, s, x, estimated=False)


def estimated_auxiliary_payoff(ctx: AuxiliaryContext, i: int, s: int, x: Sequence[np.ndarray]) -> float:
    if ctx.model is None:
        raise ValueError("context has no model estimate")
    return _payoff(ctx, i, s, x, estimated=True)


def smooth_best_response(ctx: AuxiliaryContext, i: int, s: int, x: Sequence[np.ndarray]) -> np.ndarray:
    """Player ``i``'s regularized best reply to the others' blocks of ``x`` at ``s``."""
    blocks = [np.asarray(b, dtype=float) for b in x]
    table = ctx.tables()[i, s]
    g = own_action_payoffs(table, blocks, i, ctx.game.action_counts)
    return smooth_argmax(g, ctx.beta, ctx.reg)


@dataclass(frozen=True)
class DualityGapRecord:
    state: int
    value: float
    max_deviation: np.ndarray
    min_deviation: np.ndarray


def matrix_duality_gap(A: np.ndarray, x1: np.ndarray, x2: np.ndarray, beta: float,
                       reg: Regularizer = ENTROPY):
    """Gap of ``(x1, x2)`` in the game ``y1' A y2 + beta (phi(y1) - phi(y2))``.

    Returns ``(gap, y1, y2)`` with ``y1`` the maximizer's smooth reply to
    ``x2`` and ``y2`` the minimizer's smooth reply to ``x1``.
    """
    g1 = A @ x2
    g2 = -(x1 @ A)
    top = smooth_max(g1, beta, reg) - beta * reg.component(x2)
    bottom = beta * reg.component(x1) - smooth_max(g2, beta, reg)
    return top - bottom, smooth_argmax(g1, beta, reg), smooth_argmax(g2, beta, reg)


def duality_gap(ctx: AuxiliaryContext, s: int, x: Sequence[np.ndarray]) -> DualityGapRecord:
    """Regularized duality gap of ``x`` in the zero-sum auxiliary game at ``s``."""
    if ctx.game.num_players != 2 or not ctx.zero_sum:
        raise GameClassError("duality gap needs a two-player zero-sum context")
    x1, x2 = (np.asarray(b, dtype=float) for b in x)
    A = ctx.tables()[0, s].reshape(ctx.game.action_counts)
    w, y1, y2 = matrix_duality_gap(A, x1, x2, ctx.beta, ctx.reg)
    return DualityGapRecord(s, float(w), y1, y2)


# -- regularized matrix games -----------------------------------------------------


@dataclass(frozen=True)
class SaddlePoint:
    x1: np.ndarray
    x2: np.ndarray
    value: float
    gap: float
    iterations: int


def regularized_matrix_game_solve(
    A,
    beta: float = DEFAULT_BETA,
    reg: Regularizer = ENTROPY,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    start: tuple | None = None,
) -> SaddlePoint:
    """Saddle point of ``x1' A x2 + beta (phi(x1) - phi(x2))``.

    Extragradient multiplicative weights: a predictive half-step for both
    players, then each player updates against the other's prediction. The
    step ``1 / (beta + 2 max|A|)`` gives linear convergence at rate
    ``1 - step * beta`` for the entropy. Stops once the duality gap is at most
    ``tol`` and each strategy is within ``tol`` of its smooth reply. ``start``
    is an optional interior ``(x1, x2)`` warm start; the default is uniform.
    """
    A = np.asarray(A, dtype=float)
    if beta <= 0:
        raise ValueError("beta must be positive")
    n1, n2 = A.shape
    eta = 1.0 / (beta + 2.0 * max(np.max(np.abs(A)), 1e-12))
    check_every = 1 if reg is ENTROPY else 10

    def step(log_x, x, g):
        log_x = log_x + eta * (g + beta * reg.component_grad(x))
        log_x -= log_x.max()
        x = np.exp(log_x)
        s = x.sum()
        return log_x - np.log(s), x / s

    if start is None:
        lx1, lx2 = np.full(n1, -np.log(n1)), np.full(n2, -np.log(n2))
    else:
        lx1, lx2 = (np.log(np.clip(np.asarray(v, dtype=float), 1e-300, None)) for v in start)
        lx1 -= logsumexp(lx1)
        lx2 -= logsumexp(lx2)
    x1, x2 = np.exp(lx1), np.exp(lx2)
    gap = np.inf
    for it in range(max_iter + 1):
        if it % check_every == 0 or it == max_iter:
            gap, y1, y2 = matrix_duality_gap(A, x1, x2, beta, reg)
            # the gap is quadratic in the strategy error; also demand a fixed point
            drift = max(np.max(np.abs(x1 - y1)), np.max(np.abs(x2 - y2)))
            if gap <= tol and drift <= tol:
                value = float(x1 @ A @ x2 + beta * (reg.component(x1) - reg.component(x2)))
                return SaddlePoint(x1, x2, value, float(gap), it)
        if it == max_iter:
            break
        lb1, b1 = step(lx1, x1, A @ x2)
        lb2, b2 = step(lx2, x2, -(x1 @ A))
        lx1, x1 = step(lx1, x1, A @ b2)
        lx2, x2 = step(lx2, x2, -(b1 @ A))
    raise SaddlePointError(float(gap), max_iter)

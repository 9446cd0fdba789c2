"""Ground-truth solvers used to validate the learners.

* Regularized Shapley iteration for two-player zero-sum games: the value at
  each state is the saddle value of the regularized auxiliary matrix game.
* Soft value iteration for single-player games (entropy-regularized MDPs).
* Fixed-point residuals that vanish exactly at regularized equilibria.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp, softmax

from .auxiliary import (
    ZERO_SUM_MODE,
    GameClassError,
    component_values,
    expand_values,
    joint_probs,
    regularizer_signs,
    regularized_matrix_game_solve,
    stage_tables,
    value_mode,
)
from .dynamics import smooth_replies
from .game import ZERO_SUM, StochasticGame, classify
from .regularizers import DEFAULT_BETA, ENTROPY, Regularizer

OUTER_TOL = 1e-9
INNER_TOL = 1e-10


class OracleError(RuntimeError):
    pass


class UnsupportedGameError(GameClassError):
    """No oracle exists for this game class."""


@dataclass
class OracleResult:
    """Values ``u`` (one per state, from player 1's side), profile ``x``
    (one ``(S, A_i)`` array per player), final residual ``||Phi(u) - u||``
    and the residual after each outer iteration."""

    u: np.ndarray
    x: list
    residual: float
    iterations: int
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "u": self.u.tolist(),
            "x": [b.tolist() for b in self.x],
            "residual": self.residual,
            "iterations": self.iterations,
        }


# (A, beta, reg, tol, start) -> (value, x1, x2); start is a warm-start pair or None
SaddleSolver = Callable[[np.ndarray, float, Regularizer, float, tuple | None], tuple]


def _default_saddle(A, beta, reg, tol, start=None):
    sp = regularized_matrix_game_solve(A, beta, reg, tol, start=start)
    return sp.value, sp.x1, sp.x2


def shapley_operator(game: StochasticGame, u, beta: float = DEFAULT_BETA, reg: Regularizer = ENTROPY,
                     inner_tol: float = INNER_TOL, saddle: SaddleSolver | None = None,
                     start: tuple | None = None):
    """``Phi(u)_s``: regularized saddle value of the auxiliary game at ``s``.

    Returns ``(Phi(u), x1, x2)`` with the per-state saddle strategies.
    ``start`` optionally holds per-state warm starts ``(x1, x2)``.
    """
    saddle = saddle or _default_saddle
    tables = stage_tables(game.rewards, game.transitions, game.discount,
                          expand_values(u, 2, ZERO_SUM_MODE))
    out = np.empty(game.num_states)
    x1 = np.empty((game.num_states, game.action_counts[0]))
    x2 = np.empty((game.num_states, game.action_counts[1]))
    for s in range(game.num_states):
        warm = None if start is None else (start[0][s], start[1][s])
        out[s], x1[s], x2[s] = saddle(tables[0, s].reshape(game.action_counts), beta, reg, inner_tol, warm)
    return out, x1, x2


def zs_regularized_value_iteration(
    game: StochasticGame,
    beta: float = DEFAULT_BETA,
    reg: Regularizer = ENTROPY,
    tol: float = OUTER_TOL,
    inner_tol: float = INNER_TOL,
    max_iter: int = 10_000,
    u0=None,
    saddle: SaddleSolver | None = None,
) -> OracleResult:
    """Fixed point of the regularized Shapley operator of a zero-sum game.

    The operator is a ``delta``-contraction in the sup norm, so plain
    iteration from ``u0`` (default 0) stops once ``||Phi(u) - u|| <= tol``.
    """
    if game.num_players != 2 or classify(game).tag != ZERO_SUM:
        raise GameClassError("regularized value iteration needs a two-player zero-sum game")
    u = np.zeros(game.num_states) if u0 is None else np.array(u0, dtype=float)
    history = []
    warm = None
    for it in range(1, max_iter + 1):
        nxt, x1, x2 = shapley_operator(game, u, beta, reg, inner_tol, saddle, warm)
        warm = (x1, x2)
        res = float(np.max(np.abs(nxt - u)))
        history.append(res)
        u = nxt
        if res <= tol:
            return OracleResult(u, [x1, x2], res, it, history)
    raise OracleError(f"value iteration stopped after {max_iter} iterations (residual {res:.3e})")


def soft_value_iteration(
    game: StochasticGame,
    beta: float = DEFAULT_BETA,
    reg: Regularizer = ENTROPY,
    tol: float = OUTER_TOL,
    max_iter: int = 100_000,
) -> OracleResult:
    """Optimal values and logit policy of an entropy-regularized MDP.

    Iterates ``V <- beta * logsumexp(((1 - delta) r + delta q V) / beta)``.
    """
    if game.num_players != 1:
        raise GameClassError("soft value iteration needs a single-player game")
    if reg is not ENTROPY:
        raise ValueError("soft value iteration is closed-form for the entropy only")
    if beta <= 0:
        raise ValueError("beta must be positive")
    r, q, d = game.rewards[0], game.transitions, game.discount
    V = np.zeros(game.num_states)
    history = []
    for it in range(1, max_iter + 1):
        Q = (1.0 - d) * r + d * (q @ V)
        nxt = beta * logsumexp(Q / beta, axis=1)
        if not np.all(np.isfinite(nxt)):
            raise OracleError("soft value iteration produced non-finite values")
        res = float(np.max(np.abs(nxt - V)))
        history.append(res)
        V = nxt
        if res <= tol:
            Q = (1.0 - d) * r + d * (q @ V)
            return OracleResult(V, [softmax(Q / beta, axis=1)], res, it, history)
    raise OracleError(f"soft value iteration stopped after {max_iter} iterations (residual {res:.3e})")


def solve(game: StochasticGame, beta: float = DEFAULT_BETA, reg: Regularizer = ENTROPY,
          tol: float = OUTER_TOL) -> OracleResult:
    """Dispatch to the oracle that fits the game class."""
    if game.num_players == 1:
        return soft_value_iteration(game, beta, reg, tol)
    if game.num_players == 2 and classify(game).tag == ZERO_SUM:
        return zs_regularized_value_iteration(game, beta, reg, tol)
    raise UnsupportedGameError(
        f"no oracle for a {game.num_players}-player {classify(game).tag} game; "
        "check candidate equilibria with equilibrium_residuals instead")


@dataclass(frozen=True)
class Residuals:
    """Per-state fixed-point residuals; both vanish exactly at a regularized equilibrium."""

    rho_val: np.ndarray
    rho_br: np.ndarray

    @property
    def max_val(self) -> float:
        return float(self.rho_val.max())

    @property
    def max_br(self) -> float:
        return float(self.rho_br.max())


def equilibrium_residuals(game: StochasticGame, beta: float, reg: Regularizer, x, u,
                          mode: str | None = None) -> Residuals:
    """``rho_val(s) = max_i |f^i_s(x_s) + beta h^i(x_s) - u^i_s|`` and
    ``rho_br(s) = max_i ||x^i_s - br^i_s(u, x_s)||``, under the true model.

    ``u`` is ``(num_players, S)`` or a single row interpreted by ``mode``.
    """
    if mode is None:
        mode = value_mode(classify(game))
    x = [np.asarray(b, dtype=float) for b in x]
    u = expand_values(u, game.num_players, mode)
    tables = stage_tables(game.rewards, game.transitions, game.discount, u)
    target = (tables * joint_probs(x)).sum(axis=-1)
    target += beta * (regularizer_signs(game.num_players, mode) @ component_values(x, reg))
    rho_val = np.max(np.abs(target - u), axis=0)
    br = smooth_replies(tables, x, game.action_counts, beta, reg)
    rho_br = np.max([np.max(np.abs(b - xi), axis=1) for b, xi in zip(br, x)], axis=0)
    return Residuals(rho_val, rho_br)


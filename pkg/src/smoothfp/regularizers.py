"""Concave regularizers and smooth best responses on the simplex."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp, xlogy

DEFAULT_BETA = 0.1


class SmoothArgmaxError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"smooth argmax did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


def _blocks(x) -> list[np.ndarray]:
    if isinstance(x, np.ndarray) and x.ndim == 1:
        return [x]
    return [np.asarray(b, dtype=float) for b in x]


def shannon(p: np.ndarray) -> float:
    """Shannon entropy of one mixed action with the 0 log 0 = 0 convention."""
    return float(-np.sum(xlogy(p, p)))


def shannon_grad(p: np.ndarray) -> np.ndarray:
    return -1.0 - np.log(p)


def entropy(x) -> float:
    """Shannon entropy summed over the players' blocks of a profile.

    ``x`` is either a single mixed action or a sequence of per-player mixed
    actions.
    """
    return sum(shannon(b) for b in _blocks(x))


def entropy_grad(x, i: int = 0) -> np.ndarray:
    """Gradient of :func:`entropy` with respect to player ``i``'s block.

    Undefined on the boundary of the simplex; callers pass interior points.
    """
    return shannon_grad(_blocks(x)[i])


def tsallis(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    return float(np.sum(p * (1.0 - p)))


def tsallis_grad(p: np.ndarray) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(p)


@dataclass(frozen=True)
class Regularizer:
    """A separable regularizer ``h(x) = sum_i sign_i * phi(x^i)``.

    ``phi`` is a strictly concave function of one mixed action. In zero-sum
    mode the signs are ``(+1, -1)`` from player 1's point of view, which is the
    ``h = h1 - h2`` decomposition; otherwise every sign is ``+1``.
    """

    name: str
    component: Callable[[np.ndarray], float]
    component_grad: Callable[[np.ndarray], np.ndarray]
    steep: bool
    separable: bool = True

    def max_component(self, n_actions: int) -> float:
        """Value of ``phi`` at the uniform mixed action (its maximum)."""
        return self.component(np.full(n_actions, 1.0 / n_actions))

    def value(self, x, zero_sum: bool = False) -> float:
        blocks = _blocks(x)
        vals = [self.component(b) for b in blocks]
        if zero_sum:
            return vals[0] - sum(vals[1:])
        return sum(vals)

    def grad(self, x, i: int, zero_sum: bool = False) -> np.ndarray:
        g = self.component_grad(_blocks(x)[i])
        return -g if zero_sum and i > 0 else g


ENTROPY = Regularizer("entropy", shannon, shannon_grad, steep=True)
# Strictly concave but with bounded gradient: violates the steepness hypothesis.
# Kept as a contrast fixture only.
TSALLIS_NONSTEEP = Regularizer("tsallis-nonsteep", tsallis, tsallis_grad, steep=False)

REGULARIZERS = {r.name: r for r in (ENTROPY, TSALLIS_NONSTEEP)}


def get_regularizer(name: str) -> Regularizer:
    try:
        return REGULARIZERS[name]
    except KeyError:
        raise ValueError(f"unknown regularizer {name!r}; choose from {sorted(REGULARIZERS)}") from None


def logit_response(payoffs, beta: float) -> np.ndarray:
    """Softmax of ``payoffs / beta``, stabilized by subtracting the max."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    z = np.asarray(payoffs, dtype=float) / beta
    z = np.exp(z - z.max())
    return z / z.sum()


def logit_value(payoffs, beta: float) -> float:
    """``max_y <y, payoffs> + beta * H(y)``, i.e. ``beta * logsumexp(payoffs / beta)``."""
    return float(beta * logsumexp(np.asarray(payoffs, dtype=float) / beta))


def smooth_argmax_residual(y: np.ndarray, grad: np.ndarray) -> float:
    # Weighted by y so that optima on the boundary (non-steep case) give zero.
    return float(np.max(y * np.abs(grad - np.dot(y, grad))))


def generic_smooth_argmax(
    linear_payoff,
    beta: float,
    reg: Regularizer = ENTROPY,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    damping: float = 0.5,
) -> np.ndarray:
    """Maximize ``<y, linear_payoff> + beta * phi(y)`` over the simplex.

    Uses multiplicative (entropic mirror) ascent with step ``damping / beta``
    started from the uniform point. For the entropy this is the map
    ``y <- y**(1 - damping) * logit(payoff)**damping`` and contracts
    geometrically to the logit response.
    """
    g = np.asarray(linear_payoff, dtype=float)
    n = g.size
    if n == 1:
        return np.ones(1)
    if beta <= 0:
        raise ValueError("beta must be positive")
    eta = damping / beta
    log_y = np.full(n, -np.log(n))
    y = np.exp(log_y)
    residual = np.inf
    for it in range(max_iter):
        grad = g + beta * reg.component_grad(y)
        residual = smooth_argmax_residual(y, grad)
        if residual <= tol:
            return y
        log_y = log_y + eta * grad
        log_y -= logsumexp(log_y)
        y = np.exp(log_y)
    raise SmoothArgmaxError(residual, max_iter)


def smooth_argmax(linear_payoff, beta: float, reg: Regularizer = ENTROPY, tol: float = 1e-10) -> np.ndarray:
    """Closed-form logit for the entropy, iterative solver otherwise."""
    if reg is ENTROPY:
        return logit_response(linear_payoff, beta)
    return generic_smooth_argmax(linear_payoff, beta, reg, tol)


def smooth_max(linear_payoff, beta: float, reg: Regularizer = ENTROPY, tol: float = 1e-10) -> float:
    """Optimal value of the regularized linear problem."""
    if reg is ENTROPY:
        return logit_value(linear_payoff, beta)
    y = generic_smooth_argmax(linear_payoff, beta, reg, tol)
    return float(np.dot(y, linear_payoff) + beta * reg.component(y))


def smooth_response_floor(sample_payoffs: Sequence[np.ndarray], beta: float,
                          reg: Regularizer = ENTROPY) -> float:
    """Smallest action probability over a batch of smooth argmaxes."""
    return min(float(smooth_argmax(g, beta, reg).min()) for g in sample_payoffs)

"""Compiled inner loops.

These mirror the numpy reference implementations in ``learners`` and
``dynamics`` operation for operation; the test suite checks that both paths
produce the same trajectories.
"""

import numpy as np
from numba import njit

HARMONIC, CONSTANT, POWER = 0, 1, 2
PER_PLAYER, SHARED, ZERO_SUM = 0, 1, 2


@njit(cache=True)
def _rate(kind, value, scale, exponent, n):
    if kind == HARMONIC:
        return 1.0 / (n + 1.0)
    if kind == POWER:
        return scale / (1.0 + n) ** exponent
    return value


@njit(cache=True)
def _entropy(p, k):
    h = 0.0
    for b in range(k):
        if p[b] > 0.0:
            h -= p[b] * np.log(p[b])
    return h


@njit(cache=True)
def sfp_entropy_steps(
    nsteps, s, step, xpad, u, visits, joint, phi, counts, jact,
    r_l, q_l, r_true, cdf_true, discount, beta, mode, signs,
    sched_kind, sched_value, sched_scale, sched_exp, per_visit,
    uniforms, noise,
    model_free, frozen, m_visits, m_rsum, m_tcount, m_rhat, m_qhat,
):
    n, S, maxA = xpad.shape
    A = jact.shape[0]
    G = np.empty((n, S, A))
    g = np.empty(maxA)
    p = np.empty(maxA)
    actions = np.empty(n, np.int64)
    target = np.empty((n, S))
    obs = np.empty(n)
    # r_l / q_l may alias the model arrays, which change only at observed pairs
    for t in range(nsteps):
        for i in range(n):
            for ss in range(S):
                for a in range(A):
                    acc = 0.0
                    for s2 in range(S):
                        acc += q_l[ss, a, s2] * u[i, s2]
                    G[i, ss, a] = (1.0 - discount) * r_l[i, ss, a] + discount * acc

        # actions from the pre-update values and profile
        for i in range(n):
            k = counts[i]
            for b in range(k):
                g[b] = 0.0
            for a in range(A):
                w = G[i, s, a]
                for j in range(n):
                    if j != i:
                        w *= xpad[j, s, jact[a, j]]
                g[jact[a, i]] += w
            zmax = -np.inf
            for b in range(k):
                z = g[b] / beta
                if z > zmax:
                    zmax = z
            tot = 0.0
            for b in range(k):
                p[b] = np.exp(g[b] / beta - zmax)
                tot += p[b]
            c = 0.0
            pick = 0
            for b in range(k):
                c += p[b] / tot
                if c <= uniforms[t, i]:
                    pick = b + 1
            actions[i] = min(pick, k - 1)

        # values of every state
        for i in range(n):
            for ss in range(S):
                acc = 0.0
                for a in range(A):
                    acc += G[i, ss, a] * joint[ss, a]
                reg = 0.0
                for j in range(n):
                    reg += signs[i, j] * phi[j, ss]
                target[i, ss] = acc + beta * reg
        for ss in range(S):
            if per_visit:
                rate = _rate(sched_kind, sched_value, sched_scale, sched_exp, visits[ss])
            else:
                rate = _rate(sched_kind, sched_value, sched_scale, sched_exp, step)
            if mode == PER_PLAYER:
                for i in range(n):
                    u[i, ss] += rate * (target[i, ss] - u[i, ss])
            else:
                row = u[0, ss] + rate * (target[0, ss] - u[0, ss])
                for i in range(n):
                    u[i, ss] = row
                if mode == ZERO_SUM:
                    u[1, ss] = -row

        # empirical profile at the current state
        kv = visits[s] + 1
        for i in range(n):
            for b in range(counts[i]):
                xpad[i, s, b] *= 1.0 - 1.0 / kv
            xpad[i, s, actions[i]] += 1.0 / kv
        visits[s] = kv
        for a in range(A):
            pr = 1.0
            for j in range(n):
                pr *= xpad[j, s, jact[a, j]]
            joint[s, a] = pr
        for j in range(n):
            phi[j, s] = _entropy(xpad[j, s], counts[j])

        # transition and observation
        a = 0
        for i in range(n):
            a = a * counts[i] + actions[i]
        v = uniforms[t, n]
        s_next = 0
        for s2 in range(S):
            if cdf_true[s, a, s2] <= v:
                s_next = s2 + 1
        if s_next > S - 1:
            s_next = S - 1
        if model_free and not frozen:
            for i in range(n):
                obs[i] = r_true[i, s, a]
            m = noise.shape[1]
            if m == n:
                for i in range(n):
                    obs[i] += noise[t, i]
            elif m == 1:
                if mode == ZERO_SUM:
                    obs[0] += noise[t, 0]
                    obs[1] -= noise[t, 0]
                else:
                    for i in range(n):
                        obs[i] += noise[t, 0]
            m_visits[s, a] += 1
            kk = m_visits[s, a]
            for i in range(n):
                m_rsum[i, s, a] += obs[i]
                m_rhat[i, s, a] = m_rsum[i, s, a] / kk
            m_tcount[s, a, s_next] += 1
            for s2 in range(S):
                m_qhat[s, a, s2] = m_tcount[s, a, s2] / kk
        s = s_next
        step += 1
    return s, step


@njit(cache=True)
def brd_entropy_rhs(
    y, out, counts, x_off, u_off, q_off, r_off, jact,
    r_true, q_true, discount, beta, rate, lam, signs, learns,
):
    """Derivative of the flat continuous-time state (entropy regularizer).

    Layout: per-player blocks ``x^i`` (S, A_i) at ``x_off[i]``, then ``u``
    (n, S), then, when ``learns``, ``q_hat`` (S, A, S) and ``r_hat`` (n, S, A).
    """
    n = counts.shape[0]
    S = lam.shape[0]
    A = jact.shape[0]
    maxA = 0
    for i in range(n):
        if counts[i] > maxA:
            maxA = counts[i]
    G = np.empty((n, S, A))
    joint = np.empty((S, A))
    br = np.zeros((n, S, maxA))
    phi = np.empty((n, S))
    g = np.empty(maxA)
    for i in range(n):
        for s in range(S):
            for a in range(A):
                acc = 0.0
                for s2 in range(S):
                    if learns:
                        qv = y[q_off + (s * A + a) * S + s2]
                    else:
                        qv = q_true[s, a, s2]
                    acc += qv * y[u_off + i * S + s2]
                if learns:
                    rv = y[r_off + (i * S + s) * A + a]
                else:
                    rv = r_true[i, s, a]
                G[i, s, a] = (1.0 - discount) * rv + discount * acc
    for s in range(S):
        for a in range(A):
            pr = 1.0
            for j in range(n):
                pr *= y[x_off[j] + s * counts[j] + jact[a, j]]
            joint[s, a] = pr
        for j in range(n):
            h = 0.0
            for b in range(counts[j]):
                p = y[x_off[j] + s * counts[j] + b]
                if p > 0.0:
                    h -= p * np.log(p)
            phi[j, s] = h
        # smooth best replies against the others' current mixed actions
        for i in range(n):
            k = counts[i]
            for b in range(k):
                g[b] = 0.0
            for a in range(A):
                w = G[i, s, a]
                for j in range(n):
                    if j != i:
                        w *= y[x_off[j] + s * counts[j] + jact[a, j]]
                g[jact[a, i]] += w
            zmax = -np.inf
            for b in range(k):
                if g[b] / beta > zmax:
                    zmax = g[b] / beta
            tot = 0.0
            for b in range(k):
                br[i, s, b] = np.exp(g[b] / beta - zmax)
                tot += br[i, s, b]
            for b in range(k):
                br[i, s, b] /= tot
                idx = x_off[i] + s * k + b
                out[idx] = lam[s] * (br[i, s, b] - y[idx])
        for i in range(n):
            acc = 0.0
            for a in range(A):
                acc += G[i, s, a] * joint[s, a]
            reg = 0.0
            for j in range(n):
                reg += signs[i, j] * phi[j, s]
            idx = u_off + i * S + s
            out[idx] = rate * (acc + beta * reg - y[idx])
        if learns:
            for a in range(A):
                wgt = lam[s]
                for j in range(n):
                    wgt *= br[j, s, jact[a, j]]
                for s2 in range(S):
                    idx = q_off + (s * A + a) * S + s2
                    out[idx] = wgt * (q_true[s, a, s2] - y[idx])
                for i in range(n):
                    idx = r_off + (i * S + s) * A + a
                    out[idx] = wgt * (r_true[i, s, a] - y[idx])
    return out

"""Numeric inner loops.

Every kernel has a ``*_loops`` implementation (compiled with numba when
available) and a ``*_numpy`` implementation. The public names at the bottom of
the module are bound to one of the two according to :data:`trex._accel.USE_NUMBA`.
Both variants take and return plain arrays and consume no randomness, so their
outputs agree up to floating-point summation order.
"""

import numpy as np

from ._accel import USE_NUMBA, jit

TIE_TOL = 1e-9


# -- nearest centroid ---------------------------------------------------------


def nearest_numpy(X, C):
    d = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d, axis=1)
    return labels.astype(np.int64), d[np.arange(X.shape[0]), labels]


@jit(cache=True, nogil=True)
def nearest_loops(X, C):
    n, dim = X.shape
    k = C.shape[0]
    labels = np.empty(n, np.int64)
    best = np.empty(n, np.float64)
    for i in range(n):
        bi = 0
        bd = np.inf
        for j in range(k):
            s = 0.0
            for t in range(dim):
                diff = X[i, t] - C[j, t]
                s += diff * diff
            if s < bd:
                bd = s
                bi = j
        labels[i] = bi
        best[i] = bd
    return labels, best


# -- silhouette ---------------------------------------------------------------


def pairwise_distances_numpy(X):
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def silhouette_numpy(X, labels, k):
    n = X.shape[0]
    D = pairwise_distances_numpy(X)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    counts = onehot.sum(axis=0)
    sums = D @ onehot
    own = counts[labels]
    a = np.where(own > 1, sums[np.arange(n), labels] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / np.where(counts > 0, counts, 1.0)
    mean_other[np.arange(n), labels] = np.inf
    mean_other[:, counts == 0] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return s


@jit(cache=True, nogil=True)
def silhouette_loops(X, labels, k):
    n, dim = X.shape
    counts = np.zeros(k, np.int64)
    for i in range(n):
        counts[labels[i]] += 1
    s = np.zeros(n, np.float64)
    sums = np.zeros(k, np.float64)
    for i in range(n):
        sums[:] = 0.0
        for j in range(n):
            if j == i:
                continue
            acc = 0.0
            for t in range(dim):
                diff = X[i, t] - X[j, t]
                acc += diff * diff
            sums[labels[j]] += np.sqrt(acc)
        li = labels[i]
        if counts[li] <= 1:
            s[i] = 0.0
            continue
        a = sums[li] / (counts[li] - 1)
        b = np.inf
        for c in range(k):
            if c != li and counts[c] > 0:
                m = sums[c] / counts[c]
                if m < b:
                    b = m
        denom = max(a, b)
        s[i] = (b - a) / denom if denom > 0 else 0.0
    return s


# -- fitted-Q backup ----------------------------------------------------------


def fqi_targets_numpy(s, a, r, s2, done, q, supported, gamma):
    S, A = q.shape
    masked = np.where(supported, q, -np.inf)
    v = masked.max(axis=1)
    v[~supported.any(axis=1)] = 0.0
    targets = r + gamma * np.where(done, 0.0, v[s2])
    flat = s * A + a
    sums = np.bincount(flat, weights=targets, minlength=S * A).reshape(S, A)
    counts = np.bincount(flat, minlength=S * A).reshape(S, A)
    out = np.zeros((S, A))
    np.divide(sums, counts, out=out, where=counts > 0)
    return out


@jit(cache=True, nogil=True)
def fqi_targets_loops(s, a, r, s2, done, q, supported, gamma):
    S, A = q.shape
    v = np.zeros(S, np.float64)
    for i in range(S):
        best = -np.inf
        for j in range(A):
            if supported[i, j] and q[i, j] > best:
                best = q[i, j]
        v[i] = best if best > -np.inf else 0.0
    sums = np.zeros((S, A), np.float64)
    counts = np.zeros((S, A), np.int64)
    for n in range(s.shape[0]):
        t = r[n]
        if not done[n]:
            t += gamma * v[s2[n]]
        sums[s[n], a[n]] += t
        counts[s[n], a[n]] += 1
    out = np.zeros((S, A), np.float64)
    for i in range(S):
        for j in range(A):
            if counts[i, j] > 0:
                out[i, j] = sums[i, j] / counts[i, j]
    return out


# -- online Q-learning on a tabular model --------------------------------------


def _q_learning_chunk(q, visited, next_state, reward, terminal, start, max_steps, gamma, lr,
                      state, t, explore_u, eps, random_actions,
                      start_keys, start_ts, restart_u, restart_idx, p_restart):
    """Run ``len(explore_u)`` epsilon-greedy Q-learning updates.

    ``state``/``t`` carry the episode position across chunks. On termination
    or after ``max_steps`` steps the episode restarts at ``start``, or with
    probability ``p_restart`` at ``start_keys[restart_idx[n]]`` (exploring
    starts). Greedy ties go to the lowest action index.
    """
    A = q.shape[1]
    for n in range(explore_u.shape[0]):
        if explore_u[n] < eps[n]:
            act = random_actions[n]
        else:
            act = 0
            best = q[state, 0]
            for j in range(1, A):
                if q[state, j] > best:
                    best = q[state, j]
                    act = j
        nxt = next_state[state, act]
        target = reward[state, act]
        if not terminal[state, act]:
            best = q[nxt, 0]
            for j in range(1, A):
                if q[nxt, j] > best:
                    best = q[nxt, j]
            target += gamma * best
        q[state, act] += lr * (target - q[state, act])
        visited[state, act] = True
        t += 1
        if terminal[state, act] or t >= max_steps:
            if restart_u[n] < p_restart:
                state = start_keys[restart_idx[n]]
                t = start_ts[restart_idx[n]]
            else:
                state = start
                t = 0
        else:
            state = nxt
    return state, t


q_learning_chunk_loops = jit(cache=True, nogil=True)(_q_learning_chunk)
q_learning_chunk_python = _q_learning_chunk


# -- finite-horizon backward induction ------------------------------------------


def backward_induction_numpy(next_state, reward, terminal, horizon):
    """Scalarised optimal policy for every (steps-remaining, state).

    Ties within ``TIE_TOL`` prefer the action that ends the episode soonest,
    then the lowest index. Returns ``(policy, value)`` with shape
    ``(horizon + 1, S)``; row ``h`` is for ``h`` steps remaining.
    """
    S, A = next_state.shape
    V = np.zeros((horizon + 1, S))
    L = np.zeros((horizon + 1, S))
    pi = np.zeros((horizon + 1, S), np.int64)
    cont = ~terminal
    for h in range(1, horizon + 1):
        Q = reward + np.where(cont, V[h - 1][next_state], 0.0)
        Lq = 1.0 + np.where(cont, L[h - 1][next_state], 0.0)
        qmax = Q.max(axis=1, keepdims=True)
        Lm = np.where(Q >= qmax - TIE_TOL, Lq, np.inf)
        best = np.argmin(Lm, axis=1)
        pi[h] = best
        V[h] = Q[np.arange(S), best]
        L[h] = Lq[np.arange(S), best]
    return pi, V


@jit(cache=True, nogil=True)
def backward_induction_loops(next_state, reward, terminal, horizon):
    S, A = next_state.shape
    V = np.zeros((horizon + 1, S))
    L = np.zeros((horizon + 1, S))
    pi = np.zeros((horizon + 1, S), np.int64)
    Q = np.empty(A)
    Lq = np.empty(A)
    for h in range(1, horizon + 1):
        for i in range(S):
            qmax = -np.inf
            for j in range(A):
                nx = next_state[i, j]
                if terminal[i, j]:
                    Q[j] = reward[i, j]
                    Lq[j] = 1.0
                else:
                    Q[j] = reward[i, j] + V[h - 1, nx]
                    Lq[j] = 1.0 + L[h - 1, nx]
                if Q[j] > qmax:
                    qmax = Q[j]
            bj = -1
            bl = np.inf
            for j in range(A):
                if Q[j] >= qmax - 1e-9 and Lq[j] < bl:
                    bl = Lq[j]
                    bj = j
            pi[h, i] = bj
            V[h, i] = Q[bj]
            L[h, i] = Lq[bj]
    return pi, V


if USE_NUMBA:
    nearest = nearest_loops
    silhouette_samples = silhouette_loops
    fqi_targets = fqi_targets_loops
    q_learning_chunk = q_learning_chunk_loops
    backward_induction = backward_induction_loops
else:
    nearest = nearest_numpy
    silhouette_samples = silhouette_numpy
    fqi_targets = fqi_targets_numpy
    q_learning_chunk = q_learning_chunk_python
    backward_induction = backward_induction_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"

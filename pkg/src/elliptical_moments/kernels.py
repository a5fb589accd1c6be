from __future__ import annotations

import functools
import math
import numbers

import awkward
import numba
import numpy as np


def ensure_array(arraylike, dtype=None):
    """
    Converts arraylike to a Numpy array
    """
    if isinstance(arraylike, (awkward.contents.Content | awkward.Array)):
        out = awkward.to_numpy(arraylike)
    elif isinstance(arraylike, awkward.index.Index):
        out = arraylike.data
    else:
        out = np.asarray(arraylike)
    if dtype is not None:
        out = np.ascontiguousarray(out, dtype=dtype)
    return out


def float_kernel(function):
    """Wrap a numba kernel so that every array argument reaches it as a
    contiguous float64 Numpy array.

    Scalars (ints, floats) are passed through untouched, which keeps integer
    arguments like the moment order integral inside the kernel.
    """

    @functools.wraps(function)
    def _wrapper(*inputs):
        return function(
            *(
                value
                if isinstance(value, numbers.Number)
                else ensure_array(value, dtype=np.float64)
                for value in inputs
            )
        )

    return _wrapper


def counts2offsets(counts):
    """Cumulative sum of counts, with a leading zero

    Example usage:
    Counts
    [2, 1, 3]
    Offsets
    [0, 2, 3, 6]
    """
    counts = ensure_array(counts)
    # awkward index default type is int64, so we use the same type for new arrays
    offsets = np.empty(len(counts) + 1, dtype=np.int64)
    offsets[0] = 0
    np.cumsum(counts, out=offsets[1:])
    return offsets


@float_kernel
@numba.njit
def column_power_sums(data, mu, scale, m):
    """Per column sum of ``((Y_ij - mu_j)**2 / scale_j)**m``"""
    n, p = data.shape
    out = np.zeros(p, dtype=np.float64)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            d = data[i, j] - mu[j]
            acc += (d * d / scale[j]) ** m
        out[j] = acc
    return out


@float_kernel
@numba.njit
def row_power_means(data, mu, scale, m):
    """Per row average over columns of ``((Y_ij - mu_j)**2 / scale_j)**m``"""
    n, p = data.shape
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for j in range(p):
            d = data[i, j] - mu[j]
            acc += (d * d / scale[j]) ** m
        out[i] = acc / p
    return out


@numba.njit
def _huber_irls_kernel(x, tau, start, tol, max_iters):
    beta = start
    for iteration in range(max_iters):
        num = 0.0
        den = 0.0
        for i in range(len(x)):
            r = abs(x[i] - beta)
            w = 1.0 if r <= tau else tau / r
            num += w * x[i]
            den += w
        new_beta = num / den
        step = abs(new_beta - beta)
        beta = new_beta
        if step <= tol * max(1.0, abs(beta)):
            return beta, iteration + 1, True
    return beta, max_iters, False


def huber_irls(x, tau, start, tol, max_iters):
    """Fixed point of the Huber psi-function by iteratively reweighted averaging

    Each step replaces ``beta`` with the weighted mean of ``x`` under weights
    ``min(1, tau / |x_i - beta|)``. Returns ``(beta, iterations, converged)``.
    """
    return _huber_irls_kernel(
        ensure_array(x, dtype=np.float64),
        float(tau),
        float(start),
        float(tol),
        int(max_iters),
    )


@float_kernel
@numba.njit
def arch_variance(z2, coeffs):
    """Conditional variances ``a0 + sum_i a_i z2[t - i]`` for ``t = k .. T-1``"""
    k = len(coeffs) - 1
    T = len(z2)
    out = np.empty(T - k, dtype=np.float64)
    for t in range(k, T):
        acc = coeffs[0]
        for i in range(1, k + 1):
            acc += coeffs[i] * z2[t - i]
        out[t - k] = acc
    return out


@float_kernel
@numba.njit
def arch_loglik_grad(z2, coeffs):
    """Gaussian conditional log-likelihood of an ARCH(k) model and its gradient

    The likelihood is ``-1/2 sum_{t>k} [log lambda2_t + z2_t / lambda2_t]``
    with the constant dropped.
    """
    k = len(coeffs) - 1
    T = len(z2)
    loglik = 0.0
    grad = np.zeros(k + 1, dtype=np.float64)
    for t in range(k, T):
        lam2 = coeffs[0]
        for i in range(1, k + 1):
            lam2 += coeffs[i] * z2[t - i]
        loglik -= 0.5 * (math.log(lam2) + z2[t] / lam2)
        # d loglik / d lam2
        g = -0.5 * (1.0 / lam2 - z2[t] / (lam2 * lam2))
        grad[0] += g
        for i in range(1, k + 1):
            grad[i] += g * z2[t - i]
    return loglik, grad


@float_kernel
@numba.njit
def arch_information(z2, coeffs):
    """Expected information ``1/2 sum_t x_t x_t' / lambda2_t**2`` of the ARCH(k) likelihood"""
    k = len(coeffs) - 1
    T = len(z2)
    info = np.zeros((k + 1, k + 1), dtype=np.float64)
    x = np.empty(k + 1, dtype=np.float64)
    for t in range(k, T):
        x[0] = 1.0
        lam2 = coeffs[0]
        for i in range(1, k + 1):
            x[i] = z2[t - i]
            lam2 += coeffs[i] * z2[t - i]
        scale = 0.5 / (lam2 * lam2)
        for a in range(k + 1):
            for b in range(k + 1):
                info[a, b] += scale * x[a] * x[b]
    return info


@numba.njit
def _connected_components_kernel(adjacency):
    p = adjacency.shape[0]
    labels = np.full(p, -1, dtype=np.int64)
    queue = np.empty(p, dtype=np.int64)
    n_components = 0
    for start in range(p):
        if labels[start] >= 0:
            continue
        labels[start] = n_components
        head = 0
        tail = 0
        queue[tail] = start
        tail += 1
        while head < tail:
            node = queue[head]
            head += 1
            for other in range(p):
                if adjacency[node, other] and labels[other] < 0:
                    if tail >= p:
                        msg = "queue went out of bounds!"
                        raise RuntimeError(msg)
                    labels[other] = n_components
                    queue[tail] = other
                    tail += 1
        n_components += 1
    return labels


def connected_components(adjacency):
    """Label the connected components of an undirected graph by breadth-first traversal

    Components are numbered in the order of their smallest node, so node 0
    always belongs to component 0.

    Example usage:
    Adjacency (edges 0-1 and 2-3)
    [[0, 1, 0, 0],
     [1, 0, 0, 0],
     [0, 0, 0, 1],
     [0, 0, 1, 0]]
    Labels
    [0, 0, 1, 1]
    """
    return _connected_components_kernel(ensure_array(adjacency).astype(np.bool_))


@numba.njit
def _centered_moving_average_kernel(x, w):
    n = len(x)
    left = (w - 1) // 2
    right = w // 2
    out = np.empty(n, dtype=np.float64)
    for t in range(n):
        start = max(0, t - left)
        stop = min(n, t + right + 1)
        acc = 0.0
        for s in range(start, stop):
            acc += x[s]
        out[t] = acc / (stop - start)
    return out


def centered_moving_average(x, w):
    """Centered moving average whose window shrinks at both edges

    For even ``w`` the window reaches one element further to the right.
    """
    return _centered_moving_average_kernel(ensure_array(x, dtype=np.float64), int(w))


BOXCAR, GAUSSIAN = 0, 1
CENTERED, LEFT, RIGHT = 0, 1, 2


@numba.njit
def _kernel_smooth_kernel(values, bandwidth, kernel, side):
    n = len(values)
    out = np.empty(n, dtype=np.float64)
    for t in range(n):
        num = 0.0
        den = 0.0
        for s in range(n):
            if side == 1 and s > t:
                continue
            if side == 2 and s < t:
                continue
            u = (s - t) / bandwidth
            if kernel == 0:
                weight = 1.0 if abs(s - t) <= bandwidth else 0.0
            else:
                weight = math.exp(-0.5 * u * u)
            num += weight * values[s]
            den += weight
        out[t] = num / den
    return out


def kernel_smooth(values, bandwidth, kernel, side):
    """Normalized kernel-weighted average of ``values`` around every time index

    ``kernel`` is `BOXCAR` or `GAUSSIAN`, ``side`` one of `CENTERED`, `LEFT`
    (only ``s <= t``) and `RIGHT` (only ``s >= t``). The weight at ``s = t`` is
    always positive, so every average is well defined.
    """
    return _kernel_smooth_kernel(
        ensure_array(values, dtype=np.float64), float(bandwidth), int(kernel), int(side)
    )

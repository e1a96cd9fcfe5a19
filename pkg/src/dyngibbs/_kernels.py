"""Compiled inner loops.

Each event kernel performs exactly the floating-point operations of the
pure-Python reference (:func:`dyngibbs.discrete.advance_event`) in the same
order, so compiled and reference traces agree bit for bit.
"""

import numpy as np
from numba import njit

# Largest double strictly below 1.
ONE_MINUS = 1.0 - 2.0**-53


@njit(cache=True, nogil=True)
def _zero_mass_exit(off, c, axsum_col):
    # vanishing-mass limit: move along c_j * S_j, first face wins, zero dwell
    n = off.size
    best = 0
    best_s = np.inf
    for j in range(n):
        w = c[j] * axsum_col[j]
        if w > 0.0:
            sj = (1.0 - off[j]) / w
            if sj < best_s:
                best_s = sj
                best = j
    if best_s < np.inf:
        for j in range(n):
            w = c[j] * axsum_col[j]
            if j != best and w > 0.0:
                o = off[j] + best_s * w
                if o >= 1.0:
                    o = ONE_MINUS
                off[j] = o
    return best


@njit(cache=True, nogil=True)
def dgibbs_table(cond, axsum, dims, strides, c, cell, off, t, n_events):
    """Event loop over a dense conditional table.

    ``cond[j, flat]`` is ``p(state) / axis_sum_j(state)`` and ``axsum[j, flat]``
    the axis sum itself (only consulted in zero-mass cells).  ``cell``/``off``
    are modified in place; returns (axes, dwell, time, zero_mass_events).
    """
    n = dims.size
    flat = 0
    for j in range(n):
        flat += cell[j] * strides[j]
    axes = np.empty(n_events, np.int32)
    dwell = np.empty(n_events)
    tau = np.empty(n)
    col = np.empty(n)
    vel = np.empty(n)
    zero = 0
    for k in range(n_events):
        allz = True
        for j in range(n):
            q = cond[j, flat]
            if q != 0.0:
                allz = False
            tau[j] = (1.0 - off[j]) * q / c[j]
            col[j] = axsum[j, flat]
        if allz:
            zero += 1
            tmin = 0.0
            best = _zero_mass_exit(off, c, col)
        else:
            best = 0
            tmin = tau[0]
            for j in range(1, n):
                if tau[j] < tmin:
                    tmin = tau[j]
                    best = j
        if not allz and tmin > 0.0:
            for j in range(n):
                if j != best:
                    vel[j] = c[j] / cond[j, flat]
                    o = off[j] + tmin * vel[j]
                    if o >= 1.0:
                        o = ONE_MINUS
                    off[j] = o
        off[best] = 0.0
        if cell[best] + 1 == dims[best]:
            cell[best] = 0
            flat -= (dims[best] - 1) * strides[best]
        else:
            cell[best] += 1
            flat += strides[best]
        t += tmin
        axes[k] = best
        dwell[k] = tmin
    return axes, dwell, t, zero


@njit(cache=True, nogil=True)
def ising_conditional(spin, nsum, coupling, hfield):
    # p(current spin | rest) for E = J sum s_i s_j - sum h_i s_i, p ~ exp(-E)
    a = coupling * nsum - hfield
    return 1.0 / (1.0 + np.exp(2.0 * spin * a))


@njit(cache=True, nogil=True)
def _neighbor_sums(nbrs, spins):
    n = spins.size
    out = np.zeros(n, np.int64)
    for i in range(n):
        s = 0
        for m in range(nbrs.shape[1]):
            b = nbrs[i, m]
            if b >= 0:
                s += spins[b]
        out[i] = s
    return out


@njit(cache=True, nogil=True)
def dgibbs_ising(nbrs, coupling, hfield, c, cell, off, t, n_events):
    """Event loop for a nearest-neighbour Ising lattice; cell index 0/1 is spin -1/+1."""
    n = cell.size
    spins = 2 * cell.astype(np.int64) - 1
    nsum = _neighbor_sums(nbrs, spins)
    cond = np.empty(n)
    for i in range(n):
        cond[i] = ising_conditional(spins[i], nsum[i], coupling, hfield[i])
    axes = np.empty(n_events, np.int32)
    dwell = np.empty(n_events)
    for k in range(n_events):
        best = 0
        tmin = (1.0 - off[0]) * cond[0] / c[0]
        for j in range(1, n):
            tj = (1.0 - off[j]) * cond[j] / c[j]
            if tj < tmin:
                tmin = tj
                best = j
        if tmin > 0.0:
            for j in range(n):
                if j != best:
                    o = off[j] + tmin * (c[j] / cond[j])
                    if o >= 1.0:
                        o = ONE_MINUS
                    off[j] = o
        off[best] = 0.0
        cell[best] = 1 - cell[best]
        s = -spins[best]
        spins[best] = s
        for m in range(nbrs.shape[1]):
            b = nbrs[best, m]
            if b >= 0:
                nsum[b] += 2 * s
                cond[b] = ising_conditional(spins[b], nsum[b], coupling, hfield[b])
        cond[best] = ising_conditional(s, nsum[best], coupling, hfield[best])
        t += tmin
        axes[k] = best
        dwell[k] = tmin
    return axes, dwell, t, 0


@njit(cache=True, nogil=True)
def gibbs_table(cond, dims, strides, cell, axes, uniforms):
    """Systematic or random-scan Gibbs on a dense table; returns new values per update.

    The conditional masses along axis ``j`` are ``cond[j, flat(v)]`` for ``v``
    in ``0..d_j-1``; a value is drawn by inverse CDF against ``u * total``.
    """
    n_up = axes.size
    newv = np.empty(n_up, np.int32)
    flat = 0
    for j in range(dims.size):
        flat += cell[j] * strides[j]
    for k in range(n_up):
        j = axes[k]
        base = flat - cell[j] * strides[j]
        tot = 0.0
        for v in range(dims[j]):
            tot += cond[j, base + v * strides[j]]
        if not tot > 0.0:
            newv[k] = -1
            return newv[: k + 1]
        thr = uniforms[k] * tot
        acc = 0.0
        pick = dims[j] - 1
        for v in range(dims[j]):
            acc += cond[j, base + v * strides[j]]
            if thr < acc:
                pick = v
                break
        cell[j] = pick
        flat = base + pick * strides[j]
        newv[k] = pick
    return newv


@njit(cache=True, nogil=True)
def gibbs_ising(nbrs, coupling, hfield, cell, axes, uniforms):
    n = cell.size
    spins = 2 * cell.astype(np.int64) - 1
    nsum = _neighbor_sums(nbrs, spins)
    newv = np.empty(axes.size, np.int32)
    for k in range(axes.size):
        i = axes[k]
        # probability of index 0 (spin -1)
        p_minus = ising_conditional(-1, nsum[i], coupling, hfield[i])
        v = 0 if uniforms[k] < p_minus else 1
        s = 2 * v - 1
        if s != spins[i]:
            spins[i] = s
            cell[i] = v
            for m in range(nbrs.shape[1]):
                b = nbrs[i, m]
                if b >= 0:
                    nsum[b] += 2 * s
        newv[k] = v
    return newv


@njit(cache=True, nogil=True)
def running_means(cell0, dims, values, axes, newv, weights, record, before):
    """Weighted running means of per-axis values at the given sample counts.

    Sample ``k`` carries weight ``weights[k]``.  With ``before`` the sample is
    the state prior to change ``k`` (event traces); otherwise the state after
    it (stochastic chains).  ``newv`` empty means "advance by one, mod d".
    ``record`` holds 1-based sample counts in increasing order.
    """
    n = dims.size
    cur = cell0.copy()
    acc = np.zeros(n)
    last = np.zeros(n)
    out = np.empty((record.size, n))
    W = 0.0
    r = 0
    inc = newv.size == 0
    for k in range(axes.size):
        j = axes[k]
        nv = (cur[j] + 1) % dims[j] if inc else newv[k]
        if before:
            W += weights[k]
        if nv != cur[j]:
            acc[j] += (W - last[j]) * values[j, cur[j]]
            last[j] = W
            cur[j] = nv
        if not before:
            W += weights[k]
        while r < record.size and record[r] == k + 1:
            for i in range(n):
                out[r, i] = (acc[i] + (W - last[i]) * values[i, cur[i]]) / W
            r += 1
    return out


@njit(cache=True, nogil=True)
def flat_path(cell0, dims, strides, axes, newv, before):
    """Flat state index of every sample of a trace or chain."""
    cur = cell0.copy()
    flat = 0
    for j in range(dims.size):
        flat += cur[j] * strides[j]
    out = np.empty(axes.size, np.int64)
    inc = newv.size == 0
    for k in range(axes.size):
        j = axes[k]
        nv = (cur[j] + 1) % dims[j] if inc else newv[k]
        if before:
            out[k] = flat
        flat += (nv - cur[j]) * strides[j]
        cur[j] = nv
        if not before:
            out[k] = flat
    return out


@njit(cache=True, nogil=True)
def ising_energy_path(nbrs, coupling, hfield, cell0, axes, newv):
    """Energy after every change, ``E = J sum_edges s_i s_j - sum_i h_i s_i``."""
    n = cell0.size
    spins = 2 * cell0.astype(np.int64) - 1
    nsum = _neighbor_sums(nbrs, spins)
    e = 0.0
    pair = 0
    for i in range(n):
        pair += spins[i] * nsum[i]
        e -= hfield[i] * spins[i]
    e += coupling * (pair // 2)
    out = np.empty(axes.size)
    inc = newv.size == 0
    for k in range(axes.size):
        i = axes[k]
        s_old = spins[i]
        s_new = -s_old if inc else 2 * newv[k] - 1
        if s_new != s_old:
            e += coupling * (s_new - s_old) * nsum[i] - hfield[i] * (s_new - s_old)
            spins[i] = s_new
            for m in range(nbrs.shape[1]):
                b = nbrs[i, m]
                if b >= 0:
                    nsum[b] += s_new - s_old
        out[k] = e
    return out

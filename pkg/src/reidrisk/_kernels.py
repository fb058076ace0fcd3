"""Compiled inner loops for the reidentification engine.

All arrays are the CSR layout of ``GeneralizedDataset``:
traces ``t_indptr``/``t_pts`` (point ids sorted within each user) and
postings ``p_indptr``/``p_users`` (user ids sorted within each point).

Randomness is counter-based: every (seed, user key, trial, stream) tuple is
hashed into its own splitmix64 state, so a user's draws never depend on
which thread handles it or in what order.
"""

import numpy as np
from numba import config, njit, prange

# the system TBB is too old for numba; skip probing it
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 1.0 / 9007199254740992.0


@njit(inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _C1
    z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


@njit(inline="always", cache=True)
def _stream_state(seed, key, trial, stream):
    s = _mix(seed + GOLDEN * np.uint64(stream + 1))
    s = _mix(s ^ key)
    return _mix(s ^ (GOLDEN * np.uint64(trial + 1)))


@njit(inline="always", cache=True)
def _below(state, bound):
    """Next state and an integer in [0, bound)."""
    state = state + GOLDEN
    u = np.float64(_mix(state) >> np.uint64(11)) * _TWO_M53
    r = np.int64(u * bound)
    if r >= bound:  # float rounding guard
        r = bound - 1
    return state, r


@njit(inline="always", cache=True)
def _contains(arr, lo, hi, x):
    while lo < hi:
        mid = (lo + hi) >> 1
        v = arr[mid]
        if v < x:
            lo = mid + 1
        elif v > x:
            hi = mid
        else:
            return True
    return False


@njit(parallel=True, cache=True)
def full_class_sizes(t_indptr, t_pts, p_indptr, p_users):
    """Number of users whose trace contains each user's full trace."""
    n = len(t_indptr) - 1
    out = np.empty(n, dtype=np.int64)
    for u in prange(n):
        lo, hi = t_indptr[u], t_indptr[u + 1]
        best = t_pts[lo]
        for i in range(lo + 1, hi):
            p = t_pts[i]
            if p_indptr[p + 1] - p_indptr[p] < p_indptr[best + 1] - p_indptr[best]:
                best = p
        count = 0
        for i in range(p_indptr[best], p_indptr[best + 1]):
            c = p_users[i]
            ok = True
            for k in range(lo, hi):
                if not _contains(t_pts, t_indptr[c], t_indptr[c + 1], t_pts[k]):
                    ok = False
                    break
            if ok:
                count += 1
        out[u] = count
    return out


@njit(cache=True)
def _grow(buf, need):
    if len(buf) >= need:
        return buf
    return np.empty(max(need, 2 * len(buf)), dtype=buf.dtype)


@njit(cache=True)
def _neighbour_rows(u, t_indptr, t_pts, p_indptr, p_users, slot, nb, sidx, rows_buf):
    """Per-point bitsets over the users sharing a point with u.

    Every such user gets a slot; bit s of ``rows[i]`` is set when the user in
    slot s also holds u's i-th point.  ``nz_indptr``/``nz_words`` list the
    nonzero words of each row.  ``slot`` is n-sized scratch, all -1 on entry
    and exit; ``nb`` is n-sized scratch.  ``sidx`` and ``rows_buf`` are
    reusable scratch, grown when too small and handed back to the caller.
    """
    lo, hi = t_indptr[u], t_indptr[u + 1]
    m = hi - lo
    total = 0
    for i in range(lo, hi):
        p = t_pts[i]
        total += p_indptr[p + 1] - p_indptr[p] - 1
    sidx = _grow(sidx, total)
    count = 0
    e = 0
    for i in range(m):
        p = t_pts[lo + i]
        for k in range(p_indptr[p], p_indptr[p + 1]):
            v = p_users[k]
            if v == u:
                continue
            s = slot[v]
            if s < 0:
                s = count
                slot[v] = s
                nb[count] = v
                count += 1
            sidx[e] = s
            e += 1
    for k in range(count):
        slot[nb[k]] = -1

    words = max((count + 63) >> 6, 1)
    rows_buf = _grow(rows_buf, m * words)
    rows = rows_buf[: m * words].reshape((m, words))
    rows[:] = 0
    nz_indptr = np.zeros(m + 1, dtype=np.int64)
    e = 0
    for i in range(m):
        p = t_pts[lo + i]
        for _ in range(p_indptr[p + 1] - p_indptr[p] - 1):
            s = sidx[e]
            e += 1
            rows[i, s >> 6] |= np.uint64(1) << np.uint64(s & 63)
        c = 0
        for w in range(words):
            if rows[i, w]:
                c += 1
        nz_indptr[i + 1] = nz_indptr[i] + c
    nz_words = np.empty(max(nz_indptr[m], 1), dtype=np.int32)
    for i in range(m):
        f = nz_indptr[i]
        for w in range(words):
            if rows[i, w]:
                nz_words[f] = w
                f += 1
    return rows, nz_indptr, nz_words, sidx, rows_buf


@njit(cache=True)
def _draws_to_unique(buf, m, limit, state, swaps, rows, nz_indptr, nz_words, widx, wval):
    """Shuffle-draw from buf[:m] (local point indices) until no other user
    covers the drawn set.

    The running candidate set is the AND of the drawn rows, kept as its
    nonzero words only.  Returns the number of draws, or 0 if ``limit``
    draws do not single the user out.  Swaps are undone so ``buf`` is
    unchanged on return.
    """
    first = -1
    started = False
    nact = 0
    result = 0
    nswap = 0
    for j in range(limit):
        state, r = _below(state, m - j)
        r += j
        tmp = buf[j]
        buf[j] = buf[r]
        buf[r] = tmp
        swaps[nswap] = r
        nswap += 1
        i = buf[j]
        if j == 0:
            first = i
            if nz_indptr[i + 1] == nz_indptr[i]:
                result = 1
                break
            continue
        if not started:
            if i == first:
                continue
            a, b = first, i
            if nz_indptr[b + 1] - nz_indptr[b] < nz_indptr[a + 1] - nz_indptr[a]:
                a, b = b, a
            nact = 0
            for k in range(nz_indptr[a], nz_indptr[a + 1]):
                w = nz_words[k]
                v = rows[a, w] & rows[b, w]
                if v:
                    widx[nact] = w
                    wval[nact] = v
                    nact += 1
            started = True
        else:
            kept_n = 0
            for k in range(nact):
                v = wval[k] & rows[i, widx[k]]
                if v:
                    widx[kept_n] = widx[k]
                    wval[kept_n] = v
                    kept_n += 1
            nact = kept_n
        if nact == 0:
            result = j + 1
            break
    for j in range(nswap - 1, -1, -1):
        r = swaps[j]
        tmp = buf[j]
        buf[j] = buf[r]
        buf[r] = tmp
    return result


@njit(cache=True)
def _local_buffer(u, t_indptr, t_counts, raw_basis):
    lo, hi = t_indptr[u], t_indptr[u + 1]
    size = 0
    for i in range(lo, hi):
        size += t_counts[i] if raw_basis else 1
    buf = np.empty(size, dtype=np.int32)
    m = 0
    for i in range(hi - lo):
        reps = t_counts[lo + i] if raw_basis else 1
        for _ in range(reps):
            buf[m] = i
            m += 1
    return buf


@njit(cache=True)
def generalized_traces(user_offsets, tower_idx, tower_zone, minutes, slice_minutes, n_slices):
    """Per-user sorted distinct cells (zone * n_slices + slice) with record counts."""
    n = len(user_offsets) - 1
    cells = np.empty(len(tower_idx), dtype=np.int64)
    counts = np.empty(len(tower_idx), dtype=np.int32)
    indptr = np.zeros(n + 1, dtype=np.int64)
    tmp = np.empty(256, dtype=np.int64)
    e = 0
    for u in range(n):
        lo, hi = user_offsets[u], user_offsets[u + 1]
        tmp = _grow(tmp, hi - lo)
        for k in range(lo, hi):
            tmp[k - lo] = np.int64(tower_zone[tower_idx[k]]) * n_slices + minutes[k] // slice_minutes
        seg = tmp[: hi - lo]
        seg.sort()
        prev = -1
        for x in seg:
            if x != prev:
                cells[e] = x
                counts[e] = 1
                e += 1
                prev = x
            else:
                counts[e - 1] += 1
        indptr[u + 1] = e
    return indptr, cells[:e].copy(), counts[:e].copy()


@njit(cache=True)
def postings(t_indptr, t_pts, n_points):
    """Inverted index by counting sort; users ascend within each posting."""
    indptr = np.zeros(n_points + 1, dtype=np.int64)
    for p in t_pts:
        indptr[p + 1] += 1
    for p in range(n_points):
        indptr[p + 1] += indptr[p]
    fill = indptr[:-1].copy()
    users = np.empty(len(t_pts), dtype=np.int32)
    for u in range(len(t_indptr) - 1):
        for k in range(t_indptr[u], t_indptr[u + 1]):
            p = t_pts[k]
            users[fill[p]] = u
            fill[p] += 1
    return indptr, users


def user_blocks(n):
    """User ranges handled by one worker each (each owns its scratch)."""
    nb = max(1, min(n, 256))
    return np.linspace(0, n, nb + 1).astype(np.int64)


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - np.uint64(1)
        c += 1
    return c


@njit(cache=True)
def _class_size(rows, nz_indptr, nz_words):
    """1 + number of other users holding every row's point."""
    m = rows.shape[0]
    best = 0
    for i in range(1, m):
        if nz_indptr[i + 1] - nz_indptr[i] < nz_indptr[best + 1] - nz_indptr[best]:
            best = i
    count = 1
    for k in range(nz_indptr[best], nz_indptr[best + 1]):
        w = nz_words[k]
        v = rows[best, w]
        for i in range(m):
            v &= rows[i, w]
            if not v:
                break
        count += _popcount(v)
    return count


@njit(parallel=True, cache=True)
def user_risk(keys, seed, cost_trials, cost_stream, raw_basis, uni_trials, uni_stream, pmax, bounds,
              t_indptr, t_pts, t_counts, p_indptr, p_users):
    """Everything the per-user Monte Carlo needs, from one neighbourhood build.

    Returns full-trace class sizes, mean cost over ``cost_trials`` orderings
    (NaN for censored users) and the unicity histogram: hist[u, k] counts
    rounds in which u became unique after exactly k draws (k <= pmax), and
    hist[u, 0] rounds not unique within pmax draws.  Either trial count may
    be 0 to skip that part.
    """
    n = len(keys)
    sizes = np.empty(n, dtype=np.int64)
    costs = np.full(n, np.nan)
    hist = np.zeros((n, pmax + 1), dtype=np.int64)
    for b in prange(len(bounds) - 1):
        slot = np.full(n, -1, dtype=np.int32)
        nb = np.empty(n, dtype=np.int32)
        sidx = np.empty(1024, dtype=np.int32)
        rows_buf = np.empty(1024, dtype=np.uint64)
        widx = np.empty(64, dtype=np.int32)
        wval = np.empty(64, dtype=np.uint64)
        for u in range(bounds[b], bounds[b + 1]):
            rows, nz_indptr, nz_words, sidx, rows_buf = _neighbour_rows(
                u, t_indptr, t_pts, p_indptr, p_users, slot, nb, sidx, rows_buf)
            size = _class_size(rows, nz_indptr, nz_words)
            sizes[u] = size
            if size > 1:
                hist[u, 0] = uni_trials
                continue
            widx = _grow(widx, rows.shape[1])
            wval = _grow(wval, rows.shape[1])
            if cost_trials > 0:
                buf = _local_buffer(u, t_indptr, t_counts, raw_basis)
                m = len(buf)
                swaps = np.empty(m, dtype=np.int64)
                total = 0
                for t in range(cost_trials):
                    state = _stream_state(seed, keys[u], t, cost_stream)
                    total += _draws_to_unique(buf, m, m, state, swaps, rows, nz_indptr, nz_words, widx, wval)
                costs[u] = total / cost_trials
            if uni_trials > 0:
                buf = _local_buffer(u, t_indptr, t_counts, False)
                m = len(buf)
                limit = min(m, pmax)
                swaps = np.empty(m, dtype=np.int64)
                for t in range(uni_trials):
                    state = _stream_state(seed, keys[u], t, uni_stream)
                    k = _draws_to_unique(buf, m, limit, state, swaps, rows, nz_indptr, nz_words, widx, wval)
                    hist[u, k] += 1
    return sizes, costs, hist

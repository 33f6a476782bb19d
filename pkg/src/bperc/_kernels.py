"""Compiled kernels: counter-based random fields, work-list closure, batched trials.

Closure kernels work on a *padded* byte grid: the interior is the domain in
row-major order (row 0 = lowest y) and a one-site frame surrounds it, so
neighbour lookups need no bounds checks.  Byte encoding:

* ``MARK`` (0x83) -- initially occupied site, or frame site;
* standard rule -- a healthy byte counts infected neighbours; it is infected
  once the count reaches 2 (any value >= 2);
* modified rule -- a healthy byte is a bitmask of infected neighbour axes
  (horizontal=1, vertical=2); it is infected once the mask reaches 3.

Frame sites look infected to their neighbours' bookkeeping but never enter the
work list, so they never infect anything: sites outside the domain stay healthy.

Every kernel releases the GIL so that callers may fan out over threads.
"""
import numpy as np
from numba import njit

MARK = 0x83

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@njit(cache=True, nogil=True)
def mix64(z):
    # SplitMix64 finalizer; a bijection on 64-bit words.
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def stream_key(seed, index):
    """Start state of substream ``index`` of ``seed``; injective in ``index`` for fixed ``seed``."""
    return mix64(mix64(np.uint64(seed)) ^ mix64(np.uint64(index) + _GAMMA))


@njit(cache=True, nogil=True)
def fill_field(key, threshold, out):
    # Site k is occupied iff the k-th SplitMix64 output, as a 53-bit uniform u,
    # satisfies u < p; in integers: (bits >> 11) < ceil(p * 2**53).
    thr = np.uint64(threshold)
    z = np.uint64(key)
    for k in range(out.shape[0]):
        z = z + _GAMMA
        out[k] = 1 if (mix64(z) >> _S11) < thr else 0


@njit(cache=True, nogil=True)
def fill_uniforms(key, out):
    z = np.uint64(key)
    scale = 1.0 / 9007199254740992.0
    for k in range(out.shape[0]):
        z = z + _GAMMA
        out[k] = float(mix64(z) >> _S11) * scale


@njit(cache=True, nogil=True)
def _fill_padded(key, threshold, st, stride, rows):
    # Same site order and values as fill_field, written into a padded grid.
    thr = np.uint64(threshold)
    z = np.uint64(key)
    for r in range(1, rows + 1):
        base = r * stride
        for c in range(1, stride - 1):
            z = z + _GAMMA
            st[base + c] = MARK if (mix64(z) >> _S11) < thr else 0


@njit(cache=True, nogil=True)
def frame(st, stride, rows):
    for c in range(stride):
        st[c] = MARK
        st[(rows + 1) * stride + c] = MARK
    for r in range(1, rows + 1):
        st[r * stride] = MARK
        st[r * stride + stride - 1] = MARK


@njit(cache=True, nogil=True)
def _seed_work_list(st, work, stride, rows):
    tail = 0
    for r in range(1, rows + 1):
        base = r * stride
        for s in range(base + 1, base + stride - 1):
            work[tail] = s
            tail += st[s] >> 7
    return tail


@njit(cache=True, nogil=True)
def grow_standard(st, work, stride, rows):
    """Infect every healthy site reached by two infected neighbours; returns the infected count.

    Each infected site is pushed once and notifies four neighbours: linear work.
    The push is branch-free (speculative store, conditional advance).
    """
    tail = _seed_work_list(st, work, stride, rows)
    count = tail
    while tail > 0:
        tail -= 1
        s = work[tail]
        for t in (s - 1, s + 1, s - stride, s + stride):
            v = st[t] + 1
            st[t] = v
            work[tail] = t
            hit = v == 2
            tail += hit
            count += hit
    return count


@njit(cache=True, nogil=True)
def grow_modified(st, work, stride, rows):
    """Infect every healthy site with an infected neighbour on each axis; returns the infected count."""
    tail = _seed_work_list(st, work, stride, rows)
    count = tail
    while tail > 0:
        tail -= 1
        s = work[tail]
        for t, bit in ((s - 1, 1), (s + 1, 1), (s - stride, 2), (s + stride, 2)):
            old = st[t]
            v = old | bit
            st[t] = v
            work[tail] = t
            hit = (v == 3) & (old != 3)
            tail += hit
            count += hit
    return count


@njit(cache=True, nogil=True)
def run_closure(st, work, stride, rows, modified):
    """Closure of a filled padded grid; ``work`` needs ``interior + 1`` slots."""
    if modified:
        return grow_modified(st, work, stride, rows)
    # Standard-rule bookkeeping increments frame bytes; restore them first.
    frame(st, stride, rows)
    return grow_standard(st, work, stride, rows)


@njit(cache=True, nogil=True)
def is_infected(v, modified):
    if modified:
        return (v & 3) == 3
    return v >= 2


@njit(cache=True, nogil=True)
def closure_inplace(state, width, height, modified):
    """Closure of an unpadded 0/1 row-major grid, written back into ``state``; returns the count."""
    stride = width + 2
    st = np.empty(stride * (height + 2), np.uint8)
    work = np.empty(width * height + 1, np.int32)
    frame(st, stride, height)
    for r in range(height):
        for c in range(width):
            st[(r + 1) * stride + c + 1] = MARK if state[r * width + c] else 0
    count = run_closure(st, work, stride, height, modified)
    for r in range(height):
        for c in range(width):
            state[r * width + c] = 1 if is_infected(st[(r + 1) * stride + c + 1], modified) else 0
    return count


@njit(cache=True, nogil=True)
def count_spanning(side, threshold, modified, seed, start, stop):
    """Number of trials in ``[start, stop)`` whose random R(side) is internally spanned.

    Trial ``i`` uses the field of stream ``(seed, i)``.
    """
    n = side * side
    stride = side + 2
    st = np.empty(stride * stride, np.uint8)
    work = np.empty(n + 1, np.int32)
    frame(st, stride, side)
    hits = 0
    for trial in range(start, stop):
        _fill_padded(stream_key(seed, trial), threshold, st, stride, side)
        if run_closure(st, work, stride, side, modified) == n:
            hits += 1
    return hits


@njit(cache=True, nogil=True)
def spanning_under_shared_uniforms(side, thresholds, modified, seed, start, stop, out):
    """Spanning indicators of each trial at several densities sharing one uniform field."""
    n = side * side
    stride = side + 2
    u = np.empty(n, np.float64)
    st = np.empty(stride * stride, np.uint8)
    work = np.empty(n + 1, np.int32)
    for trial in range(start, stop):
        fill_uniforms(stream_key(seed, trial), u)
        for j in range(thresholds.shape[0]):
            frame(st, stride, side)
            for r in range(side):
                for c in range(side):
                    st[(r + 1) * stride + c + 1] = MARK if u[r * side + c] < thresholds[j] else 0
            out[trial - start, j] = run_closure(st, work, stride, side, modified) == n


@njit(cache=True, nogil=True)
def enumerate_span_counts(width, height, modified, lo, hi):
    """Spanning bit patterns in ``[lo, hi)`` counted by number of occupied sites.

    Bit ``s`` of a pattern is site ``s`` in row-major order.  Patterns with a
    vacant boundary row or column cannot span under either rule (the first site
    infected on that line would need a neighbour outside) and skip the closure.
    """
    n = width * height
    stride = width + 2
    counts = np.zeros(n + 1, np.int64)
    st = np.empty(stride * (height + 2), np.uint8)
    work = np.empty(n + 1, np.int32)
    bottom = (1 << width) - 1
    top = bottom << (width * (height - 1))
    left = 0
    for r in range(height):
        left |= 1 << (r * width)
    right = left << (width - 1)
    frame(st, stride, height)
    for mask in range(lo, hi):
        if (mask & bottom) == 0 or (mask & top) == 0 or (mask & left) == 0 or (mask & right) == 0:
            continue
        k = 0
        for r in range(height):
            for c in range(width):
                bit = (mask >> (r * width + c)) & 1
                st[(r + 1) * stride + c + 1] = MARK if bit else 0
                k += bit
        if run_closure(st, work, stride, height, modified) == n:
            counts[k] += 1
    return counts


@njit(cache=True, nogil=True)
def _prefix_rows(grid):
    h, w = grid.shape
    pre = np.zeros((h, w + 1), np.int32)
    for r in range(h):
        for c in range(w):
            pre[r, c + 1] = pre[r, c] + grid[r, c]
    return pre


@njit(cache=True, nogil=True)
def _prefix_cols(grid):
    h, w = grid.shape
    pre = np.zeros((w, h + 1), np.int32)
    for c in range(w):
        for r in range(h):
            pre[c, r + 1] = pre[c, r] + grid[r, c]
    return pre


@njit(cache=True, nogil=True)
def _lines_admissible(pre, first, last, lo, hi, modified):
    # Necessary conditions for internal spanning of a rectangle, on its parallel
    # lines first..last restricted to [lo, hi]: both edge lines non-vacant, and
    # no vacant line (modified) or no two adjacent vacant lines (standard).
    prev_vacant = False
    for i in range(first, last + 1):
        vacant = pre[i, hi + 1] - pre[i, lo] == 0
        if vacant:
            if i == first or i == last or modified or prev_vacant:
                return False
        prev_vacant = vacant
    return True


@njit(cache=True, nogil=True)
def spanned_subrectangles(grid, modified, k, first_only):
    """Sub-rectangles with long side in [k, 2k] internally spanned by ``grid`` (a 0/1 array).

    Returns an ``(n, 4)`` array of inclusive 0-based ``(col0, row0, col1, row1)``.
    """
    h, w = grid.shape
    rows = _prefix_rows(grid)
    cols = _prefix_cols(grid)
    st = np.empty((h + 2) * (w + 2), np.uint8)
    work = np.empty(h * w + 1, np.int32)
    found = np.empty((16, 4), np.int64)
    nfound = 0
    for long_side in range(k, min(2 * k, max(h, w)) + 1):
        for rw in range(1, min(long_side, w) + 1):
            for rh in range(1, min(long_side, h) + 1):
                if max(rw, rh) != long_side:
                    continue
                stride = rw + 2
                for r0 in range(h - rh + 1):
                    r1 = r0 + rh - 1
                    for c0 in range(w - rw + 1):
                        c1 = c0 + rw - 1
                        if not _lines_admissible(rows, r0, r1, c0, c1, modified):
                            continue
                        if not _lines_admissible(cols, c0, c1, r0, r1, modified):
                            continue
                        frame(st, stride, rh)
                        for r in range(rh):
                            for c in range(rw):
                                st[(r + 1) * stride + c + 1] = MARK if grid[r0 + r, c0 + c] else 0
                        if run_closure(st, work, stride, rh, modified) == rw * rh:
                            if nfound == found.shape[0]:
                                bigger = np.empty((2 * nfound, 4), np.int64)
                                bigger[:nfound] = found
                                found = bigger
                            found[nfound, 0] = c0
                            found[nfound, 1] = r0
                            found[nfound, 2] = c1
                            found[nfound, 3] = r1
                            nfound += 1
                            if first_only:
                                return found[:1].copy()
    return found[:nfound].copy()

"""Hot numeric kernels, each with a numba path and a pure-numpy path.

Set ``LCAFORGE_DISABLE_NUMBA=1`` to force the numpy implementations (the
default when numba is not installed). Both paths return identical results;
``tests/test_kernels.py`` checks that bit for bit.

Graphs are passed in CSR form (``indptr``, ``indices``) over integer node ids.
"""

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None

USE_NUMBA = _nb is not None and os.environ.get("LCAFORGE_DISABLE_NUMBA", "") not in ("1", "true", "yes")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM = np.uint64(0xD6E8FEB86659FD93)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0**-53


# ------------------------------------------------------- counter-based uniforms


def _mix_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _uniforms_np(seed, start, count, n_streams):
    """Uniforms in (0, 1) for samples ``start..start+count`` and streams ``0..n_streams``."""
    with np.errstate(over="ignore"):
        key = _mix_np(np.array([seed], dtype=np.uint64) + _GOLDEN)[0]
        k = np.arange(start, start + count, dtype=np.uint64)
        row = _mix_np(key ^ ((k + np.uint64(1)) * _GOLDEN))
        j = np.arange(n_streams, dtype=np.uint64)
        x = _mix_np(row[:, None] ^ ((j[None, :] + np.uint64(1)) * _STREAM))
    return ((x >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def _reach_np(indptr, indices, sources, n):
    seen = np.zeros(n, dtype=np.bool_)
    frontier = np.unique(np.asarray(sources, dtype=np.int64))
    seen[frontier] = True
    while frontier.size:
        starts, stops = indptr[frontier], indptr[frontier + 1]
        lens = stops - starts
        if lens.sum() == 0:
            break
        offs = np.repeat(starts - np.concatenate(([0], np.cumsum(lens)[:-1])), lens)
        nxt = indices[np.arange(lens.sum()) + offs]
        nxt = np.unique(nxt[~seen[nxt]])
        seen[nxt] = True
        frontier = nxt
    return seen


def _propagate_max_np(indptr, indices, seeds, seed_rank, n):
    """Multi-source BFS in descending seed rank: each node keeps the first (highest) rank reaching it."""
    rank = np.full(n, -1, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    origin = np.full(n, -1, dtype=np.int64)
    order = np.argsort(-np.asarray(seed_rank), kind="stable")
    for s in order:
        node, r = int(seeds[s]), int(seed_rank[s])
        if rank[node] >= r:
            continue
        rank[node], parent[node], origin[node] = r, -1, s
        queue = [node]
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            for v in indices[indptr[u] : indptr[u + 1]]:
                if rank[v] < r:
                    rank[v], parent[v], origin[v] = r, u, s
                    queue.append(int(v))
    return rank, parent, origin


def _min_reachable_np(indptr, indices, values, n):
    out = np.empty(n, dtype=values.dtype)
    for i in range(n):
        out[i] = values[_reach_np(indptr, indices, [i], n)].min()
    return out


if _nb is not None:  # compiled lazily; the env switch only changes the default path

    @_nb.njit(cache=True, nogil=True)
    def _mix_nb(z):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    @_nb.njit(cache=True, nogil=True)
    def _uniforms_nb(seed, start, count, n_streams):
        out = np.empty((count, n_streams), dtype=np.float64)
        key = _mix_nb(np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15))
        for a in range(count):
            k = np.uint64(start + a)
            row = _mix_nb(key ^ ((k + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15)))
            for b in range(n_streams):
                x = _mix_nb(row ^ ((np.uint64(b) + np.uint64(1)) * np.uint64(0xD6E8FEB86659FD93)))
                out[a, b] = (np.float64(x >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
        return out

    @_nb.njit(cache=True, nogil=True)
    def _reach_nb(indptr, indices, sources, n):
        seen = np.zeros(n, dtype=np.bool_)
        stack = np.empty(n, dtype=np.int64)
        top = 0
        for s in sources:
            if not seen[s]:
                seen[s] = True
                stack[top] = s
                top += 1
        while top > 0:
            top -= 1
            u = stack[top]
            for p in range(indptr[u], indptr[u + 1]):
                v = indices[p]
                if not seen[v]:
                    seen[v] = True
                    stack[top] = v
                    top += 1
        return seen

    @_nb.njit(cache=True, nogil=True)
    def _propagate_max_nb(indptr, indices, seeds, seed_rank, n):
        rank = np.full(n, -1, dtype=np.int64)
        parent = np.full(n, -1, dtype=np.int64)
        origin = np.full(n, -1, dtype=np.int64)
        order = np.argsort(-seed_rank, kind="mergesort")
        queue = np.empty(n, dtype=np.int64)
        for s in order:
            node = seeds[s]
            r = seed_rank[s]
            if rank[node] >= r:
                continue
            rank[node] = r
            parent[node] = -1
            origin[node] = s
            head = 0
            tail = 1
            queue[0] = node
            while head < tail:
                u = queue[head]
                head += 1
                for p in range(indptr[u], indptr[u + 1]):
                    v = indices[p]
                    if rank[v] < r:
                        rank[v] = r
                        parent[v] = u
                        origin[v] = s
                        queue[tail] = v
                        tail += 1
        return rank, parent, origin

    @_nb.njit(cache=True, nogil=True)
    def _min_reachable_nb(indptr, indices, values, n):
        out = np.empty(n, dtype=values.dtype)
        src = np.empty(1, dtype=np.int64)
        for i in range(n):
            src[0] = i
            seen = _reach_nb(indptr, indices, src, n)
            best = values[i]
            for j in range(n):
                if seen[j] and values[j] < best:
                    best = values[j]
            out[i] = best
        return out


def counter_uniforms(seed: int, start: int, count: int, n_streams: int, *, use_numba=None) -> np.ndarray:
    """Counter-based uniforms: entry ``[k - start, j]`` depends only on ``(seed, k, j)``."""
    seed = int(seed) % 2**64
    if count <= 0 or n_streams <= 0:
        return np.empty((max(count, 0), max(n_streams, 0)))
    if USE_NUMBA if use_numba is None else use_numba:
        return _uniforms_nb(np.uint64(seed), np.int64(start), np.int64(count), np.int64(n_streams))
    return _uniforms_np(seed, start, count, n_streams)


def reachable(indptr, indices, sources, *, use_numba=None) -> np.ndarray:
    """Boolean mask of nodes reachable from ``sources`` (sources included)."""
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    n = len(indptr) - 1
    sources = np.asarray(sources, dtype=np.int64)
    if USE_NUMBA if use_numba is None else use_numba:
        return _reach_nb(indptr, indices, sources, n)
    return _reach_np(indptr, indices, sources, n)


def propagate_max(indptr, indices, seeds, seed_rank, *, use_numba=None):
    """Return ``(rank, parent, origin)`` arrays; rank -1 marks unreached nodes."""
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    seeds = np.asarray(seeds, dtype=np.int64)
    seed_rank = np.asarray(seed_rank, dtype=np.int64)
    n = len(indptr) - 1
    if USE_NUMBA if use_numba is None else use_numba:
        return _propagate_max_nb(indptr, indices, seeds, seed_rank, n)
    return _propagate_max_np(indptr, indices, seeds, seed_rank, n)


def min_over_reachable(indptr, indices, values, *, use_numba=None) -> np.ndarray:
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    values = np.asarray(values, dtype=np.int64)
    n = len(indptr) - 1
    if USE_NUMBA if use_numba is None else use_numba:
        return _min_reachable_nb(indptr, indices, values, n)
    return _min_reachable_np(indptr, indices, values, n)


def to_csr(n: int, edges) -> tuple:
    """CSR arrays for ``n`` nodes from ``(u, v)`` pairs; neighbours sorted ascending."""
    edges = sorted(set((int(u), int(v)) for u, v in edges))
    indptr = np.zeros(n + 1, dtype=np.int64)
    for u, _ in edges:
        indptr[u + 1] += 1
    np.cumsum(indptr, out=indptr)
    indices = np.array([v for _, v in edges], dtype=np.int64)
    return indptr, indices

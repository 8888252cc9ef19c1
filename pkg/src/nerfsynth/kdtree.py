"""Exact k-nearest-neighbour search with a kd-tree.

The tree splits on the dimension of largest spread at the median and keeps
leaf buckets contiguous in memory, so leaf scans are single vectorised
distance evaluations.  Queries run best-bin-first with exact pruning;
``max_leaf_visits`` turns it into a bounded (approximate) search.

Results are ordered by (distance, id), which makes ties deterministic.
"""
from __future__ import annotations

import heapq
import itertools

import numpy as np

__all__ = ["KDTree", "squared_distances"]


def squared_distances(block, query):
    """Row-wise squared L2 distance between ``block`` (n, D) and ``query`` (D,), in float64."""
    diff = block.astype(np.float64) - np.asarray(query, dtype=np.float64)
    return np.einsum("ij,ij->i", diff, diff)


class KDTree:
    spread_sample = 64

    def __init__(self, data, leaf_size=32, max_leaf_visits=None):
        data = np.asarray(data)
        if data.ndim != 2 or data.shape[0] == 0:
            raise ValueError("KDTree needs a non-empty (n, D) array")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        self.leaf_size = max(1, int(leaf_size))
        self.max_leaf_visits = max_leaf_visits
        self.n, self.dim = data.shape

        split_dim, split_val, left, right, start, stop = [], [], [], [], [], []
        order = np.arange(self.n)

        def new_node(lo, hi):
            split_dim.append(-1)
            split_val.append(0.0)
            left.append(-1)
            right.append(-1)
            start.append(lo)
            stop.append(hi)
            return len(start) - 1

        stack = [new_node(0, self.n)]
        while stack:
            node = stack.pop()
            lo, hi = start[node], stop[node]
            if hi - lo <= self.leaf_size:
                continue
            idx = order[lo:hi]
            # split dimension from the spread of an evenly spaced row sample
            probe = data[idx[:: max(1, idx.size // self.spread_sample)]]
            spread = probe.max(axis=0) - probe.min(axis=0)
            d = int(np.argmax(spread))
            vals = data[idx, d]
            if vals.max() <= vals.min():
                spread = data[idx].max(axis=0) - data[idx].min(axis=0)
                d = int(np.argmax(spread))
                if spread[d] <= 0:
                    continue
                vals = data[idx, d]
            mid = (hi - lo) // 2
            part = np.argpartition(vals, mid, kind="introselect")
            order[lo:hi] = idx[part]
            split_dim[node] = d
            split_val[node] = float(vals[part[mid]])
            left[node] = new_node(lo, lo + mid)
            right[node] = new_node(lo + mid, hi)
            stack.append(right[node])
            stack.append(left[node])

        self._split_dim = np.array(split_dim)
        self._split_val = np.array(split_val)
        self._left = np.array(left)
        self._right = np.array(right)
        self._start = np.array(start)
        self._stop = np.array(stop)
        self.ids = order
        self.data = np.ascontiguousarray(data[order])
        # row norms for the cheap |x|^2 - 2 x.q + |q|^2 screen in query(); its rounding
        # error is below eps * (|x|^2 + |q|^2)
        self.sqnorm = np.einsum("ij,ij->i", self.data, self.data, dtype=np.float64)
        self._screen_eps = 4.0 * (self.dim + 2) * np.finfo(np.float64).eps

    @property
    def n_nodes(self):
        return len(self._start)

    def query(self, query, k=1):
        """The ``k`` nearest rows: ``(distances, ids)`` ascending by (distance, id)."""
        # float64 query and distances: stored vectors keep their dtype, the metric does not round
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise ValueError(f"query has dimension {q.shape[0]}, tree has {self.dim}")
        k = max(1, min(int(k), self.n))
        qq = float(q @ q)
        best_d2 = np.empty(0)
        best_id = np.empty(0, dtype=np.int64)
        worst = np.inf
        tick = itertools.count()
        heap = [(0.0, next(tick), 0, {})]
        leaves = 0
        split_dim, split_val = self._split_dim, self._split_val
        while heap:
            bound, _, node, offsets = heapq.heappop(heap)
            # ties at the k-th distance must still be visited for the id tie-break
            if bound > worst * (1.0 + 1e-12) + 1e-300:
                break
            d = split_dim[node]
            if d < 0:
                lo, hi = self._start[node], self._stop[node]
                block, ids = self.data[lo:hi], self.ids[lo:hi]
                if np.isfinite(worst):
                    # screen with the expansion, then measure survivors exactly
                    rough = self.sqnorm[lo:hi] - 2.0 * (block @ q) + qq
                    slack = self._screen_eps * (self.sqnorm[lo:hi] + qq)
                    keep = rough - slack <= worst * (1.0 + 1e-12)
                    block, ids = block[keep], ids[keep]
                d2 = squared_distances(block, q)
                best_d2 = np.concatenate([best_d2, d2])
                best_id = np.concatenate([best_id, ids])
                if best_d2.size > k:
                    keep = np.lexsort((best_id, best_d2))[:k]
                    best_d2, best_id = best_d2[keep], best_id[keep]
                if best_d2.size == k:
                    worst = best_d2.max()
                leaves += 1
                if self.max_leaf_visits is not None and leaves >= self.max_leaf_visits:
                    break
                continue
            diff = float(q[d]) - split_val[node]
            near, far = (self._left[node], self._right[node]) if diff < 0 else (self._right[node], self._left[node])
            heapq.heappush(heap, (bound, next(tick), near, offsets))
            old = offsets.get(d, 0.0)
            far_bound = max(bound - old * old + diff * diff, 0.0)
            if far_bound <= worst * (1.0 + 1e-12) + 1e-300:
                far_offsets = dict(offsets)
                far_offsets[d] = diff
                heapq.heappush(heap, (far_bound, next(tick), far, far_offsets))
        order = np.lexsort((best_id, best_d2))
        return np.sqrt(best_d2[order]), best_id[order]

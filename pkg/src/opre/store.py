"""Append-only dictionary of epsilon-separated quantized patches.

A patch is stored iff its distance to every previously stored patch is at
least epsilon; otherwise it is discarded and the id of the nearest stored
patch (ties to the lowest id) stands in for it. Distances live on the
dequantized grid, so every decision reduces to exact integer arithmetic on
squared code distances; results are bit-reproducible across platforms and
independent of how the input stream is batched.

The search index is layered but always exact. An exact-duplicate hash on
the raw code bytes catches distance-0 hits. Near misses go through an 8-d
projection: block sums of the 48 codes. By Cauchy-Schwarz, code vectors
within squared distance T project within squared distance 6*T, so KD-tree
ball queries over the projections yield a candidate superset that is then
re-ranked with exact integer arithmetic. Index internals never affect
results, only speed.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .codec import PATCH_DIM, QualitySetting, max_sq_within

MAX_PATCHES = 2**32

_N_BLOCKS = 8
_BLOCK_LEN = PATCH_DIM // _N_BLOCKS  # 6

# Main-tree rebuild threshold; affects speed only, never results.
_MAIN_REBUILD_MIN = 16384

_SENTINEL = np.int64(1) << 62
_ID_BITS = 32
_ID_MASK = (1 << _ID_BITS) - 1


class CapacityError(RuntimeError):
    """The store holds the maximum number of patches."""


def _project(codes: np.ndarray) -> np.ndarray:
    """Block sums: (n, 48) codes -> (n, 8) int64 projections."""
    return codes.reshape(-1, _N_BLOCKS, _BLOCK_LEN).astype(np.int64).sum(axis=2)


def _block_l1_max(t: int) -> int:
    """Max sum(|d_i|) over 6 integer coordinates with sum(d_i^2) <= t."""
    best = 0
    q = 0
    while 6 * q * q <= t:
        for r in range(6, -1, -1):
            if (6 - r) * q * q + r * (q + 1) * (q + 1) <= t:
                best = max(best, 6 * q + r)
                break
        q += 1
    return best


@lru_cache(maxsize=None)
def _proj_sq_bound(t_sq: int) -> int:
    """Exact max of sum_k (delta p_k)^2 over integer deltas with
    sum(delta^2) <= t_sq: the correct search radius in projection space.

    Splitting t_sq across blocks, each block contributes at most
    _block_l1_max(share)^2; a small DP maximizes over splits. Falls back to
    the Cauchy-Schwarz bound 6 * t_sq for large thresholds.
    """
    if t_sq <= 0:
        return 0
    if t_sq > 1024:
        return _BLOCK_LEN * t_sq
    f2 = np.array([_block_l1_max(s) ** 2 for s in range(t_sq + 1)], dtype=np.int64)
    dp = f2.copy()
    for _ in range(_N_BLOCKS - 1):
        ndp = dp.copy()
        for s in range(1, t_sq + 1):
            np.maximum(ndp[s:], dp[: t_sq + 1 - s] + f2[s], out=ndp[s:])
        dp = ndp
    return int(dp[t_sq])


def _ball_radius(sq: int) -> float:
    # strictly between the sqrt(sq) and sqrt(sq+1) lattice shells
    return (math.sqrt(sq) + math.sqrt(sq + 1)) / 2.0


class PatchMemory:
    """Online epsilon-separated patch dictionary with exact threshold search."""

    max_patches = MAX_PATCHES

    def __init__(self, setting: QualitySetting):
        self.setting = setting
        self._levels = setting.levels
        self._t_sq = max_sq_within(setting.epsilon, setting.levels)
        self._codes = np.empty((256, PATCH_DIM), dtype=np.uint16)
        self._proj = np.empty((256, _N_BLOCKS), dtype=np.int64)
        self._n = 0
        self._by_key: dict[bytes, int] | None = {}
        # main tree over [0, a); fresh tree over [a, fresh_n); rows beyond
        # fresh_n only exist mid-batch and are handled by the in-batch pass
        self._main: cKDTree | None = None
        self._a = 0
        self._fresh: cKDTree | None = None
        self._fresh_n = 0

    @classmethod
    def from_codes(cls, setting: QualitySetting, codes: np.ndarray) -> "PatchMemory":
        """Rebuild a store from already-deduplicated codes (archive load)."""
        codes = np.ascontiguousarray(codes, dtype=np.uint16)
        if codes.ndim != 2 or codes.shape[1] != PATCH_DIM:
            raise ValueError(f"expected (n, {PATCH_DIM}) codes, got {codes.shape}")
        if codes.size and codes.max() >= setting.levels:
            raise ValueError("codes out of range for the setting's levels")
        store = cls(setting)
        store._codes = codes.copy()
        store._proj = _project(codes) if len(codes) else store._proj
        store._n = len(codes)
        store._by_key = None  # built on first lookup
        return store

    def size(self) -> int:
        return self._n

    def __len__(self) -> int:
        return self._n

    @property
    def codes(self) -> np.ndarray:
        """Read-only (size, 48) view of the stored code vectors, id order."""
        view = self._codes[: self._n]
        view.flags.writeable = False
        return view

    def insert_one(self, codes: np.ndarray) -> int:
        """Insert a single patch; returns its id or its representative's id."""
        return int(self.insert_batch(np.asarray(codes)[None, :])[0])

    def insert_batch(self, batch: np.ndarray) -> np.ndarray:
        """Insert patches in order; bit-identical to repeated insert_one.

        Returns the uint32 id assigned to (or substituted for) each patch.
        """
        batch = np.ascontiguousarray(batch, dtype=np.uint16)
        if batch.ndim != 2 or batch.shape[1] != PATCH_DIM:
            raise ValueError(f"expected (n, {PATCH_DIM}) batch, got {batch.shape}")
        m = len(batch)
        if m == 0:
            raise ValueError("empty batch")
        if batch.max() >= self._levels:
            raise ValueError("codes out of range for the store's levels")

        by_key = self._ensure_key_map()
        bproj = _project(batch)
        frozen = self._best_within_frozen(batch, bproj, self._t_sq)
        nb_off, nb_i, nb_d2 = self._inbatch_neighbors(batch, bproj, self._t_sq)

        ids = np.empty(m, dtype=np.uint32)
        appended = np.zeros(m, dtype=bool)
        use_hash = self._t_sq >= 0
        for j in range(m):
            if use_hash:
                dup = by_key.get(batch[j].tobytes())
                if dup is not None:
                    ids[j] = dup
                    continue
            best = int(frozen[j])
            if nb_off is not None:
                for k in range(nb_off[j], nb_off[j + 1]):
                    i = nb_i[k]
                    if appended[i]:
                        cand = (int(nb_d2[k]) << _ID_BITS) | int(ids[i])
                        if cand < best:
                            best = cand
            if best != _SENTINEL:
                ids[j] = best & _ID_MASK
            else:
                ids[j] = self._append(batch[j], bproj[j])
                appended[j] = True
        self._maybe_rebuild_main()
        return ids

    def nearest_within(self, codes: np.ndarray, eps: float) -> tuple[int, float] | None:
        """Nearest stored patch strictly closer than eps, ties to lowest id.

        Returns (id, distance) or None. Exact for any eps.
        """
        q = np.ascontiguousarray(codes, dtype=np.uint16)
        if q.shape != (PATCH_DIM,):
            raise ValueError(f"expected a ({PATCH_DIM},) query, got {q.shape}")
        t = max_sq_within(eps, self._levels)
        if t < 0 or self._n == 0:
            return None
        dup = self._ensure_key_map().get(q.tobytes())
        if dup is not None:
            return dup, 0.0
        batch = q[None, :]
        best = int(self._best_within_frozen(batch, _project(batch), t)[0])
        if best == _SENTINEL:
            return None
        d2 = best >> _ID_BITS
        return best & _ID_MASK, float(math.sqrt(d2) / (self._levels - 1))

    # ------------------------------------------------------------------
    # internals

    def _ensure_key_map(self) -> dict[bytes, int]:
        if self._by_key is None:
            self._by_key = {
                self._codes[i].tobytes(): i for i in range(self._n - 1, -1, -1)
            }
        return self._by_key

    def _append(self, q: np.ndarray, proj_row: np.ndarray) -> int:
        if self._n >= self.max_patches:
            raise CapacityError(f"patch memory is full ({self.max_patches} patches)")
        if self._n == len(self._codes):
            cap = max(256, 2 * len(self._codes))
            grown = np.empty((cap, PATCH_DIM), dtype=np.uint16)
            grown[: self._n] = self._codes[: self._n]
            self._codes = grown
            grown_p = np.empty((cap, _N_BLOCKS), dtype=np.int64)
            grown_p[: self._n] = self._proj[: self._n]
            self._proj = grown_p
        self._codes[self._n] = q
        self._proj[self._n] = proj_row
        if self._by_key is not None:
            self._by_key.setdefault(q.tobytes(), self._n)
        self._n += 1
        return self._n - 1

    def _best_within_frozen(
        self, batch: np.ndarray, bproj: np.ndarray, t_sq: int
    ) -> np.ndarray:
        """Per query: packed (d2 << 32 | id) of the best stored patch with
        d2 <= t_sq, or the sentinel. Exact despite the projected prefilter."""
        m = len(batch)
        out = np.full(m, _SENTINEL, dtype=np.int64)
        if t_sq < 0 or self._n == 0:
            return out
        self._refresh_trees()
        r = _ball_radius(_proj_sq_bound(t_sq))
        pq = bproj.astype(np.float64)
        qidx_parts: list[np.ndarray] = []
        cand_parts: list[np.ndarray] = []
        for tree, offset in ((self._main, 0), (self._fresh, self._a)):
            if tree is None:
                continue
            hits = tree.query_ball_point(pq, r, workers=-1)
            lens = np.fromiter((len(h) for h in hits), dtype=np.int64, count=m)
            if lens.sum():
                qidx_parts.append(np.repeat(np.arange(m), lens))
                cand_parts.append(
                    np.concatenate([h for h in hits if len(h)]).astype(np.int64) + offset
                )
        if not qidx_parts:
            return out
        qidx = np.concatenate(qidx_parts)
        cand = np.concatenate(cand_parts)
        order = np.argsort(qidx, kind="stable")
        qidx = qidx[order]
        cand = cand[order]
        # exact integer distances for the candidate superset
        diff = self._codes[cand].astype(np.int64) - batch[qidx].astype(np.int64)
        d2 = np.einsum("ij,ij->i", diff, diff)
        key = np.where(d2 <= t_sq, (d2 << _ID_BITS) | cand, _SENTINEL)
        # trailing sentinel makes every searchsorted start a legal reduceat
        # index; empty segments are masked out afterwards
        key = np.append(key, _SENTINEL)
        starts = np.searchsorted(qidx, np.arange(m))
        nonempty = np.searchsorted(qidx, np.arange(m), side="right") > starts
        mins = np.minimum.reduceat(key, starts)
        out[nonempty] = mins[nonempty]
        return out

    def _inbatch_neighbors(self, batch: np.ndarray, bproj: np.ndarray, t_sq: int):
        """Earlier-in-batch candidate pairs: for each j, the i < j with exact
        d2 <= t_sq, as (offsets, i-array, d2-array); (None, None, None) when
        the batch cannot contain such pairs."""
        m = len(batch)
        if m < 2 or t_sq < 0:
            return None, None, None
        tree = cKDTree(bproj.astype(np.float64))
        pairs = tree.query_pairs(_ball_radius(_proj_sq_bound(t_sq)), output_type="ndarray")
        if not len(pairs):
            return None, None, None
        ii, jj = pairs[:, 0], pairs[:, 1]  # i < j by construction
        diff = batch[jj].astype(np.int64) - batch[ii].astype(np.int64)
        d2 = np.einsum("ij,ij->i", diff, diff)
        keep = d2 <= t_sq
        if not keep.any():
            return None, None, None
        ii, jj, d2 = ii[keep], jj[keep], d2[keep]
        order = np.argsort(jj, kind="stable")
        ii, jj, d2 = ii[order], jj[order], d2[order]
        offsets = np.searchsorted(jj, np.arange(m + 1))
        return offsets, ii, d2

    def _refresh_trees(self) -> None:
        """Bring the two projection trees up to date with the frozen rows."""
        if self._n - self._a > max(_MAIN_REBUILD_MIN, self._n // 8):
            self._main = cKDTree(self._proj[: self._n].astype(np.float64))
            self._a = self._n
            self._fresh = None
            self._fresh_n = self._n
        elif self._a > 0 and self._main is None:
            self._main = cKDTree(self._proj[: self._a].astype(np.float64))
        if self._n > self._a and self._fresh_n != self._n:
            self._fresh = cKDTree(self._proj[self._a : self._n].astype(np.float64))
            self._fresh_n = self._n
        elif self._n == self._a:
            self._fresh = None
            self._fresh_n = self._n

    def _maybe_rebuild_main(self) -> None:
        if self._n - self._a > max(_MAIN_REBUILD_MIN, self._n // 8):
            self._main = cKDTree(self._proj[: self._n].astype(np.float64))
            self._a = self._n
            self._fresh = None
            self._fresh_n = self._n

"""Lesion segmentation metrics: Dice, false positive / negative volume, leaderboard ranks.

FPV and FNV are component-level: a predicted (ground-truth) component counts
in full towards FPV (FNV) when it touches no ground-truth (predicted) voxel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _accel
from ._accel import njit
from .errors import AlignmentError, InvalidMaskError, InvalidMetricError, InvalidParameterError
from .volume import Volume3D, voxel_volume_ml

CONNECTIVITIES = (6, 18, 26)
DEFAULT_CONNECTIVITY = 26


def neighbor_offsets(connectivity):
    if connectivity not in CONNECTIVITIES:
        raise InvalidParameterError(f"connectivity must be one of {CONNECTIVITIES}, got {connectivity}")
    max_l1 = {6: 1, 18: 2, 26: 3}[connectivity]
    return [
        (dz, dy, dx)
        for dz in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dx in (-1, 0, 1)
        if 0 < abs(dz) + abs(dy) + abs(dx) <= max_l1
    ]


def _backward_offsets(connectivity):
    # neighbours already visited in a z, y, x raster scan
    return np.array([o for o in neighbor_offsets(connectivity) if o < (0, 0, 0)], dtype=np.int64)


@njit
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit
def _label_numba(mask, offsets):
    nz, ny, nx = mask.shape
    labels = np.zeros((nz, ny, nx), dtype=np.int32)
    parent = np.zeros(mask.size + 1, dtype=np.int32)
    next_label = 1
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if mask[z, y, x] == 0:
                    continue
                cur = 0
                for k in range(offsets.shape[0]):
                    zz = z + offsets[k, 0]
                    yy = y + offsets[k, 1]
                    xx = x + offsets[k, 2]
                    if zz < 0 or yy < 0 or xx < 0 or yy >= ny or xx >= nx:
                        continue
                    lab = labels[zz, yy, xx]
                    if lab == 0:
                        continue
                    r = _find(parent, lab)
                    if cur == 0:
                        cur = r
                    elif r != cur:
                        if r < cur:
                            parent[cur] = r
                            cur = r
                        else:
                            parent[r] = cur
                if cur == 0:
                    cur = next_label
                    parent[cur] = cur
                    next_label += 1
                labels[z, y, x] = cur
    remap = np.zeros(next_label, dtype=np.int32)
    count = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                lab = labels[z, y, x]
                if lab == 0:
                    continue
                r = _find(parent, lab)
                if remap[r] == 0:
                    count += 1
                    remap[r] = count
                labels[z, y, x] = remap[r]
    return labels, count


def _label_numpy(mask, connectivity):
    structure = ndimage.generate_binary_structure(3, {6: 1, 18: 2, 26: 3}[connectivity])
    labels, count = ndimage.label(mask, structure=structure)
    if count == 0:
        return labels.astype(np.int32), 0
    # renumber by first voxel in raster order
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    ids, first = ids[ids > 0], first[ids > 0]
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[ids[np.argsort(first)]] = np.arange(1, count + 1, dtype=np.int32)
    return remap[labels], int(count)


@dataclass(frozen=True)
class ComponentLabeling:
    labels: np.ndarray
    sizes: np.ndarray  # sizes[k - 1] is the voxel count of component k
    connectivity: int

    @property
    def count(self):
        return len(self.sizes)


def _binary(mask, what="mask"):
    arr = mask.data if isinstance(mask, Volume3D) else np.asarray(mask)
    if arr.ndim != 3:
        raise InvalidMaskError(f"{what} must be 3D, got shape {arr.shape}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise InvalidMaskError(f"{what} must be binary (values 0 and 1 only)")
    return np.ascontiguousarray(arr, dtype=np.uint8)


def connected_components(mask, connectivity=DEFAULT_CONNECTIVITY) -> ComponentLabeling:
    """Label maximal connected foreground components, numbered by first voxel in z, y, x scan order."""
    arr = _binary(mask)
    if connectivity not in CONNECTIVITIES:
        raise InvalidParameterError(f"connectivity must be one of {CONNECTIVITIES}, got {connectivity}")
    if _accel.backend() == "numba":
        labels, count = _label_numba(arr, _backward_offsets(connectivity))
    else:
        labels, count = _label_numpy(arr, connectivity)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    return ComponentLabeling(labels, sizes, connectivity)


def _pair(pred, gt):
    p, g = _binary(pred, "prediction"), _binary(gt, "ground truth")
    if p.shape != g.shape:
        raise AlignmentError(f"prediction shape {p.shape} does not match ground truth shape {g.shape}")
    return p, g


def _spacing(spacing, *volumes):
    if spacing is not None:
        return spacing
    for v in volumes:
        if isinstance(v, Volume3D):
            return v.spacing
    raise InvalidParameterError("spacing is required when masks are plain arrays")


def dsc(pred, gt, empty_value: float = 1.0) -> float:
    """Foreground Dice; ``empty_value`` when both masks are empty."""
    p, g = _pair(pred, gt)
    sp, sg = int(p.sum()), int(g.sum())
    if sp + sg == 0:
        return float(empty_value)
    inter = int(np.count_nonzero(p & g))
    return 2.0 * inter / (sp + sg)


def _unmatched_volume(source, other, spacing, connectivity):
    cc = connected_components(source, connectivity)
    if cc.count == 0:
        return 0.0
    touched = np.unique(cc.labels[other.astype(bool)])
    hit = np.zeros(cc.count + 1, dtype=bool)
    hit[touched] = True
    missed = int(cc.sizes[~hit[1:]].sum())
    return missed * voxel_volume_ml(spacing)


def fpv(pred, gt, spacing=None, connectivity=DEFAULT_CONNECTIVITY) -> float:
    """Volume (ml) of predicted components with no ground-truth overlap."""
    p, g = _pair(pred, gt)
    return _unmatched_volume(p, g, _spacing(spacing, gt, pred), connectivity)


def fnv(pred, gt, spacing=None, connectivity=DEFAULT_CONNECTIVITY) -> float:
    """Volume (ml) of ground-truth components the prediction misses entirely."""
    p, g = _pair(pred, gt)
    return _unmatched_volume(g, p, _spacing(spacing, gt, pred), connectivity)


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    dsc: float
    fpv: float
    fnv: float


def evaluate_case(case_id, pred, gt, spacing=None, connectivity=DEFAULT_CONNECTIVITY, empty_dice=1.0):
    if isinstance(pred, Volume3D) and isinstance(gt, Volume3D) and spacing is None:
        if not np.allclose(pred.spacing, gt.spacing, rtol=1e-5):
            raise AlignmentError(f"prediction spacing {pred.spacing} differs from ground truth {gt.spacing}")
    return CaseMetrics(
        str(case_id),
        dsc(pred, gt, empty_dice),
        fpv(pred, gt, spacing, connectivity),
        fnv(pred, gt, spacing, connectivity),
    )


def summarize(cases):
    cases = list(cases)
    if not cases:
        return {"cases": 0}
    return {
        "cases": len(cases),
        "dsc_mean": float(np.mean([c.dsc for c in cases])),
        "fpv_ml_mean": float(np.mean([c.fpv for c in cases])),
        "fnv_ml_mean": float(np.mean([c.fnv for c in cases])),
    }


# ------------------------------------------------------------------ ranking

RANK_WEIGHTS = {"dsc": 0.5, "fpv": 0.25, "fnv": 0.25}


@dataclass(frozen=True)
class LeaderboardRow:
    team: str
    dsc: float
    fpv: float
    fnv: float
    rank_dsc: float = math.nan
    rank_fpv: float = math.nan
    rank_fnv: float = math.nan
    score: float = math.nan


def average_ranks(values, descending=False):
    """1-based ranks; tied values share the mean of the positions they occupy."""
    keyed = sorted(range(len(values)), key=lambda i: -values[i] if descending else values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(keyed):
        j = i
        while j + 1 < len(keyed) and values[keyed[j + 1]] == values[keyed[i]]:
            j += 1
        shared = (i + 1 + j + 1) / 2.0
        for k in range(i, j + 1):
            ranks[keyed[k]] = shared
        i = j + 1
    return ranks


def rank_teams(rows, weights=RANK_WEIGHTS) -> list[LeaderboardRow]:
    """Rank teams per metric (Dice high is good, volumes low are good) and combine.

    ``rows`` are :class:`LeaderboardRow` or ``(team, dsc, fpv, fnv)`` tuples.
    Returned rows are sorted by combined score, then team name.
    """
    rows = [r if isinstance(r, LeaderboardRow) else LeaderboardRow(*r) for r in rows]
    if not rows:
        raise InvalidMetricError("rank_teams needs at least one team")
    if not math.isclose(sum(weights.values()), 1.0):
        raise InvalidParameterError(f"rank weights must sum to 1, got {weights}")
    for r in rows:
        for name in ("dsc", "fpv", "fnv"):
            v = getattr(r, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidMetricError(f"team {r.team!r} has invalid {name} {v!r}")
    r_dsc = average_ranks([r.dsc for r in rows], descending=True)
    r_fpv = average_ranks([r.fpv for r in rows])
    r_fnv = average_ranks([r.fnv for r in rows])
    out = []
    for r, a, b, c in zip(rows, r_dsc, r_fpv, r_fnv):
        score = weights["dsc"] * a + weights["fpv"] * b + weights["fnv"] * c
        out.append(LeaderboardRow(r.team, r.dsc, r.fpv, r.fnv, a, b, c, score))
    return sorted(out, key=lambda r: (r.score, r.team))

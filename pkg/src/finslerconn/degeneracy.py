"""Degeneracy structure of the direction Hessian.

For a 1-homogeneous metric the direction Hessian ``L2`` always annihilates
``dx``, so its rank is at most ``n`` in ``n+1`` dimensions.  This module
computes the numerical rank, the extra null directions beyond ``dx``, an
index split into {flow-like index} | {degenerate indices I} | {regular
indices a}, and the inverse of the regular block: everything the
connection solver needs to invert its defining equations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import dsl
from .errors import DegeneracyError
from .jet import Jet2, TangentPoint, compute_jets

__all__ = [
    "DegeneracyData",
    "FrozenStructure",
    "analyze",
    "analyze_frozen",
    "freeze",
    "detect_rank_drop",
    "RankDropReport",
]

# v is considered p-orthogonal when |p.v| <= P_ORTHO_TOL * |p| * |v|
P_ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class DegeneracyData:
    """Numerical degeneracy data of L2 at one point.

    ``D = n - rank`` counts the zero eigenvectors ``v`` beyond the flow
    direction; ``a_indices`` select the invertible coordinate block whose
    inverse is ``Lab_inv``.  ``sing_values`` keeps the full spectrum for
    reproducibility audits.
    """

    rank: int
    D: int
    v: np.ndarray  # (D, n+1) rows, shifted along dx so p.v = 0 where L allows
    v_raw: np.ndarray  # same rows before the dx-shift; smooth in (x, dx)
    a_indices: tuple[int, ...]
    I_indices: tuple[int, ...]
    zero_index: int
    Lab_inv: np.ndarray
    sing_values: np.ndarray
    rank_ambiguous: bool
    gap_ratio: float
    p_residuals: np.ndarray  # |p.v_I| / |p| after correction
    correction_skipped: tuple[bool, ...]
    dx_null_defect: float  # |L2.dx| / (sigma_max * |dx|)
    a_candidates: tuple[tuple[int, ...], ...]  # fallbacks ranked by |det|


@dataclass(frozen=True)
class FrozenStructure:
    """Index split pinned at a base point so nearby evaluations stay on the
    same smooth branch (used by finite-difference stencils and RK stages)."""

    rank: int
    D: int
    a_indices: tuple[int, ...]
    I_indices: tuple[int, ...]
    zero_index: int
    v_anchor: np.ndarray


def _best_a_sets(L2: np.ndarray, rank: int) -> list[tuple[float, tuple[int, ...]]]:
    """All size-``rank`` principal blocks ranked by |det|, best first."""
    n1 = L2.shape[0]
    scored = []
    for combo in itertools.combinations(range(n1), rank):
        idx = np.asarray(combo, dtype=int)
        det = abs(float(np.linalg.det(L2[np.ix_(idx, idx)]))) if rank else 1.0
        scored.append((det, combo))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return scored


def _null_projector(Vt: np.ndarray, rank: int) -> np.ndarray:
    Nb = Vt[rank:]
    return Nb.T @ Nb


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(v)
    for comp in v:
        if abs(comp) > 1e-9 * nrm:
            return v if comp > 0 else -v
    return v


def _eigvec_from_axis(
    proj: np.ndarray,
    axis: int,
    jet: Jet2,
    anchor: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, bool, float]:
    """Null-space representative closest to coordinate axis ``axis``.

    Normalized to unit norm with a deterministic sign, then shifted along
    dx so that p.v = 0 whenever L allows the shift.  Returns
    (v, v_raw, correction_skipped, residual |p.v|/|p| after the attempt);
    ``v_raw`` is the unshifted vector, which stays smooth across surfaces
    where L vanishes and feeds every dx-shift-invariant formula.
    """
    v = proj[:, axis].copy()
    nrm = float(np.linalg.norm(v))
    if nrm < 1e-8:
        raise DegeneracyError(
            f"coordinate axis {axis} has no null-space component; "
            "degenerate index split", axis=axis,
        )
    v /= nrm
    if anchor is not None:
        if float(v @ anchor) < 0:
            v = -v
    else:
        v = _fix_sign(v)
    raw = v

    p = jet.p
    p_norm = float(np.linalg.norm(p))
    w = float(p @ v)
    skipped = False
    if p_norm > 0 and abs(w) > P_ORTHO_TOL * p_norm:
        l_scale = p_norm * float(np.linalg.norm(jet.dx))
        if abs(jet.L) > 1e-12 * max(l_scale, 1.0):
            v = v - (w / jet.L) * jet.dx
        else:
            # cannot shift along dx when L vanishes; report the defect
            skipped = True
    residual = abs(float(p @ v)) / p_norm if p_norm > 0 else 0.0
    return v, raw, skipped, residual


def analyze(
    jet: Jet2,
    rank_tol: float = 1e-9,
    pt: TangentPoint | None = None,
) -> DegeneracyData:
    """Determine rank, zero eigenvectors, index split and block inverse.

    Rank counts singular values above ``rank_tol`` relative to the largest.
    The regular block is chosen by exhaustive |det| maximization over
    principal submatrices (dimensions here are tiny), ties broken by lowest
    indices, so the choice is deterministic and scale-covariant.  A
    singular-value gap ratio below 10 around the threshold flags the rank
    as ambiguous without failing.
    """
    del pt  # the jet carries its own point
    L2 = jet.L2
    n1 = L2.shape[0]
    n = n1 - 1
    _, sv, Vt = np.linalg.svd(L2)
    smax = float(sv[0]) if sv.size else 0.0

    if smax == 0.0:
        rank = 0
        ambiguous = False
        gap = np.inf
    else:
        above = sv > rank_tol * smax
        rank = int(np.count_nonzero(above))
        if 0 < rank < n1:
            gap = float(sv[rank - 1] / sv[rank]) if sv[rank] > 0 else np.inf
        else:
            gap = np.inf
        ambiguous = gap < 10.0
    if rank > n:
        # dx must be in the null space of a 1-homogeneous metric
        raise DegeneracyError(
            f"direction Hessian has full rank {rank}; dx is not a null vector "
            "(homogeneity defect upstream)", rank=rank,
        )
    D = n - rank

    dx_norm = float(np.linalg.norm(jet.dx))
    dx_defect = (
        float(np.linalg.norm(L2 @ jet.dx)) / (smax * dx_norm) if smax > 0 else 0.0
    )

    ranked = _best_a_sets(L2, rank)
    best_det, a_indices = ranked[0]
    if rank > 0:
        block = L2[np.ix_(a_indices, a_indices)]
        bs = np.linalg.svd(block, compute_uv=False)
        if bs[-1] <= 1e-12 * smax:
            for det, combo in ranked[1:]:
                block = L2[np.ix_(combo, combo)]
                bs = np.linalg.svd(block, compute_uv=False)
                if bs[-1] > 1e-12 * smax:
                    a_indices = combo
                    break
            else:
                raise DegeneracyError(
                    "no invertible coordinate block of the reduced size exists",
                    rank=rank, best_det=best_det,
                )
        Lab_inv = np.linalg.inv(L2[np.ix_(a_indices, a_indices)])
    else:
        Lab_inv = np.zeros((0, 0))

    complement = [i for i in range(n1) if i not in a_indices]
    dx_hat = np.abs(jet.dx) / dx_norm
    zero_index = max(complement, key=lambda i: (dx_hat[i], -i))
    I_indices = tuple(i for i in complement if i != zero_index)

    proj = _null_projector(Vt, rank)
    vs, raws, skips, residuals = [], [], [], []
    for i in I_indices:
        v, raw, skipped, res = _eigvec_from_axis(proj, i, jet, anchor=None)
        vs.append(v)
        raws.append(raw)
        skips.append(skipped)
        residuals.append(res)
    v_arr = np.array(vs) if vs else np.zeros((0, n1))
    raw_arr = np.array(raws) if raws else np.zeros((0, n1))

    return DegeneracyData(
        rank=rank,
        D=D,
        v=v_arr,
        v_raw=raw_arr,
        a_indices=tuple(a_indices),
        I_indices=I_indices,
        zero_index=zero_index,
        Lab_inv=Lab_inv,
        sing_values=sv,
        rank_ambiguous=ambiguous,
        gap_ratio=float(gap),
        p_residuals=np.array(residuals),
        correction_skipped=tuple(skips),
        dx_null_defect=dx_defect,
        a_candidates=tuple(combo for _, combo in ranked[:8]),
    )


def freeze(deg: DegeneracyData) -> FrozenStructure:
    # anchor signs against the raw vectors: the dx-shift can dominate the
    # corrected ones near L = 0 and would flip signs spuriously
    return FrozenStructure(
        rank=deg.rank,
        D=deg.D,
        a_indices=deg.a_indices,
        I_indices=deg.I_indices,
        zero_index=deg.zero_index,
        v_anchor=deg.v_raw,
    )


def analyze_frozen(jet: Jet2, frozen: FrozenStructure) -> DegeneracyData:
    """Re-analyze at a nearby point keeping the base point's index split,
    rank and eigenvector signs, so the result varies smoothly."""
    L2 = jet.L2
    _, sv, Vt = np.linalg.svd(L2)
    proj = _null_projector(Vt, frozen.rank)
    vs, raws, skips, residuals = [], [], [], []
    for slot, i in enumerate(frozen.I_indices):
        anchor = frozen.v_anchor[slot] if frozen.v_anchor.size else None
        v, raw, skipped, res = _eigvec_from_axis(proj, i, jet, anchor=anchor)
        vs.append(v)
        raws.append(raw)
        skips.append(skipped)
        residuals.append(res)
    v_arr = np.array(vs) if vs else np.zeros((0, L2.shape[0]))
    raw_arr = np.array(raws) if raws else np.zeros((0, L2.shape[0]))
    if frozen.rank > 0:
        block = L2[np.ix_(frozen.a_indices, frozen.a_indices)]
        bs = np.linalg.svd(block, compute_uv=False)
        if bs[-1] <= 1e-14 * max(float(sv[0]), 1e-300):
            raise DegeneracyError(
                "frozen coordinate block became singular (rank transition "
                "inside a stencil)", a_indices=frozen.a_indices,
                gap=float(sv[frozen.rank - 1] / max(sv[frozen.rank], 1e-300))
                if frozen.rank < sv.size else np.inf,
            )
        Lab_inv = np.linalg.inv(block)
    else:
        Lab_inv = np.zeros((0, 0))
    smax = float(sv[0]) if sv.size else 0.0
    dx_norm = float(np.linalg.norm(jet.dx))
    return DegeneracyData(
        rank=frozen.rank,
        D=frozen.D,
        v=v_arr,
        v_raw=raw_arr,
        a_indices=frozen.a_indices,
        I_indices=frozen.I_indices,
        zero_index=frozen.zero_index,
        Lab_inv=Lab_inv,
        sing_values=sv,
        rank_ambiguous=False,
        gap_ratio=np.inf,
        p_residuals=np.array(residuals),
        correction_skipped=tuple(skips),
        dx_null_defect=float(np.linalg.norm(L2 @ jet.dx)) / (smax * dx_norm)
        if smax > 0 else 0.0,
        a_candidates=(frozen.a_indices,),
    )


@dataclass
class RankDropReport:
    ranks: list[int]
    sing_values: list[np.ndarray]
    transitions: list[tuple[int, int, int]]  # (index of second point, rank before, rank after)

    def to_dict(self) -> dict:
        return {
            "ranks": self.ranks,
            "transitions": [list(t) for t in self.transitions],
            "sing_values": [sv.tolist() for sv in self.sing_values],
        }


def detect_rank_drop(
    spec: dsl.MetricSpec,
    pt_sequence: list[TangentPoint],
    rank_tol: float = 1e-9,
) -> RankDropReport:
    """Rank of L2 along a point sequence, with transition flags.

    Rank is tested pointwise; constant-rank certification over a region is
    out of scope, this reports where the numerical rank changes (e.g. on
    approach to a constraint surface).
    """
    xs = np.array([pt.x for pt in pt_sequence])
    dxs = np.array([pt.dx for pt in pt_sequence])
    jets = compute_jets(spec, xs, dxs, validate=False)
    ranks, svs = [], []
    for jet in jets:
        sv = np.linalg.svd(jet.L2, compute_uv=False)
        smax = float(sv[0]) if sv.size else 0.0
        rank = int(np.count_nonzero(sv > rank_tol * smax)) if smax > 0 else 0
        ranks.append(rank)
        svs.append(sv)
    transitions = [
        (k, ranks[k - 1], ranks[k])
        for k in range(1, len(ranks))
        if ranks[k] != ranks[k - 1]
    ]
    return RankDropReport(ranks=ranks, sing_values=svs, transitions=transitions)

"""Nonlinear connection of a (possibly singular) metric.

Builds the adapted frame, solves the metric-preservation equations for the
spray vector G (quadratic in direction), differentiates G numerically for
the connection coefficients N, and assembles formal torsion/curvature.

The spray decomposes as

    G = 1/2 * (dx . dL/dx) * ell_0  +  sum_I lambda^I ell_I  +  sum_a lambda^a ell_a

with ell_0 = dx/L, ell_I the corrected zero eigenvectors, ell_a the
flow-projected coordinate axes of the regular block, and
lambda^a = Lab_inv . M restricted to the regular indices.  The lambda^I
are genuine gauge freedom (default 0); the I-components of the defining
equations that the lambda^a cannot satisfy are reported as constraint
residuals C_I, never silently enforced.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import dsl
from .degeneracy import DegeneracyData, FrozenStructure, analyze, analyze_frozen, freeze
from .errors import DegeneracyError
from .jet import Jet2, TangentPoint, compute_jets

__all__ = [
    "EllBasis",
    "ConnectionData",
    "CurvatureData",
    "build_ell_basis",
    "solve_G",
    "coefficients_N",
    "curvature_torsion",
    "moment_map",
    "constraint_residuals",
]

# |lambda^a| * sigma_max / |M| beyond which the regular block is treated as
# effectively blowing up (approach to a rank transition); well-conditioned
# points sit at O(1)..O(100)
LAMBDA_BLOWUP_RATIO = 1e4

GaugeFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EllBasis:
    """Adapted frame {ell_0, ell_I, ell_a}; rows of ``matrix`` in that order."""

    ell0: np.ndarray
    ellI: np.ndarray  # (D, n+1)
    ella: np.ndarray  # (n-D, n+1)
    matrix: np.ndarray
    det: float


@dataclass(frozen=True)
class ConnectionData:
    """Spray, connection coefficients and diagnostics at one point.

    ``N`` is filled by :func:`coefficients_N`; :func:`solve_G` leaves it
    None.  ``C`` holds the constraint residuals; ``omega_residual`` is the
    defect of the contracted preservation identity 2 p.G = dx . dL/dx.
    """

    G: np.ndarray
    N: np.ndarray | None
    ell0: np.ndarray
    ellI: np.ndarray
    ella: np.ndarray
    lambda_a: np.ndarray
    M: np.ndarray
    C: np.ndarray
    gauge_lambdaI: np.ndarray
    omega: float
    omega_residual: float
    basis_det: float
    lambda_blowup: bool
    fd_steps: dict | None = None


@dataclass(frozen=True)
class CurvatureData:
    """Formal curvature R (antisymmetric in its last two slots) and the
    direction-derivative coefficients N2 (symmetric up to FD error)."""

    R: np.ndarray  # (n+1, n+1, n+1) indexed [mu, beta, gamma]
    N2: np.ndarray  # (n+1, n+1, n+1) indexed [mu, alpha, beta]
    x_step: float
    dx_step: float


def moment_map(jet: Jet2) -> np.ndarray:
    """M = 1/2 (-dL/dx + mixed . dx): the source term of the lambda equations."""
    return 0.5 * (-jet.dL_dx + jet.mixed @ jet.dx)


def constraint_residuals(jet: Jet2, deg: DegeneracyData) -> np.ndarray:
    """C_I: the components of the defining equations no multiplier can absorb.

    Invariant under shifting v along dx and under the regular-block choice,
    so it is evaluated with the raw (unshifted) vectors, which stay smooth
    across surfaces where the metric value vanishes; no frame is needed.
    """
    if deg.D == 0:
        return np.zeros(0)
    M = moment_map(jet)
    a_idx = np.asarray(deg.a_indices, dtype=int)
    C = deg.v_raw @ M
    if a_idx.size:
        C = C - (deg.v_raw @ jet.L2)[:, a_idx] @ (deg.Lab_inv @ M[a_idx])
    return np.asarray(C, dtype=float)


def _l_floor(jet: Jet2) -> float:
    return 1e-12 * max(float(np.linalg.norm(jet.p) * np.linalg.norm(jet.dx)), 1e-30)


def build_ell_basis(jet: Jet2, deg: DegeneracyData) -> EllBasis:
    """Assemble the adapted frame; requires L != 0 at the point.

    By construction p.ell_0 = 1 and p annihilates every other frame vector
    (up to the recorded correction defects).  A near-zero determinant
    signals an ill-chosen regular block and raises.
    """
    if abs(jet.L) <= _l_floor(jet):
        raise DegeneracyError(
            "metric value vanishes at this point; the flow-normalized frame "
            "ell_0 = dx/L is undefined", L=jet.L,
        )
    n1 = jet.dimension
    ell0 = jet.dx / jet.L
    ellI = deg.v.copy() if deg.D else np.zeros((0, n1))
    ella = np.zeros((len(deg.a_indices), n1))
    for row, a in enumerate(deg.a_indices):
        ella[row, a] = 1.0
        ella[row] -= (jet.p[a] / jet.L) * jet.dx
    matrix = np.vstack([ell0[None, :], ellI, ella])
    det = float(np.linalg.det(matrix))
    scale = float(np.prod(np.linalg.norm(matrix, axis=1)))
    if abs(det) <= 1e-12 * max(scale, 1e-30):
        raise DegeneracyError(
            "adapted frame is numerically degenerate; re-pivot the regular block",
            det=det, a_indices=deg.a_indices,
        )
    return EllBasis(ell0=ell0, ellI=ellI, ella=ella, matrix=matrix, det=det)


def solve_G(
    jet: Jet2,
    deg: DegeneracyData,
    gauge_lambdaI: np.ndarray | None = None,
) -> ConnectionData:
    """Solve the metric-preservation equations for the spray G.

    ``gauge_lambdaI`` fixes the free multipliers along the zero
    eigenvectors (default 0).  Constraint residuals C_I are reported; they
    vanish exactly on the constraint surface of a degenerate metric.
    Retries lower-ranked regular blocks when the frame degenerates.
    """
    lamI = np.zeros(deg.D) if gauge_lambdaI is None else np.asarray(gauge_lambdaI, float)
    if lamI.shape != (deg.D,):
        raise ValueError(f"gauge_lambdaI must have shape ({deg.D},)")

    basis = None
    last_err: Exception | None = None
    for candidate in deg.a_candidates:
        trial = deg if candidate == deg.a_indices else _with_a_set(jet, deg, candidate)
        try:
            basis = build_ell_basis(jet, trial)
            deg = trial
            break
        except DegeneracyError as exc:
            last_err = exc
    if basis is None:
        raise last_err  # every candidate block failed

    M = moment_map(jet)
    a_idx = np.asarray(deg.a_indices, dtype=int)
    Ma = M[a_idx] if a_idx.size else np.zeros(0)
    lambda_a = deg.Lab_inv @ Ma if a_idx.size else np.zeros(0)
    omega = float(jet.dx @ jet.dL_dx)

    G = 0.5 * omega * basis.ell0
    if deg.D:
        G = G + lamI @ basis.ellI
    if a_idx.size:
        G = G + lambda_a @ basis.ella

    C = constraint_residuals(jet, deg)

    omega_residual = float(2.0 * jet.p @ G - omega)

    smax = float(deg.sing_values[0]) if deg.sing_values.size else 0.0
    m_norm = float(np.linalg.norm(M))
    blowup = bool(
        a_idx.size
        and float(np.linalg.norm(lambda_a)) * smax > LAMBDA_BLOWUP_RATIO * max(m_norm, 1e-300)
    )

    return ConnectionData(
        G=G,
        N=None,
        ell0=basis.ell0,
        ellI=basis.ellI,
        ella=basis.ella,
        lambda_a=lambda_a,
        M=M,
        C=np.asarray(C, dtype=float),
        gauge_lambdaI=lamI,
        omega=omega,
        omega_residual=omega_residual,
        basis_det=basis.det,
        lambda_blowup=blowup,
    )


def _with_a_set(jet: Jet2, deg: DegeneracyData, a_indices: tuple[int, ...]) -> DegeneracyData:
    block = jet.L2[np.ix_(a_indices, a_indices)]
    sv = np.linalg.svd(block, compute_uv=False) if len(a_indices) else np.zeros(0)
    smax = float(deg.sing_values[0]) if deg.sing_values.size else 0.0
    if len(a_indices) and sv[-1] <= 1e-14 * max(smax, 1e-300):
        raise DegeneracyError("candidate regular block is singular", a_indices=a_indices)
    complement = [i for i in range(jet.dimension) if i not in a_indices]
    dx_hat = np.abs(jet.dx) / float(np.linalg.norm(jet.dx))
    zero_index = max(complement, key=lambda i: (dx_hat[i], -i))
    if tuple(i for i in complement if i != zero_index) != deg.I_indices:
        # eigenvectors are tied to the I split; recompute them
        from .degeneracy import _eigvec_from_axis, _null_projector  # noqa: PLC0415

        _, _, Vt = np.linalg.svd(jet.L2)
        proj = _null_projector(Vt, deg.rank)
        I_indices = tuple(i for i in complement if i != zero_index)
        vs, raws, skips, residuals = [], [], [], []
        for i in I_indices:
            v, raw, skipped, res = _eigvec_from_axis(proj, i, jet, anchor=None)
            vs.append(v)
            raws.append(raw)
            skips.append(skipped)
            residuals.append(res)
        return replace(
            deg,
            v=np.array(vs) if vs else np.zeros((0, jet.dimension)),
            v_raw=np.array(raws) if raws else np.zeros((0, jet.dimension)),
            a_indices=tuple(a_indices),
            I_indices=I_indices,
            zero_index=zero_index,
            Lab_inv=np.linalg.inv(block) if len(a_indices) else np.zeros((0, 0)),
            p_residuals=np.array(residuals),
            correction_skipped=tuple(skips),
        )
    return replace(
        deg,
        a_indices=tuple(a_indices),
        zero_index=zero_index,
        Lab_inv=np.linalg.inv(block) if len(a_indices) else np.zeros((0, 0)),
    )


def _solve_G_batch(
    spec: dsl.MetricSpec,
    x: np.ndarray,
    dxs: np.ndarray,
    frozen: FrozenStructure,
    gauge: GaugeFunction | None,
) -> np.ndarray:
    """Spray at many directions from one base x, on a frozen smooth branch."""
    xs = np.broadcast_to(x, (dxs.shape[0], x.shape[0]))
    jets = compute_jets(spec, xs, dxs, validate=False)
    out = np.empty((dxs.shape[0], x.shape[0]))
    for i, jet in enumerate(jets):
        deg = analyze_frozen(jet, frozen)
        lamI = gauge(jet.x, jet.dx) if gauge is not None else None
        out[i] = solve_G(jet, deg, gauge_lambdaI=lamI).G
    return out


def coefficients_N(
    spec: dsl.MetricSpec,
    pt: TangentPoint,
    rank_tol: float = 1e-9,
    gauge: GaugeFunction | None = None,
    rel_step: float = 1e-4,
    frozen: FrozenStructure | None = None,
) -> ConnectionData:
    """Connection coefficients N = dG/d(dx) by Richardson-extrapolated
    central differences.

    The solver's pivoting and eigendecompositions are not smoothly
    differentiable, so G is differentiated numerically on a frozen
    structural branch; this is the accuracy bottleneck of the pipeline
    (about 1e-8 relative).  Raises when the numerical rank changes inside
    the stencil.
    """
    jet = compute_jets(spec, pt.x[None, :], pt.dx[None, :], validate=False)[0]
    deg = analyze(jet, rank_tol=rank_tol)
    if frozen is None:
        frozen = freeze(deg)
    base = solve_G(jet, deg, gauge_lambdaI=gauge(pt.x, pt.dx) if gauge else None)

    n1 = spec.dimension
    h = rel_step * float(np.linalg.norm(pt.dx))
    stencil = []
    for alpha in range(n1):
        e = np.zeros(n1)
        e[alpha] = 1.0
        for s in (h, -h, 0.5 * h, -0.5 * h):
            stencil.append(pt.dx + s * e)
    try:
        G_vals = _solve_G_batch(spec, pt.x, np.array(stencil), frozen, gauge)
    except DegeneracyError as exc:
        sv = deg.sing_values
        gap = float(sv[deg.rank - 1] / sv[deg.rank]) if 0 < deg.rank < sv.size and sv[deg.rank] > 0 else np.inf
        raise DegeneracyError(
            f"finite differencing of G failed near a rank transition: {exc}",
            gap_ratio=gap, sing_values=sv.tolist(),
        ) from exc

    N = np.empty((n1, n1))
    for alpha in range(n1):
        gp, gm, gp2, gm2 = G_vals[4 * alpha : 4 * alpha + 4]
        d_h = (gp - gm) / (2.0 * h)
        d_h2 = (gp2 - gm2) / h
        N[:, alpha] = (4.0 * d_h2 - d_h) / 3.0

    # Euler check for the degree-2 spray: N.dx = 2G.  A large defect means
    # the stencil straddled a pole or branch of the frozen structure (rank
    # transition nearby), where differencing is meaningless.
    defect = float(np.linalg.norm(N @ pt.dx - 2.0 * base.G))
    scale = max(float(np.linalg.norm(2.0 * base.G)), float(np.linalg.norm(N)) * float(np.linalg.norm(pt.dx)))
    if defect > 1e-6 * scale + 1e-300:
        sv = deg.sing_values
        gap = (
            float(sv[deg.rank - 1] / sv[deg.rank])
            if 0 < deg.rank < sv.size and sv[deg.rank] > 0
            else np.inf
        )
        raise DegeneracyError(
            f"finite differencing of G failed near a rank transition: "
            f"N.dx = 2G defect {defect:.3e} at scale {scale:.3e}",
            gap_ratio=gap, sing_values=sv.tolist(),
        )
    return replace(base, N=N, fd_steps={"dx_step": h, "richardson": True})


def curvature_torsion(
    spec: dsl.MetricSpec,
    pt: TangentPoint,
    step: float = 1e-4,
    rank_tol: float = 1e-9,
    gauge: GaugeFunction | None = None,
) -> CurvatureData:
    """Formal curvature and Berwald-type direction derivatives of N.

    R[mu, beta, gamma] combines central x-derivatives of N with the
    quadratic N2.N terms and is antisymmetrized exactly in (beta, gamma);
    N2 is reported raw so its symmetry is a meaningful check.
    """
    n1 = spec.dimension
    x, dx = pt.x, pt.dx

    def N_at(x_val: np.ndarray, dx_val: np.ndarray) -> np.ndarray:
        return coefficients_N(
            spec, TangentPoint(x_val, dx_val), rank_tol=rank_tol, gauge=gauge
        ).N

    N0 = N_at(x, dx)

    # dN/dx by Richardson central differences; stencil must stay admissible
    hx = np.array([step * (1.0 + abs(x[b])) for b in range(n1)])
    dN_dx = np.empty((n1, n1, n1))  # [beta, mu, alpha]
    for b in range(n1):
        e = np.zeros(n1)
        e[b] = 1.0
        d_h = (N_at(x + hx[b] * e, dx) - N_at(x - hx[b] * e, dx)) / (2.0 * hx[b])
        d_h2 = (N_at(x + 0.5 * hx[b] * e, dx) - N_at(x - 0.5 * hx[b] * e, dx)) / hx[b]
        dN_dx[b] = (4.0 * d_h2 - d_h) / 3.0

    hd = step * float(np.linalg.norm(dx))
    N2 = np.empty((n1, n1, n1))  # [mu, alpha, beta]
    for a in range(n1):
        e = np.zeros(n1)
        e[a] = 1.0
        d_h = (N_at(x, dx + hd * e) - N_at(x, dx - hd * e)) / (2.0 * hd)
        d_h2 = (N_at(x, dx + 0.5 * hd * e) - N_at(x, dx - 0.5 * hd * e)) / hd
        N2[:, a, :] = (4.0 * d_h2 - d_h) / 3.0

    # A[mu, beta, gamma] = dN[mu,gamma]/dx[beta] + N2[mu,alpha,beta] N[alpha,gamma]
    A = dN_dx.transpose(1, 0, 2) + np.einsum("mab,ag->mbg", N2, N0)
    R = A - A.transpose(0, 2, 1)
    return CurvatureData(R=R, N2=N2, x_step=step, dx_step=hd)

"""Second-order jet of a metric at tangent-bundle points.

One batched sweep set evaluates, for each point, the metric value, both
first-derivative vectors, the direction Hessian and the mixed
direction/position second-derivative block.  Sweep ``r`` seeds every
differential plus coordinate ``x^r``; the pure-differential data is read
off sweep 0 (it is bitwise identical across sweeps), which avoids the full
double-size Hessian while keeping a single expression pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsl
from .errors import HomogeneityError

__all__ = ["TangentPoint", "Jet2", "compute_jet", "compute_jets", "check_homogeneity", "HomogeneityReport"]


@dataclass(frozen=True)
class TangentPoint:
    """An admissible point (x, dx); arrays are copied and frozen."""

    x: np.ndarray
    dx: np.ndarray

    def __post_init__(self):
        for name in ("x", "dx"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dimension(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class Jet2:
    """Full second-order derivative data of L at one point.

    ``L2`` is the direction Hessian, ``mixed[i, r]`` differentiates first
    by the i-th differential then by the r-th coordinate.
    """

    x: np.ndarray
    dx: np.ndarray
    L: float
    dL_dx: np.ndarray
    p: np.ndarray
    L2: np.ndarray
    mixed: np.ndarray

    @property
    def dimension(self) -> int:
        return self.x.shape[0]

    def scale(self) -> float:
        """Characteristic magnitude used to make tolerance checks unit-free."""
        return max(abs(self.L), float(np.linalg.norm(self.p) * np.linalg.norm(self.dx)))

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "dx": self.dx.tolist(),
            "L": self.L,
            "dL_dx": self.dL_dx.tolist(),
            "p": self.p.tolist(),
            "L2": self.L2.tolist(),
            "mixed": self.mixed.tolist(),
        }


def _jet_arrays(spec: dsl.MetricSpec, xs: np.ndarray, dxs: np.ndarray) -> dict:
    """Batched jet computation; xs, dxs of shape (P, n1). Returns stacked arrays."""
    n1 = spec.dimension
    P = xs.shape[0]
    B = P * n1
    x_vals = np.repeat(xs, n1, axis=0)
    dx_vals = np.repeat(dxs, n1, axis=0)
    # slots 0..n1-1 are the differentials, slot n1 the active coordinate
    diff_seeds = np.broadcast_to(np.arange(n1, dtype=int), (B, n1)).copy()
    coord_seeds = -np.ones((B, n1), dtype=int)
    sweep = np.tile(np.arange(n1, dtype=int), P)
    coord_seeds[np.arange(B), sweep] = n1

    out = dsl.eval_taylor(spec.expr, spec.params, x_vals, dx_vals, diff_seeds, coord_seeds)

    base = np.arange(P) * n1
    L = out.val[base]
    p = out.grad[base][:, :n1]
    L2 = out.hess[base][:, :n1, :n1]
    dL_dx = out.grad[:, n1].reshape(P, n1)
    # hess[b, i, n1] with b = point*n1 + sweep gives mixed[point, i, sweep]
    mixed = out.hess[:, :n1, n1].reshape(P, n1, n1).transpose(0, 2, 1)
    return {"L": L, "p": p, "L2": L2, "dL_dx": dL_dx, "mixed": mixed}


def _validate_jet(L, p, L2, dL_dx, mixed, dx, rtol: float, where: str):
    dx_norm = float(np.linalg.norm(dx))
    scale = max(abs(L), float(np.linalg.norm(p)) * dx_norm)
    floor = 1e-12 * (1.0 + dx_norm)

    euler = abs(float(p @ dx) - L)
    if euler > rtol * scale + floor:
        raise HomogeneityError(
            f"Euler identity p.dx = L violated by {euler:.3e} "
            f"(scale {scale:.3e}) {where}; L is not 1-homogeneous in dx",
            violation=euler, scale=scale,
        )
    l2_scale = float(np.linalg.norm(L2)) * dx_norm
    annihilation = float(np.linalg.norm(L2 @ dx))
    if annihilation > rtol * l2_scale + floor:
        raise HomogeneityError(
            f"L2.dx = 0 violated by {annihilation:.3e} (scale {l2_scale:.3e}) {where}",
            violation=annihilation, scale=l2_scale,
        )
    m_scale = float(np.linalg.norm(mixed)) * dx_norm + float(np.linalg.norm(dL_dx))
    contraction = float(np.linalg.norm(dx @ mixed - dL_dx))
    if contraction > rtol * m_scale + floor:
        raise HomogeneityError(
            f"dx-contraction of the mixed block != dL/dx by {contraction:.3e} "
            f"(scale {m_scale:.3e}) {where}",
            violation=contraction, scale=m_scale,
        )


def compute_jets(
    spec: dsl.MetricSpec,
    xs: np.ndarray,
    dxs: np.ndarray,
    validate: bool = True,
    rtol: float = 1e-9,
) -> list[Jet2]:
    """Batched form of :func:`compute_jet`; one expression pass for all points."""
    xs = np.asarray(xs, dtype=float)
    dxs = np.asarray(dxs, dtype=float)
    for i in range(xs.shape[0]):
        dsl.require_admissible(spec, xs[i], dxs[i])
    arrs = _jet_arrays(spec, xs, dxs)
    jets = []
    for i in range(xs.shape[0]):
        if validate:
            _validate_jet(
                arrs["L"][i], arrs["p"][i], arrs["L2"][i], arrs["dL_dx"][i],
                arrs["mixed"][i], dxs[i], rtol, f"at point {i}",
            )
        jets.append(
            Jet2(
                x=xs[i], dx=dxs[i], L=float(arrs["L"][i]),
                dL_dx=arrs["dL_dx"][i], p=arrs["p"][i],
                L2=arrs["L2"][i], mixed=arrs["mixed"][i],
            )
        )
    return jets


def compute_jet(
    spec: dsl.MetricSpec,
    pt: TangentPoint | None = None,
    x=None,
    dx=None,
    validate: bool = True,
    rtol: float = 1e-9,
) -> Jet2:
    """Assemble the second-order jet at one admissible point.

    Raises :class:`HomogeneityError` when the derivative identities implied
    by 1-homogeneity fail at relative tolerance ``rtol`` (the expression is
    then not a Finsler metric at this point).
    """
    if pt is not None:
        x, dx = pt.x, pt.dx
    x = np.asarray(x, dtype=float)
    dx = np.asarray(dx, dtype=float)
    return compute_jets(spec, x[None, :], dx[None, :], validate=validate, rtol=rtol)[0]


@dataclass
class HomogeneityReport:
    """Report-only result of scaling checks; never raises."""

    scales: tuple[float, ...]
    l_violation: float
    g_violation: float | None = None
    n_violation: float | None = None
    c_violation: float | None = None
    details: dict | None = None

    def max_violation(self) -> float:
        vals = [self.l_violation, self.g_violation, self.n_violation, self.c_violation]
        return max(v for v in vals if v is not None)

    def passed(self, tol: float = 1e-9) -> bool:
        return self.max_violation() <= tol


def check_homogeneity(
    spec: dsl.MetricSpec,
    pt: TangentPoint,
    scales,
    with_connection: bool = False,
    rank_tol: float = 1e-9,
) -> HomogeneityReport:
    """Measure the worst relative violation of L(x, s*dx) = s*L(x, dx).

    With ``with_connection`` the spray, connection coefficients and
    constraint residuals are recomputed at each scaled direction and
    checked for their own degrees (2, 1 and 1 respectively).
    """
    scales = tuple(float(s) for s in scales)
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    x, dx = pt.x, pt.dx
    L0 = float(dsl.eval_values(spec.expr, spec.params, x[None, :], dx[None, :])[0])

    xs = np.broadcast_to(x, (len(scales), x.shape[0]))
    dxs = np.array([s * dx for s in scales])
    Ls = dsl.eval_values(spec.expr, spec.params, xs, dxs)
    floor = 1e-300
    l_viol = max(
        abs(Ls[i] - s * L0) / (abs(s * L0) + floor) for i, s in enumerate(scales)
    )
    report = HomogeneityReport(scales=scales, l_violation=float(l_viol))

    if with_connection:
        from . import connection

        def conn_at(dx_s):
            res = connection.coefficients_N(spec, TangentPoint(x, dx_s), rank_tol=rank_tol)
            return res.G, res.N, res.C

        G0, N0, C0 = conn_at(dx)
        gv = nv = cv = 0.0
        for s in scales:
            Gs, Ns, Cs = conn_at(s * dx)
            gv = max(gv, np.linalg.norm(Gs - s * s * G0) / (s * s * np.linalg.norm(G0) + floor))
            nv = max(nv, np.linalg.norm(Ns - s * N0) / (s * np.linalg.norm(N0) + floor))
            if C0.size:
                cv = max(cv, np.linalg.norm(Cs - s * C0) / (s * np.linalg.norm(C0) + floor))
        report.g_violation = float(gv)
        report.n_violation = float(nv)
        report.c_violation = float(cv) if C0.size else None
    return report

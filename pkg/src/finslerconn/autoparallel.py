"""Auto-parallel (constrained geodesic) integration.

The equation of motion is ``x'' + 2G = lambda0 * ell_0 + sum_I lambda^I v_I``
with the multipliers fixed per step by the gauge condition and by keeping
the constraint residuals C_I at zero along the flow.  Internally the
acceleration is assembled in the flow-parallel form

    accel = eta * dx - 2 * sum_a lambda^a e_a + sum_I lambda^I v_I

where ``eta`` absorbs every term proportional to dx.  Solving for ``eta``
directly (instead of lambda0/L) keeps the stepper finite on constraint
surfaces where the metric value vanishes; lambda0 = eta*L + omega -
2*lambda^a p_a is reported afterwards and never divided by.

Consistency rows are the directional derivatives dC_I/dtau, affine in the
multipliers; their coefficients are built from central finite differences
of C_I on the frozen structural branch.  Rows that vanish relative to
their own gradient scale classify the corresponding multiplier as a
first-class freedom, filled by the gauge's free-multiplier policy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import dsl
from .connection import constraint_residuals, moment_map
from .degeneracy import DegeneracyData, FrozenStructure, analyze, analyze_frozen, freeze
from .errors import (
    ConsistencyError,
    DegeneracyError,
    DomainError,
    InvalidStateError,
)
from .jet import Jet2, TangentPoint, compute_jet, compute_jets

logger = logging.getLogger("finslerconn")

__all__ = [
    "GaugeChoice",
    "NodeDiagnostics",
    "Trajectory",
    "TransportResult",
    "el_residual",
    "resolve_multipliers",
    "MultiplierResolution",
    "integrate",
    "parallel_transport",
]

ROW_ZERO_TOL = 1e-8  # first-class / second-class classifier
CONSISTENCY_TOL = 1e-6


@dataclass(frozen=True)
class GaugeChoice:
    """Parameterization fixing for the dx-parallel multiplier.

    ``time``: the parameter is the 0-th coordinate, enforced via accel0 = 0.
    ``arclength``: L is preserved along the curve (requires L = 1 initially),
    which resolves the dx-parallel multiplier to zero up to solver error.
    ``custom``: lambda0(x, dx) supplied directly.
    ``free_policy(tau, x, dx, index)`` supplies values for multipliers the
    consistency conditions leave free (default zero).
    """

    kind: str
    free_policy: Callable[[float, np.ndarray, np.ndarray, int], float] | None = None
    lambda0_fn: Callable[[np.ndarray, np.ndarray], float] | None = None

    @classmethod
    def time(cls, free_policy=None) -> "GaugeChoice":
        return cls(kind="time", free_policy=free_policy)

    @classmethod
    def arclength(cls, free_policy=None) -> "GaugeChoice":
        return cls(kind="arclength", free_policy=free_policy)

    @classmethod
    def custom(cls, lambda0_fn, free_policy=None) -> "GaugeChoice":
        return cls(kind="custom", free_policy=free_policy, lambda0_fn=lambda0_fn)


@dataclass(frozen=True)
class NodeDiagnostics:
    tau: float
    x: np.ndarray
    dx: np.ndarray
    L: float
    C: np.ndarray
    el: np.ndarray
    el_norm: float
    el_scale: float
    lambda0: float
    lambdaI: np.ndarray
    lambda_a: np.ndarray
    eta: float
    rank: int
    D: int
    gauge_dim_free: int
    accel: np.ndarray
    events: tuple[str, ...] = ()


@dataclass
class Trajectory:
    """Discretized auto-parallel curve with per-node diagnostics."""

    gauge: GaugeChoice
    h: float
    steps_requested: int
    nodes: list[NodeDiagnostics]
    halt_reason: str | None = None
    projected_steps: int = 0
    rank_tol: float = 1e-9
    initial: tuple[np.ndarray, np.ndarray] | None = None
    events: list[tuple[int, str]] = field(default_factory=list)

    @property
    def taus(self) -> np.ndarray:
        return np.array([n.tau for n in self.nodes])

    @property
    def xs(self) -> np.ndarray:
        return np.array([n.x for n in self.nodes])

    @property
    def dxs(self) -> np.ndarray:
        return np.array([n.dx for n in self.nodes])

    @property
    def completed(self) -> bool:
        return self.halt_reason is None

    def summary(self) -> dict:
        Ls = np.array([n.L for n in self.nodes])
        maxC = max((float(np.max(np.abs(n.C))) for n in self.nodes if n.C.size), default=0.0)
        return {
            "nodes": len(self.nodes),
            "halt_reason": self.halt_reason,
            "L_initial": float(Ls[0]),
            "L_final": float(Ls[-1]),
            "L_drift": float(np.max(np.abs(Ls - Ls[0]))),
            "max_constraint_residual": maxC,
            "max_el_residual": max(float(n.el_norm) for n in self.nodes),
            "max_abs_lambda0": max(abs(float(n.lambda0)) for n in self.nodes),
            "projected_steps": self.projected_steps,
        }


def el_residual(spec: dsl.MetricSpec, x, dx, accel) -> np.ndarray:
    """Euler-Lagrange residual dL/dx - (mixed . dx) - L2 . accel.

    Vanishes on solutions; adding any multiple of dx to ``accel`` leaves it
    unchanged because L2 annihilates dx.
    """
    x = np.asarray(x, dtype=float)
    dx = np.asarray(dx, dtype=float)
    accel = np.asarray(accel, dtype=float)
    jet = compute_jet(spec, x=x, dx=dx, validate=False)
    return _el_residual_jet(jet, accel)


def _el_residual_jet(jet: Jet2, accel: np.ndarray) -> np.ndarray:
    return jet.dL_dx - jet.mixed @ jet.dx - jet.L2 @ accel


def _el_scale(jet: Jet2, accel: np.ndarray) -> float:
    return float(
        np.linalg.norm(jet.dL_dx)
        + np.linalg.norm(jet.mixed) * np.linalg.norm(jet.dx)
        + np.linalg.norm(jet.L2) * np.linalg.norm(accel)
        + 1e-300
    )


def _constraint_scale(jet: Jet2) -> float:
    return 0.5 * float(
        np.linalg.norm(jet.dL_dx) + np.linalg.norm(jet.mixed) * np.linalg.norm(jet.dx)
    )


# ---------------------------------------------------------------------------
# multiplier resolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiplierResolution:
    lambda0: float
    lambdaI: np.ndarray
    lambda_a: np.ndarray
    eta: float
    gauge_dim_free: int
    accel: np.ndarray
    C: np.ndarray
    jet: Jet2
    deg: DegeneracyData


def _c_gradients(
    spec: dsl.MetricSpec,
    x: np.ndarray,
    dx: np.ndarray,
    frozen: FrozenStructure,
    fd_scale: float = 1e-5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(C, dC/dx, dC/d(dx)) by central differences on the frozen branch."""
    n1 = x.shape[0]
    D = frozen.D
    if D == 0:
        return np.zeros(0), np.zeros((0, n1)), np.zeros((0, n1))
    hx = fd_scale * (1.0 + np.abs(x))
    hd = fd_scale * float(np.linalg.norm(dx))
    states_x = [x]
    states_dx = [dx]
    for i in range(n1):
        e = np.zeros(n1)
        e[i] = 1.0
        states_x += [x + hx[i] * e, x - hx[i] * e]
        states_dx += [dx, dx]
    for i in range(n1):
        e = np.zeros(n1)
        e[i] = 1.0
        states_x += [x, x]
        states_dx += [dx + hd * e, dx - hd * e]
    jets = compute_jets(spec, np.array(states_x), np.array(states_dx), validate=False)
    Cs = np.array(
        [constraint_residuals(j, analyze_frozen(j, frozen)) for j in jets]
    )
    C0 = Cs[0]
    gx = np.empty((D, n1))
    gdx = np.empty((D, n1))
    for i in range(n1):
        gx[:, i] = (Cs[1 + 2 * i] - Cs[2 + 2 * i]) / (2.0 * hx[i])
        off = 1 + 2 * n1
        gdx[:, i] = (Cs[off + 2 * i] - Cs[off + 2 * i + 1]) / (2.0 * hd)
    return C0, gx, gdx


def _resolve(
    spec: dsl.MetricSpec,
    jet: Jet2,
    deg: DegeneracyData,
    gauge: GaugeChoice,
    tau: float,
    frozen: FrozenStructure,
    fd_scale: float = 1e-5,
) -> MultiplierResolution:
    n1 = jet.dimension
    x, dx = jet.x, jet.dx
    M = moment_map(jet)
    a_idx = np.asarray(deg.a_indices, dtype=int)
    lambda_a = deg.Lab_inv @ M[a_idx] if a_idx.size else np.zeros(0)
    omega = float(dx @ jet.dL_dx)
    two_lam_p = 2.0 * float(lambda_a @ jet.p[a_idx]) if a_idx.size else 0.0

    accel_base = np.zeros(n1)
    for row, a in enumerate(deg.a_indices):
        accel_base[a] -= 2.0 * lambda_a[row]

    D = deg.D
    vs = deg.v  # (D, n1)
    unknowns = 1 + D  # [eta, lambda^I...]

    # gauge row
    row0 = np.zeros(unknowns)
    if gauge.kind == "time":
        if abs(dx[0]) < 1e-300:
            raise InvalidStateError("time gauge requires a nonzero 0-th velocity component")
        row0[0] = dx[0]
        if D:
            row0[1:] = vs[:, 0]
        rhs0 = -accel_base[0]
        row0_scale = abs(dx[0]) + (np.max(np.abs(vs[:, 0])) if D else 0.0) + abs(rhs0)
    elif gauge.kind == "arclength":
        row0[0] = float(jet.p @ dx)
        if D:
            row0[1:] = vs @ jet.p
        rhs0 = -omega - float(jet.p @ accel_base)
        row0_scale = abs(row0[0]) + abs(rhs0)
    elif gauge.kind == "custom":
        if gauge.lambda0_fn is None:
            raise InvalidStateError("custom gauge requires lambda0_fn")
        l_floor = 1e-12 * max(float(np.linalg.norm(jet.p) * np.linalg.norm(dx)), 1e-30)
        if abs(jet.L) <= l_floor:
            raise DegeneracyError("custom gauge needs a nonvanishing metric value")
        row0[0] = jet.L
        rhs0 = float(gauge.lambda0_fn(x, dx)) - omega + two_lam_p
        row0_scale = abs(jet.L) + abs(rhs0)
    else:
        raise ValueError(f"unknown gauge kind {gauge.kind!r}")

    if D:
        _, gx, gdx = _c_gradients(spec, x, dx, frozen, fd_scale=fd_scale)
        rows = np.zeros((D, unknowns))
        rhs = np.zeros(D)
        row_scales = np.zeros(D)
        velnorm = float(np.linalg.norm(dx))
        accnorm = float(np.linalg.norm(accel_base))
        for J in range(D):
            rows[J, 0] = float(gdx[J] @ dx)
            rows[J, 1:] = gdx[J] @ vs.T
            rhs[J] = -float(gx[J] @ dx) - float(gdx[J] @ accel_base)
            row_scales[J] = (
                np.linalg.norm(gx[J]) * velnorm
                + np.linalg.norm(gdx[J]) * (velnorm + accnorm + D)
            )
    else:
        rows = np.zeros((0, unknowns))
        rhs = np.zeros(0)
        row_scales = np.zeros(0)

    keep = [
        J
        for J in range(D)
        if max(float(np.max(np.abs(rows[J]))), abs(rhs[J]))
        > ROW_ZERO_TOL * row_scales[J] + 1e-300
    ]
    A = np.vstack([row0[None, :], rows[keep]])
    b = np.concatenate([[rhs0], rhs[keep]])

    # multiplier columns absent from every kept row are first-class freedoms
    lam_vals = np.zeros(D)
    col_norm_ref = float(np.linalg.norm(A)) + 1e-300
    free_cols = [
        j
        for j in range(1, unknowns)
        if float(np.linalg.norm(A[:, j])) <= ROW_ZERO_TOL * col_norm_ref
    ]
    for j in free_cols:
        slot = j - 1
        if gauge.free_policy is not None:
            lam_vals[slot] = float(
                gauge.free_policy(tau, x, dx, deg.I_indices[slot])
            )
        b = b - A[:, j] * lam_vals[slot]
    solve_cols = [0] + [j for j in range(1, unknowns) if j not in free_cols]
    A_red = A[:, solve_cols]
    sol, _, rank_red, _ = np.linalg.lstsq(A_red, b, rcond=None)
    residual = float(np.linalg.norm(A_red @ sol - b))
    res_scale = float(
        np.linalg.norm(b) + np.linalg.norm(A_red) * np.linalg.norm(sol)
    ) + max(row0_scale, float(np.max(row_scales)) if row_scales.size else 0.0)
    if residual > CONSISTENCY_TOL * (res_scale + 1e-300):
        raise ConsistencyError(
            f"no multiplier choice keeps the constraints consistent "
            f"(residual {residual:.3e} vs scale {res_scale:.3e})",
            residual=residual, scale=res_scale,
        )
    eta = float(sol[0])
    for pos, j in enumerate(solve_cols[1:], start=1):
        lam_vals[j - 1] = float(sol[pos])
    gauge_dim_free = len(free_cols) + (len(solve_cols) - int(rank_red))

    accel = eta * dx + accel_base
    if D:
        accel = accel + lam_vals @ vs
    lambda0 = eta * jet.L + omega - two_lam_p
    C = constraint_residuals(jet, deg)
    return MultiplierResolution(
        lambda0=lambda0,
        lambdaI=lam_vals,
        lambda_a=lambda_a,
        eta=eta,
        gauge_dim_free=gauge_dim_free,
        accel=accel,
        C=C,
        jet=jet,
        deg=deg,
    )


def resolve_multipliers(
    spec: dsl.MetricSpec,
    state: TangentPoint,
    deg: DegeneracyData | None = None,
    gauge: GaugeChoice | None = None,
    tau: float = 0.0,
    rank_tol: float = 1e-9,
) -> MultiplierResolution:
    """Resolve the gauge and consistency multipliers at one state.

    The consistency conditions dC_I/dtau = 0 are linear in the multipliers;
    rank-deficient rows mark first-class freedoms (counted in
    ``gauge_dim_free`` and filled by the gauge policy), an unsolvable
    system raises :class:`ConsistencyError`.
    """
    gauge = gauge or GaugeChoice.time()
    jet = compute_jet(spec, pt=state, validate=False)
    if deg is None:
        deg = analyze(jet, rank_tol=rank_tol)
    return _resolve(spec, jet, deg, gauge, tau, freeze(deg))


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


def _reanchor(deg: DegeneracyData, prev_raw: np.ndarray) -> tuple[DegeneracyData, list[str]]:
    """Flip eigenvector signs to follow the previous node; flag jumps."""
    events = []
    if deg.D == 0 or prev_raw.shape != deg.v_raw.shape:
        return deg, events
    v = deg.v.copy()
    raw = deg.v_raw.copy()
    for j in range(deg.D):
        dot = float(raw[j] @ prev_raw[j])
        if dot < 0:
            v[j] = -v[j]
            raw[j] = -raw[j]
            dot = -dot
        if dot < 0.7 * float(np.linalg.norm(raw[j]) * np.linalg.norm(prev_raw[j])):
            events.append(f"eigenvector-discontinuity[{j}]")
    return replace(deg, v=v, v_raw=raw), events


def _node_from(res: MultiplierResolution, tau: float, events: tuple[str, ...]) -> NodeDiagnostics:
    el = _el_residual_jet(res.jet, res.accel)
    return NodeDiagnostics(
        tau=tau,
        x=res.jet.x,
        dx=res.jet.dx,
        L=res.jet.L,
        C=res.C,
        el=el,
        el_norm=float(np.linalg.norm(el)),
        el_scale=_el_scale(res.jet, res.accel),
        lambda0=res.lambda0,
        lambdaI=res.lambdaI,
        lambda_a=res.lambda_a,
        eta=res.eta,
        rank=res.deg.rank,
        D=res.deg.D,
        gauge_dim_free=res.gauge_dim_free,
        accel=res.accel,
        events=events,
    )


def _project_onto_constraints(
    spec: dsl.MetricSpec,
    x: np.ndarray,
    dx: np.ndarray,
    frozen: FrozenStructure,
    fd_scale: float,
    iterations: int = 3,
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares pullback of (x, dx) onto C = 0 (Gauss-Newton)."""
    for _ in range(iterations):
        C, gx, gdx = _c_gradients(spec, x, dx, frozen, fd_scale=fd_scale)
        if not C.size or np.max(np.abs(C)) == 0.0:
            break
        J = np.hstack([gx, gdx])
        step, *_ = np.linalg.lstsq(J, -C, rcond=None)
        x = x + step[: x.shape[0]]
        dx = dx + step[x.shape[0] :]
    return x, dx


def integrate(
    spec: dsl.MetricSpec,
    x0,
    dx0,
    gauge: GaugeChoice,
    steps: int,
    h: float,
    rank_tol: float = 1e-9,
    constraint_tol: float = 1e-10,
    project: bool = False,
    fd_scale: float = 1e-5,
) -> Trajectory:
    """Integrate the auto-parallel equation with classical fixed-step RK4.

    Per stage the jet, degeneracy data and multipliers are recomputed on
    the structural branch frozen at the step's start node; across nodes the
    structure is re-analyzed, rank transitions are logged and eigenvector
    signs re-anchored.  Runtime failures (leaving the admissible domain,
    multiplier inconsistency, frame degeneration) halt the trajectory and
    return the completed part with ``halt_reason`` set; precondition
    violations raise :class:`InvalidStateError` instead.

    ``project=True`` enables the logged least-squares pullback onto the
    constraint surface when the drift exceeds 10x ``constraint_tol``.
    """
    if steps < 1:
        raise InvalidStateError("steps must be at least 1")
    if h <= 0:
        raise InvalidStateError("step size must be positive")
    x = np.asarray(x0, dtype=float)
    dx = np.asarray(dx0, dtype=float)
    try:
        dsl.require_admissible(spec, x, dx)
        jet = compute_jet(spec, x=x, dx=dx)  # validates homogeneity identities
    except DomainError as exc:
        raise InvalidStateError(f"inadmissible initial state: {exc}") from exc
    deg = analyze(jet, rank_tol=rank_tol)

    C0 = constraint_residuals(jet, deg)
    c_scale = max(_constraint_scale(jet), 1e-300)
    if C0.size and float(np.max(np.abs(C0))) > constraint_tol * c_scale:
        raise InvalidStateError(
            f"initial constraint residuals {C0.tolist()} exceed tolerance "
            f"{constraint_tol:g} (scale {c_scale:.3e})"
        )
    if gauge.kind == "arclength" and abs(jet.L - 1.0) > 1e-10:
        raise InvalidStateError(
            f"arc-length gauge requires L = 1 at the initial state, got {jet.L!r}"
        )
    if gauge.kind == "time" and abs(dx[0]) == 0.0:
        raise InvalidStateError("time gauge requires dx0[0] != 0")

    traj = Trajectory(
        gauge=gauge, h=h, steps_requested=steps, nodes=[],
        rank_tol=rank_tol, initial=(x.copy(), dx.copy()),
    )
    tau = 0.0
    structure = (deg.rank, deg.a_indices, deg.I_indices)
    pending_events: list[str] = []

    for k in range(steps + 1):
        frozen = freeze(deg)

        def f(x_s, dx_s, tau_s):
            jet_s = (
                jet
                if x_s is x and dx_s is dx
                else compute_jet(spec, x=x_s, dx=dx_s, validate=False)
            )
            deg_s = deg if jet_s is jet else analyze_frozen(jet_s, frozen)
            res = _resolve(spec, jet_s, deg_s, gauge, tau_s, frozen, fd_scale=fd_scale)
            return res

        try:
            res1 = f(x, dx, tau)
        except (DomainError, ConsistencyError, DegeneracyError) as exc:
            traj.halt_reason = f"{type(exc).__name__}: {exc}"
            break
        traj.nodes.append(_node_from(res1, tau, tuple(pending_events)))
        pending_events = []
        if k == steps:
            break

        try:
            k1x, k1d = dx, res1.accel
            r2 = f(x + 0.5 * h * k1x, dx + 0.5 * h * k1d, tau + 0.5 * h)
            k2x, k2d = dx + 0.5 * h * k1d, r2.accel
            r3 = f(x + 0.5 * h * k2x, dx + 0.5 * h * k2d, tau + 0.5 * h)
            k3x, k3d = dx + 0.5 * h * k2d, r3.accel
            r4 = f(x + h * k3x, dx + h * k3d, tau + h)
            k4x, k4d = dx + h * k3d, r4.accel
        except (DomainError, ConsistencyError, DegeneracyError) as exc:
            traj.halt_reason = f"{type(exc).__name__}: {exc}"
            break

        x_new = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        dx_new = dx + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        tau += h

        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(dx_new))):
            traj.halt_reason = "non-finite state"
            break
        try:
            dsl.require_admissible(spec, x_new, dx_new)
            jet = compute_jet(spec, x=x_new, dx=dx_new, validate=False)
        except DomainError as exc:
            traj.halt_reason = f"inadmissible: {exc}"
            break

        deg_fresh = analyze(jet, rank_tol=rank_tol)
        if deg_fresh.rank == deg.rank:
            # same rank: keep the previous index split and eigenvector signs
            # so labels (and any free-multiplier policy keyed on them) stay
            # stable; fall back to the fresh split if the old block degraded
            try:
                deg_new = analyze_frozen(jet, frozen)
            except DegeneracyError:
                deg_new = deg_fresh
        else:
            deg_new = deg_fresh
        deg_new, flips = _reanchor(deg_new, deg.v_raw)
        pending_events.extend(flips)
        new_structure = (deg_new.rank, deg_new.a_indices, deg_new.I_indices)
        if new_structure != structure:
            event = (
                f"rank-transition {structure[0]} -> {new_structure[0]}"
                if new_structure[0] != structure[0]
                else f"index-split-change {structure[1:]} -> {new_structure[1:]}"
            )
            pending_events.append(event)
            traj.events.append((k + 1, event))
            logger.info("step %d: %s", k + 1, event)
            structure = new_structure
        deg = deg_new

        if project and deg.D:
            C_now = constraint_residuals(jet, deg)
            if float(np.max(np.abs(C_now))) > 10.0 * constraint_tol * c_scale:
                x_new, dx_new = _project_onto_constraints(
                    spec, x_new, dx_new, freeze(deg), fd_scale
                )
                jet = compute_jet(spec, x=x_new, dx=dx_new, validate=False)
                deg = analyze(jet, rank_tol=rank_tol)
                deg, _ = _reanchor(deg, deg_new.v_raw)
                traj.projected_steps += 1
                pending_events.append("projected")
                traj.events.append((k + 1, "projected"))

        x, dx = x_new, dx_new

    return traj


# ---------------------------------------------------------------------------
# parallel transport
# ---------------------------------------------------------------------------


@dataclass
class TransportResult:
    """Vector field transported along a trajectory, with norm diagnostics."""

    Z: np.ndarray  # (nodes, n+1)
    L_values: np.ndarray
    drift: float

    @property
    def initial_norm(self) -> float:
        return float(self.L_values[0])


def _transport_rhs(
    spec: dsl.MetricSpec,
    x: np.ndarray,
    Z: np.ndarray,
    velocity: np.ndarray,
    rank_tol: float,
    rel_step: float,
) -> np.ndarray:
    """-dG/d(dx)(x, Z) contracted with the curve velocity, by directional FD."""
    from .connection import _solve_G_batch  # local import to avoid a cycle

    jet_z = compute_jet(spec, x=x, dx=Z, validate=False)
    deg_z = analyze(jet_z, rank_tol=rank_tol)
    frozen = freeze(deg_z)
    vnorm = float(np.linalg.norm(velocity))
    s = rel_step * float(np.linalg.norm(Z)) / max(vnorm, 1e-300)
    dirs = np.array([Z + s * velocity, Z - s * velocity,
                     Z + 0.5 * s * velocity, Z - 0.5 * s * velocity])
    G = _solve_G_batch(spec, x, dirs, frozen, None)
    d_h = (G[0] - G[1]) / (2.0 * s)
    d_h2 = (G[2] - G[3]) / s
    return -(4.0 * d_h2 - d_h) / 3.0


def parallel_transport(
    spec: dsl.MetricSpec,
    curve: Trajectory,
    Z0,
    rank_tol: float | None = None,
    rel_step: float = 1e-4,
    fd_scale: float = 1e-5,
) -> TransportResult:
    """Transport Z along a trajectory by re-integrating the curve's flow
    jointly with dZ + N(x, Z) . dx = 0.

    The curve must carry its integration setup (gauge, h, initial state);
    the joint RK4 re-derives the same curve stages, so the transported
    vector converges at the stepper's order.  The metric value L(x, Z) is
    recorded per node; its drift is the norm-conservation defect.
    """
    if curve.initial is None:
        raise InvalidStateError("trajectory does not carry its initial state")
    rank_tol = curve.rank_tol if rank_tol is None else rank_tol
    x, dx = (arr.copy() for arr in curve.initial)
    Z = np.asarray(Z0, dtype=float).copy()
    gauge, h = curve.gauge, curve.h
    steps = len(curve.nodes) - 1

    try:
        dsl.require_admissible(spec, x, Z)
    except DomainError as exc:
        raise DomainError(f"transported vector leaves the admissible cone: {exc}") from exc

    jet = compute_jet(spec, x=x, dx=dx, validate=False)
    deg = analyze(jet, rank_tol=rank_tol)

    Zs = [Z.copy()]
    L_vals = [float(dsl.eval_values(spec.expr, spec.params, x[None, :], Z[None, :])[0])]

    tau = 0.0
    for _ in range(steps):
        frozen = freeze(deg)

        def f(x_s, dx_s, Z_s, tau_s):
            jet_s = (
                jet
                if x_s is x and dx_s is dx
                else compute_jet(spec, x=x_s, dx=dx_s, validate=False)
            )
            deg_s = deg if jet_s is jet else analyze_frozen(jet_s, frozen)
            res = _resolve(spec, jet_s, deg_s, gauge, tau_s, frozen, fd_scale=fd_scale)
            zdot = _transport_rhs(spec, x_s, Z_s, dx_s, rank_tol, rel_step)
            return res.accel, zdot

        a1, z1 = f(x, dx, Z, tau)
        a2, z2 = f(x + 0.5 * h * dx, dx + 0.5 * h * a1, Z + 0.5 * h * z1, tau + 0.5 * h)
        a3, z3 = f(
            x + 0.5 * h * (dx + 0.5 * h * a1),
            dx + 0.5 * h * a2,
            Z + 0.5 * h * z2,
            tau + 0.5 * h,
        )
        a4, z4 = f(x + h * (dx + 0.5 * h * a2), dx + h * a3, Z + h * z3, tau + h)

        k1x, k2x, k3x, k4x = dx, dx + 0.5 * h * a1, dx + 0.5 * h * a2, dx + h * a3
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        dx = dx + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        Z = Z + (h / 6.0) * (z1 + 2 * z2 + 2 * z3 + z4)
        tau += h

        try:
            dsl.require_admissible(spec, x, Z)
        except DomainError as exc:
            raise DomainError(
                f"transported vector leaves the admissible cone: {exc}"
            ) from exc
        jet = compute_jet(spec, x=x, dx=dx, validate=False)
        deg = analyze(jet, rank_tol=rank_tol)
        Zs.append(Z.copy())
        L_vals.append(float(dsl.eval_values(spec.expr, spec.params, x[None, :], Z[None, :])[0]))

    L_arr = np.array(L_vals)
    return TransportResult(
        Z=np.array(Zs), L_values=L_arr, drift=float(np.max(np.abs(L_arr - L_arr[0])))
    )

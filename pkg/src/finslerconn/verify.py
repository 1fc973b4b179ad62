"""Cross-cutting verification suites over the catalog.

Every check is deterministic: samplers run on fixed seeds, nothing reads
the clock, and all reported numbers are pure functions of the code.  The
CLI ``verify`` command prints these as a pass/fail table; the acceptance
tests re-run the same ideas at the full sample counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsl
from .autoparallel import GaugeChoice, integrate, parallel_transport
from .catalog import CatalogEntry, catalog, christoffel_oracle, oscillator_oracle
from .connection import coefficients_N, constraint_residuals, curvature_torsion, solve_G
from .degeneracy import analyze
from .errors import FinslerError
from .jet import TangentPoint, check_homogeneity, compute_jet, compute_jets

__all__ = ["CheckResult", "run_verification", "render_report"]

SCALES = (0.5, 2.0, 10.0)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def _seed(name: str) -> np.random.Generator:
    # stable seed per check name, independent of dict ordering or hashing
    return np.random.default_rng(sum(ord(c) for c in name) * 7919 + 13)


def _sample(entry: CatalogEntry, count: int, tag: str):
    rng = _seed(entry.name + tag)
    return entry.sampler.sample(rng, count, entry.spec)


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------


def _check_metric_homogeneity(entry: CatalogEntry, points: int) -> CheckResult:
    xs, dxs = _sample(entry, points, "homo")
    worst = 0.0
    for x, dx in zip(xs, dxs):
        rep = check_homogeneity(entry.spec, TangentPoint(x, dx), SCALES)
        worst = max(worst, rep.l_violation)
    return CheckResult(
        name=f"homogeneity/L/{entry.name}",
        passed=worst <= 1e-9,
        value=worst,
        threshold=1e-9,
        detail=f"{points} points, scales {SCALES}",
    )


def _check_jet_identities(entry: CatalogEntry, points: int) -> CheckResult:
    xs, dxs = _sample(entry, points, "jet")
    jets = compute_jets(entry.spec, xs, dxs, validate=False)
    worst = 0.0
    for jet in jets:
        dx_norm = float(np.linalg.norm(jet.dx))
        scale = max(jet.scale(), 1e-300)
        worst = max(worst, abs(float(jet.p @ jet.dx) - jet.L) / scale)
        l2s = max(float(np.linalg.norm(jet.L2)) * dx_norm, 1e-300)
        worst = max(worst, float(np.linalg.norm(jet.L2 @ jet.dx)) / l2s)
        ms = max(
            float(np.linalg.norm(jet.mixed)) * dx_norm + float(np.linalg.norm(jet.dL_dx)),
            1e-300,
        )
        worst = max(worst, float(np.linalg.norm(jet.dx @ jet.mixed - jet.dL_dx)) / ms)
    return CheckResult(
        name=f"jet/identities/{entry.name}",
        passed=worst <= 1e-9,
        value=worst,
        threshold=1e-9,
        detail=f"Euler, annihilation and mixed-contraction over {points} points",
    )


def _check_rank_facts(entry: CatalogEntry, points: int) -> CheckResult:
    xs, dxs = _sample(entry, points, "rank")
    jets = compute_jets(entry.spec, xs, dxs, validate=False)
    bad = 0
    for jet in jets:
        deg = analyze(jet)
        if deg.rank != entry.expected_rank or deg.D != entry.expected_D:
            bad += 1
    return CheckResult(
        name=f"degeneracy/rank/{entry.name}",
        passed=bad == 0,
        value=float(bad),
        threshold=0.0,
        detail=f"expected rank {entry.expected_rank}, D {entry.expected_D} at {points} points",
    )


def _check_constraint_forms(entry: CatalogEntry, points: int) -> CheckResult:
    xs, dxs = _sample(entry, points, "cform")
    jets = compute_jets(entry.spec, xs, dxs, validate=False)
    signs = entry.extras.get("constraint_signs") or (1.0,) * len(entry.constraint_forms)
    worst = 0.0
    for jet in jets:
        deg = analyze(jet)
        C = constraint_residuals(jet, deg)
        expected = np.array(
            [s * f(jet.x, jet.dx) for s, f in zip(signs, entry.constraint_forms)]
        )
        if C.shape != expected.shape:
            return CheckResult(
                name=f"degeneracy/constraints/{entry.name}",
                passed=False,
                value=float("inf"),
                threshold=1e-10,
                detail=f"constraint count {C.shape[0]} != expected {expected.shape[0]}",
            )
        scale = max(float(np.max(np.abs(expected))), 1e-30)
        worst = max(worst, float(np.max(np.abs(C - expected))) / scale)
    return CheckResult(
        name=f"degeneracy/constraints/{entry.name}",
        passed=worst <= 1e-10,
        value=worst,
        threshold=1e-10,
        detail=f"printed constraint forms at {points} points",
    )


def _check_connection_homogeneity(entry: CatalogEntry, points: int) -> CheckResult:
    xs, dxs = _sample(entry, points, "ghomo")
    worst = 0.0
    for x, dx in zip(xs, dxs):
        rep = check_homogeneity(
            entry.spec, TangentPoint(x, dx), SCALES, with_connection=True
        )
        worst = max(worst, rep.max_violation())
    return CheckResult(
        name=f"homogeneity/connection/{entry.name}",
        passed=worst <= 1e-9,
        value=worst,
        threshold=1e-9,
        detail=f"G degree 2, N degree 1, C degree 1 at {points} points",
    )


def _check_fpreserve(entry: CatalogEntry, points: int) -> CheckResult:
    xs, dxs = _sample(entry, points, "fpres")
    worst = 0.0
    for x, dx in zip(xs, dxs):
        jet = compute_jet(entry.spec, x=x, dx=dx, validate=False)
        res = coefficients_N(entry.spec, TangentPoint(x, dx))
        scale = max(float(np.linalg.norm(jet.dL_dx)), 1e-30)
        worst = max(worst, float(np.linalg.norm(jet.dL_dx - jet.p @ res.N)) / scale)
    return CheckResult(
        name=f"connection/metric-preservation/{entry.name}",
        passed=worst <= 1e-6,
        value=worst,
        threshold=1e-6,
        detail=f"dL/dx = p.N residual at {points} points",
    )


def _check_lc_agreement(entry: CatalogEntry, points: int) -> CheckResult:
    xs, dxs = _sample(entry, points, "lc")
    worst = 0.0
    for x, dx in zip(xs, dxs):
        jet = compute_jet(entry.spec, x=x, dx=dx, validate=False)
        conn = solve_G(jet, analyze(jet))
        lc = christoffel_oracle(entry.riemann_g, x, dx)
        worst = max(
            worst,
            float(np.linalg.norm(2 * conn.G - lc)) / max(float(np.linalg.norm(lc)), 1e-30),
        )
    return CheckResult(
        name=f"connection/levi-civita/{entry.name}",
        passed=worst <= 1e-7,
        value=worst,
        threshold=1e-7,
        detail=f"spray vs independent Christoffel route at {points} points",
    )


def _check_uniqueness_symmetry(entry: CatalogEntry) -> list[CheckResult]:
    xs, dxs = _sample(entry, 2, "uniq")
    worst_g = 0.0
    worst_sym = 0.0
    for x, dx in zip(xs, dxs):
        jet = compute_jet(entry.spec, x=x, dx=dx, validate=False)
        conn = solve_G(jet, analyze(jet))
        gamma = entry.analytic_christoffel(x)
        lc = np.einsum("mab,a,b->m", gamma, dx, dx)
        worst_g = max(
            worst_g,
            float(np.linalg.norm(2 * conn.G - lc)) / max(float(np.linalg.norm(lc)), 1e-30),
        )
        cdata = curvature_torsion(entry.spec, TangentPoint(x, dx))
        sym = float(np.max(np.abs(cdata.N2 - cdata.N2.transpose(0, 2, 1))))
        scale = max(float(np.max(np.abs(cdata.N2))), 1e-30)
        worst_sym = max(worst_sym, sym / scale)
    return [
        CheckResult(
            name=f"connection/uniqueness/{entry.name}",
            passed=worst_g <= 1e-8,
            value=worst_g,
            threshold=1e-8,
            detail="independent spray computations agree",
        ),
        CheckResult(
            name=f"connection/berwald-symmetry/{entry.name}",
            passed=worst_sym <= 1e-6,
            value=worst_sym,
            threshold=1e-6,
            detail="direction derivatives of N symmetric",
        ),
    ]


def _check_potential_closed_form(entry: CatalogEntry, points: int) -> CheckResult:
    xs, dxs = _sample(entry, points, "pclose")
    worst = 0.0
    for x, dx in zip(xs, dxs):
        jet = compute_jet(entry.spec, x=x, dx=dx, validate=False)
        conn = solve_G(jet, analyze(jet))
        expected = entry.closed_form_2G(x, dx)
        worst = max(
            worst,
            float(np.linalg.norm(2 * conn.G - expected))
            / max(float(np.linalg.norm(expected)), 1e-30),
        )
    return CheckResult(
        name=f"connection/printed-spray/{entry.name}",
        passed=worst <= 1e-8,
        value=worst,
        threshold=1e-8,
        detail=f"solver vs printed spray expression at {points} points",
    )


def _check_potential_trajectory(entry: CatalogEntry) -> CheckResult:
    x0 = np.array([0.0, 0.5, -0.3, 0.2])
    dx0 = np.array([1.0, 0.1, 0.2, -0.1])
    traj = integrate(entry.spec, x0, dx0, GaugeChoice.time(), steps=250, h=4e-3)
    t = traj.taus[-1]
    analytic = x0[1:] * np.cos(t) + dx0[1:] * np.sin(t)
    err = float(np.max(np.abs(traj.xs[-1][1:] - analytic)))
    return CheckResult(
        name=f"autoparallel/oscillator/{entry.name}",
        passed=traj.completed and err <= 1e-6,
        value=err,
        threshold=1e-6,
        detail="time-gauge trajectory vs closed-form harmonic motion",
    )


def _check_second_class_dynamics(entry: CatalogEntry) -> list[CheckResult]:
    x0 = np.array([0.0, 0.8, 0.3])
    dx0 = np.array([1.0, x0[2], -x0[1]])
    traj = integrate(entry.spec, x0, dx0, GaugeChoice.time(), steps=300, h=1e-2)
    oracle = oscillator_oracle((dx0[1], dx0[2]), traj.taus[-1], x0=x0)
    err = float(np.max(np.abs(traj.xs[-1] - oracle["x"])))
    max_c = max(float(np.max(np.abs(n.C))) for n in traj.nodes if n.C.size)
    energies = [
        0.5 * float((n.dx[1:] / n.dx[0]) @ (n.dx[1:] / n.dx[0])) for n in traj.nodes
    ]
    e_drift = max(abs(e - energies[0]) for e in energies)
    return [
        CheckResult(
            name=f"autoparallel/rotation/{entry.name}",
            passed=traj.completed and err <= 1e-6,
            value=err,
            threshold=1e-6,
            detail="reduced dynamics matches the exact rotation",
        ),
        CheckResult(
            name=f"autoparallel/constraint-drift/{entry.name}",
            passed=max_c <= 1e-8,
            value=max_c,
            threshold=1e-8,
            detail="constraints stay satisfied without projection",
        ),
        CheckResult(
            name=f"autoparallel/energy-drift/{entry.name}",
            passed=e_drift <= 1e-8,
            value=e_drift,
            threshold=1e-8,
            detail="reduced-phase-space energy conserved",
        ),
    ]


def _check_frenkel(entry: CatalogEntry) -> list[CheckResult]:
    out = []
    # off the surface the regular-block multipliers blow up on approach
    # (coordinate held away from the surface while its velocity shrinks);
    # the tight rank tolerance pins the analysis to the off-surface branch,
    # at the default tolerance the structure collapses to rank 1 instead
    x = np.array([0.4, -0.3, 0.5, 0.5])
    dx = np.array([1.0, 0.2, 0.8, 1e-6])
    jet = compute_jet(entry.spec, x=x, dx=dx, validate=False)
    deg_tight = analyze(jet, rank_tol=1e-14)
    conn = solve_G(jet, deg_tight)
    deg_default = analyze(jet)
    out.append(
        CheckResult(
            name=f"connection/multiplier-blowup/{entry.name}",
            passed=bool(conn.lambda_blowup)
            and deg_tight.rank == 2
            and deg_default.rank == 1,
            value=float(np.max(np.abs(conn.lambda_a))),
            threshold=0.0,
            detail="regular-block multiplier diverges approaching the "
            "surface; default tolerance collapses the rank instead",
        )
    )
    # on the surface: rank 1, two free multipliers, x3 pinned at 0
    policy = lambda tau, xx, dxx, idx: 0.4 if idx == 1 else -0.3  # noqa: E731
    x0 = np.array([0.0, 0.1, -0.2, 0.0])
    dx0 = np.array([1.0, 0.5, 0.4, 0.0])
    traj = integrate(entry.spec, x0, dx0, GaugeChoice.time(free_policy=policy), steps=120, h=1e-2)
    n0 = traj.nodes[0]
    max_x3 = max(abs(float(n.x[3])) for n in traj.nodes)
    T = traj.taus[-1]
    fam_err = max(
        abs(traj.xs[-1][1] - (0.1 + 0.5 * T + 0.2 * T * T)),
        abs(traj.xs[-1][2] - (-0.2 + 0.4 * T - 0.15 * T * T)),
    )
    out.append(
        CheckResult(
            name=f"autoparallel/on-surface-structure/{entry.name}",
            passed=traj.completed and n0.rank == 1 and n0.D == 2 and n0.gauge_dim_free == 2,
            value=float(n0.gauge_dim_free),
            threshold=2.0,
            detail=f"rank {n0.rank}, D {n0.D}, free multipliers {n0.gauge_dim_free}",
        )
    )
    out.append(
        CheckResult(
            name=f"autoparallel/pinned-coordinate/{entry.name}",
            passed=max_x3 <= 1e-9,
            value=max_x3,
            threshold=1e-9,
            detail="x3 stays on the constraint surface",
        )
    )
    out.append(
        CheckResult(
            name=f"autoparallel/free-family/{entry.name}",
            passed=fam_err <= 1e-9,
            value=fam_err,
            threshold=1e-9,
            detail="free multipliers steer x1, x2 through the solution family",
        )
    )
    return out


def _check_mroot(entry: CatalogEntry, points: int) -> CheckResult:
    m = entry.mroot["m"]
    c_fns, dc_fns = entry.mroot["c"], entry.mroot["dc"]
    xs, dxs = _sample(entry, points, "mroot")
    worst = 0.0
    for x, dx in zip(xs, dxs):
        res = coefficients_N(entry.spec, TangentPoint(x, dx))
        c = np.array([f(x) for f in c_fns])
        dc = np.array([f(x) for f in dc_fns])  # [mu, alpha]
        lhs = 0.25 * np.einsum("ma,m->a", dc, dx**m)
        rhs = np.einsum("m,m,ma->a", c, dx ** (m - 1), res.N)
        scale = max(float(np.max(np.abs(lhs))), 1e-30)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return CheckResult(
        name=f"connection/mth-root-preservation/{entry.name}",
        passed=worst <= 1e-6,
        value=worst,
        threshold=1e-6,
        detail=f"degree-{m} root preservation identity at {points} points",
    )


def _check_el_residuals(entry: CatalogEntry) -> CheckResult:
    x0 = np.array([0.0, 0.5, -0.3, 0.2])
    dx0 = np.array([1.0, 0.1, 0.2, -0.1])
    traj = integrate(entry.spec, x0, dx0, GaugeChoice.time(), steps=100, h=5e-3)
    worst = max(n.el_norm / max(n.el_scale, 1e-300) for n in traj.nodes)
    return CheckResult(
        name=f"autoparallel/el-residual/{entry.name}",
        passed=traj.completed and worst <= 1e-6,
        value=worst,
        threshold=1e-6,
        detail="variational residual vanishes at every node",
    )


def _check_norm_conservation(entry: CatalogEntry) -> list[CheckResult]:
    x0 = np.array([1.2, 0.3])
    dx0 = np.array([0.6, 0.5])
    dx0 = dx0 / float(dsl.eval_values(entry.spec.expr, entry.spec.params, x0[None], dx0[None])[0])
    Z0 = np.array([0.2, -0.4])
    drifts = []
    l_drifts = []
    lambda0_max = 0.0
    hs = (0.08, 0.04, 0.02)
    for h in hs:
        steps = int(round(0.8 / h))
        traj = integrate(entry.spec, x0, dx0, GaugeChoice.arclength(), steps=steps, h=h)
        tr = parallel_transport(entry.spec, traj, Z0)
        drifts.append(tr.drift)
        l_drifts.append(max(abs(n.L - 1.0) for n in traj.nodes))
        lambda0_max = max(lambda0_max, max(abs(n.lambda0) for n in traj.nodes))
    orders = [np.log2(drifts[i] / drifts[i + 1]) for i in range(len(hs) - 1)]
    l_orders = [np.log2(l_drifts[i] / l_drifts[i + 1]) for i in range(len(hs) - 1)]
    return [
        CheckResult(
            name=f"transport/norm-conservation-order/{entry.name}",
            passed=min(orders) >= 3.8,
            value=float(min(orders)),
            threshold=3.8,
            detail=f"drifts {['%.2e' % d for d in drifts]} under step halving",
        ),
        CheckResult(
            name=f"autoparallel/arclength-preservation-order/{entry.name}",
            passed=min(l_orders) >= 3.8,
            value=float(min(l_orders)),
            threshold=3.8,
            detail=f"|L-1| drifts {['%.2e' % d for d in l_drifts]}",
        ),
        CheckResult(
            name=f"autoparallel/arclength-multiplier/{entry.name}",
            passed=lambda0_max < 1e-9,
            value=lambda0_max,
            threshold=1e-9,
            detail="resolved flow-parallel multiplier vanishes in arc length",
        ),
    ]


# ---------------------------------------------------------------------------
# suite driver
# ---------------------------------------------------------------------------


def run_verification(
    only: str | None = None,
    extra_metrics: list[tuple[str, dsl.MetricSpec]] | None = None,
) -> list[CheckResult]:
    """Run the full invariant suite; deterministic given the same inputs.

    ``only`` filters checks by substring match on their name.  Extra
    metrics (name, spec) run the metric-level checks only, which is how a
    user-supplied file is vetted.
    """
    results: list[CheckResult] = []

    def add(item):
        if isinstance(item, CheckResult):
            results.append(item)
        else:
            results.extend(item)

    for entry in catalog():
        try:
            add(_check_metric_homogeneity(entry, points=12))
            add(_check_jet_identities(entry, points=25))
            add(_check_rank_facts(entry, points=15))
            if entry.constraint_forms and entry.classification != "singular-1st-class":
                add(_check_constraint_forms(entry, points=15))
            add(_check_connection_homogeneity(entry, points=2))
            if entry.classification == "regular":
                add(_check_fpreserve(entry, points=8))
            if entry.riemann_g is not None:
                add(_check_lc_agreement(entry, points=8))
            if entry.analytic_christoffel is not None:
                add(_check_uniqueness_symmetry(entry))
            if entry.closed_form_2G is not None and entry.name.startswith("potential"):
                add(_check_potential_closed_form(entry, points=10))
                add(_check_potential_trajectory(entry))
                add(_check_el_residuals(entry))
            if entry.classification == "singular-2nd-class":
                add(_check_second_class_dynamics(entry))
            if entry.classification == "singular-1st-class":
                add(_check_constraint_forms(entry, points=10))
                add(_check_frenkel(entry))
            if entry.mroot is not None:
                add(_check_mroot(entry, points=5))
            if entry.name == "riemann-2d-curved":
                add(_check_norm_conservation(entry))
        except FinslerError as exc:
            results.append(
                CheckResult(
                    name=f"error/{entry.name}",
                    passed=False,
                    value=float("nan"),
                    threshold=0.0,
                    detail=f"{type(exc).__name__}: {exc}",
                )
            )

    for name, spec in extra_metrics or ():
        sampler_entry = CatalogEntry(
            name=f"extra:{name}",
            classification="extra",
            spec=spec,
            sampler=_default_sampler(spec),
            expected_rank=-1,
            expected_D=-1,
        )
        try:
            add(_check_metric_homogeneity(sampler_entry, points=12))
            add(_check_jet_identities(sampler_entry, points=12))
        except FinslerError as exc:
            results.append(
                CheckResult(
                    name=f"error/extra:{name}",
                    passed=False,
                    value=float("nan"),
                    threshold=0.0,
                    detail=f"{type(exc).__name__}: {exc}",
                )
            )

    if only:
        results = [r for r in results if only in r.name]
    return results


def _default_sampler(spec: dsl.MetricSpec):
    from .catalog import Sampler

    n1 = spec.dimension
    return Sampler(
        x_low=(-1.0,) * n1, x_high=(1.0,) * n1,
        dx_low=(0.5,) + (-1.0,) * (n1 - 1), dx_high=(1.5,) + (1.0,) * (n1 - 1),
        min_abs_L=0.05,
    )


def render_report(results: list[CheckResult]) -> str:
    lines = []
    width = max((len(r.name) for r in results), default=10) + 2
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(
            f"{status}  {r.name:<{width}} value={r.value:.6e} threshold={r.threshold:.1e}  {r.detail}"
        )
    total = len(results)
    failed = sum(not r.passed for r in results)
    lines.append(f"{total - failed}/{total} checks passed")
    return "\n".join(lines)

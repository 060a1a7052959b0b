"""Acceptance gates for the adaptation engine.

Each criterion is one test that prints a single [PASS]/[FAIL] line (run with
``pytest tests/test_acceptance.py -v -s`` to watch them).  Adapted meshes are
cached and shared across criteria; the sweeps use a 60-iteration outer budget
and the fixed-resolution ranking runs use 100, because the steady-state
comparisons need the outer fixed point (the packaged default of 20 outer
iterations is a safe interactive box but stops well short of steadiness).
Criteria 4 and 10 aggregate over every cached adapted run, so they execute
last in file order.
"""
import time

import numpy as np
import pytest

from meshadapt import build_structured_mesh
from meshadapt.functionals import (
    FunctionalSpec,
    discrete_energy,
    eval_hr,
    eval_huang,
    eval_winslow,
)
from meshadapt.hessian import recover_hessian
from meshadapt.metric import build_metric_l2
from meshadapt.quality import l2_interp_error
from meshadapt.runner import RunManifest, fit_loglog_slope, run_single
from meshadapt.solver import AdaptationConfig, _IntervalContext
from meshadapt.testcases import get_test_case

from helpers import fd_grad_wrt_J, fd_scalar, perturbed_mesh, random_jacobian, random_spd

KINDS = ("winslow", "huang", "hr")
SWEEP_OUTER = 60  # convergence sweeps (criteria 6-7)
RANK_OUTER = 100  # fixed-resolution steady-state comparisons (criteria 8-9)
SIZES_2D = (16, 24, 32, 48, 64, 96)
SIZES_3D = (6, 8, 12, 16)

_RUNS = {}


def get_run(example, functional, n, outer, scale=1.0):
    key = (example, functional, n, outer, scale)
    if key not in _RUNS:
        manifest = RunManifest(
            example=example,
            functional=functional,
            sizes=(n,),
            config=AdaptationConfig(max_outer_iters=outer),
            metric_scale=scale,
        )
        _RUNS[key] = run_single(manifest)
    return _RUNS[key]


def _gate(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _evaluator(spec, M, sigma):
    if spec.kind == "winslow":
        return lambda J, detJ: eval_winslow(J, detJ, M)
    if spec.kind == "huang":
        return lambda J, detJ: eval_huang(J, detJ, M, spec)
    return lambda J, detJ: eval_hr(J, detJ, M, spec, sigma)


def test_criterion_1_derivative_oracles():
    t0 = time.perf_counter()
    worst = 0.0
    for kind in KINDS:
        spec = FunctionalSpec(kind)
        for d in (2, 3):
            rng = np.random.default_rng(1000 + d)
            for _ in range(100):
                J = random_jacobian(rng, d)
                detJ = float(np.linalg.det(J))
                M = random_spd(rng, d)
                sigma = rng.uniform(0.5, 2.0)
                ev = _evaluator(spec, M, sigma)
                out = ev(J, detJ)
                fd_J = fd_grad_wrt_J(lambda Jp: ev(Jp, detJ).G, J).T
                scale = max(np.abs(fd_J).max(), 1e-8)
                worst = max(worst, np.abs(out.dG_dJ - fd_J).max() / scale)
                fd_det = fd_scalar(lambda s: ev(J, s).G, detJ)
                denom = max(abs(fd_det), 1e-8)
                worst = max(worst, abs(out.dG_ddetJ - fd_det) / denom)
    elapsed = time.perf_counter() - t0
    _gate(
        "criterion 1 (derivative oracle, 100 samples x 3 functionals x 2 dims)",
        worst <= 1e-5 and elapsed < 5.0,
        f"worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_2_gradient_assembly_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    cases = [(2, 10, 1, 2010), (3, 4, 4, 3010)]
    for dim, n, example, seed in cases:
        phys = perturbed_mesh(dim, n, seed=seed)
        comp = perturbed_mesh(dim, n, seed=seed + 1)
        case = get_test_case(example)
        metric = build_metric_l2(phys, recover_hessian(phys, case.u(phys.vertices)))
        rng = np.random.default_rng(seed + 2)
        verts = rng.choice(phys.n_vertices, size=20, replace=False)
        for kind in KINDS:
            spec = FunctionalSpec(kind)
            ctx = _IntervalContext(phys, metric, spec)
            sums = ctx.patch_sums(comp)
            h = 1e-6
            for i in verts:
                for a in range(dim):
                    vp = comp.vertices.copy()
                    vp[i, a] += h
                    vm = comp.vertices.copy()
                    vm[i, a] -= h
                    grad = (
                        discrete_energy(phys, comp.with_vertices(vp), metric, spec)
                        - discrete_energy(phys, comp.with_vertices(vm), metric, spec)
                    ) / (2 * h)
                    denom = max(abs(grad), 1e-10)
                    worst = max(worst, abs(sums[i, a] + grad) / denom)
    elapsed = time.perf_counter() - t0
    _gate(
        "criterion 2 (patch sums equal -dI_h/dxi at 20 vertices, 2D+3D)",
        worst <= 1e-5 and elapsed < 30.0,
        f"worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_3_closed_form_units():
    w = eval_winslow(np.eye(2), 1.0, np.eye(2))
    h = eval_huang(np.eye(2), 1.0, np.eye(2), FunctionalSpec("huang"))
    r = eval_hr(np.eye(2), 1.0, np.eye(2), FunctionalSpec("hr"), sigma=1.0)
    checks = [
        abs(w.G - 1.0),
        np.abs(w.dG_dJ - np.eye(2)).max(),
        abs(w.dG_ddetJ),
        abs(h.G - 8.0 / 3.0),
        np.abs(h.dG_dJ - (8.0 / 3.0) * np.eye(2)).max(),
        abs(h.dG_ddetJ - 8.0 / 3.0),
        abs(r.G - 4.1),
        np.abs(r.dG_dJ).max(),
        abs(r.dG_ddetJ - 7.9),
    ]
    worst = max(checks)
    _gate("criterion 3 (closed-form unit values)", worst <= 1e-12, f"worst dev {worst:.2e}")


def test_criterion_5_scaling_invariance_end_to_end():
    t0 = time.perf_counter()
    worst = 0.0
    for kind in KINDS:
        r1 = get_run(1, kind, 32, outer=10)
        r10 = get_run(1, kind, 32, outer=10, scale=10.0)
        dist = float(np.linalg.norm(r1.mesh.vertices - r10.mesh.vertices, axis=1).max())
        worst = max(worst, dist)
    elapsed = time.perf_counter() - t0
    _gate(
        "criterion 5 (final meshes invariant under M -> 10M, n=32)",
        worst <= 1e-10 and elapsed < 120.0,
        f"worst vertex distance {worst:.2e}, {elapsed:.0f}s",
    )


def test_criterion_6_convergence_2d():
    t0 = time.perf_counter()
    slopes = {}
    for kind in ("huang", "hr"):
        errs, Ns = [], []
        for n in SIZES_2D:
            run = get_run(1, kind, n, outer=SWEEP_OUTER)
            errs.append(run.report.l2_error)
            Ns.append(run.report.n_elements)
        slopes[kind] = fit_loglog_slope(np.array(Ns), np.array(errs))
    elapsed = time.perf_counter() - t0
    ok = all(-1.15 <= s <= -0.85 for s in slopes.values()) and elapsed < 900.0
    _gate(
        "criterion 6 (2D convergence slope in [-1.15, -0.85], H and HR)",
        ok,
        f"slopes {slopes}, {elapsed:.0f}s",
    )


def test_criterion_7_convergence_3d():
    t0 = time.perf_counter()
    errs, Ns = [], []
    for n in SIZES_3D:
        run = get_run(4, "hr", n, outer=SWEEP_OUTER)
        errs.append(run.report.l2_error)
        Ns.append(run.report.n_elements)
    slope = fit_loglog_slope(np.array(Ns), np.array(errs))
    elapsed = time.perf_counter() - t0
    _gate(
        "criterion 7 (3D convergence slope in [-0.80, -0.53], HR)",
        -0.80 <= slope <= -0.53 and elapsed < 1200.0,
        f"slope {slope:.3f}, {elapsed:.0f}s",
    )


def test_criterion_8_functional_ranking():
    errs = {kind: get_run(1, kind, 64, outer=RANK_OUTER).report.l2_error for kind in KINDS}
    hr, h, w = errs["hr"], errs["huang"], errs["winslow"]
    ok = hr < w and hr <= 1.05 * h
    _gate(
        "criterion 8 (ranking: HR < W, HR <= 1.05 H at n=64)",
        ok,
        f"hr={hr:.4e} huang={h:.4e} winslow={w:.4e}",
    )


def test_criterion_9_adapted_beats_uniform():
    case = get_test_case(1)
    uniform_err = l2_interp_error(build_structured_mesh(2, 64), case.u)
    errs = {kind: get_run(1, kind, 64, outer=RANK_OUTER).report.l2_error for kind in KINDS}
    ok = all(e < uniform_err for e in errs.values())
    _gate(
        "criterion 9 (adapted error < uniform error at n=64, all functionals)",
        ok,
        f"uniform={uniform_err:.4e} adapted={ {k: f'{v:.4e}' for k, v in errs.items()} }",
    )


def test_criterion_4_quality_identities_on_adapted_meshes():
    adapted = [r for r in _RUNS.values() if r.manifest.functional != "uniform"]
    assert adapted, "criteria 6-8 must run first"
    worst_ali = np.inf
    worst_mean = 0.0
    for run in adapted:
        worst_ali = min(worst_ali, float(run.report.per_element_ali.min()))
        vol_c = run.reference.element_volumes()
        mean = float(np.sum(vol_c * run.report.per_element_eq) / vol_c.sum())
        worst_mean = max(worst_mean, abs(mean - 1.0))
    ok = worst_ali >= 1.0 - 1e-12 and worst_mean <= 1e-10
    _gate(
        f"criterion 4 (quality identities on {len(adapted)} adapted meshes)",
        ok,
        f"min Q_ali,K {worst_ali:.12f}, worst |weighted mean Q_eq - 1| {worst_mean:.2e}",
    )


def test_criterion_10_robustness_of_all_runs():
    assert _RUNS, "criteria 5-9 must run first"
    worst = np.inf
    for run in _RUNS.values():
        worst = min(worst, float(run.mesh.element_dets().min()))
        for d in run.diagnostics:
            worst = min(worst, d.min_det_comp, d.min_det_phys)
    ok = worst > 0.0  # runs that stalled would have raised before caching
    _gate(
        f"criterion 10 (all {len(_RUNS)} runs terminated untangled, no stalls)",
        ok,
        f"smallest determinant seen {worst:.3e}",
    )

"""Single-run and sweep drivers shared by the CLI and the acceptance suite."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import MeshAdaptError
from .functionals import FunctionalSpec
from .hessian import recover_hessian
from .mesh import SimplicialMesh, build_structured_mesh
from .metric import build_metric, scale_metric
from .quality import QualityReport, l2_interp_error, mesh_quality
from .solver import AdaptationConfig, OuterIteration, adapt
from .testcases import get_test_case

log = logging.getLogger(__name__)

FUNCTIONAL_CHOICES = ("winslow", "huang", "hr", "uniform")

REPORT_FIELDS = (
    "functional",
    "metric_kind",
    "n",
    "N",
    "N_v",
    "l2_error",
    "q_eq",
    "q_ali",
    "wall_time_s",
)


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce one adaptation run or sweep."""

    example: int
    functional: str = "hr"
    metric_kind: str = "l2"
    sizes: tuple = (64,)
    config: AdaptationConfig = field(default_factory=AdaptationConfig)
    metric_scale: float = 1.0
    spec_overrides: dict = field(default_factory=dict)
    seed: int | None = None  # perturbation tests only; unused in plain runs

    def __post_init__(self):
        if self.functional not in FUNCTIONAL_CHOICES:
            raise ValueError(f"unknown functional {self.functional!r}")
        if self.metric_kind not in ("l2", "h1"):
            raise ValueError(f"unknown metric kind {self.metric_kind!r}")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("sizes must be strictly increasing")

    def functional_spec(self) -> FunctionalSpec | None:
        if self.functional == "uniform":
            return None
        return FunctionalSpec(self.functional, **self.spec_overrides)


@dataclass
class RunResult:
    manifest: RunManifest
    n: int
    mesh: SimplicialMesh = field(repr=False)
    reference: SimplicialMesh = field(repr=False)
    metric: object = field(repr=False)
    report: QualityReport = field(repr=False)
    diagnostics: list[OuterIteration] = field(repr=False)

    def report_row(self) -> dict:
        return {
            "functional": self.manifest.functional,
            "metric_kind": self.manifest.metric_kind,
            "n": self.n,
            "N": self.report.n_elements,
            "N_v": self.report.n_vertices,
            "l2_error": self.report.l2_error,
            "q_eq": self.report.q_eq,
            "q_ali": self.report.q_ali,
            "wall_time_s": self.report.wall_time,
        }


def run_single(manifest: RunManifest, n: int | None = None) -> RunResult:
    """Adapt one mesh per the manifest and assemble its quality report."""
    n = int(n if n is not None else manifest.sizes[0])
    case = get_test_case(manifest.example)
    t0 = time.perf_counter()
    reference = build_structured_mesh(case.dim, n)
    spec = manifest.functional_spec()
    if spec is None:  # uniform baseline: no adaptation
        final, diagnostics = reference, []
    else:
        final, diagnostics = adapt(
            reference,
            case.u,
            spec,
            metric_kind=manifest.metric_kind,
            config=manifest.config,
            metric_scale=manifest.metric_scale,
        )
    # report the final mesh against a metric rebuilt on it, so the quality
    # identities hold exactly with the reported sigma
    metric = build_metric(
        final, recover_hessian(final, case.u(final.vertices)), manifest.metric_kind
    )
    if manifest.metric_scale != 1.0:
        metric = scale_metric(final, metric, manifest.metric_scale)
    report = mesh_quality(final, reference, metric)
    report.l2_error = l2_interp_error(final, case.u)
    report.wall_time = time.perf_counter() - t0
    return RunResult(manifest, n, final, reference, metric, report, diagnostics)


def fit_loglog_slope(N: np.ndarray, err: np.ndarray) -> float:
    """Least-squares slope of log(err) against log(N)."""
    return float(np.polyfit(np.log(np.asarray(N, float)), np.log(np.asarray(err, float)), 1)[0])


def run_study(manifests) -> tuple[list[dict], dict[str, float]]:
    """Run (functional, size) combinations; failed runs are marked, not fatal.

    Returns the report rows (with a trailing ``status`` column) and the
    per-functional log-log slopes of l2_error vs N over the successful rows.
    """
    rows = []
    by_functional: dict[str, list] = {}
    for manifest in manifests:
        for n in manifest.sizes:
            try:
                result = run_single(manifest, n)
            except (MeshAdaptError, ValueError) as exc:
                log.error("run failed (%s, n=%d): %s", manifest.functional, n, exc)
                rows.append(
                    {
                        "functional": manifest.functional,
                        "metric_kind": manifest.metric_kind,
                        "n": n,
                        "N": "",
                        "N_v": "",
                        "l2_error": "",
                        "q_eq": "",
                        "q_ali": "",
                        "wall_time_s": "",
                        "status": f"failed: {exc}",
                    }
                )
                continue
            row = result.report_row()
            row["status"] = "ok"
            rows.append(row)
            by_functional.setdefault(manifest.functional, []).append(
                (result.report.n_elements, result.report.l2_error)
            )
    slopes = {}
    for functional, pairs in by_functional.items():
        if len(pairs) >= 2:
            N, err = zip(*pairs)
            slopes[functional] = fit_loglog_slope(np.array(N), np.array(err))
    return rows, slopes


def write_report_csv(path, rows, extra_fields=()) -> None:
    fields = list(REPORT_FIELDS) + list(extra_fields)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt_cell(row.get(k, "")) for k in fields})


def write_diagnostics_csv(path, diagnostics) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "max_displacement", "I_h", "Q_eq", "Q_ali"])
        for d in diagnostics:
            writer.writerow(
                [
                    d.iteration,
                    _fmt_cell(d.max_displacement),
                    _fmt_cell(d.energy),
                    _fmt_cell(d.q_eq),
                    _fmt_cell(d.q_ali),
                ]
            )


def _fmt_cell(value):
    # shortest round-trip decimal keeps the CSV bit-reproducible
    if isinstance(value, float):
        return repr(value)
    return value

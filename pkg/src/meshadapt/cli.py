"""Command-line harness: single adaptations and convergence sweeps.

``meshadapt adapt`` runs one case and writes the mesh (VTK), a one-row
quality report (CSV), and the outer-iteration diagnostics (CSV).
``meshadapt study`` sweeps mesh sizes and functionals, writing the
consolidated report plus least-squares convergence slopes.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import MeshAdaptError, StallError
from .runner import (
    RunManifest,
    run_single,
    run_study,
    write_diagnostics_csv,
    write_report_csv,
)
from .solver import AdaptationConfig
from .testcases import get_test_case
from .vtk_io import write_vtk

DEFAULT_SIZES = {2: (16, 24, 32, 48, 64, 96), 3: (6, 8, 12, 16, 20)}


def _parse_floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).split(","))


def _parse_ints(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).split(","))


def _add_common(parser):
    parser.add_argument("--example", type=int, required=True, choices=range(1, 6))
    parser.add_argument("--metric", default="l2", choices=("l2", "h1"))
    parser.add_argument("--tau", type=float, default=0.1)
    parser.add_argument("--outer", type=int, default=20, help="max outer iterations")
    parser.add_argument("--tol", type=float, default=None, help="displacement tolerance")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--metric-scale", type=float, default=1.0, help="test hook: scale the metric by C")
    parser.add_argument("--p", type=float, default=None)
    parser.add_argument("--theta", type=float, default=None)
    parser.add_argument("--nu", type=float, default=None)
    parser.add_argument("--thetas", type=str, default=None, help="hr weights a,b,c,d")
    parser.add_argument("--seed", type=int, default=None, help="recorded in the manifest only")
    parser.add_argument("--config", default=None, help="JSON file mirroring the flags; flags win")


def build_parser():
    parser = argparse.ArgumentParser(prog="meshadapt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_adapt = sub.add_parser("adapt", help="run one adaptation")
    _add_common(p_adapt)
    p_adapt.add_argument("--functional", default="hr", choices=("winslow", "huang", "hr"))
    p_adapt.add_argument("--n", type=int, default=64, help="cells per side")
    p_adapt.add_argument("--diagnostics", default=None, help="diagnostics CSV path")

    p_study = sub.add_parser("study", help="run a convergence sweep")
    _add_common(p_study)
    p_study.add_argument(
        "--functional",
        default="all",
        choices=("winslow", "huang", "hr", "uniform", "all"),
    )
    p_study.add_argument("--sizes", type=str, default=None, help="comma-separated cells per side")
    return parser


def _apply_config_file(parser, argv):
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if known.config:
        with open(known.config) as f:
            defaults = json.load(f)
        for sub_action in parser._subparsers._group_actions[0].choices.values():
            usable = {
                k: v for k, v in defaults.items()
                if any(a.dest == k for a in sub_action._actions)
            }
            sub_action.set_defaults(**usable)


def _manifest_from_args(args, sizes, functional=None) -> RunManifest:
    overrides = {}
    if args.p is not None:
        overrides["p"] = args.p
    if args.theta is not None:
        overrides["theta"] = args.theta
    if args.nu is not None:
        overrides["nu"] = args.nu
    if args.thetas is not None:
        overrides["thetas"] = _parse_floats(args.thetas)
    config = AdaptationConfig(
        tau=args.tau, max_outer_iters=args.outer, displacement_tol=args.tol
    )
    return RunManifest(
        example=args.example,
        functional=functional or args.functional,
        metric_kind=args.metric,
        sizes=tuple(sizes),
        config=config,
        metric_scale=args.metric_scale,
        spec_overrides=overrides,
        seed=args.seed,
    )


def _cmd_adapt(args) -> int:
    manifest = _manifest_from_args(args, (args.n,))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_single(manifest)
    tag = f"ex{args.example}_{args.functional}_n{args.n}_{args.metric}"
    case = get_test_case(args.example)
    write_vtk(
        out / f"adapt_{tag}.vtk",
        result.mesh,
        cell_data={
            "Q_eq": result.report.per_element_eq,
            "Q_ali": result.report.per_element_ali,
        },
        point_data={"u": case.u(result.mesh.vertices)},
        title=tag,
    )
    row = result.report_row()
    write_report_csv(out / f"report_{tag}.csv", [row])
    diag_path = Path(args.diagnostics) if args.diagnostics else out / f"diagnostics_{tag}.csv"
    write_diagnostics_csv(diag_path, result.diagnostics)
    print(
        f"{tag}: N={row['N']} l2_error={row['l2_error']:.6e} "
        f"q_eq={row['q_eq']:.4f} q_ali={row['q_ali']:.4f} "
        f"wall={row['wall_time_s']:.2f}s"
    )
    return 0


def _cmd_study(args) -> int:
    case = get_test_case(args.example)
    sizes = _parse_ints(args.sizes) if args.sizes else DEFAULT_SIZES[case.dim]
    functionals = (
        ("winslow", "huang", "hr") if args.functional == "all" else (args.functional,)
    )
    manifests = [_manifest_from_args(args, sizes, functional=f) for f in functionals]
    rows, slopes = run_study(manifests)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tag = f"ex{args.example}_{args.metric}"
    write_report_csv(out / f"study_{tag}.csv", rows, extra_fields=("status",))
    with open(out / f"slopes_{tag}.csv", "w") as f:
        f.write("functional,slope\n")
        for name, slope in slopes.items():
            f.write(f"{name},{repr(slope)}\n")
    for name, slope in slopes.items():
        print(f"slope[{name}] = {slope:.4f}")
    failed = [r for r in rows if r.get("status") != "ok"]
    if failed:
        print(f"{len(failed)} run(s) failed; see status column", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    try:
        if args.command == "adapt":
            return _cmd_adapt(args)
        return _cmd_study(args)
    except StallError as exc:
        print(f"solver stalled: {exc} [element {exc.element}]", file=sys.stderr)
        return 3
    except MeshAdaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

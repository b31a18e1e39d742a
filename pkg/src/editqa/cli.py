"""Command-line entry point.

Subcommands: ingest, mos, baselines, train, ablate, report. Every run
writes its artifacts under --out together with a run manifest listing
the files produced and the config fingerprint. All randomness flows
from --seed. Exit codes: 0 ok, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import dataset, scorers, subjective, training
from .model import BackboneConfig, ModelConfig
from .reports import EvalReport, render_comparison

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _write_run_manifest(out_dir: Path, artifacts: list[Path], fingerprint: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "artifacts": sorted(str(p.relative_to(out_dir)) for p in artifacts),
        "config_fingerprint": fingerprint,
    }
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def cmd_ingest(args) -> int:
    out_dir = Path(args.out)
    try:
        cs = dataset.load_manifest(args.manifest)
    except dataset.CaseValidationError as exc:
        for v in exc.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    except dataset.ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if len(cs) == 0:
        print("warning: manifest has no cases", file=sys.stderr)
    store = dataset.ingest_caseset(cs, out_dir)
    _write_run_manifest(
        out_dir,
        [out_dir / "manifest.jsonl"],
        {"command": "ingest", "cases": len(store), "seed": args.seed},
    )
    print(f"ingested {len(store)} cases into {out_dir}")
    return EXIT_OK


def cmd_mos(args) -> int:
    rows = subjective.read_score_rows(args.ratings)
    if not rows:
        print("no rating rows", file=sys.stderr)
        return EXIT_VALIDATION
    sm = subjective.score_matrix_from_rows(rows)
    mt = subjective.run_mos_pipeline(sm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mos_path = out / "mos.csv"
    subjective.write_mos_table(mt, mos_path)
    if mt.screening is not None:
        print("screening report (P/Q per rater):")
        for row in mt.screening.rows:
            flag = "REJECTED" if row["rejected"] else "kept"
            print(
                f"  {row['rater_id']}: P={row['P']} Q={row['Q']} "
                f"N={row['N']} -> {flag}"
            )
    _write_run_manifest(
        out, [mos_path],
        {"command": "mos", "dims": sm.dims, "raters": len(sm.raters),
         "rejected": mt.screening.rejected if mt.screening else []},
    )
    print(f"wrote {mos_path}")
    return EXIT_OK


def cmd_baselines(args) -> int:
    cs = dataset.load_manifest(Path(args.case_store) / "manifest.jsonl")
    mt = subjective.read_mos_table(args.mos)
    registry = scorers.builtin_registry()
    if args.scorers:
        wanted = set(args.scorers.split(","))
        known = {h.name for h in registry}
        unknown = wanted - known
        if unknown:
            print(f"unknown scorers: {sorted(unknown)}", file=sys.stderr)
            return EXIT_VALIDATION
        registry = [h for h in registry if h.name in wanted]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump: list[dict] = []
    report = scorers.run_baselines(cs, mt, registry, score_dump=dump)
    report_path = report.save(out / "baselines.json")
    csv_path = report.write_csv(out / "baselines.csv")
    dump_path = out / "case_scores.json"
    dump_path.write_text(json.dumps(dump, indent=2) + "\n")
    _write_run_manifest(
        out, [report_path, csv_path, dump_path], report.config_fingerprint
    )
    print(render_comparison([report]))
    return EXIT_OK


def _model_config(args):
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        model_cfg = ModelConfig.from_dict(raw["model"]) if "model" in raw else ModelConfig()
        tc = training.TrainConfig(**raw.get("train", {}))
        lc = training.LossConfig(**raw.get("loss", {}))
    else:
        model_cfg = ModelConfig(backbone=BackboneConfig())
        tc = training.TrainConfig()
        lc = training.LossConfig()
    tc.seed = args.seed
    return model_cfg, tc, lc


def _run_training(args, variant: str | None) -> int:
    cs = dataset.load_manifest(Path(args.case_store) / "manifest.jsonl")
    mt = subjective.read_mos_table(args.mos)
    mos = subjective.mos_vector(mt, args.mos_dim)
    model_cfg, tc, lc = _model_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out / "checkpoints"
    try:
        if variant is None:
            report = training.run_cross_validation(
                cs, mos, model_cfg, tc, lc, k=args.k, checkpoint_dir=ckpt_dir
            )
        else:
            report = training.run_ablation(
                variant, cs, mos, model_cfg, tc, lc, k=args.k,
                checkpoint_dir=ckpt_dir,
            )
    except Exception as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report_path = report.save(out / "report.json")
    csv_path = report.write_csv(out / "report.csv")
    _write_run_manifest(out, [report_path, csv_path], report.config_fingerprint)
    print(render_comparison([report]))
    if report.partial:
        print("warning: some folds failed; report is partial", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_train(args) -> int:
    return _run_training(args, variant=None)


def cmd_ablate(args) -> int:
    if args.variant not in training.ABLATION_VARIANTS:
        print(
            f"unknown variant {args.variant!r}; choose from "
            f"{', '.join(training.ABLATION_VARIANTS)}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    return _run_training(args, variant=args.variant)


def cmd_report(args) -> int:
    reports = [EvalReport.load(p) for p in args.reports]
    print(render_comparison(reports))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "comparison.txt"
        path.write_text(render_comparison(reports) + "\n")
        _write_run_manifest(out, [path], {"command": "report", "inputs": args.reports})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="editqa")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and prepare a case store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("mos", help="ratings -> screened, normalized MOS")
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_mos)

    p = sub.add_parser("baselines", help="objective scorers vs MOS")
    p.add_argument("--case-store", required=True)
    p.add_argument("--mos", required=True)
    p.add_argument("--scorers", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_baselines)

    for name, fn in (("train", cmd_train), ("ablate", cmd_ablate)):
        p = sub.add_parser(name)
        p.add_argument("--case-store", required=True)
        p.add_argument("--mos", required=True)
        p.add_argument("--mos-dim", default="overall_quality")
        p.add_argument("--config", default="")
        p.add_argument("--k", type=int, default=10)
        p.add_argument("--out", required=True)
        if name == "ablate":
            p.add_argument("--variant", required=True)
        p.set_defaults(fn=fn)

    p = sub.add_parser("report", help="compare stored evaluation reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (dataset.ManifestError, dataset.CaseValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

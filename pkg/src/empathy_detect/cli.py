"""Command-line entry point: ``empathy-detect <command> [options]``.

Exit status: 0 success, 2 usage error (bad flags or missing paths),
3 invalid or malformed input, 4 other pipeline errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, learners
from .analysis import class_conditional_curves, findings_csv, rank_feature_contributions, \
    subset_evaluation
from .errors import FormatError, PipelineError, ValidationError
from .features import (
    build_summary_table,
    read_sequence,
    read_summary_table,
    resample_sequence,
    write_sequence,
    write_summary_table,
)
from .harness import CVConfig, CVReport, compare_models, derive_seed, fit_fold, grid_search, \
    run_cv
from .ingest import clean_features, group_features, load_dataset, save_dataset
from .labels import cronbach_alpha, labels_from_responses, read_labels, read_questionnaires, \
    write_labels
from .learners import ModelSpec
from .synth import SynthConfig, generate_dataset, write_synthetic

log = logging.getLogger("empathy_detect")

EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_PIPELINE = 4


class UsageError(Exception):
    pass


def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def _load_json(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def _cv_config(raw: dict, seed: int | None) -> CVConfig:
    raw = dict(raw)
    raw.setdefault("model", {"algorithm": "gradient_boosted_trees"})
    if seed is not None:
        raw["seed"] = seed
    try:
        return CVConfig.from_dict(raw)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad experiment config: {exc}") from None


def cmd_synth(args, manifest):
    raw = _load_json(_existing(args.config, "config"))
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        config = SynthConfig.from_dict(raw)
    except TypeError as exc:
        raise ValidationError(f"bad synth config: {exc}") from None
    data = generate_dataset(config)
    paths = write_synthetic(data, args.out)
    manifest["seeds"] = {"synth": config.seed}
    manifest["outputs"] = sorted(str(p) for p in paths.values())
    print(f"wrote {len(data.dataset)} sessions to {args.out}")


def cmd_ingest(args, manifest):
    meta = _existing(args.metadata, "metadata file")
    dataset = load_dataset(meta, jobs=args.jobs)
    cleaned, removed = clean_features(dataset)
    out = Path(args.out)
    meta_out = save_dataset(cleaned, out)
    (out / "removed_features.txt").write_text("".join(f"{n}\n" for n in removed))
    with open(out / "session_quality.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", "story_id", "frames", "quality", "flagged"])
        for s in cleaned.sessions:
            w.writerow([s.participant_id, s.story_id, s.n_frames, repr(s.quality), int(s.flagged)])
    groups = group_features(cleaned.catalog)
    manifest["inputs"] = [str(meta)]
    manifest["outputs"] = [str(meta_out)]
    print(f"{len(cleaned)} sessions, {len(cleaned.catalog)} features retained, "
          f"{len(removed)} removed; groups: "
          + ", ".join(f"{g}={len(v)}" for g, v in groups.items()))
    flagged = cleaned.flagged_sessions()
    if flagged:
        print(f"flagged (<50% tracked frames): {flagged}")


def cmd_label(args, manifest):
    q = _existing(args.questionnaires, "questionnaire file")
    responses = read_questionnaires(q)
    labels = labels_from_responses(responses)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_labels(labels, out / "labels.csv")
    summary = {"n": len(responses), "median": labels.median, **labels.counts()}
    try:
        summary["cronbach_alpha"] = cronbach_alpha(responses)
    except ValidationError as exc:
        summary["cronbach_alpha"] = None
        log.warning("alpha undefined: %s", exc)
    (out / "label_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest["inputs"] = [str(q)]
    print(json.dumps(summary, sort_keys=True))


def cmd_featurize(args, manifest):
    meta = _existing(args.metadata, "metadata file")
    labels_path = _existing(args.labels, "labels file")
    dataset = load_dataset(meta, jobs=args.jobs)
    labels = read_labels(labels_path) if labels_path else None
    table = build_summary_table(dataset, labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_table(table, out / "summary.csv")
    seq_dir = out / "sequences"
    seq_dir.mkdir(exist_ok=True)
    with open(seq_dir / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file", "participant_id", "story_id"])
        for s in dataset.sessions:
            name = f"{s.participant_id}_{s.story_id}.csv"
            write_sequence(resample_sequence(s, dataset.catalog), seq_dir / name)
            w.writerow([name, s.participant_id, s.story_id])
    manifest["inputs"] = [str(p) for p in (meta, labels_path) if p]
    print(f"summary table {table.X.shape[0]} x {table.X.shape[1]}")


def cmd_train(args, manifest):
    table = read_summary_table(_existing(args.table, "summary table"))
    config = _cv_config(_load_json(_existing(args.config, "config")), args.seed)
    if table.y is None:
        raise ValidationError("summary table has no labels")
    spec = config.model.with_seed(derive_seed(config.seed, config.model.seed))
    art = fit_fold(table.X, table.y, min(config.k_best, table.X.shape[1]), spec, table.names)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pipeline.json").write_text(art.serialize() + "\n")
    learners.save_model(art.model, out / "model.json")
    manifest["seeds"] = {"model": spec.seed}
    print(f"trained {spec.algorithm} on {len(table)} samples, "
          f"{len(art.selected)} selected features")


def cmd_evaluate(args, manifest):
    table = read_summary_table(_existing(args.table, "summary table"))
    raw = _load_json(_existing(args.config, "config"))
    config = _cv_config({k: v for k, v in raw.items() if k != "grid"}, args.seed)
    out = Path(args.out)
    manifest["seeds"] = {"cv": config.seed}
    if "grid" in raw:
        grid = [ModelSpec.from_dict(m) for m in raw["grid"]]
        ranked = grid_search(table, grid, config, jobs=args.jobs)
        rows = []
        for rank, (spec, report) in enumerate(ranked, start=1):
            report.save(out, stem=f"report_{rank:02d}_{spec.algorithm}")
            rows.append({"rank": rank, "model": spec.to_dict(), **report.aggregate})
        (out / "grid.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
        for r in rows:
            print(f"{r['rank']:>2}  {r['model']['algorithm']:<24} acc={r['accuracy']:.4f}")
        return
    report = run_cv(table, config, jobs=args.jobs)
    report.save(out)
    agg = report.aggregate
    print(f"{len(report.folds)} folds; " + ", ".join(
        f"{k}={v:.4f}" for k, v in agg.items() if v is not None))


def cmd_compare(args, manifest):
    a = CVReport.load(_existing(args.report_a, "report"))
    b = CVReport.load(_existing(args.report_b, "report"))
    res = compare_models(a, b)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest["inputs"] = [args.report_a, args.report_b]
    print(f"mcnemar chi2={res.statistic:.6g} p={res.p_value:.6g} "
          f"(b={res.detail['b']}, c={res.detail['c']}, pairs={res.detail['pairs']})")


def cmd_analyze(args, manifest):
    table = read_summary_table(_existing(args.table, "summary table"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    did = False
    if args.report:
        report = CVReport.load(_existing(args.report, "report"))
        findings = rank_feature_contributions(report, args.top_n, table)
        (out / "findings.csv").write_text(findings_csv(findings))
        for i, f in enumerate(findings[:10], start=1):
            p = "" if f.test is None else f" p={f.test.p_value:.3g}"
            print(f"{i:>2} {f.name:<32} imp={f.importance:.4f} {f.direction}{p}")
        did = True
    if args.curves:
        seq_dir = _existing(args.sequences, "sequence directory")
        labels = read_labels(_existing(args.labels, "labels file"))
        with open(seq_dir / "index.csv", newline="") as fh:
            seqs = [read_sequence(seq_dir / r["file"], r["participant_id"], r["story_id"])
                    for r in csv.DictReader(fh)]
        for feat in args.curves:
            curves = class_conditional_curves(seqs, labels, feat)
            (out / f"curves_{feat}.csv").write_text(curves.to_csv())
            print(f"{feat}: empathic mean {curves.mean_empathic:.4f}, "
                  f"less-empathic mean {curves.mean_less_empathic:.4f}")
        did = True
    if args.subsets:
        config = _cv_config(_load_json(_existing(args.config, "config")), args.seed)
        raw = sorted({n.rpartition("__")[0] for n in table.names})
        result = subset_evaluation(table, group_features(raw), config, jobs=args.jobs)
        (out / "subsets.csv").write_text(result.to_csv())
        for g, acc in result.accuracy().items():
            print(f"{g:<20} acc={acc:.4f}")
        did = True
    if not did:
        raise UsageError("analyze needs --report, --curves and/or --subsets")


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "label": cmd_label, "featurize": cmd_featurize,
    "train": cmd_train, "evaluate": cmd_evaluate, "compare": cmd_compare, "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (SynthConfig or CVConfig fields)")
    common.add_argument("--seed", type=int, help="master seed; overrides the config's seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="empathy-detect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p = sub.add_parser("ingest", parents=[common], help="parse and clean session files")
    p.add_argument("--metadata", required=True)
    p = sub.add_parser("label", parents=[common], help="questionnaires -> labels")
    p.add_argument("--questionnaires", required=True)
    p = sub.add_parser("featurize", parents=[common], help="summary table + 1 Hz sequences")
    p.add_argument("--metadata", required=True)
    p.add_argument("--labels")
    p = sub.add_parser("train", parents=[common], help="fit one model on the full table")
    p.add_argument("--table", required=True)
    p = sub.add_parser("evaluate", parents=[common], help="repeated stratified CV")
    p.add_argument("--table", required=True)
    p = sub.add_parser("compare", parents=[common], help="McNemar test between two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p = sub.add_parser("analyze", parents=[common], help="rankings, curves, subset ablation")
    p.add_argument("--table", required=True)
    p.add_argument("--report")
    p.add_argument("--top-n", type=int, default=25)
    p.add_argument("--sequences")
    p.add_argument("--labels")
    p.add_argument("--curves", nargs="+", metavar="FEATURE")
    p.add_argument("--subsets", action="store_true")
    return parser


def _write_manifest(out: Path, manifest: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        parser.error("--seed must be an unsigned 64-bit integer")
    manifest = {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": args.config,
        "out": args.out,
        "seed": args.seed,
        "jobs": args.jobs,
        "version": __version__,
        "started": datetime.now(timezone.utc).isoformat(),
    }
    try:
        COMMANDS[args.command](args, manifest)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FormatError as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    manifest["finished"] = datetime.now(timezone.utc).isoformat()
    _write_manifest(Path(args.out), manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())

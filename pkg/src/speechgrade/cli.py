"""``speechgrade`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import analysis, corpus, training
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import NumericError, SpeechGradeError
from .metrics import ThresholdSet
from .model import MODEL_KINDS

logger = logging.getLogger("speechgrade")

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path: str | Path) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _levels(text: str | None) -> tuple[int, ...] | None:
    return tuple(int(v) for v in text.split(",")) if text else None


def _prompt_records(manifest: corpus.Manifest, prompt: str | None) -> tuple[str, list[corpus.ResponseRecord]]:
    prompts = sorted({r.prompt for r in manifest.records})
    if prompt is None:
        if len(prompts) != 1:
            raise UsageError(f"manifest has prompts {prompts}; choose one with --prompt")
        prompt = prompts[0]
    records = manifest.for_prompt(prompt)
    if not records:
        raise UsageError(f"no records for prompt {prompt!r}")
    return prompt, records


def resolve_splits(records: list[corpus.ResponseRecord], seed: int) -> dict[str, list[corpus.ResponseRecord]]:
    """Use manifest split tags when every record has one, else a seeded 70:10:20 split."""
    if all(r.split in ("train", "val", "test") for r in records):
        tagged = corpus.split_by_tag(records)
        return {k: tagged.get(k, []) for k in ("train", "val", "test")}
    train, val, test = corpus.stratified_split(records, seed=seed)
    return {"train": train, "val": val, "test": test}


def _load_split(args, ckpt, name: str) -> list[corpus.ResponseRecord]:
    manifest = corpus.load_manifest(args.manifest)
    _, records = _prompt_records(manifest, ckpt.prompt or None)
    if name == "all":
        return records
    chosen = resolve_splits(records, ckpt.split_seed)[name]
    if not chosen:
        raise UsageError(f"split {name!r} is empty")
    return chosen


def _fmt(value) -> str:
    return "nan" if value is None else f"{value:.3f}"


# subcommands


def cmd_synth(args) -> None:
    if args.classes < 2:
        raise UsageError("--classes must be at least 2")
    if args.per_class < 1:
        raise UsageError("--per-class must be at least 1")
    spec = corpus.SyntheticSpec(
        n_classes=args.classes,
        per_class=args.per_class,
        prompt=args.prompt,
        audio_signal=args.audio_signal,
        text_signal=args.text_signal,
        audio_levels=_levels(args.audio_levels),
        text_levels=_levels(args.text_levels),
    )
    manifest = corpus.generate_synthetic_corpus(spec, args.seed, args.out)
    print(f"wrote {len(manifest)} records to {Path(args.out) / 'manifest.jsonl'} (seed {args.seed})")


def cmd_train(args) -> None:
    values = read_config(args.config) if args.config else {}
    for flag, key in (("lr", "learning_rate"), ("epochs", "max_epochs"), ("batch_size", "batch_size"),
                      ("patience", "patience"), ("dropout", "dropout"), ("seed", "seed")):
        if getattr(args, flag) is not None:
            values[key] = str(getattr(args, flag))
    config = training.TrainConfig.from_mapping(values)
    manifest = corpus.load_manifest(args.manifest)
    prompt, records = _prompt_records(manifest, args.prompt)
    splits = resolve_splits(records, args.split_seed)
    print(f"prompt {prompt}: train {len(splits['train'])}, val {len(splits['val'])}, test {len(splits['test'])} (split seed {args.split_seed}, train seed {config.seed})")
    ckpt, report = training.train(args.model, splits["train"], splits["val"], config, manifest.scales[prompt])
    ckpt.prompt = prompt
    ckpt.split_seed = args.split_seed
    save_checkpoint(ckpt, args.out)
    report_path = args.report or f"{args.out}.report.jsonl"
    report.write(report_path)
    sel = report.epochs[report.selected_epoch - 1]
    print(f"selected epoch {report.selected_epoch} ({report.selection}): val QWK {_fmt(sel.val_qwk)}, val MSE {sel.val_loss:.4f}")
    print(f"checkpoint {args.out}; report {report_path}")


def cmd_eval(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    thresholds = ThresholdSet.loads(Path(args.thresholds).read_text()) if args.thresholds else None
    records = _load_split(args, ckpt, args.split)
    feat = ckpt.featurizer
    examples = feat.transform(records, ckpt.model.uses_audio, ckpt.model.uses_text, threads=args.threads)
    result = training.evaluate(ckpt, examples, thresholds)
    if args.format == "lines":
        sys.stdout.write(result.metric_lines())
        return
    print(f"{ckpt.kind} on {args.split} ({len(examples)} responses)")
    print(f"QWK {_fmt(result.qwk)}  MSE {result.mse:.4f}  MSE(rounded) {result.mse_rounded:.4f}")
    if thresholds is not None:
        print(f"with thresholds: QWK {_fmt(result.qwk_thresholds)}  MSE(rounded) {result.mse_rounded_thresholds:.4f}")


def cmd_calibrate(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    records = _load_split(args, ckpt, "val")
    examples = ckpt.featurizer.transform(records, ckpt.model.uses_audio, ckpt.model.uses_text, threads=args.threads)
    cuts, before, after = training.calibrate(ckpt, examples, step=args.step)
    out = args.out or f"{args.ckpt}.thresholds"
    Path(out).write_text(cuts.dumps())
    print(f"validation QWK before {_fmt(before)} after {_fmt(after)}")
    print(f"thresholds {out}")


def _thresholds_for(args, ckpt) -> ThresholdSet:
    if args.thresholds:
        return ThresholdSet.loads(Path(args.thresholds).read_text())
    val = ckpt.featurizer.transform(_load_split(args, ckpt, "val"), threads=args.threads)
    return training.calibrate(ckpt, val)[0]


def _print_ablation(report: analysis.AblationReport, label: str) -> None:
    print(f"{label}: {report.scored} responses scored, {report.skipped} skipped")
    print(f"{'':10}{'Without TO':>12}{'With TO':>10}")
    print(f"{'original':10}{_fmt(report.baseline_without_to):>12}{_fmt(report.baseline_with_to):>10}")
    print(f"{label:10}{_fmt(report.qwk_without_to):>12}{_fmt(report.qwk_with_to):>10}")


def cmd_ablate_noise(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    thresholds = _thresholds_for(args, ckpt)
    report = analysis.ablate_white_noise(ckpt, _load_split(args, ckpt, args.split), seed=args.seed, thresholds=thresholds)
    print(f"noise seed {args.seed}")
    _print_ablation(report, "noise")


def cmd_ablate_swap(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    thresholds = _thresholds_for(args, ckpt)
    report = analysis.ablate_swapped_audio(ckpt, _load_split(args, ckpt, args.split), args.replacement_dir, thresholds)
    _print_ablation(report, "swapped")


def cmd_attn_split(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    records = _load_split(args, ckpt, args.split)
    rows = analysis.attention_split_report(ckpt, ckpt.featurizer.transform(records, threads=args.threads), by=args.by)
    lines = "".join(json.dumps(asdict(r)) + "\n" for r in rows)
    if args.out:
        Path(args.out).write_text(lines)
    sys.stdout.write(lines)


def cmd_attn_trace(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    manifest = corpus.load_manifest(args.manifest)
    matches = [r for r in manifest.records if r.id == args.id]
    if not matches:
        raise UsageError(f"no response with id {args.id!r}")
    lines = "".join(row.to_json() + "\n" for row in analysis.export_attention_trace(ckpt, matches[0]))
    if args.out:
        Path(args.out).write_text(lines)
    sys.stdout.write(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="speechgrade", description="Multimodal attention-fusion speech scoring")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--prompt", default="P1")
    p.add_argument("--audio-signal", type=float, default=1.0)
    p.add_argument("--text-signal", type=float, default=1.0)
    p.add_argument("--audio-levels", help="comma-separated feature level per grade, e.g. 0,1,1")
    p.add_argument("--text-levels")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model kind on a prompt")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--prompt")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    def eval_like(name, func, help_text, split=True):
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--ckpt", required=True)
        q.add_argument("--manifest", required=True)
        if split:
            q.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
        q.add_argument("--threads", type=int, default=1)
        q.set_defaults(func=func)
        return q

    p = eval_like("eval", cmd_eval, "report QWK and MSE")
    p.add_argument("--thresholds")
    p.add_argument("--format", choices=("text", "lines"), default="text")

    p = eval_like("calibrate", cmd_calibrate, "fit QWK-maximizing thresholds on the validation split", split=False)
    p.add_argument("--out")
    p.add_argument("--step", type=float, default=0.01)

    p = eval_like("ablate-noise", cmd_ablate_noise, "replace audio with white noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--thresholds")

    p = eval_like("ablate-swap", cmd_ablate_swap, "replace audio with externally supplied WAVs")
    p.add_argument("--replacement-dir", required=True)
    p.add_argument("--thresholds")

    p = eval_like("attn-split", cmd_attn_split, "text/audio attention shares")
    p.add_argument("--by", choices=("prompt", "grade", "predicted"), default="prompt")
    p.add_argument("--out")

    p = eval_like("attn-trace", cmd_attn_trace, "per-position attention for one response", split=False)
    p.add_argument("--id", required=True)
    p.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"speechgrade: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"speechgrade: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SpeechGradeError, OSError, KeyError) as exc:
        print(f"speechgrade: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())

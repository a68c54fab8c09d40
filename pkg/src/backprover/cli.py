"""Command-line entry point: gen-data, train, predict, eval, bench, inspect."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __doc__ as package_doc

log = logging.getLogger("backprover")


def _depths(text: str) -> dict[int, float]:
    try:
        pairs = [item.split(":") for item in text.split(",") if item.strip()]
        return {int(k): float(v) for k, v in pairs}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected depth:fraction pairs like 0:0.3,1:0.7, got {text!r}") from None


def _load_json(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _find_sample(path: str, sample_id: str):
    from .records import DatasetError, iter_jsonl, sample_from_record

    for lineno, rec in iter_jsonl(path):
        if rec.get("id") == sample_id:
            try:
                return sample_from_record(rec)
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(str(exc), lineno, path) from None
    raise LookupError(f"no sample with id {sample_id!r} in {path}")


# -- commands ------------------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    from .datagen import GenConfig, generate_dataset

    data = _load_json(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.depths is not None:
        data["target_depth_distribution"] = args.depths
    sizes = dict(data.get("samples_per_split", {"train": 8000, "dev": 1000, "test": 2000}))
    for split in ("train", "dev", "test"):
        value = getattr(args, split)
        if value is not None:
            sizes[split] = value
    data["samples_per_split"] = sizes
    if args.no_negation:
        data["negation_enabled"] = False
    unknown = set(data) - set(GenConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown generation config keys: {sorted(unknown)}")
    manifest = generate_dataset(GenConfig(**data), args.out, workers=args.workers)
    print(json.dumps(manifest, indent=2))
    return 0


def _model_config(args: argparse.Namespace, base: dict):
    from .encoder import ModelConfig

    data = dict(base)
    for flag, key in (("d_model", "d_model"), ("d", "d"), ("layers", "n_layers"), ("pooling", "pooling")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if args.no_focus_pos_emb:
        data["focus_pos_emb"] = False
    if args.no_focus_lstm:
        data["focus_lstm"] = False
    if args.strip_function_words:
        data["strip_function_words"] = True
    if args.fail_mask_facts_only:
        data["mask_naf_in_fail"] = False
    unknown = set(data) - set(ModelConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown model config keys: {sorted(unknown)}")
    return ModelConfig(**data)


def cmd_train(args: argparse.Namespace) -> int:
    from .train import DESK_LR, PAPER_LR, TrainConfig, train

    data = _load_json(args.config)
    model_data = data.pop("model", {})
    lr = {"desk": DESK_LR, "paper": PAPER_LR}[args.lr_preset]
    data["lr"] = {**lr, **data.get("lr", {})}
    for flag in ("epochs", "batch_size", "alpha", "seed", "dev_limit", "threads"):
        value = getattr(args, flag)
        if value is not None:
            data[flag] = value
    unknown = set(data) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown train config keys: {sorted(unknown)}")
    config = TrainConfig(**data)
    result = train(args.train, args.dev, config, _model_config(args, model_data), args.out)
    last = [m for m in result["metrics"] if m["split"] == "dev"]
    print(json.dumps({"checkpoint": result["checkpoint"], "last_dev": last[-1] if last else None}))
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    import torch

    from .infer import InferConfig, predict, write_predictions
    from .model import ProofModel
    from .records import read_samples

    if args.threads:
        torch.set_num_threads(args.threads)
    model = ProofModel.load(args.checkpoint)
    if args.no_focus_pos_emb:
        model.heads.focus_pos = None
        model.config.focus_pos_emb = False
    if args.strip_function_words:
        model.config.strip_function_words = True
    samples = read_samples(args.data)
    if args.limit:
        samples = samples[: args.limit]
    config = InferConfig(beam_size=args.beam, max_steps=args.max_steps, force_gold_parent=args.force_gold_parent,
                         force_gold_child=args.force_gold_child, strategy_override=args.strategy,
                         rule_answer_override=args.rule_answer)
    preds = predict(model, samples, config)
    write_predictions(args.out, preds)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from .evaluate import evaluate, plot_report, write_report

    report = evaluate(args.predictions, args.data)
    print(report.format())
    if args.json:
        write_report(report, args.json)
    if args.chart:
        plot_report(report, args.chart)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    from .evaluate import latency_bench
    from .infer import InferConfig
    from .model import ProofModel
    from .records import read_samples

    model = ProofModel.load(args.checkpoint)
    samples = read_samples(args.data)
    if args.limit:
        samples = samples[: args.limit]
    report = latency_bench(model, samples, InferConfig(beam_size=1, max_steps=args.max_steps),
                           repetitions=args.reps, warmup=args.warmup)
    print(report.format())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    from . import oracle

    sample = _find_sample(args.data, args.id)
    theory = sample.theory
    print(f"id        {sample.id}")
    for sentence in theory.sentences:
        print(f"  {sentence.id:<4} {sentence.text}")
    print(f"question  {sample.question.text}")
    print(f"answer    {sample.answer}   strategy {sample.strategy.value}   depth {sample.depth}")
    table = oracle.forward_chain(theory)
    label = oracle.answer_and_strategy(theory, sample.question, table)
    ok = label == (sample.answer, sample.strategy)
    for k, proof in enumerate(sample.gold_proofs):
        valid = oracle.verify_proof(theory, sample.question, proof, sample.strategy)
        ok &= valid
        edges = ", ".join(f"{u}->{v}" for u, v in sorted(proof.edges)) or "-"
        print(f"proof {k}   nodes {{{', '.join(sorted(proof.nodes))}}}  edges {edges}  verified {valid}")
    print(f"oracle labels agree: {label == (sample.answer, sample.strategy)}")
    print(f"verdict   {'valid' if ok else 'INVALID'}")
    return 0 if ok else 1


# -- parser --------------------------------------------------------------------------


def _model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--d-model", type=int, default=None, help="token embedding width (default 64)")
    g.add_argument("--d", type=int, default=None, help="node representation width (default 64)")
    g.add_argument("--layers", type=int, default=None, help="self-attention mixing layers (default 2)")
    g.add_argument("--pooling", choices=("lstm", "mean"), default=None, help="span pooling (default lstm)")
    g.add_argument("--no-focus-pos-emb", action="store_true", help="drop position embeddings in path focus")
    g.add_argument("--no-focus-lstm", action="store_true", help="drop the recurrent branch of path focus")
    g.add_argument("--strip-function-words", action="store_true", help="remove a/an/the/is/are from inputs")
    g.add_argument("--fail-mask-facts-only", action="store_true",
                   help="under FAIL_PROOF mask only facts, leaving NAF selectable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="backprover", description=package_doc)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", help="generate train/dev/test JSONL files and a manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON file with generation settings (keys of GenConfig)")
    p.add_argument("--seed", type=int, default=None, help="root seed (default 42)")
    p.add_argument("--depths", type=_depths, default=None, help="depth mix, e.g. 0:0.3,1:0.4,2:0.3 (the default)")
    p.add_argument("--train", type=int, default=None, help="train samples (default 8000)")
    p.add_argument("--dev", type=int, default=None, help="dev samples (default 1000)")
    p.add_argument("--test", type=int, default=None, help="test samples (default 2000)")
    p.add_argument("--no-negation", action="store_true", help="disable negated antecedents")
    p.add_argument("--workers", type=int, default=1, help="generation processes (default 1)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model, keeping the best dev-FA checkpoint")
    p.add_argument("--train", required=True, help="training JSONL")
    p.add_argument("--dev", default=None, help="dev JSONL used for checkpoint selection (default none)")
    p.add_argument("--out", required=True, help="run directory for model.pt, last.pt and metrics.jsonl")
    p.add_argument("--config", help="JSON file with TrainConfig keys plus an optional 'model' object")
    p.add_argument("--lr-preset", choices=("desk", "paper"), default="desk",
                   help="learning-rate groups: desk (from-scratch encoder, default) or paper")
    p.add_argument("--epochs", type=int, default=None, help="default 8")
    p.add_argument("--batch-size", type=int, default=None, help="default 16")
    p.add_argument("--alpha", type=float, default=None, help="strategy loss weight (default 1.0)")
    p.add_argument("--seed", type=int, default=None, help="default 42")
    p.add_argument("--dev-limit", type=int, default=None, help="evaluate on the first N dev samples (default all)")
    p.add_argument("--threads", type=int, default=None, help="torch intra-op threads (default torch's choice)")
    _model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decode answers, strategies and proofs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset JSONL")
    p.add_argument("--out", required=True, help="predictions JSONL")
    p.add_argument("--beam", type=int, default=8, help="beam size; 1 is greedy (default 8)")
    p.add_argument("--max-steps", type=int, default=30, help="decoding step cap (default 30)")
    p.add_argument("--force-gold-parent", action="store_true", help="feed gold parent choices")
    p.add_argument("--force-gold-child", action="store_true", help="feed gold child choices")
    p.add_argument("--strategy", choices=("proof", "fail"), default=None, help="override the predicted strategy")
    p.add_argument("--rule-answer", action="store_true",
                   help="under FAIL_PROOF take the answer from question polarity")
    p.add_argument("--no-focus-pos-emb", action="store_true", help="ignore path-focus position embeddings")
    p.add_argument("--strip-function-words", action="store_true", help="remove a/an/the/is/are from inputs")
    p.add_argument("--limit", type=int, default=None, help="first N samples only (default all)")
    p.add_argument("--threads", type=int, default=None, help="torch intra-op threads")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("--predictions", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--json", default=None, help="also write the report as JSON")
    p.add_argument("--chart", default=None, help="also write a per-depth bar chart (needs matplotlib)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-depth decoding latency with beam size 1")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--reps", type=int, default=3, help="repetitions (default 3)")
    p.add_argument("--warmup", type=int, default=10, help="warm-up samples (default 10)")
    p.add_argument("--limit", type=int, default=None, help="first N samples only (default all)")
    p.add_argument("--max-steps", type=int, default=30)
    p.add_argument("--json", default=None, help="also write the table as JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print a sample and re-verify its labels with the oracle")
    p.add_argument("id", help="sample id")
    p.add_argument("--data", required=True, help="dataset JSONL")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # single-line diagnostic for any module error
        if args.verbose:
            log.exception("command failed")
        message = str(exc).splitlines()[0] if str(exc) else ""
        print(f"backprover {args.command}: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: ingest, generate, run, attack, harden, fold, detect, report.

Exit codes: 0 on success, 1 on a runtime failure, 2 on bad input or config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import re
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .classify import Classifier
from .corpus import CorpusError, CorpusParseError, EntityLabel, RedactedSample, corpus_stats, parse_corpus, \
    serialize_corpus
from .embed import Projection, embed_base_many, import_embeddings
from .evade import DEFAULT_MAP, HomoglyphMap, MalformedMap, detect, fold, harden
from .pipeline import PipelineConfig, dump_json, run_pipeline, write_outputs
from .preprocess import corpus_samples, normalize_text, read_samples, split_sentences, write_samples
from .synthetic import generate_corpus

logger = logging.getLogger("unredact")

# config keys that pick the input/output rather than tune the pipeline
INPUT_KEYS = ("samples", "corpus", "synthetic_per_class", "synthetic_seed", "embeddings", "out")

_MASK_RUN = re.compile(r"\*+")


class InputError(ValueError):
    """Bad user input; reported with exit code 2."""


# ------------------------------------------------------------------ helpers


def _read_bytes(path: str | None) -> bytes:
    if path is None or path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _read_text(path: str | None) -> str:
    return _read_bytes(path).decode("utf-8")


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_json(path: str, what: str) -> Any:
    raw = Path(path).read_bytes()
    try:
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        pos = len(exc.doc[: exc.pos].encode("utf-8"))
        raise InputError(f"{what} {path}: malformed JSON at byte {pos}: {exc.msg}") from exc


def _load_map(path: str | None) -> HomoglyphMap:
    if path is None:
        return DEFAULT_MAP
    return HomoglyphMap.from_json(Path(path).read_bytes())


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


# ------------------------------------------------------------------ ingest / generate


def cmd_ingest(args) -> int:
    docs = parse_corpus(_read_bytes(args.corpus))
    samples = corpus_samples(docs, on_straddle=args.on_straddle)
    if args.out in (None, "-"):
        write_samples(samples, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_samples(samples, fh)
    stats = {"documents": len(docs), "samples": len(samples), "classes": corpus_stats(samples)}
    if args.stats:
        Path(args.stats).write_text(dump_json(stats), encoding="utf-8")
    else:
        sys.stderr.write(dump_json(stats))
    return 0


def cmd_generate(args) -> int:
    if args.per_class < 0:
        raise InputError("--per-class must be non-negative")
    docs = generate_corpus(args.per_class, args.seed)
    payload = serialize_corpus(docs)
    if args.out in (None, "-"):
        sys.stdout.buffer.write(payload)
    else:
        Path(args.out).write_bytes(payload)
    return 0


# ------------------------------------------------------------------ run


def build_run_config(args) -> tuple[PipelineConfig, dict[str, Any]]:
    """Merge the config file, ``--set`` overrides and dedicated flags."""
    data: dict[str, Any] = {}
    if args.config:
        data = _load_json(args.config, "config")
        if not isinstance(data, dict):
            raise InputError(f"config {args.config}: expected a JSON object")
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        data[key.strip()] = _parse_value(value)
    for key in ("seed", "mode", "model", "epochs", "out", "samples", "corpus", "embeddings"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if args.synthetic is not None:
        data["synthetic_per_class"] = args.synthetic
    if args.evasion_map is not None:
        data["evasion_map"] = args.evasion_map

    inputs = {k: data.pop(k) for k in INPUT_KEYS if k in data}
    if isinstance(data.get("evasion_map"), str):
        data["evasion_map"] = _load_json(data["evasion_map"], "evasion map")
    try:
        cfg = PipelineConfig.from_dict(data)
        if cfg.evasion_map is not None:
            cfg.homoglyph_map()
    except TypeError as exc:
        raise InputError(f"bad config: {exc}") from exc
    return cfg, inputs


def _load_samples(inputs: dict[str, Any]) -> list[RedactedSample]:
    given = [k for k in ("samples", "corpus", "synthetic_per_class") if inputs.get(k) is not None]
    if len(given) != 1:
        raise InputError("give exactly one of samples, corpus or synthetic_per_class")
    if "samples" in given:
        with open(inputs["samples"], encoding="utf-8") as fh:
            return list(read_samples(fh))
    if "corpus" in given:
        return corpus_samples(parse_corpus(Path(inputs["corpus"]).read_bytes()))
    docs = generate_corpus(int(inputs["synthetic_per_class"]), int(inputs.get("synthetic_seed", 0)))
    return corpus_samples(docs)


def cmd_run(args) -> int:
    cfg, inputs = build_run_config(args)
    if "out" not in inputs:
        raise InputError("an output directory is required (--out or 'out' in the config)")
    samples = _load_samples(inputs)
    imported = None
    if inputs.get("embeddings"):
        with open(inputs["embeddings"], "rb") as fh:
            imported = import_embeddings(fh)
    result = run_pipeline(samples, cfg, imported)
    out = Path(inputs["out"])
    paths = write_outputs(result, out)
    (out / "config.json").write_text(dump_json(dataclasses.asdict(cfg)), encoding="utf-8")
    m = result.metrics
    print(f"{m['model']} {m['mode']}: train {m['train_accuracy']:.4f} test {m['test_accuracy']:.4f}")
    if result.evasion is not None:
        print(f"evasion: {result.evasion['test_accuracy']:.4f} "
              f"(folded {result.evasion['folded_accuracy']:.4f})")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


# ------------------------------------------------------------------ attack


def attack_document(model: Classifier, projection: Projection, text: str) -> list[dict[str, Any]]:
    """One prediction per asterisk run; spans are document offsets."""
    normalized = normalize_text(text)
    found = []
    for sentence in split_sentences(normalized):
        for m in _MASK_RUN.finditer(sentence.text):
            found.append((sentence, sentence.start + m.start(), sentence.start + m.end()))
    if not found:
        return []
    X = projection.apply(embed_base_many([s.text for s, _, _ in found], projection.dim))
    scores = model.scores(X)
    return [
        {
            "sentence": sentence.text,
            "span": [start, end],
            "predicted_label": EntityLabel(int(np.argmax(row))).name,
            "scores": [float(v) for v in row],
        }
        for (sentence, start, end), row in zip(found, scores)
    ]


def cmd_attack(args) -> int:
    model_path = args.model or (Path(args.run_dir) / "model.bin" if args.run_dir else None)
    proj_path = args.projection or (Path(args.run_dir) / "projection.bin" if args.run_dir else None)
    if model_path is None:
        raise InputError("attack needs --model or --run-dir")
    with open(model_path, "rb") as fh:
        model = Classifier.load(fh)
    if proj_path is not None and Path(proj_path).exists():
        with open(proj_path, "rb") as fh:
            projection = Projection.load(fh)
    else:
        projection = Projection.identity()
    preds = attack_document(model, projection, _read_text(args.document))
    _write_text(args.out, json.dumps(preds, ensure_ascii=False, indent=2) + "\n")
    return 0


# ------------------------------------------------------------------ homoglyphs


def cmd_harden(args) -> int:
    hmap = _load_map(args.map)
    _write_text(args.out, harden(_read_text(args.input), hmap))
    return 0


def cmd_fold(args) -> int:
    hmap = _load_map(args.map)
    _write_text(args.out, fold(_read_text(args.input), hmap))
    return 0


def cmd_detect(args) -> int:
    hmap = _load_map(args.map)
    hits = [{"position": p, "original": a, "confusable": c, "code_point": f"U+{ord(c):04X}"}
            for p, a, c in detect(_read_text(args.input), hmap)]
    _write_text(args.out, json.dumps(hits, ensure_ascii=False) + "\n")
    return 0


# ------------------------------------------------------------------ report


def _fmt(value: Any) -> str:
    return f"{value:.4f}" if isinstance(value, float) else str(value)


def cmd_report(args) -> int:
    rows = []
    for run_dir in args.runs:
        run_dir = Path(run_dir)
        metrics = _load_json(str(run_dir / "metrics.json"), "metrics")
        evasion_path = run_dir / "evasion.json"
        evasion = _load_json(str(evasion_path), "evasion") if evasion_path.exists() else {}
        rows.append([str(run_dir), metrics["model"], metrics["mode"], metrics["train_accuracy"],
                     metrics["test_accuracy"], evasion.get("test_accuracy", "-"),
                     evasion.get("folded_accuracy", "-")])
        if args.balance:
            bal = _load_json(str(run_dir / "balance.json"), "balance")
            cols = ["dataset", "undersampling", "fine_tuning", "oversampling"]
            print(f"{run_dir}:")
            print("  " + "".join(f"{c:>15}" for c in ["label"] + cols))
            ordered = [(label.name, bal["classes"][label.name]) for label in EntityLabel]
            for name, counts in ordered + [("Total", bal["total"])]:
                print("  " + f"{name:>15}" + "".join(f"{_fmt(counts.get(c, '-')):>15}" for c in cols))
    header = ["run", "model", "mode", "train", "test", "evasion", "folded"]
    widths = [max(len(_fmt(r[i])) for r in rows + [header]) for i in range(len(header))]
    for row in [header] + rows:
        print("  ".join(_fmt(v).ljust(w) for v, w in zip(row, widths)).rstrip())
    return 0


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unredact", description="Redaction inference attack and homoglyph defense")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="turn an annotated corpus into redacted samples (JSON lines)")
    p.add_argument("corpus", nargs="?", help="corpus JSON file (default: stdin)")
    p.add_argument("-o", "--out", help="samples file (default: stdout)")
    p.add_argument("--stats", help="write per-label counts here instead of stderr")
    p.add_argument("--on-straddle", choices=("skip", "raise"), default="skip",
                   help="what to do with annotations crossing a sentence boundary")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("generate", help="write a synthetic annotated corpus")
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", help="corpus file (default: stdout)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="balance, embed, train and evaluate")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=("baseline", "finetuned"), required=True)
    p.add_argument("--model", choices=("dnn", "cnn", "rf"), required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--samples", help="samples file from 'ingest'")
    p.add_argument("--corpus", help="annotated corpus JSON")
    p.add_argument("--synthetic", type=int, metavar="PER_CLASS", help="use a generated corpus")
    p.add_argument("--embeddings", help="precomputed embedding file")
    p.add_argument("--evasion-map", help="homoglyph map JSON")
    p.add_argument("-o", "--out", help="output directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (JSON value)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("attack", help="predict the entity type behind each redaction of a document")
    p.add_argument("document", nargs="?", help="redacted text (default: stdin)")
    p.add_argument("--run-dir", help="directory written by 'run'")
    p.add_argument("--model", help="model file")
    p.add_argument("--projection", help="projection file")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_attack)

    for name, func, text in (("harden", cmd_harden, "substitute look-alike characters"),
                             ("fold", cmd_fold, "map look-alike characters back to ASCII"),
                             ("detect", cmd_detect, "list substituted characters")):
        p = sub.add_parser(name, help=text)
        p.add_argument("input", nargs="?", help="text file (default: stdin)")
        p.add_argument("--map", help="homoglyph map JSON")
        p.add_argument("-o", "--out")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="summarize run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--balance", action="store_true", help="also print the balancing table")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CorpusParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, CorpusError, MalformedMap, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        logger.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

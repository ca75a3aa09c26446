"""Command-line interface: induce, train, tag, eval, inspect.

Exit codes: 0 success, 1 configuration problems, 2 data or model problems.
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

import numpy as np

from . import evaluation, model_io
from .config import RunConfig, parse_config
from .corpus import (
    DOCSTART,
    KIND_AUX,
    KIND_FIRST_MENTION,
    KIND_HEADER,
    KIND_LEXICON,
    KIND_SHAPE,
    KIND_WORD,
    LexiconStore,
    Sentence,
    TestRegistry,
    build_registry,
    observe_corpus,
    read_conll,
)
from .errors import ChainCrfError, ConfigError, FormatError
from .features import START, WILDCARD, CrfModel, Feature, conjunction, edge_features
from .induction import InductionConfig, induce_train
from .inference import viterbi
from .training import lbfgs_optimize


def _read_sentences(path: str, cfg: RunConfig) -> list[Sentence]:
    p = Path(path)
    if not p.is_file():
        raise FormatError(f'data file "{p}" does not exist')
    with p.open(encoding="utf-8") as handle:
        return read_conll(
            handle,
            label_column=cfg.label_column,
            header_mode=cfg.header_mode,
            header_column=cfg.header_column,
        )


def _split(sentences: list[Sentence], cfg: RunConfig) -> tuple[list[Sentence], list[Sentence]]:
    if cfg.holdout_fraction <= 0.0:
        return sentences, []
    order = list(range(len(sentences)))
    random.Random(cfg.seed).shuffle(order)
    cut = int(len(sentences) * (1.0 - cfg.holdout_fraction))
    train = [sentences[i] for i in sorted(order[:cut])]
    heldout = [sentences[i] for i in sorted(order[cut:])]
    return train, heldout


class _Pipeline:
    """Shared setup for the training commands."""

    def __init__(self, cfg: RunConfig):
        if cfg.train_data is None:
            raise ConfigError('key "train_data" is required')
        if cfg.model_out is None:
            raise ConfigError('key "model_out" is required')
        self.cfg = cfg
        sentences = _read_sentences(cfg.train_data, cfg)
        if not sentences:
            raise FormatError(f'"{cfg.train_data}" contains no sentences')
        self.train, self.heldout = _split(sentences, cfg)
        self.lexicons = (
            LexiconStore.load_dir(cfg.lexicon_dir) if cfg.lexicon_dir else LexiconStore()
        )
        self.registry = build_registry(
            self.train,
            self.lexicons,
            words=cfg.tests_words,
            aux=cfg.tests_aux,
            shapes=cfg.tests_shapes,
            lexicon_tests=cfg.tests_lexicons,
            first_mention=cfg.tests_first_mention,
            headers=cfg.tests_headers,
            offsets=cfg.offsets,
            word_min_count=cfg.word_min_count,
        )
        self.labels = sorted({lab for s in self.train for lab in s.labels or []})
        if not self.labels:
            raise FormatError("training data has no labels")
        self.data = self._encode(self.train)

    def _encode(self, sentences: list[Sentence]):
        index = {lab: i for i, lab in enumerate(self.labels)}
        observations = observe_corpus(sentences, self.registry, self.lexicons)
        data = []
        for s, obs in zip(sentences, observations):
            try:
                gold = np.asarray([index[lab] for lab in s.labels], dtype=int)
            except KeyError as exc:
                raise FormatError(f"label {exc} missing from the training label set") from None
            data.append((obs, gold))
        return data

    def heldout_accuracy(self, model: CrfModel) -> float | None:
        if not self.heldout:
            return None
        observations = observe_corpus(self.heldout, self.registry, self.lexicons)
        hits = total = 0
        for s, obs in zip(self.heldout, observations):
            path, _ = viterbi(model, obs)
            predicted = [model.labels[i] for i in path]
            hits += sum(1 for a, b in zip(predicted, s.labels) if a == b)
            total += len(s)
        return hits / total


def cmd_induce(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, args.set)
    if args.threads is not None:
        cfg.threads = args.threads
    pipe = _Pipeline(cfg)
    icfg = InductionConfig(
        max_features_per_round=cfg.max_features_per_round,
        gain_threshold=cfg.gain_threshold,
        candidate_pool_size=cfg.candidate_pool_size,
        lbfgs_iterations_per_round=cfg.lbfgs_iterations_per_round,
        max_rounds=cfg.max_rounds,
        margin=cfg.margin,
        sigma2=cfg.sigma2,
        expansion=cfg.expansion,
        edge_features=cfg.edge_features,
        threads=cfg.threads,
    )
    report_lines: list[str] = []

    def on_round(report):
        line = report.render()
        report_lines.append(line)
        print(line)

    model = induce_train(pipe.data, pipe.labels, pipe.registry, icfg, on_round=on_round)
    model_io.save_model(model, cfg.model_out)
    if cfg.report_out:
        Path(cfg.report_out).write_text("\n".join(report_lines) + "\n", encoding="utf-8")
    accuracy = pipe.heldout_accuracy(model)
    if accuracy is not None:
        print(f"heldout_token_accuracy={accuracy:.6f}")
    print(f"model written to {cfg.model_out} ({len(model.features)} features)")
    return 0


def baseline_features(
    registry: TestRegistry,
    n_labels: int,
    patterns: tuple[tuple[int, int], ...] = (),
    edges: bool = True,
) -> list[Feature]:
    """The fixed-pattern feature set: every test (and every configured
    conjunction pattern) crossed with every destination label."""
    out: list[Feature] = []
    if edges:
        out.extend(edge_features(n_labels))
    for t in registry.tests:
        for d in range(n_labels):
            out.append(Feature((t.id,), WILDCARD, d))
    for da, db in patterns:
        left = [t.id for t in registry.tests if t.offset == da]
        right = [t.id for t in registry.tests if t.offset == db]
        seen = set()
        for a in left:
            for b in right:
                if a == b:
                    continue
                conj = conjunction((a, b))
                if conj in seen:
                    continue
                seen.add(conj)
                for d in range(n_labels):
                    out.append(Feature(conj, WILDCARD, d))
    return out


def cmd_train(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, args.set)
    pipe = _Pipeline(cfg)
    if args.model_in:
        model = model_io.load_model(args.model_in)
    else:
        model = CrfModel(pipe.labels, pipe.registry, sigma2=cfg.sigma2)
        feats = baseline_features(
            pipe.registry, model.n_labels, cfg.fixed_patterns, edges=cfg.edge_features
        )
        model.add_features((f, 0.0) for f in feats)
    if cfg.train_iterations > 0:
        result = lbfgs_optimize(
            model,
            pipe.data,
            max_iterations=cfg.train_iterations,
            tolerance=cfg.train_tolerance,
        )
        model.weights = result.weights
        for i, value in enumerate(result.trace):
            print(f"iteration={i} loglik={value:.6f}")
        print(
            f"converged={result.converged} iterations={result.iterations} "
            f"grad_norm={result.grad_norm:.6g}"
        )
    model_io.save_model(model, cfg.model_out)
    accuracy = pipe.heldout_accuracy(model)
    if accuracy is not None:
        print(f"heldout_token_accuracy={accuracy:.6f}")
    print(f"model written to {cfg.model_out} ({len(model.features)} features)")
    return 0


def cmd_tag(args: argparse.Namespace) -> int:
    model = model_io.load_model(args.model)
    lexicons = LexiconStore.load_dir(args.lexicon_dir) if args.lexicon_dir else LexiconStore()
    source = Path(args.input)
    if not source.is_file():
        raise FormatError(f'input file "{source}" does not exist')
    raw_lines = source.read_text(encoding="utf-8").splitlines()
    sentences = read_conll(
        raw_lines,
        label_column=args.label_column,
        header_mode=args.header_mode,
    )
    observations = observe_corpus(sentences, model.registry, lexicons)
    predictions: list[str] = []
    for obs in observations:
        path, _ = viterbi(model, obs)
        predictions.extend(model.labels[i] for i in path)

    out_lines = []
    cursor = 0
    for line in raw_lines:
        cols = line.split()
        if not cols or cols[0] == DOCSTART:
            out_lines.append(line)
        else:
            out_lines.append(line + " " + predictions[cursor])
            cursor += 1
    text = "\n".join(out_lines) + ("\n" if out_lines else "")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    gold = read_conll(Path(args.gold).read_text(encoding="utf-8"), label_column=args.label_column)
    pred = read_conll(Path(args.predicted).read_text(encoding="utf-8"), label_column=args.label_column)
    background = frozenset(x.strip() for x in args.background.split(",") if x.strip())
    report = evaluation.score(
        [s.labels for s in gold],
        [s.labels for s in pred],
        scheme=args.scheme,
        background=background,
    )
    print(report.table())
    print(report.keyvalues())
    return 0


def _render_test(registry: TestRegistry, test_id: int) -> str:
    t = registry.tests[test_id]
    where = "o_t" if t.offset == 0 else f"o_t{t.offset:+d}"
    if t.kind == KIND_WORD:
        what = f"word={t.param}"
    elif t.kind == KIND_AUX:
        col, _, value = t.param.partition("=")
        what = f"aux{col}={value}"
    elif t.kind == KIND_SHAPE:
        what = f"shape={t.param}"
    elif t.kind == KIND_LEXICON:
        what = f"in-{t.param}-lexicon"
    elif t.kind == KIND_HEADER:
        what = f"header={t.param}"
    elif t.kind == KIND_FIRST_MENTION:
        inner = _render_test(registry, int(t.param))
        what = inner.split(" (")[0]
        where = "firstmention_t" if t.offset == 0 else f"firstmention_t{t.offset:+d}"
    else:
        what = f"{t.kind}={t.param}"
    return f"{what} ({where})"


def render_feature(model: CrfModel, f: Feature) -> str:
    if f.source == WILDCARD:
        src = "*"
    elif f.source == START:
        src = "^"
    else:
        src = model.labels[f.source]
    body = (
        "(transition)"
        if f.conj is None
        else " & ".join(_render_test(model.registry, k) for k in f.conj)
    )
    return f"{src} -> {model.labels[f.dest]}  {body}"


def cmd_inspect(args: argparse.Namespace) -> int:
    model = model_io.load_model(args.model)
    order = list(range(len(model.features)))
    if args.by == "weight":
        order.sort(key=lambda i: -abs(float(model.weights[i])))
    print(f"{'index':>6} {'weight':>12}  feature")
    for i in order[: args.top]:
        f = model.features[i]
        print(f"{i:>6} {float(model.weights[i]):>+12.6f}  {render_feature(model, f)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaincrf",
        description="Chain CRF sequence labeler with automatic conjunction-feature induction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("induce", help="grow a feature set and train a model")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key")
    p.add_argument("--threads", type=int, default=None, help="worker cap for candidate scoring")
    p.set_defaults(func=cmd_induce)

    p = sub.add_parser("train", help="fit weights for a fixed feature set")
    p.add_argument("config")
    p.add_argument("--model-in", default=None, help="start from an existing model file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="append a predicted label column to column data")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--lexicon-dir", default=None)
    p.add_argument("--label-column", type=int, default=None,
                   help="strip this column as a gold label before tagging")
    p.add_argument("--header-mode", default="none", choices=["none", "first-token"])
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="segment precision/recall/F1 against gold labels")
    p.add_argument("gold")
    p.add_argument("predicted")
    p.add_argument("--scheme", default="label-runs", choices=["label-runs", "iob2"])
    p.add_argument("--background", default="O,OTHER",
                   help="background labels for label-runs segmentation")
    p.add_argument("--label-column", type=int, default=-1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="list model features")
    p.add_argument("model")
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--by", default="weight", choices=["weight", "index"])
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, ChainCrfError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Token- and segment-level scoring.

A predicted segment counts as correct only when its (type, start, end)
exactly matches a gold segment. Two segmentation schemes are supported:
"label-runs", where a maximal run of one non-background label is a segment,
and "iob2", where labels look like B-X / I-X / O. IOB1-style input (an I-X
opening a segment) is normalized to IOB2 on read, matching the standard
CoNLL chunking evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import FormatError

DEFAULT_BACKGROUND = frozenset({"O", "OTHER"})

Segment = tuple[str, int, int]


def label_run_segments(
    labels: Sequence[str], background: frozenset[str] = DEFAULT_BACKGROUND
) -> list[Segment]:
    segments: list[Segment] = []
    start = 0
    current: str | None = None
    for i, lab in enumerate(labels):
        if lab != current:
            if current is not None and current not in background:
                segments.append((current, start, i - 1))
            current = lab
            start = i
    if current is not None and current not in background:
        segments.append((current, start, len(labels) - 1))
    return segments


def iob2_segments(labels: Sequence[str]) -> list[Segment]:
    segments: list[Segment] = []
    open_type: str | None = None
    start = 0

    def close(end: int) -> None:
        nonlocal open_type
        if open_type is not None:
            segments.append((open_type, start, end))
            open_type = None

    for i, lab in enumerate(labels):
        if lab == "O":
            close(i - 1)
        elif lab.startswith("B-") and len(lab) > 2:
            close(i - 1)
            open_type = lab[2:]
            start = i
        elif lab.startswith("I-") and len(lab) > 2:
            kind = lab[2:]
            if open_type != kind:  # IOB1 input: treat as an opening tag
                close(i - 1)
                open_type = kind
                start = i
        else:
            raise FormatError(f'label "{lab}" is not B-X / I-X / O')
    close(len(labels) - 1)
    return segments


@dataclass
class LabelScore:
    precision: float  # percentages
    recall: float
    f1: float
    gold: int
    predicted: int
    correct: int


@dataclass
class ScoreReport:
    per_label: dict[str, LabelScore]
    overall: LabelScore
    token_accuracy: float
    tokens: int

    def table(self) -> str:
        width = max([len("Overall")] + [len(k) for k in self.per_label])
        lines = [f"{'':<{width}}  {'Prec':>6} {'Recall':>6} {'F1':>6}"]
        for name in sorted(self.per_label):
            s = self.per_label[name]
            lines.append(
                f"{name:<{width}}  {s.precision:>6.1f} {s.recall:>6.1f} {s.f1:>6.1f}"
            )
        o = self.overall
        lines.append(f"{'Overall':<{width}}  {o.precision:>6.1f} {o.recall:>6.1f} {o.f1:>6.1f}")
        return "\n".join(lines)

    def keyvalues(self) -> str:
        o = self.overall
        return (
            f"token_accuracy={self.token_accuracy:.6f} tokens={self.tokens} "
            f"gold_segments={o.gold} predicted_segments={o.predicted} "
            f"correct_segments={o.correct} precision={o.precision:.4f} "
            f"recall={o.recall:.4f} f1={o.f1:.4f}"
        )


def _prf(correct: int, predicted: int, gold: int) -> tuple[float, float, float]:
    p = 100.0 * correct / predicted if predicted else 0.0
    r = 100.0 * correct / gold if gold else 0.0
    f = 2.0 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def score(
    gold: Sequence[Sequence[str]],
    predicted: Sequence[Sequence[str]],
    scheme: str = "label-runs",
    background: frozenset[str] = DEFAULT_BACKGROUND,
) -> ScoreReport:
    """Exact-match segment precision/recall/F1 plus token accuracy."""
    if scheme == "label-runs":
        def segment(labels):
            return label_run_segments(labels, background)
    elif scheme == "iob2":
        segment = iob2_segments
    else:
        raise FormatError(f'unknown segmentation scheme "{scheme}"')
    if len(gold) != len(predicted):
        raise FormatError(
            f"gold has {len(gold)} sentences, predictions have {len(predicted)}"
        )

    gold_counts: dict[str, int] = {}
    pred_counts: dict[str, int] = {}
    correct_counts: dict[str, int] = {}
    token_hits = 0
    tokens = 0
    for i, (g, p) in enumerate(zip(gold, predicted)):
        if len(g) != len(p):
            raise FormatError(
                f"sentence {i}: gold has {len(g)} tokens, prediction has {len(p)}"
            )
        tokens += len(g)
        token_hits += sum(1 for a, b in zip(g, p) if a == b)
        g_segs = set(segment(g))
        p_segs = set(segment(p))
        for kind, _, _ in g_segs:
            gold_counts[kind] = gold_counts.get(kind, 0) + 1
        for kind, _, _ in p_segs:
            pred_counts[kind] = pred_counts.get(kind, 0) + 1
        for kind, _, _ in g_segs & p_segs:
            correct_counts[kind] = correct_counts.get(kind, 0) + 1

    per_label: dict[str, LabelScore] = {}
    for kind in sorted(set(gold_counts) | set(pred_counts)):
        c = correct_counts.get(kind, 0)
        pr = pred_counts.get(kind, 0)
        gd = gold_counts.get(kind, 0)
        p, r, f = _prf(c, pr, gd)
        per_label[kind] = LabelScore(p, r, f, gd, pr, c)
    c = sum(correct_counts.values())
    pr = sum(pred_counts.values())
    gd = sum(gold_counts.values())
    p, r, f = _prf(c, pr, gd)
    overall = LabelScore(p, r, f, gd, pr, c)
    accuracy = token_hits / tokens if tokens else 1.0
    return ScoreReport(per_label, overall, accuracy, tokens)

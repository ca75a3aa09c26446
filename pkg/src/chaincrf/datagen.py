"""Synthetic parity corpus for demos and self-tests.

Every token is a made-up word carrying two hidden bits, exposed only through
four lexicons: ``alpha`` / ``alpha_c`` partition the vocabulary on the first
bit and ``beta`` / ``beta_c`` on the second. A token's label is POS when the
bits agree and NEG otherwise, so membership in any single lexicon carries no
information about the label and a linear model over the singleton tests
cannot beat chance. The conjunction alpha & beta (or alpha_c & beta_c) decides
the label exactly. Extra ``noise*`` lexicons are uncorrelated with the labels
and exist to pad the test space.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import LexiconStore, Sentence

POS = "POS"
NEG = "NEG"

# vocabulary share of each (bit1, bit2) cell; deliberately uneven so that the
# two informative conjunctions never fire on identically sized token sets
_CELL_SHARES = (((1, 1), 0.30), ((1, 0), 0.25), ((0, 1), 0.25), ((0, 0), 0.20))


@dataclass
class SyntheticTask:
    vocabulary: list[str]
    cell_of: dict[str, tuple[int, int]]
    lexicons: dict[str, set[str]]

    def label_of(self, word: str) -> str:
        b1, b2 = self.cell_of[word]
        return POS if b1 == b2 else NEG

    def store(self) -> LexiconStore:
        return LexiconStore(self.lexicons)


def build_task(seed: int = 13, vocab_size: int = 240, noise_lexicons: int = 16) -> SyntheticTask:
    rng = random.Random(seed)
    vocabulary = [f"tok{i:03d}" for i in range(vocab_size)]
    cell_of: dict[str, tuple[int, int]] = {}
    cursor = 0
    for (cell, share) in _CELL_SHARES:
        count = round(vocab_size * share)
        for word in vocabulary[cursor : cursor + count]:
            cell_of[word] = cell
        cursor += count
    for word in vocabulary[cursor:]:
        cell_of[word] = _CELL_SHARES[-1][0]

    lexicons = {
        "alpha": {w for w in vocabulary if cell_of[w][0] == 1},
        "alpha_c": {w for w in vocabulary if cell_of[w][0] == 0},
        "beta": {w for w in vocabulary if cell_of[w][1] == 1},
        "beta_c": {w for w in vocabulary if cell_of[w][1] == 0},
    }
    for i in range(noise_lexicons):
        lexicons[f"noise{i:02d}"] = {w for w in vocabulary if rng.random() < 0.5}
    return SyntheticTask(vocabulary, cell_of, lexicons)


def sample_sentences(
    task: SyntheticTask,
    n_sentences: int,
    seed: int = 29,
    min_len: int = 5,
    max_len: int = 12,
) -> list[Sentence]:
    rng = random.Random(seed)
    out = []
    for _ in range(n_sentences):
        length = rng.randint(min_len, max_len)
        tokens = [rng.choice(task.vocabulary) for _ in range(length)]
        labels = [task.label_of(w) for w in tokens]
        out.append(Sentence(tokens, labels=labels))
    return out


def write_corpus(sentences: list[Sentence], path: str | Path) -> None:
    lines = []
    for s in sentences:
        for tok, lab in zip(s.tokens, s.labels):
            lines.append(f"{tok} {lab}")
        lines.append("")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_lexicons(task: SyntheticTask, directory: str | Path) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for name, words in sorted(task.lexicons.items()):
        body = "\n".join(sorted(words))
        (root / f"{name}.txt").write_text(body + "\n", encoding="utf-8")


_INDUCE_CONF = """\
# feature induction on the bundled parity corpus
train_data = train.conll
model_out = induced.model
report_out = induced.rounds
lexicon_dir = lexicons

tests_words = false
tests_aux = false
tests_shapes = false
tests_lexicons = true
offsets = -2,-1,0,1,2

sigma2 = 10.0
gain_threshold = 5.0
max_features_per_round = 6
candidate_pool_size = 1000
lbfgs_iterations_per_round = 10
max_rounds = 5
edge_features = true
"""

_BASELINE_CONF = """\
# fixed singleton features on the same corpus, for comparison
train_data = train.conll
model_out = baseline.model
lexicon_dir = lexicons

tests_words = false
tests_aux = false
tests_shapes = false
tests_lexicons = true
offsets = -2,-1,0,1,2

sigma2 = 10.0
edge_features = true
train_iterations = 200
train_tolerance = 0.0001
"""


def make_dataset(
    directory: str | Path,
    seed: int = 13,
    train_sentences: int = 400,
    heldout_sentences: int = 100,
) -> SyntheticTask:
    """Write train/heldout corpora, lexicons, and ready-to-run configs."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    task = build_task(seed=seed)
    write_corpus(sample_sentences(task, train_sentences, seed=seed + 1), root / "train.conll")
    write_corpus(sample_sentences(task, heldout_sentences, seed=seed + 2), root / "heldout.conll")
    write_lexicons(task, root / "lexicons")
    (root / "induce.conf").write_text(_INDUCE_CONF, encoding="utf-8")
    (root / "baseline.conf").write_text(_BASELINE_CONF, encoding="utf-8")
    return task

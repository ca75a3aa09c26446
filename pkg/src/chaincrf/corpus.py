"""Column-format corpus ingestion and atomic observational tests.

A corpus is a sequence of sentences read from CoNLL-style column files.
Atomic tests are boolean questions about a single position (word identity,
auxiliary column values, character-shape patterns, lexicon membership,
copied first-mention results, document headers), optionally time-shifted.
``apply_tests`` evaluates a whole registry of tests against a sentence and
returns the resulting boolean matrix.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, FormatError

DOCSTART = "-DOCSTART-"

KIND_WORD = "word"
KIND_AUX = "aux"
KIND_SHAPE = "shape"
KIND_LEXICON = "lexicon"
KIND_FIRST_MENTION = "firstmention"
KIND_HEADER = "header"

_KINDS = (KIND_WORD, KIND_AUX, KIND_SHAPE, KIND_LEXICON, KIND_FIRST_MENTION, KIND_HEADER)

# Character-shape patterns. A = [A-Z], a = [a-z], D = [0-9]; a pattern fires
# when the whole token matches. The set is configurable at registry build time.
_SHAPE_SOURCES = {
    "A": r"[A-Z]",
    "A+": r"[A-Z]+",
    "Aa+": r"[A-Z][a-z]+",
    "Aa+Aa*": r"[A-Z][a-z]+[A-Z][a-z]*",
    "A.": r"[A-Z].",
    "D+": r"[0-9]+",
    ".*D.*": r".*[0-9].*",
    "a+": r"[a-z]+",
    "A\\.": r"[A-Z]\.",
    ".*-.*": r".*-.*",
    ".*\\..*": r".*\..*",
    "P+": "[" + re.escape(string.punctuation) + "]+",
    "DD": r"[0-9]{2}",
    "DDDD": r"[0-9]{4}",
    "alnum": r"(?=.*[A-Za-z])(?=.*[0-9])[A-Za-z0-9]+",
    "roman": r"[IVXLCDM]+",
}

SHAPE_PATTERNS = {name: re.compile(src) for name, src in _SHAPE_SOURCES.items()}


def shape_regex(kind: str, token: str) -> bool:
    """Whether ``token`` as a whole matches the named shape pattern."""
    try:
        pattern = SHAPE_PATTERNS[kind]
    except KeyError:
        raise ConfigError(f'unknown shape pattern "{kind}"') from None
    return pattern.fullmatch(token) is not None


@dataclass
class Sentence:
    """One labeled (or unlabeled) token sequence.

    ``aux`` holds the non-token, non-label columns of the source file, one
    tuple per token. ``labels`` is None for unlabeled input. ``doc_index``
    groups sentences into documents for first-mention lookups.
    """

    tokens: list[str]
    aux: list[tuple[str, ...]] = field(default_factory=list)
    labels: list[str] | None = None
    doc_header: str | None = None
    doc_index: int = 0

    def __post_init__(self) -> None:
        if len(self.tokens) < 1:
            raise ValueError("a sentence needs at least one token")
        if not self.aux:
            self.aux = [() for _ in self.tokens]
        if len(self.aux) != len(self.tokens):
            raise ValueError("aux rows do not match token count")
        if self.labels is not None and len(self.labels) != len(self.tokens):
            raise ValueError("label count does not match token count")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class AtomicTest:
    """A single boolean observational test, evaluated at position t + offset."""

    id: int
    kind: str
    param: str
    offset: int = 0

    def base_key(self) -> tuple[str, str]:
        return (self.kind, self.param)


class TestRegistry:
    """Ordered, densely indexed collection of atomic tests."""

    def __init__(self, tests: Sequence[AtomicTest]):
        self.tests = list(tests)
        for k, t in enumerate(self.tests):
            if t.id != k:
                raise ValueError(f"test ids must be dense, got {t.id} at slot {k}")
            if t.kind not in _KINDS:
                raise ValueError(f'unknown test kind "{t.kind}"')
            if t.kind == KIND_FIRST_MENTION:
                try:
                    wrapped = int(t.param)
                except ValueError:
                    raise ValueError(f"first-mention test {k} has non-integer param") from None
                if not 0 <= wrapped < len(self.tests):
                    raise ValueError(f"first-mention test {k} wraps unknown test {wrapped}")
                inner = self.tests[wrapped]
                if inner.kind in (KIND_FIRST_MENTION, KIND_HEADER):
                    raise ValueError(f"first-mention test {k} cannot wrap a {inner.kind} test")
                if inner.offset != 0:
                    raise ValueError(f"first-mention test {k} must wrap an unshifted test")

    def __len__(self) -> int:
        return len(self.tests)

    def __iter__(self) -> Iterator[AtomicTest]:
        return iter(self.tests)

    @property
    def first_mention_ids(self) -> list[int]:
        return [t.id for t in self.tests if t.kind == KIND_FIRST_MENTION]

    def lexicon_names(self) -> set[str]:
        return {t.param for t in self.tests if t.kind == KIND_LEXICON}


class LexiconStore:
    """Named word sets, loaded from newline-delimited files.

    Lookups are case-insensitive unless the store was built case-sensitive.
    Lines starting with '#' are comments.
    """

    def __init__(self, lexicons: dict[str, Iterable[str]] | None = None, case_sensitive: bool = False):
        self.case_sensitive = case_sensitive
        self._sets: dict[str, frozenset[str]] = {}
        for name, words in (lexicons or {}).items():
            self.add(name, words)

    def _norm(self, word: str) -> str:
        return word if self.case_sensitive else word.lower()

    def add(self, name: str, words: Iterable[str]) -> None:
        self._sets[name] = frozenset(self._norm(w) for w in words)

    def names(self) -> set[str]:
        return set(self._sets)

    def __contains__(self, name: str) -> bool:
        return name in self._sets

    def contains(self, name: str, word: str) -> bool:
        try:
            entries = self._sets[name]
        except KeyError:
            raise ConfigError(f'unknown lexicon "{name}"') from None
        return self._norm(word) in entries

    @classmethod
    def load_dir(cls, path: str | Path, case_sensitive: bool = False) -> "LexiconStore":
        store = cls(case_sensitive=case_sensitive)
        root = Path(path)
        if not root.is_dir():
            raise ConfigError(f'lexicon directory "{root}" does not exist')
        for entry in sorted(root.glob("*.txt")):
            words = []
            for line in entry.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if line and not line.startswith("#"):
                    words.append(line)
            store.add(entry.stem, words)
        return store


class ObservationMatrix:
    """Boolean results of every registry test at every sentence position.

    ``bits[t, k]`` is test k evaluated at position t (already shifted by the
    test's offset; out-of-range shifts are False). ``firing[t]`` lists the
    firing test ids at t. Conjunction masks are memoized because they are
    reused heavily during training and induction.
    """

    __slots__ = ("bits", "firing", "_masks")

    def __init__(self, bits: np.ndarray):
        bits = np.ascontiguousarray(bits, dtype=bool)
        bits.setflags(write=False)
        self.bits = bits
        self.firing = [np.flatnonzero(row) for row in bits]
        self._masks: dict[tuple[int, ...] | None, np.ndarray] = {}

    def __len__(self) -> int:
        return self.bits.shape[0]

    @property
    def n_tests(self) -> int:
        return self.bits.shape[1]

    def conj_mask(self, conj: tuple[int, ...] | None) -> np.ndarray:
        """Positions where every test of ``conj`` fires (all True for None)."""
        mask = self._masks.get(conj)
        if mask is None:
            if conj is None:
                mask = np.ones(len(self), dtype=bool)
            else:
                mask = self.bits[:, list(conj)].all(axis=1)
            mask.setflags(write=False)
            self._masks[conj] = mask
        return mask


def read_conll(
    stream: Iterable[str] | str,
    label_column: int | None = -1,
    header_mode: str = "none",
    header_column: int | None = None,
) -> list[Sentence]:
    """Parse whitespace-separated column data into sentences.

    One token per line, blank line ends a sentence, a line whose first column
    is -DOCSTART- starts a new document (the line itself is not a token).
    The label is taken from ``label_column`` (negative counts from the end;
    None reads no labels). ``header_mode`` "first-token" sets each sentence's
    doc_header to the first token of its document; ``header_column`` reads the
    header from that column of the document's first row instead.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()
    if header_mode not in ("none", "first-token"):
        raise ConfigError(f'unknown header_mode "{header_mode}"')

    sentences: list[Sentence] = []
    rows: list[list[str]] = []
    row_lines: list[int] = []
    doc_index = 0
    doc_header: str | None = None
    doc_open = False  # a sentence has been emitted for the current document

    def flush() -> None:
        nonlocal doc_header, doc_open
        if not rows:
            return
        width = len(rows[0])
        for cols, lineno in zip(rows, row_lines):
            if len(cols) != width:
                raise FormatError(
                    f"line {lineno}: row has {len(cols)} columns, sentence started with {width}"
                )
        label_at = None
        if label_column is not None:
            label_at = label_column if label_column >= 0 else width + label_column
            if not 0 < label_at < width:
                raise FormatError(
                    f"line {row_lines[0]}: label column {label_column} out of range for {width} columns"
                )
        tokens = [cols[0] for cols in rows]
        aux = [
            tuple(v for i, v in enumerate(cols) if i != 0 and i != label_at)
            for cols in rows
        ]
        labels = [cols[label_at] for cols in rows] if label_at is not None else None
        if not doc_open:
            if header_mode == "first-token":
                doc_header = tokens[0]
            elif header_column is not None:
                if header_column >= width:
                    raise FormatError(
                        f"line {row_lines[0]}: header column {header_column} out of range"
                    )
                doc_header = rows[0][header_column]
            doc_open = True
        sentences.append(
            Sentence(tokens, aux, labels, doc_header=doc_header, doc_index=doc_index)
        )
        rows.clear()
        row_lines.clear()

    for lineno, line in enumerate(stream, 1):
        cols = line.split()
        if not cols:
            flush()
            continue
        if cols[0] == DOCSTART:
            flush()
            if doc_open:
                doc_index += 1
            doc_header = None
            doc_open = False
            continue
        rows.append(cols)
        row_lines.append(lineno)
    flush()
    return sentences


def write_conll(sentences: Sequence[Sentence], include_labels: bool = True) -> str:
    """Render sentences back to single-space-separated columns."""
    chunks = []
    for s in sentences:
        lines = []
        for t, tok in enumerate(s.tokens):
            cols = [tok, *s.aux[t]]
            if include_labels and s.labels is not None:
                cols.append(s.labels[t])
            lines.append(" ".join(cols))
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + ("\n" if chunks else "")


def _base_vectors(
    sentence: Sentence, registry: TestRegistry, lexicons: LexiconStore | None
) -> dict[tuple[str, str], np.ndarray]:
    """Unshifted evaluation of every distinct (kind, param) base test."""
    T = len(sentence)
    out: dict[tuple[str, str], np.ndarray] = {}

    word_params = {t.param for t in registry if t.kind == KIND_WORD}
    for p in word_params:
        out[(KIND_WORD, p)] = np.zeros(T, dtype=bool)
    if word_params:
        for i, tok in enumerate(sentence.tokens):
            vec = out.get((KIND_WORD, tok))
            if vec is not None:
                vec[i] = True

    aux_params = {t.param for t in registry if t.kind == KIND_AUX}
    for p in aux_params:
        col_s, _, value = p.partition("=")
        col = int(col_s)
        vec = np.zeros(T, dtype=bool)
        for i, row in enumerate(sentence.aux):
            if col < len(row) and row[col] == value:
                vec[i] = True
        out[(KIND_AUX, p)] = vec

    for p in {t.param for t in registry if t.kind == KIND_SHAPE}:
        out[(KIND_SHAPE, p)] = np.fromiter(
            (shape_regex(p, tok) for tok in sentence.tokens), dtype=bool, count=T
        )

    lexicon_params = {t.param for t in registry if t.kind == KIND_LEXICON}
    if lexicon_params:
        store = lexicons if lexicons is not None else LexiconStore()
        for p in lexicon_params:
            if p not in store:
                raise ConfigError(f'unknown lexicon "{p}"')
            out[(KIND_LEXICON, p)] = np.fromiter(
                (store.contains(p, tok) for tok in sentence.tokens), dtype=bool, count=T
            )

    for p in {t.param for t in registry if t.kind == KIND_HEADER}:
        out[(KIND_HEADER, p)] = np.full(T, sentence.doc_header == p, dtype=bool)

    return out


def _first_mention_vectors(
    sentence: Sentence,
    registry: TestRegistry,
    bases: dict[tuple[str, str], np.ndarray],
    earlier: dict[str, dict[int, bool]],
) -> tuple[dict[tuple[str, str], np.ndarray], dict[str, dict[int, bool]]]:
    """Evaluate first-mention wrappers against document history.

    A wrapper fires at t when the token there is capitalized, the same string
    appeared earlier in the document (including earlier in this sentence), and
    the wrapped test fired at that first occurrence. Returns the wrapper base
    vectors plus the recorded evaluations for this sentence's new words.
    """
    T = len(sentence)
    wrapped_ids = sorted({int(t.param) for t in registry if t.kind == KIND_FIRST_MENTION})
    vectors = {w: np.zeros(T, dtype=bool) for w in wrapped_ids}
    overlay: dict[str, dict[int, bool]] = {}
    for t, tok in enumerate(sentence.tokens):
        if not tok[:1].isupper():
            continue
        entry = overlay.get(tok)
        if entry is None:
            entry = earlier.get(tok)
        if entry is not None:
            for w in wrapped_ids:
                vectors[w][t] = entry[w]
        else:
            overlay[tok] = {
                w: bool(bases[registry.tests[w].base_key()][t]) for w in wrapped_ids
            }
    out = {(KIND_FIRST_MENTION, str(w)): vec for w, vec in vectors.items()}
    return out, overlay


def _apply(
    sentence: Sentence,
    registry: TestRegistry,
    lexicons: LexiconStore | None,
    earlier: dict[str, dict[int, bool]],
) -> tuple[ObservationMatrix, dict[str, dict[int, bool]]]:
    T = len(sentence)
    bases = _base_vectors(sentence, registry, lexicons)
    overlay: dict[str, dict[int, bool]] = {}
    if registry.first_mention_ids:
        fm_bases, overlay = _first_mention_vectors(sentence, registry, bases, earlier)
        bases.update(fm_bases)

    bits = np.zeros((T, len(registry)), dtype=bool)
    for k, test in enumerate(registry.tests):
        base = bases[test.base_key()]
        d = test.offset
        if d == 0:
            bits[:, k] = base
        elif d > 0:
            if d < T:
                bits[: T - d, k] = base[d:]
        else:
            if -d < T:
                bits[-d:, k] = base[: T + d]
    return ObservationMatrix(bits), overlay


def apply_tests(
    sentence: Sentence,
    registry: TestRegistry,
    lexicons: LexiconStore | None = None,
    first_mentions: dict[str, dict[int, bool]] | None = None,
) -> ObservationMatrix:
    """Evaluate every registry test at every position of one sentence.

    ``first_mentions`` carries first-occurrence records from earlier sentences
    of the same document; it is read, never mutated. Use ``observe_corpus`` to
    thread that state across a whole corpus.
    """
    obs, _ = _apply(sentence, registry, lexicons, first_mentions or {})
    return obs


def observe_corpus(
    sentences: Sequence[Sentence],
    registry: TestRegistry,
    lexicons: LexiconStore | None = None,
) -> list[ObservationMatrix]:
    """apply_tests over a corpus, tracking first mentions per document."""
    out = []
    track = bool(registry.first_mention_ids)
    earlier: dict[str, dict[int, bool]] = {}
    current_doc: int | None = None
    for s in sentences:
        if track and s.doc_index != current_doc:
            earlier = {}
            current_doc = s.doc_index
        obs, overlay = _apply(s, registry, lexicons, earlier)
        if track:
            for word, entry in overlay.items():
                earlier.setdefault(word, entry)
        out.append(obs)
    return out


def build_registry(
    sentences: Sequence[Sentence],
    lexicons: LexiconStore | None = None,
    *,
    words: bool = True,
    aux: bool = True,
    shapes: bool = True,
    lexicon_tests: bool = True,
    first_mention: bool = False,
    headers: bool = False,
    offsets: Sequence[int] = (-2, -1, 0, 1, 2),
    word_min_count: int = 1,
    shape_names: Sequence[str] | None = None,
) -> TestRegistry:
    """Assemble a registry from a training corpus.

    Base tests are created at offset 0, first-mention wrappers copy each base
    test, and finally every test so far is duplicated at each nonzero offset.
    """
    offsets = tuple(offsets)
    if 0 not in offsets:
        raise ConfigError("offsets must include 0")

    base: list[tuple[str, str]] = []
    if words:
        counts: dict[str, int] = {}
        for s in sentences:
            for tok in s.tokens:
                counts[tok] = counts.get(tok, 0) + 1
        for tok in sorted(w for w, c in counts.items() if c >= word_min_count):
            base.append((KIND_WORD, tok))
    if aux:
        values: set[tuple[int, str]] = set()
        for s in sentences:
            for row in s.aux:
                for col, v in enumerate(row):
                    values.add((col, v))
        for col, v in sorted(values):
            base.append((KIND_AUX, f"{col}={v}"))
    if shapes:
        for name in shape_names if shape_names is not None else SHAPE_PATTERNS:
            if name not in SHAPE_PATTERNS:
                raise ConfigError(f'unknown shape pattern "{name}"')
            base.append((KIND_SHAPE, name))
    if lexicon_tests and lexicons is not None:
        for name in sorted(lexicons.names()):
            base.append((KIND_LEXICON, name))
    if headers:
        seen = {s.doc_header for s in sentences if s.doc_header is not None}
        for value in sorted(seen):
            base.append((KIND_HEADER, value))

    tests: list[AtomicTest] = []
    for kind, param in base:
        tests.append(AtomicTest(len(tests), kind, param, 0))
    if first_mention:
        for wrapped in [t for t in tests if t.kind not in (KIND_HEADER,)]:
            tests.append(AtomicTest(len(tests), KIND_FIRST_MENTION, str(wrapped.id), 0))
    shifted_src = list(tests)
    for d in sorted(offsets):
        if d == 0:
            continue
        for t in shifted_src:
            if t.kind == KIND_HEADER:
                continue
            tests.append(AtomicTest(len(tests), t.kind, t.param, d))
    return TestRegistry(tests)

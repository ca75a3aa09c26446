"""Versioned text serialization for trained models.

The format is line-oriented and tab-separated so files diff cleanly:

    crf-model v1
    labels\t<label>...
    sigma2\t<float>
    tests\t<count>
    test\t<id>\t<kind>\t<param>\t<offset>
    conjs\t<count>
    conj\t<id>\t<comma-separated test ids>
    features\t<count>
    feature\t<id>\t<conj id or _>\t<source>\t<dest>\t<weight>

Sources are a label name, "*" for the wildcard, or "^" for START. Weights are
written with repr(), the shortest decimal that round-trips, so parse(render())
reproduces scores exactly. Unknown versions are rejected outright.
"""

from __future__ import annotations

from pathlib import Path

from .corpus import AtomicTest, TestRegistry
from .errors import FormatError
from .features import START, WILDCARD, CrfModel, Feature

HEADER = "crf-model v1"


def render_model(model: CrfModel) -> str:
    lines = [HEADER]
    lines.append("labels\t" + "\t".join(model.labels))
    lines.append(f"sigma2\t{model.sigma2!r}")
    lines.append(f"tests\t{len(model.registry)}")
    for t in model.registry.tests:
        lines.append(f"test\t{t.id}\t{t.kind}\t{t.param}\t{t.offset}")
    conj_ids: dict[tuple[int, ...], int] = {}
    for f in model.features:
        if f.conj is not None and f.conj not in conj_ids:
            conj_ids[f.conj] = len(conj_ids)
    lines.append(f"conjs\t{len(conj_ids)}")
    for conj, cid in conj_ids.items():
        lines.append(f"conj\t{cid}\t" + ",".join(str(i) for i in conj))
    lines.append(f"features\t{len(model.features)}")
    for fid, f in enumerate(model.features):
        conj_field = "_" if f.conj is None else str(conj_ids[f.conj])
        if f.source == WILDCARD:
            src = "*"
        elif f.source == START:
            src = "^"
        else:
            src = model.labels[f.source]
        dst = model.labels[f.dest]
        lines.append(f"feature\t{fid}\t{conj_field}\t{src}\t{dst}\t{model.weights[fid]!r}")
    return "\n".join(lines) + "\n"


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, expect: str | None = None) -> list[str]:
        if self.pos >= len(self.lines):
            raise FormatError("model file ended early")
        self.pos += 1
        fields = self.lines[self.pos - 1].split("\t")
        if expect is not None and fields[0] != expect:
            raise FormatError(f'model file line {self.pos}: expected "{expect}" record')
        return fields

    def fail(self, message: str) -> FormatError:
        return FormatError(f"model file line {self.pos}: {message}")


def parse_model(text: str) -> CrfModel:
    r = _Reader(text)
    header = r.next()
    if len(header) != 1 or header[0] != HEADER:
        raise FormatError(
            f'unsupported model format "{header[0] if header else ""}" (expected "{HEADER}")'
        )
    labels = r.next("labels")[1:]
    if not labels:
        raise r.fail("no labels")
    sigma_fields = r.next("sigma2")
    try:
        sigma2 = float(sigma_fields[1])
    except (IndexError, ValueError):
        raise r.fail("bad sigma2") from None

    count_fields = r.next("tests")
    tests: list[AtomicTest] = []
    for _ in range(int(count_fields[1])):
        f = r.next("test")
        if len(f) != 5:
            raise r.fail("test record needs 5 fields")
        try:
            tests.append(AtomicTest(int(f[1]), f[2], f[3], int(f[4])))
        except ValueError as exc:
            raise r.fail(str(exc)) from None
    try:
        registry = TestRegistry(tests)
    except ValueError as exc:
        raise r.fail(str(exc)) from None

    count_fields = r.next("conjs")
    conjs: dict[int, tuple[int, ...]] = {}
    for _ in range(int(count_fields[1])):
        f = r.next("conj")
        if len(f) != 3:
            raise r.fail("conj record needs 3 fields")
        conjs[int(f[1])] = tuple(int(x) for x in f[2].split(","))

    model = CrfModel(labels, registry, sigma2)
    label_at = {lab: i for i, lab in enumerate(labels)}
    count_fields = r.next("features")
    new: list[tuple[Feature, float]] = []
    for _ in range(int(count_fields[1])):
        f = r.next("feature")
        if len(f) != 6:
            raise r.fail("feature record needs 6 fields")
        if f[2] == "_":
            conj = None
        else:
            try:
                conj = conjs[int(f[2])]
            except (KeyError, ValueError):
                raise r.fail(f'unknown conjunction id "{f[2]}"') from None
        if f[3] == "*":
            source = WILDCARD
        elif f[3] == "^":
            source = START
        elif f[3] in label_at:
            source = label_at[f[3]]
        else:
            raise r.fail(f'unknown source "{f[3]}"')
        if f[4] not in label_at:
            raise r.fail(f'unknown destination "{f[4]}"')
        try:
            weight = float(f[5])
        except ValueError:
            raise r.fail(f'bad weight "{f[5]}"') from None
        new.append((Feature(conj, source, label_at[f[4]]), weight))
    before = len(new)
    try:
        added = model.add_features(new)
    except ValueError as exc:
        raise FormatError(f"model file: {exc}") from None
    if added != before:
        raise FormatError("model file contains duplicate features")
    return model


def save_model(model: CrfModel, path: str | Path) -> None:
    Path(path).write_text(render_model(model), encoding="utf-8")


def load_model(path: str | Path) -> CrfModel:
    p = Path(path)
    if not p.is_file():
        raise FormatError(f'model file "{p}" does not exist')
    return parse_model(p.read_text(encoding="utf-8"))

"""Run configuration: a flat key = value file with a fixed key set.

Unknown keys are rejected so typos fail loudly. '#' starts a comment and
blank lines are ignored. Path-valued keys are resolved relative to the
directory containing the config file.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}

_PATH_KEYS = {"train_data", "lexicon_dir", "model_out", "report_out"}


@dataclass
class RunConfig:
    # data
    train_data: str | None = None
    label_column: int = -1
    lexicon_dir: str | None = None
    model_out: str | None = None
    report_out: str | None = None
    # test registry
    tests_words: bool = True
    tests_aux: bool = True
    tests_shapes: bool = True
    tests_lexicons: bool = True
    tests_first_mention: bool = False
    tests_headers: bool = False
    offsets: tuple[int, ...] = (-2, -1, 0, 1, 2)
    word_min_count: int = 1
    header_mode: str = "none"
    header_column: int | None = None
    # induction / training
    sigma2: float = 10.0
    gain_threshold: float = 5.0
    max_features_per_round: int = 1000
    candidate_pool_size: int = 1000
    lbfgs_iterations_per_round: int = 10
    max_rounds: int = 10
    margin: float | None = None
    expansion: str = "none"
    edge_features: bool = True
    train_iterations: int = 200
    train_tolerance: float = 1e-4
    fixed_patterns: tuple[tuple[int, int], ...] = ()
    # session
    seed: int = 0
    holdout_fraction: float = 0.0
    threads: int = 1


def _parse_bool(key: str, raw: str) -> bool:
    v = raw.lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ConfigError(f'key "{key}": expected a boolean, got "{raw}"')


def _parse_offsets(raw: str) -> tuple[int, ...]:
    return tuple(int(x.strip()) for x in raw.split(",") if x.strip())


def _parse_patterns(raw: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        a, sep, b = part.partition(":")
        if not sep:
            raise ConfigError(f'fixed_patterns entry "{part}" is not "offset:offset"')
        out.append((int(a), int(b)))
    return tuple(out)


def set_key(cfg: RunConfig, key: str, raw: str) -> None:
    """Assign one textual key = value pair onto the config."""
    known = {f.name for f in fields(RunConfig)}
    if key not in known:
        raise ConfigError(f'unknown configuration key "{key}"')
    raw = raw.strip()
    try:
        if key in ("margin", "header_column"):
            value = None if raw.lower() in ("", "none", "off") else (
                float(raw) if key == "margin" else int(raw)
            )
        elif key == "offsets":
            value = _parse_offsets(raw)
        elif key == "fixed_patterns":
            value = _parse_patterns(raw)
        else:
            current = getattr(cfg, key)
            kind = type(current) if current is not None else str
            if kind is bool:
                value = _parse_bool(key, raw)
            elif kind is int:
                value = int(raw)
            elif kind is float:
                value = float(raw)
            else:
                value = raw
    except ValueError:
        raise ConfigError(f'key "{key}": bad value "{raw}"') from None
    setattr(cfg, key, value)


def _validate(cfg: RunConfig) -> None:
    if cfg.expansion not in ("none", "all-sources"):
        raise ConfigError(f'key "expansion": must be "none" or "all-sources"')
    if cfg.header_mode not in ("none", "first-token"):
        raise ConfigError(f'key "header_mode": must be "none" or "first-token"')
    if 0 not in cfg.offsets:
        raise ConfigError('key "offsets": must include 0')
    if not 0.0 <= cfg.holdout_fraction < 1.0:
        raise ConfigError('key "holdout_fraction": must be in [0, 1)')
    if cfg.threads < 1:
        raise ConfigError('key "threads": must be at least 1')


def parse_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    """Load a config file and apply "key=value" overrides on top."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f'config file "{p}" does not exist')
    cfg = RunConfig()
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise ConfigError(f'{p}:{lineno}: expected "key = value", got "{stripped}"')
        set_key(cfg, key.strip(), raw)
    base = p.parent
    for key in _PATH_KEYS:
        value = getattr(cfg, key)
        if value is not None:
            setattr(cfg, key, str((base / value) if not Path(value).is_absolute() else Path(value)))
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f'override "{item}" is not "key=value"')
        set_key(cfg, key.strip(), raw)
    _validate(cfg)
    return cfg

"""Scenario files: flat ``key = value`` pairs under ``[section]`` headers.

Every key is enumerated in ``SCHEMA``; unknown sections or keys are errors so
that a misspelled tolerance can never be silently ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from ..systems import SystemKind


class ConfigError(ValueError):
    """Parse or validation failure, with 1-based line and column when known."""

    def __init__(self, message: str, source: str = "<string>", line: int | None = None, column: int | None = None):
        self.source, self.line, self.column = source, line, column
        where = source if line is None else f"{source}:{line}:{column or 1}"
        super().__init__(f"{where}: {message}")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {text!r}")
    return v


def _floats(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split()]
    if not parts:
        raise ValueError("expected a list of numbers")
    return tuple(_float(p) for p in parts)


def _kind(text: str) -> str:
    return SystemKind(text.strip()).value


def _str(text: str) -> str:
    if not text.strip():
        raise ValueError("expected a non-empty string")
    return text.strip()


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "scenario": {
        "name": (_str, "scenario"),
        "kind": (_kind, "mhd"),
        "seed": (int, 0),
        "out": (_str, ""),
    },
    "grid": {"n": (int, 32), "period": (_float, 2 * math.pi)},
    "norms": {"p": (_float, 6.0), "stride": (int, 4), "min_radii": (int, 4)},
    "suites": {
        "lemma_suite": (_bool, False),
        "picard_suite": (_bool, False),
        "bootstrap_suite": (_bool, False),
        "gevrey_suite": (_bool, False),
    },
    "lemmas": {
        "fields": (int, 100),
        "algebra_fields": (int, 20),
        "sigmas": (_floats, (1.5, 2.0, 3.0)),
        "holder_fields": (int, 6),
        "holder_pairs": (int, 1000),
        "refine_fields": (int, 20),
        "oseen_n": (int, 32),
        "oseen_t": (_float, 0.0625),
    },
    "picard": {
        "amp": (_float, 1e-3),
        "n_times": (int, 16),
        "max_iters": (int, 30),
        "tol": (_float, 1e-12),
        "samples": (int, 3),
        "sweep": (_floats, (1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2)),
        "steady": (_bool, True),
    },
    "bootstrap": {"k": (int, 2), "amp": (_float, 1.0), "holder_pairs": (int, 300)},
    "gevrey": {
        "b": (_float, 0.5),
        "a": (_float, 0.5),
        "amp": (_float, 1e-3),
        "n_times": (int, 16),
        "samples": (int, 3),
    },
    "manufacture": {
        "taylor_green_amp": (_float, 1e-3),
        "v_profile": (_str, "helix"),
        "gevrey_decay": (_float, 0.0),
    },
}

SUITE_ORDER = ("lemma_suite", "picard_suite", "bootstrap_suite", "gevrey_suite")


@dataclass
class Scenario:
    """Parsed scenario; ``values[section][key]`` holds every schema entry."""

    values: dict[str, dict[str, Any]]
    source: str = "<string>"
    given: set[tuple[str, str]] = field(default_factory=set)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    @property
    def name(self) -> str:
        return self.values["scenario"]["name"]

    @property
    def kind(self) -> SystemKind:
        return SystemKind(self.values["scenario"]["kind"])

    @property
    def seed(self) -> int:
        return self.values["scenario"]["seed"]

    @property
    def suites(self) -> list[str]:
        return [s for s in SUITE_ORDER if self.values["suites"][s]]

    @property
    def out_dir(self) -> Path:
        out = self.values["scenario"]["out"]
        return Path(out) if out else Path("runs") / self.name

    def override(self, seed: int | None = None, n: int | None = None, out: str | None = None) -> Scenario:
        vals = {sec: dict(kv) for sec, kv in self.values.items()}
        if seed is not None:
            vals["scenario"]["seed"] = int(seed)
        if n is not None:
            vals["grid"]["n"] = int(n)
        if out is not None:
            vals["scenario"]["out"] = str(out)
        sc = Scenario(vals, self.source, set(self.given))
        sc.validate()
        return sc

    def validate(self) -> None:
        n = self.values["grid"]["n"]
        if n < 8 or n & (n - 1):
            raise ConfigError(f"grid n must be a power of two >= 8, got {n}", self.source)
        if not self.values["norms"]["p"] > 3:
            raise ConfigError("norms p must exceed 3", self.source)
        if self.values["grid"]["period"] <= 0:
            raise ConfigError("grid period must be positive", self.source)
        if abs(self.values["manufacture"]["taylor_green_amp"]) > 1:
            raise ConfigError("manufacture taylor_green_amp must be <= 1", self.source)

    def to_dict(self) -> dict:
        return {sec: {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()} for sec, kv in self.values.items()}


def defaults() -> Scenario:
    return Scenario({sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()})


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    sc = defaults()
    sc.source = source
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        indent = len(raw) - len(raw.lstrip())
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", source, lineno, indent + 1)
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", source, lineno, indent + 2)
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", source, lineno, indent + 1)
        if section is None:
            raise ConfigError("key outside of any section", source, lineno, indent + 1)
        key, _, value = raw.partition("=")
        key = key.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", source, lineno, indent + 1)
        if (section, key) in sc.given:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", source, lineno, indent + 1)
        value = value.split(" #", 1)[0]
        parser = SCHEMA[section][key][0]
        try:
            sc.values[section][key] = parser(value.strip())
        except ValueError as exc:
            col = raw.index("=") + 2 + (len(raw[raw.index("=") + 1 :]) - len(raw[raw.index("=") + 1 :].lstrip()))
            raise ConfigError(f"bad value for {key}: {exc}", source, lineno, col) from None
        sc.given.add((section, key))
    sc.validate()
    return sc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc.strerror}", str(path)) from None
    return parse_scenario(text, str(path))


def bundled_scenario(name: str) -> Path:
    path = Path(__file__).parent / "scenarios" / f"{name}.ini"
    if not path.exists():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return path

"""Scenario configuration files.

A config is plain text made of ``[section]`` headers and ``key = value``
lines. Values are integers, exact rationals written ``a/b``, decimals,
bare words, or comma-separated lists of those. Lines starting with ``#`` or
``;`` are comments. Parsing then serialising reproduces the same structure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from . import groups
from .errors import ConfigError

PIPELINES = ("simulate", "stability", "goodfn", "linearise")
OUTCOMES = ("limit", "escape", "pass", "fail", "O1Z", "not-O1Z")

# section -> key -> kind
SCHEMA: dict[str, dict[str, str]] = {
    "scenario": {"name": "word", "pipeline": "choice:" + "|".join(PIPELINES),
                 "space": "choice:sl2|sl2xsl2|hecke|sl3"},
    "subgroup": {"H": "id", "window": "numlist", "depth": "posint"},
    "translator": {"family": "choice:diag|hecke|rotation|identity", "params": "numlist",
                   "prime": "posint"},
    "expected": {"outcome": "choice:" + "|".join(OUTCOMES), "L": "id"},
    "sampling": {"samples": "posint", "ref_samples": "posint", "seed": "int"},
    "thresholds": {"tolerance": "posnum", "marginal_tolerance": "posnum",
                   "joint_tolerance": "posnum", "systole": "numlist", "compact_y": "posnum",
                   "escape_from": "num", "escape_mass": "posnum", "factor": "posnum"},
    "stability": {"mode": "choice:analytic|arithmetic"},
    "goodfn": {"coeffs": "numlist", "place": "word", "C": "posnum", "alpha": "posnum",
               "eps": "numlist", "depth": "posint"},
}

REQUIRED = {
    "simulate": [("scenario", "name"), ("subgroup", "H"), ("translator", "family"),
                 ("translator", "params"), ("expected", "outcome")],
    "stability": [("scenario", "name"), ("subgroup", "H"), ("translator", "params"),
                  ("expected", "outcome")],
    "linearise": [("scenario", "name"), ("subgroup", "H"), ("translator", "family"),
                  ("translator", "params"), ("expected", "outcome")],
    "goodfn": [("scenario", "name"), ("goodfn", "coeffs"), ("expected", "outcome")],
}

_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w]*)\s*\]$")
_INT = re.compile(r"^[+-]?\d+$")
_FRAC = re.compile(r"^[+-]?\d+/\d+$")


def _scalar(tok: str):
    tok = tok.strip()
    if _INT.match(tok):
        return int(tok)
    if _FRAC.match(tok):
        return Fraction(tok)
    try:
        return float(tok)
    except ValueError:
        return tok


def _fmt_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else str(v.numerator)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _is_num(v) -> bool:
    return isinstance(v, (int, float, Fraction)) and not isinstance(v, bool)


def _coerce(kind: str, raw: str, section: str, key: str, line: int):
    where = dict(field=f"{section}.{key}", line=line)
    if kind == "numlist":
        items = [_scalar(t) for t in raw.split(",") if t.strip()]
        if not items:
            raise ConfigError(f"{key} must be a nonempty list", **where)
        bad = [t for t in items if not _is_num(t)]
        if bad:
            raise ConfigError(f"{key} has a non-numeric entry {bad[0]!r}", **where)
        return items
    v = _scalar(raw)
    if kind in ("word", "id") or kind.startswith("choice:"):
        if not isinstance(v, str) and kind != "word":
            raise ConfigError(f"{key} must be a word, got {raw!r}", **where)
        v = raw.strip()
        if kind.startswith("choice:") and v not in kind[7:].split("|"):
            raise ConfigError(f"{key} must be one of {kind[7:].replace('|', ', ')}, got {v!r}", **where)
        if kind == "id":
            try:
                groups.catalogue(v)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"unknown catalogue id {v!r} ({exc})", **where) from None
        return v
    if kind == "int" or kind == "posint":
        if not isinstance(v, int):
            raise ConfigError(f"{key} must be an integer, got {raw!r}", **where)
        if kind == "posint" and v < 1:
            raise ConfigError(f"{key} must be ≥ 1", **where)
        return v
    if kind in ("num", "posnum"):
        if not _is_num(v):
            raise ConfigError(f"{key} must be a number, got {raw!r}", **where)
        if kind == "posnum" and v <= 0:
            raise ConfigError(f"{key} must be positive", **where)
        return v
    raise AssertionError(kind)


@dataclass
class ScenarioConfig:
    """A parsed config: ordered sections of typed values."""

    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    source: str | None = field(default=None, compare=False)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    @property
    def name(self) -> str:
        return self.get("scenario", "name")

    @property
    def pipeline(self) -> str:
        return self.get("scenario", "pipeline", "simulate")

    # ------------------------------------------------------------------

    @classmethod
    def parse(cls, text: str, source: str | None = None) -> "ScenarioConfig":
        sections: dict[str, dict[str, Any]] = {}
        current = None
        lines: dict[tuple[str, str], int] = {}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line[0] in "#;":
                continue
            m = _SECTION.match(line)
            if m:
                current = m.group(1)
                if current not in SCHEMA:
                    raise ConfigError(f"unknown section [{current}]", field=current, line=n)
                if current in sections:
                    raise ConfigError(f"duplicate section [{current}]", field=current, line=n)
                sections[current] = {}
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {line!r}", line=n)
            if current is None:
                raise ConfigError("key outside any section", line=n)
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in SCHEMA[current]:
                raise ConfigError(f"unknown key {key!r}", field=f"{current}.{key}", line=n)
            if key in sections[current]:
                raise ConfigError(f"duplicate key {key!r}", field=f"{current}.{key}", line=n)
            sections[current][key] = _coerce(SCHEMA[current][key], value, current, key, n)
            lines[(current, key)] = n
        cfg = cls(sections, source)
        cfg.validate(lines)
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
        return cls.parse(text, str(p))

    def validate(self, lines: dict | None = None) -> None:
        lines = lines or {}
        if "scenario" not in self.sections:
            raise ConfigError("missing [scenario] section", field="scenario")
        for sec, key in REQUIRED[self.pipeline]:
            if key not in self.sections.get(sec, {}):
                raise ConfigError(f"missing required key {key!r}", field=f"{sec}.{key}")
        window = self.get("subgroup", "window")
        if window is not None and (len(window) != 2 or not window[1] > window[0]):
            raise ConfigError("window must be 'lo, hi' with lo < hi", field="subgroup.window",
                              line=lines.get(("subgroup", "window")))
        if self.pipeline == "simulate":
            outcome = self.get("expected", "outcome")
            if outcome not in ("limit", "escape"):
                raise ConfigError("simulate expects outcome limit or escape", field="expected.outcome",
                                  line=lines.get(("expected", "outcome")))
            if outcome == "limit" and self.get("expected", "L") is None:
                raise ConfigError("limit outcome needs an L id", field="expected.L")

    def serialize(self) -> str:
        out = []
        for sec, kv in self.sections.items():
            if out:
                out.append("")
            out.append(f"[{sec}]")
            for key, v in kv.items():
                text = ", ".join(_fmt_scalar(x) for x in v) if isinstance(v, list) else _fmt_scalar(v)
                out.append(f"{key} = {text}")
        return "\n".join(out) + "\n"

    # ------------------------------------------------------------------

    def to_scenario(self, samples_scale: float = 1.0, seed: int | None = None):
        """The dynamics scenario described by a simulate config."""
        from .dynamics import Scenario

        def scaled(key, default):
            return max(1, int(round(float(self.get("sampling", key, default)) * samples_scale)))

        family = self.get("translator", "family")
        space = self.get("scenario", "space") or ("hecke" if family == "hecke" else
                                                  "sl2xsl2" if self.get("subgroup", "H").startswith("sl2xsl2")
                                                  else "sl2")
        window = self.get("subgroup", "window")
        kw = dict(
            name=self.name, space=space, H=self.get("subgroup", "H"),
            window=tuple(float(w) for w in window) if window else None,
            family=family, params=[float(t) for t in self.get("translator", "params")],
            expected=self.get("expected", "outcome"), L=self.get("expected", "L"),
            samples=scaled("samples", 100_000),
            ref_samples=scaled("ref_samples", self.get("sampling", "samples", 100_000)),
            seed=int(seed if seed is not None else self.get("sampling", "seed", 0)),
            prime=int(self.get("translator", "prime", 2)),
            depth=int(self.get("subgroup", "depth", 0)),
        )
        th = self.sections.get("thresholds", {})
        for key, attr in (("tolerance", "tolerance"), ("compact_y", "compact_y"),
                          ("escape_from", "escape_from"), ("escape_mass", "escape_mass"),
                          ("marginal_tolerance", "marginal_tolerance"),
                          ("joint_tolerance", "joint_tolerance")):
            if key in th:
                kw[attr] = float(th[key])
        if "systole" in th:
            kw["thresholds"] = tuple(float(x) for x in th["systole"])
        return Scenario(**kw)


def parse_config(text: str) -> ScenarioConfig:
    return ScenarioConfig.parse(text)

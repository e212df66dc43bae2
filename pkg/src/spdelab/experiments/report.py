"""Report containers shared by every experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import __version__


@dataclass
class Criterion:
    """One pass/fail decision together with the numbers that decided it."""

    name: str
    passed: bool
    estimate: float
    threshold: float
    stderr: float | None = None
    relation: str = "<="
    detail: str = ""

    def line(self) -> str:
        se = "" if self.stderr is None else f" (SE {self.stderr:.3g})"
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: {self.estimate:.6g}{se} {self.relation} {self.threshold:.6g}"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "estimate": _clean(self.estimate),
                "stderr": _clean(self.stderr), "threshold": _clean(self.threshold),
                "relation": self.relation, "detail": self.detail}


@dataclass
class Curve:
    """Tabulated series; the first column is the abscissa."""

    name: str
    columns: dict
    xlabel: str = "t"
    ylabel: str = ""
    logx: bool = False
    logy: bool = False

    def __post_init__(self):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"curve {self.name!r} has columns of different lengths")

    @property
    def header(self) -> list[str]:
        return list(self.columns)


@dataclass
class ExperimentReport:
    kind: str
    criteria: list
    curves: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    scope: str = "within stated hypotheses"
    snapshots: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.criteria) and all(c.passed for c in self.criteria)

    def criterion(self, name: str) -> Criterion:
        for c in self.criteria:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [c.line() for c in self.criteria]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "passed": self.passed, "scope": self.scope,
                "criteria": [c.to_dict() for c in self.criteria],
                "summary": _clean(self.summary), "provenance": self.provenance,
                "curves": [c.name for c in self.curves], "snapshots": sorted(self.snapshots)}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if obj is None:
        return None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def provenance(cfg, extra: dict | None = None) -> dict:
    out = {"config_hash": cfg.hash, "seed": cfg["noise"]["seed"], "code_version": __version__,
           "record_every": cfg["solver"]["record_every"]}
    out.update(extra or {})
    return out


def mean_se(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and standard errors over axis 0."""
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    if m == 0:
        shape = a.shape[1:]
        return np.full(shape, np.nan), np.full(shape, np.nan)
    mean = a.mean(axis=0)
    se = a.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros_like(mean)
    return mean, se

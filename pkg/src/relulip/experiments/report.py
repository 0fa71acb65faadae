from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..core import SummaryStats, csv_text, fit_loglog_slope

CSV_HEADER = ("param", "value", "mean", "std", "q05", "q95", "n")
PARAMS = ("d", "N", "L", "p")


@dataclass(frozen=True)
class SweepConfig:
    """One parameter swept over a grid, everything else fixed.

    ``fixed`` holds the remaining network and estimator settings, for
    example ``{"N": 512, "L": 2, "p": 2, "bias": "zero"}``. A
    ``width_factor`` entry sets ``N = width_factor * d`` at every grid point.
    """

    experiment: str
    param: str
    grid: tuple
    fixed: dict = field(default_factory=dict)
    trials: int = 20
    estimator: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ValueError(f"param must be one of {PARAMS}, got {self.param!r}")
        grid = tuple(self.grid)
        if not grid:
            raise ValueError("grid must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        object.__setattr__(self, "grid", grid)

    def point(self, value) -> dict:
        """Fixed settings with the swept parameter set to ``value``."""
        s = dict(self.fixed)
        s[self.param] = value
        if "width_factor" in s and "d" in s:
            s["N"] = int(s["width_factor"] * s["d"])
        return s

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "param": self.param,
            "grid": list(self.grid),
            "fixed": dict(self.fixed),
            "trials": self.trials,
            "estimator": dict(self.estimator),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        return cls(
            data["experiment"],
            data["param"],
            tuple(data["grid"]),
            dict(data.get("fixed", {})),
            int(data.get("trials", 20)),
            dict(data.get("estimator", {})),
            int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class Series:
    label: str
    param: str
    values: list
    stats: list
    fit: dict | None = None

    def fit_slope(self) -> dict:
        slope, intercept, rmse = fit_loglog_slope(self.values, [s.mean for s in self.stats])
        self.fit = {"slope": slope, "intercept": intercept, "rmse": rmse}
        return self.fit

    @property
    def means(self) -> list:
        return [s.mean for s in self.stats]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "param": self.param,
            "points": [{"value": v, **s.to_dict()} for v, s in zip(self.values, self.stats)],
            "fit": self.fit,
        }


@dataclass
class ScalingReport:
    experiment: str
    config: dict
    series: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def add(self, name: str, passed: bool, detail: str) -> Verdict:
        v = Verdict(name, bool(passed), detail)
        self.verdicts.append(v)
        return v

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "series": [s.to_dict() for s in self.series],
            "verdicts": [v.to_dict() for v in self.verdicts],
            "passed": self.passed,
            "extra": self.extra,
        }

    def csv_rows(self) -> list:
        rows = []
        multi = len(self.series) > 1
        for s in self.series:
            name = f"{s.param}[{s.label}]" if multi and s.label else s.param
            for v, st in zip(s.values, s.stats):
                rows.append((name, v, st.mean, st.std, st.q05, st.q95, st.n))
        return rows

    def to_csv(self, comments=()) -> str:
        return csv_text(CSV_HEADER, self.csv_rows(), comments)


def summarize(samples) -> SummaryStats:
    return SummaryStats.of(samples)

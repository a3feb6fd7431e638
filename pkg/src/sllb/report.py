"""Machine-readable experiment records shared by the diagnostic suites."""

import json
from dataclasses import dataclass, field


@dataclass
class MetricRecord:
    suite: str
    scenario: str
    params: dict
    value: float
    tolerance: float | None
    passed: bool
    seed: int | None = None

    def to_json(self) -> str:
        return json.dumps({
            "suite": self.suite,
            "scenario": self.scenario,
            "params": self.params,
            "value": self.value,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "seed": self.seed,
        }, sort_keys=True)


@dataclass
class ExperimentReport:
    suite: str
    scenario: str
    seed: int | None = None
    records: list = field(default_factory=list)
    runtime: float = 0.0

    def add(self, value, *, params=None, tolerance=None, passed=True,
            seed=None) -> MetricRecord:
        rec = MetricRecord(suite=self.suite, scenario=self.scenario,
                           params=params or {}, value=float(value),
                           tolerance=tolerance, passed=bool(passed),
                           seed=self.seed if seed is None else seed)
        self.records.append(rec)
        return rec

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def values(self) -> list:
        return [r.value for r in self.records]

    def to_jsonl(self) -> str:
        return "\n".join(r.to_json() for r in self.records) + "\n"

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass
class Counters:
    """Per-run evaluation tallies (never shared between runs)."""

    g_evals: int = 0
    j_evals: int = 0
    hz_evals: int = 0
    lu_facts: int = 0
    rejected_steps: int = 0
    accepted_steps: int = 0
    residual_checks: int = 0

    def as_dict(self) -> dict[str, int]:
        return asdict(self)

    def add(self, other: Counters) -> None:
        for k, v in other.as_dict().items():
            setattr(self, k, getattr(self, k) + v)

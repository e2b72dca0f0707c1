"""Sampled trajectories."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass
class TrajectoryRecord:
    """Sample times with the matching states and optional summaries.

    Times must be strictly increasing. With ``keep_states=False`` only the
    summaries (and the final state) are kept.
    """

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    summaries: list = field(default_factory=list)
    keep_states: bool = True
    final: Optional[Any] = None

    def append(self, state, summary: Optional[dict] = None) -> None:
        if self.times and not state.time > self.times[-1]:
            raise ValueError("trajectory times must be strictly increasing")
        self.times.append(float(state.time))
        if self.keep_states:
            self.states.append(state)
        self.summaries.append(summary or {})
        self.final = state

    def __len__(self) -> int:
        return len(self.times)

"""Reproducible join/leave schedules for churn experiments."""

from __future__ import annotations

import random
from dataclasses import dataclass

JOIN = "join"
LEAVE = "leave"


@dataclass(frozen=True)
class ChurnEvent:
    time: float
    kind: str  # JOIN or LEAVE


def churn_events(
    rng: random.Random, join_rate: float, leave_rate: float, horizon: float
) -> list[ChurnEvent]:
    """Two independent Poisson processes over [0, horizon), merged in time
    order. Rates are events per second; zero rates contribute nothing."""
    if join_rate < 0 or leave_rate < 0 or horizon < 0:
        raise ValueError("rates and horizon must be non-negative")
    events = []
    for kind, rate in ((JOIN, join_rate), (LEAVE, leave_rate)):
        if rate <= 0:
            continue
        t = rng.expovariate(rate)
        while t < horizon:
            events.append(ChurnEvent(time=t, kind=kind))
            t += rng.expovariate(rate)
    events.sort(key=lambda e: (e.time, e.kind))
    return events

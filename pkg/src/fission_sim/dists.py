"""Tiny distribution-spec parser for CLI/config knobs.

Specs look like ``fixed:32``, ``uniform:2:64``, or ``pareto:1.5``; sampling is
driven by a caller-owned random.Random so every draw is reproducible.
"""

from __future__ import annotations

import random

from .errors import ParseError


def parse_dist(spec: str):
    """Return (name, params) after validating the spec string."""
    parts = spec.split(":")
    name = parts[0]
    try:
        if name == "fixed" and len(parts) == 2:
            return name, (float(parts[1]),)
        if name == "uniform" and len(parts) == 3:
            lo, hi = float(parts[1]), float(parts[2])
            if lo > hi:
                raise ParseError(f"uniform bounds out of order in {spec!r}")
            return name, (lo, hi)
        if name == "pareto" and len(parts) == 2:
            shape = float(parts[1])
            if shape <= 0:
                raise ParseError(f"pareto shape must be positive in {spec!r}")
            return name, (shape,)
    except ValueError:
        raise ParseError(f"non-numeric parameter in distribution spec {spec!r}") from None
    raise ParseError(f"unknown distribution spec {spec!r}")


def sample_dist(spec: str, rng: random.Random, integer: bool = True, minimum: float | None = None):
    """Draw one value from a spec string; pareto draws are scaled by the minimum."""
    name, params = parse_dist(spec)
    if name == "fixed":
        value = params[0]
    elif name == "uniform":
        value = rng.uniform(params[0], params[1])
    else:  # pareto
        base = minimum if minimum is not None else 1.0
        value = base * rng.paretovariate(params[0])
    if minimum is not None:
        value = max(minimum, value)
    return int(round(value)) if integer else value

"""Geometry of multi-photon leapfrog transitions in the dressed ladder.

A leapfrog process emits several photons in one jump across the dressed
manifolds, so its frequencies are constrained only by total energy:

    sum_mu c_mu w_mu = Delta,   Delta in {-Op, 0, +Op},

where Op is the triplet splitting and c_mu counts how many photons of
the jump fall in sensor window mu.  These hyperplanes carry the
superbunching ridges of the correlation maps; everything here is exact
affine bookkeeping, no dynamics.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FeasibilityError, ParameterError

#: Default exclusion margin, in units of the filter linewidth.
DEFAULT_MARGIN = 3.0


@dataclass(frozen=True)
class LeapfrogCondition:
    """One energy-conservation hyperplane sum c_mu w_mu = delta."""

    coefficients: tuple[int, ...]
    delta: float
    omega_plus: float

    def __post_init__(self):
        if any(c < 0 for c in self.coefficients):
            raise ParameterError(f"coefficients must be nonnegative, got {self.coefficients}")
        if self.order < 2:
            raise ParameterError("a leapfrog involves at least two photons")
        allowed = (-self.omega_plus, 0.0, self.omega_plus)
        if not any(math.isclose(self.delta, d, abs_tol=1e-12 * max(1.0, self.omega_plus))
                   for d in allowed):
            raise ParameterError(f"delta {self.delta} not in {allowed}")

    @property
    def order(self) -> int:
        return sum(self.coefficients)

    def residual(self, frequencies) -> float:
        return float(sum(c * w for c, w in zip(self.coefficients, frequencies)) - self.delta)

    def satisfied(self, frequencies, tol: float = 1e-9) -> bool:
        return abs(self.residual(frequencies)) <= tol * max(1.0, self.omega_plus)


def enumerate_conditions(partition, omega_plus: float) -> list[LeapfrogCondition]:
    """All leapfrog hyperplanes visible in a correlation of ``partition``.

    Coefficient vectors run over 0 <= c_mu <= n_mu.  With several sensor
    groups a condition must involve at least two of them: a jump
    confined to one group enhances that group's own moment, which
    cancels between numerator and denominator of g and leaves no ridge.
    A single scanned sensor of order n sees every degenerate jump
    k w = Delta for 2 <= k <= n, since its normalizer is the one-photon
    moment to the n-th power.
    """
    partition = tuple(int(n) for n in partition)
    if not partition or any(n < 1 for n in partition):
        raise ParameterError(f"invalid partition {partition}")
    if omega_plus <= 0:
        raise ParameterError(f"omega_plus must be positive, got {omega_plus}")
    coeff_sets = []
    if len(partition) == 1:
        coeff_sets = [(k,) for k in range(2, partition[0] + 1)]
    else:
        for c in itertools.product(*(range(n + 1) for n in partition)):
            if sum(1 for x in c if x > 0) >= 2:
                coeff_sets.append(c)
    out = []
    for c in coeff_sets:
        for delta in (-omega_plus, 0.0, omega_plus):
            out.append(LeapfrogCondition(coefficients=tuple(c), delta=delta,
                                         omega_plus=omega_plus))
    return out


# ---------------------------------------------------------------------------
# overlays


def _clip_line_to_box(a: float, b: float, rhs: float, xlim, ylim):
    """Segment of a x + b y = rhs inside the rectangle, or None."""
    pts = []
    if b != 0.0:
        for x in xlim:
            y = (rhs - a * x) / b
            if ylim[0] - 1e-12 <= y <= ylim[1] + 1e-12:
                pts.append((x, min(max(y, ylim[0]), ylim[1])))
    if a != 0.0:
        for y in ylim:
            x = (rhs - b * y) / a
            if xlim[0] - 1e-12 <= x <= xlim[1] + 1e-12:
                pts.append((min(max(x, xlim[0]), xlim[1]), y))
    uniq = []
    for p in pts:
        if not any(abs(p[0] - q[0]) < 1e-9 and abs(p[1] - q[1]) < 1e-9 for q in uniq):
            uniq.append(p)
    if len(uniq) < 2:
        return None
    uniq.sort()
    return [list(uniq[0]), list(uniq[-1])]


def _axis_sensor(name: str) -> int | None:
    if name == "frequency":
        return 0
    if name.startswith("frequency_"):
        return int(name.split("_")[1]) - 1
    return None


def annotate(grid, conditions, fixed_frequencies: dict | None = None) -> dict:
    """Overlay record: per-condition polylines in grid coordinates.

    ``fixed_frequencies`` maps sensor index -> pinned value for sensors
    that are not grid axes.  Conditions that do not constrain the free
    axes (after substituting pinned values) are reported as skipped.
    """
    fixed_frequencies = fixed_frequencies or {}
    freq_axes = [(k, name, np.asarray(a)) for k, (name, a) in enumerate(grid.axes)
                 if _axis_sensor(name) is not None]
    if len(freq_axes) not in (1, 2):
        raise ParameterError("overlay needs a grid with 1 or 2 frequency axes")
    lines, skipped = [], []
    for cond in conditions:
        rhs = cond.delta
        free = {}
        ok = True
        for mu, c in enumerate(cond.coefficients):
            if c == 0:
                continue
            slot = next((pos for pos, (_, name, _) in enumerate(freq_axes)
                         if _axis_sensor(name) == mu), None)
            if slot is not None:
                free[slot] = c
            elif mu in fixed_frequencies:
                rhs -= c * fixed_frequencies[mu]
            else:
                ok = False
                break
        rec = {"coefficients": list(cond.coefficients), "delta": cond.delta,
               "order": cond.order}
        if not ok:
            skipped.append({**rec, "note": "involves a sensor that is neither an axis nor pinned"})
            continue
        if not free:
            skipped.append({**rec, "note": "independent of the free axes"})
            continue
        if len(freq_axes) == 1:
            a = free.get(0, 0)
            if a == 0:
                skipped.append({**rec, "note": "independent of the free axes"})
                continue
            x = rhs / a
            ax = freq_axes[0][2]
            if ax.min() - 1e-12 <= x <= ax.max() + 1e-12:
                lines.append({**rec, "points": [[x]]})
            else:
                skipped.append({**rec, "note": "outside axis range"})
            continue
        a, b = free.get(0, 0), free.get(1, 0)
        xs, ys = freq_axes[0][2], freq_axes[1][2]
        seg = _clip_line_to_box(a, b, rhs, (xs.min(), xs.max()), (ys.min(), ys.max()))
        if seg is None:
            skipped.append({**rec, "note": "outside axis range"})
        else:
            lines.append({**rec, "points": seg})
    return {"format": "overlay-1",
            "axes": [name for _, name, _ in freq_axes],
            "lines": lines, "skipped": skipped}


# ---------------------------------------------------------------------------
# filter recommendation


@dataclass(frozen=True)
class FilterRecommendation:
    """A frequency per sensor group, on-condition and real-state-free."""

    frequencies: tuple[float, ...]
    condition: LeapfrogCondition
    margin: float                 # requested, units of linewidth
    achieved_margin: float        # realized min distance / linewidth
    rationale: str = "avoided real-state intersection"
    checks: dict = field(default_factory=dict)


def _cascade_partial_sums(partition, frequencies):
    """Running photon-energy sums of the cascade, bundle by bundle,
    photon by photon; the final total is excluded (it is Delta itself)."""
    sums = []
    acc = 0.0
    for n, w in zip(partition, frequencies):
        for _ in range(n):
            acc += w
            sums.append(acc)
    return sums[:-1]


def _exclusion_distance(partition, frequencies, omega_plus) -> float:
    """Min distance of every single frequency and every cascade partial
    sum to the real-transition set {0, -Op, +Op}."""
    real = (0.0, -omega_plus, omega_plus)
    probes = list(frequencies) + _cascade_partial_sums(partition, frequencies)
    return min(min(abs(p - r) for r in real) for p in probes)


def recommend_filters(partition, delta: float, omega_plus: float,
                      linewidth: float, margin: float = DEFAULT_MARGIN,
                      grid_points: int = 241) -> FilterRecommendation:
    """Frequencies on sum n_mu w_mu = delta clearing all real states.

    Deterministic: maximize the minimum distance of all single
    frequencies and cascade partial sums to {0, +-Op} over a linear
    grid of the free frequencies, tie-broken toward the most symmetric
    (smallest sum of squares) assignment.
    """
    partition = tuple(int(n) for n in partition)
    if not partition or any(n < 1 for n in partition):
        raise ParameterError(f"invalid partition {partition}")
    if margin <= 0 or linewidth <= 0 or omega_plus <= 0:
        raise ParameterError("margin, linewidth and omega_plus must be positive")
    cond = LeapfrogCondition(coefficients=partition, delta=delta, omega_plus=omega_plus)

    nfree = len(partition) - 1
    span = np.linspace(-1.2 * omega_plus, 1.2 * omega_plus, grid_points)
    best = None
    for combo in itertools.product(span, repeat=nfree):
        last = (delta - sum(n * w for n, w in zip(partition, combo))) / partition[-1]
        freqs = tuple(combo) + (last,)
        d = _exclusion_distance(partition, freqs, omega_plus)
        key = (-round(d, 9), round(sum(w * w for w in freqs), 9), freqs)
        if best is None or key < best[0]:
            best = (key, freqs, d)
    _, freqs, dist = best
    achieved = dist / linewidth
    if dist < margin * linewidth:
        raise FeasibilityError(
            f"no assignment clears margin {margin} x linewidth; "
            f"best achievable is {achieved:.3f}",
            best_margin=achieved)
    assert cond.satisfied(freqs, tol=1e-9)
    return FilterRecommendation(
        frequencies=freqs, condition=cond, margin=margin, achieved_margin=achieved,
        checks={"partial_sums": _cascade_partial_sums(partition, freqs),
                "exclusion_distance": dist})

"""Group-size selection from the indirect-access cost model.

For row occupancies ``occ`` and group size ``g`` the exact number of index
reads of a GroupCOO SpMM is ``F(g) = (g + 1) * sum_i ceil(occ_i / g)``: one
AM read (scatter) per group plus ``g`` AK reads (gather) per group.
Relaxing ``ceil(x) ~ x + 1`` gives ``S + S/g + n*g + n`` whose real minimiser
is ``sqrt(S / n)``; candidates are the powers of two around it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .validation import INT

__all__ = [
    "OccProfile",
    "TuneReport",
    "cost_exact",
    "cost_relaxed",
    "cost_relaxed_slope",
    "g_star",
    "candidates",
    "brute_force_optimal",
    "select",
]


@dataclass(frozen=True, eq=False)
class OccProfile:
    """Per-coordinate nonzero counts.

    ``n`` counts the nonempty coordinates unless the profile was built with
    ``literal_n=True``, in which case every coordinate (empty or not) counts.
    """

    occ: np.ndarray
    literal_n: bool = False

    def __post_init__(self):
        occ = np.asarray(self.occ, dtype=INT).reshape(-1)
        if len(occ) and occ.min() < 0:
            raise ValueError("occupancies must be non-negative")
        object.__setattr__(self, "occ", occ)

    @classmethod
    def from_matrix(cls, c, dim: int = 0, literal_n: bool = False) -> "OccProfile":
        from .formats import occupancy
        return cls(occupancy(c, dim), literal_n)

    @property
    def S(self) -> int:
        return int(self.occ.sum())

    @property
    def n(self) -> int:
        return len(self.occ) if self.literal_n else int(np.count_nonzero(self.occ))

    @property
    def max_occ(self) -> int:
        return int(self.occ.max(initial=0))


@dataclass
class TuneReport:
    g_star: float
    candidates: List[Tuple[int, float]]
    chosen: int
    brute_optimal: Optional[Tuple[int, int]] = None
    measured: bool = False
    brute_table: List[Tuple[int, int]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "g_star": self.g_star,
            "candidates": [[g, c] for g, c in self.candidates],
            "chosen": self.chosen,
            "brute_optimal": list(self.brute_optimal) if self.brute_optimal else None,
            "measured": self.measured,
        }


def _check_g(g) -> None:
    if g < 1:
        raise ValueError(f"group size must be >= 1, got {g}")


def n_groups(prof: OccProfile, g: int) -> int:
    _check_g(g)
    return int((-(-prof.occ // int(g))).sum())


def cost_exact(prof: OccProfile, g: int) -> int:
    return (int(g) + 1) * n_groups(prof, g)


def cost_relaxed(prof: OccProfile, g: float) -> float:
    if g <= 0:
        raise ValueError("g must be positive")
    S, n = prof.S, prof.n
    return S + S / g + n * g + n


def cost_relaxed_slope(prof: OccProfile, g: float) -> float:
    """Derivative of :func:`cost_relaxed` with respect to ``g``."""
    return prof.n - prof.S / (g * g)


def g_star(prof: OccProfile) -> float:
    if prof.S == 0 or prof.n == 0:
        return 1.0
    return math.sqrt(prof.S / prof.n)


def _pow2_floor(x: float) -> int:
    p = 1
    while p * 2 <= x:
        p *= 2
    return p


def candidates(prof: OccProfile, gs: Optional[float] = None) -> List[int]:
    """Powers of two bracketing ``g*``, clamped to ``[1, max occ]``.

    The upper clamp is the largest power of two not exceeding ``max occ``, so
    every candidate stays a power of two.
    """
    gs = g_star(prof) if gs is None else gs
    lo = _pow2_floor(max(gs, 1.0))
    hi = lo if lo >= gs else lo * 2
    cap = _pow2_floor(max(prof.max_occ, 1))
    return sorted({min(lo, cap), min(hi, cap)})


def brute_force_optimal(prof: OccProfile) -> Tuple[int, int]:
    """Exact ``argmin F(g)`` over ``g in [1, max occ]``; ties go to the smaller ``g``."""
    table = _brute_table(prof)
    if not table:
        return 1, 0
    return min(table, key=lambda gc: (gc[1], gc[0]))


def _brute_table(prof: OccProfile) -> List[Tuple[int, int]]:
    return [(g, cost_exact(prof, g)) for g in range(1, prof.max_occ + 1)]


def select(prof: OccProfile, evaluator: Optional[Callable[[int], float]] = None,
           brute: bool = True) -> TuneReport:
    """Pick a group size among the power-of-two candidates.

    Candidates are scored by ``evaluator(g)`` (e.g. a measured runtime) when
    given, else by :func:`cost_exact`.  Ties go to the smaller ``g``.
    """
    gs = g_star(prof)
    if prof.S == 0:
        return TuneReport(gs, [(1, 0.0)], 1, None, evaluator is not None)
    scored = []
    for g in candidates(prof, gs):
        cost = float(evaluator(g)) if evaluator is not None else cost_exact(prof, g)
        scored.append((g, cost))
    chosen = min(scored, key=lambda gc: (gc[1], gc[0]))[0]
    report = TuneReport(gs, scored, chosen, measured=evaluator is not None)
    if brute:
        report.brute_table = _brute_table(prof)
        report.brute_optimal = min(report.brute_table, key=lambda gc: (gc[1], gc[0]))
    return report


def profile_from_occ(occ: Sequence[int], literal_n: bool = False) -> OccProfile:
    return OccProfile(np.asarray(occ, dtype=INT), literal_n)

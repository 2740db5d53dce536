"""Rank-one flow towers: cutting numbers, spacers, heights, return times.

A tower is built stage by stage: stage k cuts the current column of height
h_k into p_k equal columns and inserts a spacer of height s_{k+1,j} above
the j-th one, so h_{k+1} = p_k h_k + sum_j s_{k+1,j}.  The return-time
frequencies of stage k are a_{k,j} = j h_k + sbar_k(j) with
sbar_k(j) = s_{k+1,1} + ... + s_{k+1,j}.

Four spacer families are supported: explicit matrices, Ornstein uniform
perturbations, linear staircases (s_{k+1,j} = j a) and exponential
staircases (spacer increments of omega_n).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from . import stochastic


class TowerError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Spacer families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Explicit:
    """Spacer rows s_{k+1,j} >= 0, one row of length p_k per stage."""
    spacers: tuple

    def __post_init__(self):
        rows = tuple(tuple(float(x) for x in row) for row in self.spacers)
        object.__setattr__(self, "spacers", rows)


@dataclass(frozen=True)
class Ornstein:
    """Uniformly perturbed spacers s_{k+1,j} = t_k + x_{k,j} - x_{k,j-1}."""
    t: tuple
    key: tuple = ("ornstein-default",)
    last_factor: float = 1.0   # deterministic x_{k,p_k} = last_factor * t_k

    def __post_init__(self):
        object.__setattr__(self, "t", tuple(float(x) for x in self.t))
        key = self.key if isinstance(self.key, tuple) else (self.key,)
        object.__setattr__(self, "key", key)


@dataclass(frozen=True)
class LinearStaircase:
    """s_{k+1,j} = j * alpha, giving sbar_k(j) = j(j+1) alpha / 2."""
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise TowerError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class ExponentialStaircase:
    """Spacers from increments of omega_n(p) = (m/eps^2) q (e^{eps p / q} - 1).

    ``eps`` entries are exact rationals (the dissociation hypothesis needs
    rational eps); they are converted to float only at evaluation time.
    The cutting numbers q_n are the ``p`` entries of the owning CuttingSpec.
    With ``minus_one`` the stored omega is normalized to omega_n(0) = 0;
    the spacer increments are identical either way.
    """
    m: tuple
    eps: tuple
    minus_one: bool = True

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(float(x) for x in self.m))
        eps = tuple(Fraction(e) for e in self.eps)
        for e in eps:
            if not (0 < e < 1):
                raise TowerError(f"eps must lie in (0,1), got {e}")
        object.__setattr__(self, "eps", eps)


Family = Union[Explicit, Ornstein, LinearStaircase, ExponentialStaircase]


@dataclass(frozen=True)
class CuttingSpec:
    p: tuple
    family: Family

    def __post_init__(self):
        p = tuple(int(x) for x in self.p)
        if any(pk < 2 for pk in p):
            raise TowerError(f"every cutting number must be >= 2, got {p}")
        object.__setattr__(self, "p", p)
        fam = self.family
        if isinstance(fam, Explicit) and len(fam.spacers) < len(p):
            raise TowerError("explicit spacer matrix has fewer rows than cutting stages")
        if isinstance(fam, Ornstein) and len(fam.t) < len(p):
            raise TowerError("Ornstein t sequence shorter than cutting stages")
        if isinstance(fam, ExponentialStaircase) and (
                len(fam.m) < len(p) or len(fam.eps) < len(p)):
            raise TowerError("exponential staircase parameters shorter than cutting stages")


# ---------------------------------------------------------------------------
# Levels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TowerLevel:
    """Stage k of a tower: height h_k, cutting number p_k and the spacers
    s_{k+1,j} (j = 1..p_k) inserted on top of its columns."""

    k: int
    p: int
    h: float
    spacers: np.ndarray
    alpha: float | None = None    # set for linear staircase levels

    def __post_init__(self):
        sp = np.asarray(self.spacers, dtype=float)
        sp.flags.writeable = False
        object.__setattr__(self, "spacers", sp)
        bad = np.nonzero(sp < 0)[0]
        if bad.size:
            j = int(bad[0]) + 1
            raise TowerError(f"negative spacer at stage {self.k}, column {j}: {sp[bad[0]]}")

    @property
    def sbar(self) -> np.ndarray:
        """Cumulative spacers sbar(j), j = 0..p (sbar(0) = 0)."""
        return np.concatenate([[0.0], np.cumsum(self.spacers)])

    @property
    def freq(self) -> np.ndarray:
        """Return times a_{k,j} = j h_k + sbar(j), j = 0..p-1."""
        return np.arange(self.p) * self.h + self.sbar[:self.p]

    @property
    def h_next(self) -> float:
        return self.p * self.h + float(self.spacers.sum())


def _stage_spacers(spec: CuttingSpec, k: int, h_k: float) -> tuple[np.ndarray, float | None]:
    p_k = spec.p[k]
    fam = spec.family
    if isinstance(fam, Explicit):
        row = fam.spacers[k]
        if len(row) != p_k:
            raise TowerError(f"stage {k}: spacer row has {len(row)} entries, need p_k={p_k}")
        return np.asarray(row, dtype=float), None
    if isinstance(fam, Ornstein):
        draw = stochastic.ornstein_draw(k, p_k, fam.t[k], fam.key, last_factor=fam.last_factor)
        return draw.spacers, None
    if isinstance(fam, LinearStaircase):
        return np.arange(1, p_k + 1, dtype=float) * fam.alpha, fam.alpha
    if isinstance(fam, ExponentialStaircase):
        w = omega_exp(fam.m[k], fam.eps[k], p_k, np.arange(p_k + 1), minus_one=fam.minus_one)
        sp = np.diff(w) - h_k
        bad = np.nonzero(sp < 0)[0]
        if bad.size:
            raise TowerError(
                f"stage {k}: omega increment below height at column {int(bad[0]) + 1} "
                f"(need m >= eps*h; here m={fam.m[k]}, eps*h={float(fam.eps[k]) * h_k})")
        return sp, None
    raise TowerError(f"unknown family {fam!r}")


def omega_exp(m: float, eps, q: int, p_values, minus_one: bool = True) -> np.ndarray:
    """omega_n(p) = (m/eps^2) q (e^{eps p / q} - 1), or without the -1."""
    e = float(eps)
    pv = np.asarray(p_values, dtype=float)
    w = (m / e ** 2) * q * np.exp(e * pv / q)
    if minus_one:
        w = w - (m / e ** 2) * q
    return w


def build_tower(spec: CuttingSpec, depth: int) -> list[TowerLevel]:
    """Build stage levels k = 0..depth-1 (heights h_0..h_depth, h_0 = 1).

    ``heights(levels)`` recovers the full height sequence including the
    final h_depth; each level carries the spacers that produce the next
    height, so depth stages need depth cutting numbers.
    """
    if depth < 1:
        raise TowerError(f"depth must be >= 1, got {depth}")
    if len(spec.p) < depth:
        raise TowerError(f"need {depth} cutting numbers, spec has {len(spec.p)}")
    levels = []
    h = 1.0
    for k in range(depth):
        sp, alpha = _stage_spacers(spec, k, h)
        level = TowerLevel(k=k, p=spec.p[k], h=h, spacers=sp, alpha=alpha)
        levels.append(level)
        h = level.h_next
        if not np.isfinite(h):
            raise TowerError(f"height overflow at stage {k + 1}")
    return levels


def heights(levels: Sequence[TowerLevel]) -> np.ndarray:
    """h_0..h_depth for a contiguous list of levels."""
    return np.array([lv.h for lv in levels] + [levels[-1].h_next])


def frequencies(level: TowerLevel) -> np.ndarray:
    """Sorted return-time frequencies of one stage; a_{k,0} = 0 and
    consecutive gaps are >= h_k (each gap is h_k + one spacer)."""
    return level.freq


def subcolumn_frequencies(level: TowerLevel) -> np.ndarray:
    """The same frequencies via the subcolumn-height convention
    d_j = sum_{i<=j} c_i with c_0 = 0, c_i = h + s_i."""
    c = np.concatenate([[0.0], level.h + level.spacers[:level.p - 1]])
    return np.cumsum(c)


def finite_measure_partial_sums(spec: CuttingSpec, depth: int):
    """Partial sums of sum_k (sum_j s_{k+1,j}) / (p_k h_k).

    The invariant measure of the flow is finite iff the full series
    converges.  Returns (partial_sums, flag); the flag is the documented
    heuristic: 'diverging' when the last half of the terms adds more than
    10% of the first half's total (or keeps adding ~constant terms),
    'bounded' otherwise.
    """
    levels = build_tower(spec, depth)
    terms = np.array([lv.spacers.sum() / (lv.p * lv.h) for lv in levels])
    partial = np.cumsum(terms)
    if partial[-1] == 0:
        return partial, "bounded"
    half = partial[max(0, depth // 2 - 1)]
    flag = "diverging" if partial[-1] - half > 0.1 * max(half, 1e-300) else "bounded"
    return partial, flag


def exp_staircase_stage_flags(spec: CuttingSpec, depth: int) -> list[dict]:
    """Per-stage truth values of the staircase growth conditions."""
    if not isinstance(spec.family, ExponentialStaircase):
        raise TowerError("flags only defined for the exponential staircase family")
    levels = build_tower(spec, depth)
    out = []
    for lv in levels:
        m = spec.family.m[lv.k]
        eps = float(spec.family.eps[lv.k])
        out.append({"k": lv.k, **stochastic.exp_staircase_flags(lv.p, m, eps, h_n=lv.h)})
    return out


def tower_to_csv(levels: Sequence[TowerLevel], fp=None) -> str:
    """CSV rows (k, h_k, j, sbar_k(j), a_{k,j})."""
    buf = fp or io.StringIO()
    buf.write("k,h,j,sbar,freq\n")
    for lv in levels:
        sbar = lv.sbar
        freq = lv.freq
        for j in range(lv.p):
            buf.write(f"{lv.k},{float(lv.h)!r},{j},{float(sbar[j])!r},{float(freq[j])!r}\n")
    return buf.getvalue() if fp is None else ""

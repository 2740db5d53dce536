"""Partial generalized Riesz products and their exact Fourier machinery.

A product chain is a finite set of tower stages n_1 < ... < n_L; its density
prod |P_{n_l}|^2 integrates to 1 against every Fejer weight with s below the
smallest stage gap.  Expanding the product gives the word multiset: all sums
sum_k (b_k - a_k) h_k + sbar_k(b_k) - sbar_k(a_k) over column pairs, whose
kernel transform reproduces the quadrature transform exactly and serves as
this module's cross-validation oracle.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import fejerquad, trigpoly
from .fejerquad import PolyProduct
from .tower import TowerLevel
from .trigpoly import TrigPoly, stage_poly

WORD_GUARD = 10 ** 6          # enumeration allowed while prod p_k stays below this
_LOG_SPACE_THRESHOLD = 30


class GuardError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProductChain:
    """Stage indices n_1 < ... < n_L into a built tower, with cached
    stage polynomials."""

    levels: tuple
    indices: tuple

    def __init__(self, levels: Sequence[TowerLevel], indices: Sequence[int]):
        idx = tuple(int(i) for i in indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing, got {idx}")
        if idx and idx[-1] >= len(levels):
            raise ValueError(f"index {idx[-1]} beyond built depth {len(levels)}")
        object.__setattr__(self, "levels", tuple(levels))
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "_polys", tuple(stage_poly(levels[i]) for i in idx))

    @property
    def polys(self) -> tuple:
        return self._polys

    @property
    def length(self) -> int:
        return len(self.indices)

    def integrand(self, power: float = 2.0, refine: str | None = None) -> PolyProduct:
        if refine is None:
            refine = "none" if power == 2.0 else "near-zero"
        return PolyProduct([(p, power) for p in self.polys], refine=refine)

    def max_freq(self) -> float:
        return float(sum(p.max_freq for p in self.polys))


def density(chain: ProductChain, theta) -> np.ndarray:
    """prod_l |P_{n_l}(theta)|^2; evaluated in log space for long chains to
    dodge overflow and underflow of the running product."""
    th = np.asarray(theta, dtype=float)
    scalar = th.ndim == 0
    th = np.atleast_1d(th)
    if chain.length == 0:
        out = np.ones(th.shape)
    elif chain.length <= _LOG_SPACE_THRESHOLD:
        out = np.ones(th.shape)
        for p in chain.polys:
            out *= np.abs(trigpoly.eval_grid(p, th)) ** 2
    else:
        acc = np.zeros(th.shape)
        with np.errstate(divide="ignore"):
            for p in chain.polys:
                acc += np.log(np.abs(trigpoly.eval_grid(p, th)) ** 2)
        out = np.exp(acc)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Word multiset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WordMultiset:
    """All frequency words of prod_{k<=n} |P_k|^2, with multiplicity.

    ``values`` is sorted and has length prod p_k^2; zero appears at least
    prod p_k times (the diagonal tuples) and the multiset is symmetric
    under negation.
    """

    n: int
    values: np.ndarray

    @property
    def size(self) -> int:
        return len(self.values)

    def counts(self):
        vals, counts = np.unique(self.values, return_counts=True)
        return vals, counts

    def multiplicity(self, value: float, atol: float = 1e-9) -> int:
        return int(np.count_nonzero(np.abs(self.values - value) <= atol))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def word_multiset(levels: Sequence[TowerLevel], n: int) -> WordMultiset:
    """Enumerate the word multiset of stages 0..n by brute force.

    Guarded: prod p_k must stay below WORD_GUARD and the full multiset
    (of size prod p_k^2) below a memory cap.
    """
    if n + 1 > len(levels):
        raise ValueError(f"need levels 0..{n}, have {len(levels)}")
    prod_p = 1
    for lv in levels[:n + 1]:
        prod_p *= lv.p
    if prod_p > WORD_GUARD:
        raise GuardError(f"prod p_k = {prod_p} exceeds the enumeration guard {WORD_GUARD}")
    if prod_p ** 2 > 4 * 10 ** 7:
        raise GuardError(f"multiset size {prod_p ** 2} exceeds the memory cap")
    words = np.array([0.0])
    for lv in levels[:n + 1]:
        freq = lv.freq
        stage_words = (freq[:, None] - freq[None, :]).ravel()
        words = (words[:, None] + stage_words[None, :]).ravel()
    words = np.sort(words)
    words.flags.writeable = False
    return WordMultiset(n=n, values=words)


def ft_combinatorial(levels: Sequence[TowerLevel], n: int, t, s: float):
    """(1 / prod p_k) sum_{m in words} (1 - |t - m|/s)_+ : the exact kernel
    transform of the stage-0..n density, used as the quadrature oracle."""
    ws = word_multiset(levels, n)
    prod_p = 1
    for lv in levels[:n + 1]:
        prod_p *= lv.p
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t_arr.shape)
    for i, ti in enumerate(t_arr):
        out[i] = fejerquad.kernel_ft(s, ti - ws.values).sum() / prod_p
    return float(out[0]) if np.ndim(t) == 0 else out


# ---------------------------------------------------------------------------
# Radon-Nikodym partial ratios
# ---------------------------------------------------------------------------

def radon_ratio(chain_p: ProductChain, chain_q: ProductChain, theta, L: int,
                perturb: float = 1e-9):
    """R_L(theta) = prod_{j<=L} |P_j(theta)| / |Q_j(theta)|.

    Points where some Q_j vanishes are perturbed by ``perturb`` (never
    clamped) and reported; returns (values, n_perturbed).
    """
    if L > chain_p.length or L > chain_q.length:
        raise ValueError(f"L={L} exceeds chain length")
    th = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
    scalar = np.ndim(theta) == 0
    perturbed = 0
    for _ in range(3):
        den = np.ones(th.shape)
        for q in chain_q.polys[:L]:
            den *= np.abs(trigpoly.eval_grid(q, th))
        hit = den == 0.0
        if not hit.any():
            break
        th[hit] += perturb
        perturbed += int(hit.sum())
    num = np.ones(th.shape)
    for p in chain_p.polys[:L]:
        num *= np.abs(trigpoly.eval_grid(p, th))
    vals = num / den
    return (float(vals[0]) if scalar else vals), perturbed


def l1_ratio_gap(chain_p: ProductChain, chain_q: ProductChain, L: int, s: float,
                 tol: float = 1e-5) -> float:
    """int |R_{L+1} - R_L| dlambda_s, the Cauchy-trend diagnostic of the
    ratio sequence (reference weight lambda_s, not the unknown limit).

    Denominator chains shorter than L+1 are padded with 1 (the lambda_s
    reference); isolated nonfinite ratio points (denominator zeros) are
    dropped, matching the perturbation rule of ``radon_ratio``.
    """
    if L + 1 > chain_p.length:
        raise ValueError("chain too short for the requested gap")
    num_L = PolyProduct([(p, 1.0) for p in chain_p.polys[:L]])
    num_L1 = PolyProduct([(p, 1.0) for p in chain_p.polys[:L + 1]])
    den_L = PolyProduct([(q, 1.0) for q in chain_q.polys[:min(L, chain_q.length)]])
    den_L1 = PolyProduct([(q, 1.0) for q in chain_q.polys[:min(L + 1, chain_q.length)]])

    def gap(nl, nl1, dl, dl1):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.abs(nl1 / dl1 - nl / dl)
        return np.where(np.isfinite(out), out, 0.0)

    integrand = fejerquad.Compose(gap, num_L, num_L1, den_L, den_L1,
                                  refine="near-zero",
                                  carrier_fn=lambda nl, nl1, dl, dl1: nl1)
    return fejerquad.integrate(integrand, s, tol=tol).real


# ---------------------------------------------------------------------------
# Scaling to dynamical origin
# ---------------------------------------------------------------------------

def check_dynamical_origin(polys: Sequence[TrigPoly]) -> bool:
    """Dynamical-origin gap conditions: with h_0 = 1 and
    h_k = max_freq_k + h_{k-1}, every stage needs r_{1,k} >= h_{k-1} and
    r_{i+1,k} - r_{i,k} >= h_{k-1}."""
    h = 1.0
    for poly in polys:
        r = poly.freqs
        if r[0] != 0.0:
            raise ValueError("polynomials must start at frequency 0")
        nonzero = r[1:]
        if len(nonzero) == 0:
            continue
        if nonzero[0] < h or (len(nonzero) > 1 and np.min(np.diff(nonzero)) < h):
            return False
        h = float(nonzero[-1]) + h
    return True


def scale_dissociate(polys: Sequence[TrigPoly]):
    """Dilate each polynomial by rho_j so the scaled family is dissociated
    and satisfies the dynamical-origin gap conditions.

    The induction: with heights h_0 = 1, h_j = rho_j r_max,j + h_{j-1} and
    H_j = sum_{i<=j} rho_i r_max,i + h_{j-1}, take rho_1 = 1 and
    rho_{j+1} = max(2 H_j, h_j / min_gap_{j+1}); the first term forces
    dissociation, the second the gap conditions r_{1} >= h_j and
    consecutive gaps >= h_j after scaling.  Returns (rhos, scaled).
    """
    rhos: list[float] = []
    scaled: list[TrigPoly] = []
    heights = [1.0]              # h_0, h_1, ...
    scaled_max = []              # rho_i * r_max,i
    for poly in polys:
        if poly.freqs[0] != 0.0:
            raise ValueError("each polynomial must have base frequency 0")
        if len(poly.freqs) > 1:
            gaps = np.diff(poly.freqs)
            min_gap = float(min(poly.freqs[1], gaps.min()))
        else:
            min_gap = 1.0
        if not rhos:
            rho = max(1.0, heights[-1] / min_gap)
        else:
            H_prev = sum(scaled_max) + heights[-2]
            rho = max(2.0 * H_prev, heights[-1] / min_gap)
        sp = poly.scaled(rho)
        rhos.append(rho)
        scaled.append(sp)
        scaled_max.append(sp.max_freq)
        heights.append(sp.max_freq + heights[-1])
    return rhos, scaled


def formal_product_frequencies(polys: Sequence[TrigPoly]) -> np.ndarray:
    """All frequency sums of the formal expansion of prod |P_j|^2 (one pick
    of a frequency difference per factor); dissociation means these are all
    distinct across distinct picks."""
    sums = np.array([0.0])
    for poly in polys:
        diffs = (poly.freqs[:, None] - poly.freqs[None, :]).ravel()
        sums = (sums[:, None] + diffs[None, :]).ravel()
    return sums


def is_dissociated(polys: Sequence[TrigPoly]) -> bool:
    """True when the formal expansion of prod (1 + R_j), with R_j the
    off-diagonal words of |P_j|^2, has all distinct frequencies.

    Each factor is either skipped or contributes one off-diagonal
    difference t_a - t_b (a != b); dissociation demands that all nonempty
    selections give distinct nonzero frequency sums.
    """
    sums = np.array([0.0])        # empty selection marker, removed at the end
    for poly in polys:
        n = len(poly.freqs)
        diffs = (poly.freqs[:, None] - poly.freqs[None, :])[~np.eye(n, dtype=bool)]
        choices = np.concatenate([[0.0], diffs])   # 0 = skip this factor
        sums = (sums[:, None] + choices[None, :]).ravel()
    nonempty = np.delete(sums, 0)  # index 0 is the all-skip selection
    vals, counts = np.unique(np.round(nonempty, 9), return_counts=True)
    return bool(np.all(counts == 1) and not np.any(np.abs(vals) <= 1e-9))


def words_to_csv(ws: WordMultiset, fp=None) -> str:
    buf = fp or io.StringIO()
    buf.write("value,multiplicity\n")
    vals, counts = ws.counts()
    for v, c in zip(vals, counts):
        buf.write(f"{float(v)!r},{int(c)}\n")
    return buf.getvalue() if fp is None else ""

"""Quantitative singularity and absolute-continuity diagnostics.

Everything here instantiates the checkable quantities behind the
singularity criteria: Bourgain-type product norms, the Cauchy-Schwarz
subset inequality, the limsup inequality, Guenais partial sums, cutting
parameter tests, Fourier test points of the Peyriere type, and the
Farey-bump machinery for linear staircases.  Verdicts are diagnostics, not
proofs: they report whether a criterion's hypothesis pattern is visible at
the computed depth.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import fejerquad, riesz
from .fejerquad import Compose, PolyProduct
from .tower import TowerLevel
from .trigpoly import dirichlet, stage_poly

KP_CONSTANT = 3.0 / (4.0 * math.sqrt(2.0) * math.pi ** 2)


@dataclass
class CriterionReport:
    name: str
    tower_id: str
    params: dict
    series: dict = field(default_factory=dict)
    verdict: str = "diagnostic"

    def to_csv(self, fp=None) -> str:
        buf = fp or io.StringIO()
        keys = list(self.series)
        rows = max(len(np.atleast_1d(v)) for v in self.series.values()) if keys else 0
        buf.write(",".join(["index"] + keys) + "\n")
        for i in range(rows):
            cells = [str(i)]
            for k in keys:
                v = np.atleast_1d(self.series[k])
                cells.append(repr(v[i].item()) if i < len(v) else "")
            buf.write(",".join(cells) + "\n")
        return buf.getvalue() if fp is None else ""


class QuadratureFault(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Bourgain machinery
# ---------------------------------------------------------------------------

def bourgain_sequence(levels: Sequence[TowerLevel], indices: Sequence[int],
                      s: float, tol: float = 1e-5) -> np.ndarray:
    """beta_l = int prod_{j<=l} |P_{n_j}| dlambda_s for l = 0..L (beta_0 = 1).

    A decay trend of beta_l is the singularity signature; each value lies
    in (0, 1] by Cauchy-Schwarz against the exact normalization.
    """
    chain = riesz.ProductChain(levels, indices)
    betas = [1.0]
    for ell in range(1, chain.length + 1):
        integrand = PolyProduct([(p, 1.0) for p in chain.polys[:ell]], refine="near-zero")
        betas.append(fejerquad.integrate(integrand, s, tol=tol).real)
    return np.array(betas)


def subset_inequality(levels: Sequence[TowerLevel], count: int, s: float,
                      tol: float = 1e-6):
    """Check (int prod_{k<count} |P_k| dlambda_s)^2 <= int prod_{k in N} |P_k|
    for every subset N of {0..count-1}; returns (slacks, full_value) where
    slack = subset integral - full^2."""
    polys = [stage_poly(lv) for lv in levels[:count]]
    full = fejerquad.integrate(
        PolyProduct([(p, 1.0) for p in polys], refine="near-zero"), s, tol=tol).real
    slacks = {}
    for mask in range(1, 2 ** count):
        subset = tuple(k for k in range(count) if mask & (1 << k))
        integrand = PolyProduct([(polys[k], 1.0) for k in subset], refine="near-zero")
        val = fejerquad.integrate(integrand, s, tol=tol).real
        slacks[subset] = val - full ** 2
    return slacks, full


def limsup_inequality_check(levels: Sequence[TowerLevel], indices: Sequence[int],
                            m: int, s: float, tol: float = 1e-5) -> dict:
    """Slack of int Q|P_m| <= (int Q + int Q|P_m|^2)/2 - (int Q||P_m|^2 - 1|)^2 / 8
    with Q = prod_{j} |P_{n_j}|, for a later stage m.
    """
    if indices and m <= max(indices):
        raise ValueError(f"stage m={m} must exceed every chain index")
    chain = riesz.ProductChain(levels, indices)
    pm = stage_poly(levels[m])
    q_factors = [(p, 1.0) for p in chain.polys]
    Q = PolyProduct(q_factors, refine="near-zero")
    QPm = PolyProduct(q_factors + [(pm, 1.0)], refine="near-zero")
    QPm2 = PolyProduct(q_factors + [(pm, 2.0)],
                       refine="near-zero" if q_factors else "none")
    Qdev = Compose(lambda q, v: q * np.abs(v - 1.0),
                   PolyProduct(q_factors), PolyProduct([(pm, 2.0)]),
                   refine="sign-change", carrier_fn=lambda q, v: v - 1.0)
    i_q = fejerquad.integrate(Q, s, tol=tol).real
    i_qpm = fejerquad.integrate(QPm, s, tol=tol).real
    i_qpm2 = fejerquad.integrate(QPm2, s, tol=tol).real
    i_qdev = fejerquad.integrate(Qdev, s, tol=tol).real
    slack = 0.5 * (i_q + i_qpm2) - 0.125 * i_qdev ** 2 - i_qpm
    return {"int_Q": i_q, "int_QPm": i_qpm, "int_QPm2": i_qpm2,
            "int_Qdev": i_qdev, "slack": slack}


def guenais_sum(levels: Sequence[TowerLevel], count: int, s: float,
                tol: float = 1e-6):
    """Partial sums of sum_k sqrt(1 - ||P_k||_1^2); a finite limit signals an
    absolutely continuous component, divergence is the flatness obstruction.

    Raises QuadratureFault if a computed norm exceeds 1 beyond tolerance
    (Cauchy-Schwarz guarantees ||P_k||_1 <= 1).
    """
    terms = []
    for lv in levels[:count]:
        norm1 = fejerquad.integrate(
            PolyProduct([(stage_poly(lv), 1.0)], refine="near-zero"), s, tol=tol).real
        if norm1 > 1 + 1e-6:
            raise QuadratureFault(f"||P_{lv.k}||_1 = {norm1} exceeds 1")
        terms.append(math.sqrt(max(0.0, 1.0 - min(norm1, 1.0) ** 2)))
    partial = np.cumsum(terms)
    flag = "diverging" if (len(terms) >= 4 and
                           partial[-1] - partial[len(terms) // 2 - 1]
                           > 0.1 * max(partial[len(terms) // 2 - 1], 1e-300)) else "bounded"
    return partial, flag


# ---------------------------------------------------------------------------
# Cutting-parameter tests
# ---------------------------------------------------------------------------

def klemes_reinhold_check(p_seq: Sequence[int], N: int):
    """Partial sums of sum 1/p_n^2 with the documented divergence rule:
    the second half adding more than 10% of the first half's total flags
    'diverging' (singular spectrum diagnostic)."""
    p = np.asarray(list(p_seq)[:N], dtype=float)
    partial = np.cumsum(1.0 / p ** 2)
    half = partial[max(0, len(p) // 2 - 1)]
    diverging = partial[-1] - half > 0.1 * max(half, 1e-300)
    verdict = ("singular by divergence of sum 1/p_n^2 (diagnostic)"
               if diverging else "criterion inconclusive")
    return partial, verdict


def klemes_ratio(levels: Sequence[TowerLevel]):
    """p_n^3 / h_n per stage; a vanishing trend is the staircase
    singularity hypothesis."""
    ratios = np.array([lv.p ** 3 / lv.h for lv in levels])
    n = len(ratios)
    trend = "to-zero" if n >= 3 and ratios[-1] < 0.1 * ratios[max(0, n // 2 - 1)] else "inconclusive"
    return ratios, trend


# ---------------------------------------------------------------------------
# Peyriere test points
# ---------------------------------------------------------------------------

def peyriere_points(levels: Sequence[TowerLevel], indices: Sequence[int],
                    s: float, tol: float = 2e-5) -> CriterionReport:
    """Fourier transform of the chain product at the test points
    t_k = d_{n_k} (largest return-time frequency of stage n_k).

    Checks: nu_hat(+-t_k) = 1/p_{n_k}; nu_hat(t_j +- t_k) =
    nu_hat(t_j) nu_hat(t_k).  Chain indices must be 3 apart; the pairwise
    separations |t_j +- t_k| > s are verified at runtime.  Depth stability
    (adding one more chain stage leaves the values at these points
    unchanged) is checked against the exact word-multiset transform.
    """
    idx = tuple(indices)
    if any(b - a < 3 for a, b in zip(idx, idx[1:])):
        raise ValueError("chain indices must be at least 3 apart")
    chain = riesz.ProductChain(levels, idx)
    tpoints = np.array([levels[i].freq[-1] for i in idx])
    seps = np.abs(np.concatenate([
        tpoints[:, None] - tpoints[None, :],
        tpoints[:, None] + tpoints[None, :]], axis=1)).ravel()
    if np.any((seps > 0) & (seps <= s)):
        raise ValueError("test points violate the separation hypothesis |t_j - t_k| > s")

    L = len(idx)
    ts = [0.0] + list(tpoints) + list(-tpoints)
    pair_rows = []
    for a in range(L):
        for b in range(a + 1, L):
            for sign in (+1.0, -1.0):
                pair_rows.append((a, b, sign, tpoints[b] + sign * tpoints[a]))
    ts += [row[3] for row in pair_rows]
    vals, meta = fejerquad.weighted_ft_many(chain.integrand(), np.array(ts), s, tol=tol)
    single = {i: vals[1 + i] for i in range(L)}
    report = CriterionReport(
        name="peyriere", tower_id=f"chain{idx}", params={"s": s, "tol": tol},
    )
    rows_t, rows_val, rows_ref, rows_kind = [], [], [], []
    rows_t.append(0.0); rows_val.append(vals[0].real); rows_ref.append(1.0); rows_kind.append("unit")
    for i in range(L):
        p = levels[idx[i]].p
        rows_t.append(tpoints[i]); rows_val.append(vals[1 + i].real)
        rows_ref.append(1.0 / p); rows_kind.append("single+")
        rows_t.append(-tpoints[i]); rows_val.append(vals[1 + L + i].real)
        rows_ref.append(1.0 / p); rows_kind.append("single-")
    for j, (a, b, sign, t) in enumerate(pair_rows):
        v = vals[1 + 2 * L + j]
        rows_t.append(t); rows_val.append(v.real)
        rows_ref.append((single[a] * single[b]).real); rows_kind.append("pair")
    report.series = {"t": np.array(rows_t), "nu_hat": np.array(rows_val),
                     "reference": np.array(rows_ref),
                     "abs_dev": np.abs(np.array(rows_val) - np.array(rows_ref))}
    report.params["max_abs_dev"] = float(report.series["abs_dev"].max())

    # depth stability via the exact transform: one more stage, same points
    stab_idx = idx + (idx[-1] + 3,)
    if stab_idx[-1] < len(levels):
        base = np.array([riesz.ft_combinatorial(_chain_levels(levels, idx), len(idx) - 1, t, s)
                         for t in rows_t])
        deeper = np.array([riesz.ft_combinatorial(_chain_levels(levels, stab_idx),
                                                  len(stab_idx) - 1, t, s)
                           for t in rows_t])
        report.params["depth_stability"] = float(np.max(np.abs(base - deeper)))
    return report


def _chain_levels(levels, indices):
    """Relabel the chain stages as consecutive levels so the word machinery
    enumerates only the chain factors."""
    return [TowerLevel(k=i, p=levels[n].p, h=levels[n].h, spacers=levels[n].spacers)
            for i, n in enumerate(indices)]


# ---------------------------------------------------------------------------
# Farey bumps for the linear staircase
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpFamily:
    """Disjoint Farey-centered indicator bumps in x = alpha theta / 2 pi.

    For k in [p/4, 3p/4], the bump group f_k is the indicator of
    |x - j/k| <= 1/(2 p^2) over reduced fractions j/k; distinct centers are
    at least 16/(9 p^2) apart, so all supports are pairwise disjoint and
    sum_k f_k <= 1 everywhere.
    """

    p: int
    alpha: float
    ks: np.ndarray          # group index per bump (sorted by center)
    num: np.ndarray         # center numerators
    den: np.ndarray         # center denominators
    freqs: np.ndarray       # a_{n,k} for the k of each bump
    half_width: float       # in x units

    @property
    def count(self) -> int:
        return len(self.num)

    def centers(self) -> np.ndarray:
        return self.num / self.den

    def disjoint_exact(self) -> bool:
        """Exact integer check that adjacent supports cannot meet:
        j'/k' - j/k > 1/p^2  <=>  (j'k - jk') p^2 > k k'."""
        n = self.num.astype(object)
        d = self.den.astype(object)
        lhs = (n[1:] * d[:-1] - n[:-1] * d[1:]) * (self.p ** 2)
        rhs = d[1:] * d[:-1]
        return bool(np.all(lhs > rhs))

    def coverage_mass(self) -> float:
        """int sum_k f_k dx over one period = (#bumps) / p^2."""
        return self.count / self.p ** 2


def bump_family(level: TowerLevel, alpha: float | None = None) -> BumpFamily:
    """Build the Farey bumps of one staircase stage (p_n >= 8)."""
    p = level.p
    if p < 8:
        raise ValueError(f"need p_n >= 8, got {p}")
    if alpha is None:
        alpha = level.alpha
    if alpha is None:
        raise ValueError("alpha unknown: level is not from a staircase family")
    lo, hi = int(math.ceil(p / 4)), int(math.floor(3 * p / 4))
    freq = level.freq
    nums, dens, ks = [], [], []
    for k in range(lo, hi + 1):
        j = np.arange(1, k)
        j = j[np.gcd(j, k) == 1]
        nums.append(j)
        dens.append(np.full(len(j), k))
        ks.append(np.full(len(j), k))
    num = np.concatenate(nums); den = np.concatenate(dens); kk = np.concatenate(ks)
    order = np.lexsort((den, num * 1.0 / den))
    num, den, kk = num[order], den[order], kk[order]
    return BumpFamily(p=p, alpha=float(alpha), ks=kk, num=num, den=den,
                      freqs=freq[kk], half_width=1.0 / (2 * p ** 2))


def bump_eval(family: BumpFamily, theta):
    """(sum_k f_{n,k}(theta), F_n(theta)) with
    F_n = sum_k e^{i a_{n,k} theta} f_{n,k}; since supports are disjoint,
    the sum is 0/1-valued and |F_n| <= 1."""
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.mod(family.alpha * th / (2 * np.pi), 1.0)
    centers = family.centers()
    pos = np.searchsorted(centers, x)
    cover = np.zeros(th.shape)
    F = np.zeros(th.shape, dtype=complex)
    for cand in (pos - 1, pos):
        ok = (cand >= 0) & (cand < family.count)
        i = np.where(ok, cand, 0)
        hit = ok & (np.abs(x - centers[i]) <= family.half_width)
        cover = np.maximum(cover, hit.astype(float))
        F = np.where(hit, np.exp(1j * family.freqs[i] * th), F)
    if np.ndim(theta) == 0:
        return float(cover[0]), complex(F[0])
    return cover, F


def kp_integrals(level: TowerLevel, s: float, radius: float = 200.0,
                 alpha: float | None = None) -> dict:
    """Finite-radius display of the staircase criterion integrals with
    Q = 1: the diagonal part Re(I_n) (bounded below asymptotically by
    3/(4 sqrt2 pi^2), shown alongside) and the cross part |II_n| (sent to
    zero by the h_n >> p_n^3 regime).  No asymptotic extrapolation.

    I_n = (1/p) int sum_k D_{p-k}(k theta alpha) f_{n,k} dlambda_s is
    integrated panel-exactly on the bump supports.  II_n carries phases
    e^{i(a_k - a_k') theta} far above the bump width, so each bump interval
    is integrated in closed form against a frozen kernel value (leading
    order in the bump width).
    """
    fam = bump_family(level, alpha)
    p = level.p
    alpha = fam.alpha
    period = 2 * np.pi / alpha
    glx, glw = np.polynomial.legendre.leggauss(12)
    freq = level.freq
    i_n = 0.0 + 0.0j
    ii_n = 0.0 + 0.0j
    n_periods = int(math.ceil(radius / period))
    centers = fam.centers()
    half_t = fam.half_width * period
    signed_ks = [k for k in range(1, p)] + [-k for k in range(1, p)]
    for m in range(-n_periods, n_periods + 1):
        mid_all = (centers + m) * period
        nodes = mid_all[:, None] + half_t * glx[None, :]
        wts = half_t * glw
        ker = fejerquad.kernel(s, nodes)
        for b in range(fam.count):
            k = int(fam.ks[b])
            th = nodes[b]
            w = wts * ker[b]
            i_n += (dirichlet(p - k, k * th * alpha) * w).sum() / p
            # cross terms: closed form per Dirichlet component, kernel frozen
            c = mid_all[b]
            k_center = fejerquad.kernel(s, c)
            for kq in signed_ks:
                if kq == k:
                    continue
                a_diff = freq[abs(kq)] * np.sign(kq) - freq[k]
                mm = np.arange(p - abs(kq))
                nu = a_diff + np.sign(kq) * mm * abs(kq) * alpha
                contrib = 2 * half_t * np.sinc(nu * half_t / np.pi) * np.exp(1j * nu * c)
                ii_n += k_center * contrib.sum() / p
    return {"re_I_n": float(i_n.real), "abs_II_n": float(abs(ii_n)),
            "kp_constant": KP_CONSTANT, "radius": radius}


# ---------------------------------------------------------------------------
# Totients
# ---------------------------------------------------------------------------

def totient_sieve(n: int) -> np.ndarray:
    """phi(0..n) by the multiplicative sieve."""
    if n > 10 ** 8:
        raise MemoryError(f"totient sieve guard: {n} > 1e8")
    phi = np.arange(n + 1, dtype=np.int64)
    for p in range(2, n + 1):
        if phi[p] == p:   # p is prime
            phi[p::p] -= phi[p::p] // p
    return phi


def totient_sum(x: int) -> int:
    """sum_{1<=k<=x} phi(k), exactly; asymptotically (3/pi^2) x^2."""
    if x < 1:
        return 0
    return int(totient_sieve(int(x))[1:].sum())

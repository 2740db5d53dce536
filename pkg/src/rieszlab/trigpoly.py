"""Trigonometric polynomials with real nonnegative frequencies.

Values follow the angular convention value(theta) = sum_j c_j e^{i w_j theta}.
Evaluation switches to exactly rounded accumulation (math.fsum on real and
imaginary parts) above the term-count threshold where naive summation of
near-cancelling oscillatory sums loses digits.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .tower import TowerLevel

COMPENSATED_THRESHOLD = 10_000


@dataclass(frozen=True)
class TrigPoly:
    freqs: np.ndarray     # strictly increasing, >= 0
    coeffs: np.ndarray    # complex

    def __post_init__(self):
        fr = np.asarray(self.freqs, dtype=float)
        co = np.asarray(self.coeffs, dtype=complex)
        if fr.ndim != 1 or co.shape != fr.shape:
            raise ValueError("freqs and coeffs must be 1-d arrays of equal length")
        if fr.size == 0:
            raise ValueError("empty polynomial")
        if np.any(fr < 0):
            raise ValueError("frequencies must be nonnegative")
        if np.any(np.diff(fr) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        fr.flags.writeable = False
        co.flags.writeable = False
        object.__setattr__(self, "freqs", fr)
        object.__setattr__(self, "coeffs", co)

    @property
    def n_terms(self) -> int:
        return len(self.freqs)

    @property
    def max_freq(self) -> float:
        return float(self.freqs[-1])

    def __call__(self, theta):
        return eval_poly(self, theta)

    def scaled(self, rho: float) -> "TrigPoly":
        """Same coefficients at dilated frequencies rho * w_j."""
        return TrigPoly(self.freqs * rho, self.coeffs)


def stage_poly(level: TowerLevel) -> TrigPoly:
    """P_k with p_k unit-weight return-time phases, normalized to
    sum |c_j|^2 = 1: coefficients 1/sqrt(p_k) at frequencies a_{k,j}."""
    return TrigPoly(level.freq, np.full(level.p, 1.0 / math.sqrt(level.p), dtype=complex))


def eval_poly(poly: TrigPoly, theta):
    """value(theta); compensated accumulation above the term threshold."""
    if np.ndim(theta) == 0:
        terms = poly.coeffs * np.exp(1j * poly.freqs * float(theta))
        if poly.n_terms >= COMPENSATED_THRESHOLD:
            return complex(math.fsum(terms.real), math.fsum(terms.imag))
        return complex(terms.sum())
    return eval_grid(poly, np.asarray(theta, dtype=float))


def eval_grid(poly: TrigPoly, thetas: np.ndarray) -> np.ndarray:
    """Vectorized evaluation on a grid; term-chunked Kahan accumulation
    keeps the compensated contract for large polynomials."""
    thetas = np.asarray(thetas, dtype=float)
    n = poly.n_terms
    if n < COMPENSATED_THRESHOLD:
        chunk = max(1, 4_000_000 // max(len(thetas), 1))
        out = np.zeros(thetas.shape, dtype=complex)
        for st in range(0, n, chunk):
            out += np.exp(1j * np.outer(thetas, poly.freqs[st:st + chunk])) @ poly.coeffs[st:st + chunk]
        return out
    out = np.zeros(thetas.shape, dtype=complex)
    comp = np.zeros(thetas.shape, dtype=complex)     # Kahan carry
    chunk = max(1, 2_000_000 // max(len(thetas), 1))
    for st in range(0, n, chunk):
        part = np.exp(1j * np.outer(thetas, poly.freqs[st:st + chunk])) @ poly.coeffs[st:st + chunk]
        y = part - comp
        t = out + y
        comp = (t - out) - y
        out = t
    return out


def dirichlet(ell: int, theta):
    """D_ell(theta) = sum_{j<ell} e^{i j theta}.

    Closed form (e^{i ell theta} - 1)/(e^{i theta} - 1) away from 2 pi Z;
    near the singular set the direct sum takes over.
    """
    if ell < 1:
        raise ValueError(f"dirichlet length must be >= 1, got {ell}")
    th = np.asarray(theta, dtype=float)
    scalar = th.ndim == 0
    th = np.atleast_1d(th)
    denom = np.expm1(1j * th)
    out = np.empty(th.shape, dtype=complex)
    small = np.abs(denom) < 1e-8
    ok = ~small
    out[ok] = np.expm1(1j * ell * th[ok]) / denom[ok]
    if small.any():
        j = np.arange(ell)
        out[small] = np.exp(1j * np.outer(th[small], j)).sum(axis=1)
    return out[0] if scalar else out


def staircase_decomposition(level: TowerLevel, theta):
    """Split |P_n(theta)|^2 - 1 = g_n + conj(g_n) for a linear staircase
    stage, with g_n(theta) = (1/p) sum_{k=1}^{p-1} e^{i a_{n,k} theta}
    D_{p-k}(k theta alpha).

    Returns (g_n + conj(g_n), |P_n(theta)|^2 - 1); the two agree pointwise.
    """
    if level.alpha is None:
        raise ValueError("level is not from a linear staircase family")
    alpha = level.alpha
    p = level.p
    th = np.asarray(theta, dtype=float)
    scalar = th.ndim == 0
    th = np.atleast_1d(th)
    freq = level.freq
    g = np.zeros(th.shape, dtype=complex)
    for k in range(1, p):
        g += np.exp(1j * freq[k] * th) * dirichlet(p - k, k * th * alpha)
    g /= p
    direct = np.abs(eval_grid(stage_poly(level), th)) ** 2 - 1.0
    both = g + np.conj(g)
    if scalar:
        return complex(both[0]), float(direct[0])
    return both, direct


def poly_to_csv(poly: TrigPoly, fp=None) -> str:
    """CSV rows (frequency, re, im)."""
    buf = fp or io.StringIO()
    buf.write("freq,re,im\n")
    for w, c in zip(poly.freqs, poly.coeffs):
        buf.write(f"{float(w)!r},{float(c.real)!r},{float(c.imag)!r}\n")
    return buf.getvalue() if fp is None else ""

"""Keyed random spacers, centered polynomials, CLT experiments, KS machinery.

Every random quantity here is a pure function of an explicit key tuple.
Streams are generated with the counter-based Philox generator keyed by a
SHA-256 digest of the key parts, so regeneration is bit-identical and
parallel sample generation equals serial generation draw for draw.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm


def key128(*parts) -> int:
    """Derive a 128-bit Philox key from arbitrary key parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def generator(*parts) -> np.random.Generator:
    """Fresh counter-based generator for the given key parts."""
    return np.random.Generator(np.random.Philox(key=key128(*parts)))


def uniform_offsets(count: int, half_width: float, *key_parts) -> np.ndarray:
    """iid uniforms on [-half_width, half_width], keyed."""
    g = generator(*key_parts)
    return g.uniform(-half_width, half_width, size=count)


# ---------------------------------------------------------------------------
# Random spacer draws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrnsteinDraw:
    """One stage of uniformly perturbed spacers.

    ``x`` has length ``p + 1``: x[0] = 0, x[1..p-1] are iid uniform on
    [-t/2, t/2], and x[p] is the deterministic last offset (``factor * t``).
    """

    k: int
    p: int
    t: float
    x: np.ndarray
    key: tuple = field(default=())

    @property
    def spacers(self) -> np.ndarray:
        """s_j = t + x_j - x_{j-1} for j = 1..p; each lies in [0, 2t]."""
        return self.t + np.diff(self.x)

    @property
    def frequencies(self) -> np.ndarray:
        """Return times j*(h+t) + x_j, j = 0..p-1, for unit base height."""
        j = np.arange(self.p)
        return j * (1.0 + self.t) + self.x[:self.p]


def ornstein_draw(k: int, p_k: int, t_k: float, key, last_factor: float = 1.0) -> OrnsteinDraw:
    """Draw the stage-k offsets x_{k,j} and induced spacers.

    The last offset x_{k,p_k} is deterministic (``last_factor * t_k``), so the
    height recursion h_{k+1} = p_k (h_k + t_k) + x_{k,p_k} does not depend on
    the key.
    """
    if t_k <= 0:
        raise ValueError(f"t_k must be positive, got {t_k}")
    key_parts = key if isinstance(key, tuple) else (key,)
    x = np.empty(p_k + 1)
    x[0] = 0.0
    if p_k > 1:
        x[1:p_k] = uniform_offsets(p_k - 1, t_k / 2, *key_parts, "ornstein", k)
    x[p_k] = last_factor * t_k
    x.flags.writeable = False
    return OrnsteinDraw(k=k, p=p_k, t=t_k, x=x, key=key_parts)


# ---------------------------------------------------------------------------
# Centered polynomials
# ---------------------------------------------------------------------------

def sinc(x):
    """sin(x)/x with the removable singularity filled in."""
    return np.sinc(np.asarray(x) / np.pi)


def centered_poly(draw: OrnsteinDraw, theta: float, h: float = 1.0) -> complex:
    """P'_k(theta) = P_k(theta) - E P_k(theta).

    The expectation over a fresh draw is the deterministic comb
    (1/sqrt p) sum_j e^{i j (h+t) theta} sinc(t theta / 2); subtracting it
    centers the polynomial, and at theta = 0 the value is exactly 0.
    """
    j = np.arange(draw.p)
    base = j * (h + draw.t) * theta
    val = np.exp(1j * (base + theta * draw.x[:draw.p])).sum()
    mean = (np.exp(1j * base) * sinc(draw.t * theta / 2)).sum()
    # x_0 = 0 is not random; its conditional mean is the bare phase
    mean += np.exp(1j * base[0]) * (1.0 - sinc(draw.t * theta / 2))
    return (val - mean) / np.sqrt(draw.p)


def mean_poly_abs(p: int, t: float, theta: float, h: float = 1.0) -> float:
    """|E P_k(theta)| in closed form: |sinc(t theta/2)| |D_p((h+t)theta)| / sqrt p."""
    j = np.arange(p)
    comb = np.exp(1j * j * (h + t) * theta).sum()
    extra = 1.0 - sinc(t * theta / 2)  # x_0 deterministic correction
    return abs(sinc(t * theta / 2) * comb + extra) / np.sqrt(p)


# ---------------------------------------------------------------------------
# Empirical distributions and the KS statistic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalDistribution:
    samples: np.ndarray          # sorted ascending
    target_name: str
    target_cdf: Callable[[np.ndarray], np.ndarray]

    @property
    def count(self) -> int:
        return len(self.samples)

    def ks(self) -> float:
        return ks_statistic(self.samples, self.target_cdf)

    def variance(self) -> float:
        return float(np.var(self.samples))

    def second_moment(self) -> float:
        return float(np.mean(self.samples ** 2))


def ks_statistic(samples: Sequence[float], target_cdf) -> float:
    """sup-distance between the empirical CDF and the target CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    F = np.asarray(target_cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def empirical(samples, target_name: str, target_cdf) -> EmpiricalDistribution:
    x = np.sort(np.asarray(samples, dtype=float))
    x.flags.writeable = False
    return EmpiricalDistribution(samples=x, target_name=target_name, target_cdf=target_cdf)


# ---------------------------------------------------------------------------
# Sampling from the Fejer weight
# ---------------------------------------------------------------------------

def _fejer_density(s, theta):
    return (s / (2 * np.pi)) * np.sinc(s * theta / (2 * np.pi)) ** 2


def sample_lambda_s(s: float, n: int, key) -> np.ndarray:
    """Sample from K_s(theta) dtheta by rejection against the envelope
    g(theta) = min(s/2pi, 2/(pi s theta^2)).

    The envelope dominates the kernel everywhere, is constant on
    [-2/s, 2/s] and has closed-form inverse-CDF tails, so acceptance is
    pi/4 on average.
    """
    key_parts = key if isinstance(key, tuple) else (key,)
    g = generator(*key_parts, "fejer-sampler", s)
    theta_c = 2.0 / s
    mass_center = 2.0 / np.pi        # (s/2pi) * (4/s)
    mass_total = 4.0 / np.pi         # center + two tails of 1/pi each
    out = []
    got = 0
    while got < n:
        m = max(4 * (n - got), 1024)
        u = g.uniform(0, mass_total, size=m)
        v = g.uniform(0, 1, size=m)
        theta = np.empty(m)
        center = u < mass_center
        theta[center] = (u[center] / mass_center * 2 - 1) * theta_c
        tail_u = (u[~center] - mass_center) / (mass_total - mass_center)
        # one tail via inverse CDF, sign from the leftover uniform bit
        sign = np.where(tail_u < 0.5, -1.0, 1.0)
        frac = np.where(tail_u < 0.5, tail_u * 2, (tail_u - 0.5) * 2)
        frac = np.clip(frac, 0.0, 1.0 - 1e-12)
        theta[~center] = sign * theta_c / (1.0 - frac)
        env = np.where(np.abs(theta) <= theta_c, s / (2 * np.pi), 2.0 / (np.pi * s * theta ** 2))
        accept = v * env <= _fejer_density(s, theta)
        kept = theta[accept]
        out.append(kept)
        got += len(kept)
    return np.concatenate(out)[:n]


def sample_lambda_s_conditional(s: float, interval, n: int, key) -> np.ndarray:
    """Sample from K_s restricted to ``interval``, by rejection against the
    uniform proposal with the exact sup of K_s on the interval."""
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise ValueError("empty interval")
    key_parts = key if isinstance(key, tuple) else (key,)
    g = generator(*key_parts, "fejer-cond-sampler", s, a, b)
    grid = np.linspace(a, b, 4097)
    bound = _fejer_density(s, grid).max() * (1 + 1e-9)
    if bound <= 0:
        raise RuntimeError("interval has vanishing Fejer mass")
    out = []
    got = 0
    rounds = 0
    while got < n:
        rounds += 1
        if rounds > 10_000:
            raise RuntimeError("rejection sampler stalled; interval mass too small")
        m = max(2 * (n - got), 1024)
        cand = g.uniform(a, b, size=m)
        u = g.uniform(0, bound, size=m)
        kept = cand[u < _fejer_density(s, cand)]
        out.append(kept)
        got += len(kept)
    return np.concatenate(out)[:n]


# ---------------------------------------------------------------------------
# CLT experiments
# ---------------------------------------------------------------------------

def clt_ornstein(theta: float, p_k: int, t_k: float, num_draws: int, key,
                 h: float = 1.0, chunk: int = 256):
    """Distribution of Re P'_k(theta) over independent keyed draws.

    Returns (EmpiricalDistribution vs N(0, 1/2), theoretical variance).
    The per-term variance is
    1/2 (1 + cos(2 theta j (h+t)) sinc(t theta)) - (cos(theta j (h+t)) sinc(t theta/2))^2,
    averaged over j.
    """
    if theta == 0:
        raise ValueError("theta must be nonzero")
    key_parts = key if isinstance(key, tuple) else (key,)
    j = np.arange(p_k)
    base = theta * (h + t_k) * j
    mean_term = np.cos(base) * sinc(t_k * theta / 2)
    mean_term[0] = np.cos(base[0])   # x_0 = 0 deterministically
    samples = np.empty(num_draws)
    for start in range(0, num_draws, chunk):
        m = min(chunk, num_draws - start)
        xs = np.empty((m, p_k))
        for d in range(m):
            xs[d] = generator(*key_parts, "clt-ornstein", start + d).uniform(
                -t_k / 2, t_k / 2, size=p_k)
        xs[:, 0] = 0.0
        vals = np.cos(base[None, :] + theta * xs) - mean_term[None, :]
        samples[start:start + m] = vals.sum(axis=1) / np.sqrt(p_k)
    var_terms = 0.5 * (1 + np.cos(2 * base) * sinc(t_k * theta)) - mean_term ** 2
    var_terms[0] = 0.0
    theory_var = float(var_terms.mean())
    dist = empirical(samples, "N(0,1/2)", lambda x: norm.cdf(x, scale=np.sqrt(0.5)))
    degenerate = t_k * abs(theta) < 1e-3   # offsets too small to decorrelate
    return dist, theory_var, degenerate


def staircase_exponents(p_n: int, m_n: float, eps_n: float, minus_one: bool = True) -> np.ndarray:
    """Frequencies (m/eps^2) p (e^{eps j / p} [- 1]) for j = 0..p-1."""
    j = np.arange(p_n, dtype=float)
    w = (m_n / eps_n ** 2) * p_n * np.exp(eps_n * j / p_n)
    if minus_one:
        w = w - (m_n / eps_n ** 2) * p_n
    return w


def exp_staircase_flags(p_n: int, m_n: float, eps_n: float, h_n: float = 1.0) -> dict:
    """Truth values of the staircase growth conditions at this stage."""
    regime_large_p = p_n >= m_n / eps_n
    return {
        "m_ge_eps_h": m_n >= eps_n * h_n,
        "log_p_over_m": float(np.log(p_n) / m_n),
        "regime": "p>=m/eps" if regime_large_p else "p<m/eps",
        "log_p_over_p_le_eps": bool(np.log(p_n) / p_n <= eps_n),
    }


def clt_expstaircase(p_n: int, m_n: float, eps_n: float, interval, s: float,
                     num_samples: int, key, minus_one: bool = True, chunk: int = 2048):
    """Distribution of (sqrt2/sqrt p) sum_j cos(omega_n(j) t) with t drawn
    from the Fejer weight conditioned on ``interval``, vs the standard normal.

    Returns (EmpiricalDistribution, second_moment, flags dict).
    """
    omega = staircase_exponents(p_n, m_n, eps_n, minus_one=minus_one)
    key_parts = key if isinstance(key, tuple) else (key,)
    t = sample_lambda_s_conditional(s, interval, num_samples, (*key_parts, "clt-exp"))
    vals = np.empty(num_samples)
    for start in range(0, num_samples, chunk):
        tt = t[start:start + chunk]
        vals[start:start + len(tt)] = (np.sqrt(2.0) / np.sqrt(p_n)) * \
            np.cos(np.outer(tt, omega)).sum(axis=1)
    flags = exp_staircase_flags(p_n, m_n, eps_n)
    # uniform-integrability monitor: |prod (1 - i x X_nj)| <= e^{x^2} at x=1
    flags["ui_bound_x1"] = float(np.exp(1.0))
    dist = empirical(vals, "N(0,1)", norm.cdf)
    return dist, float(np.mean(vals ** 2)), flags

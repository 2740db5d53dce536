"""Exponential-staircase sums and their stationary-phase approximation.

The object of study is Q_n(t) = (1/sqrt q) sum_{j<q} e^{2 pi i psi(j) t}
with psi(x) = (q/beta^2) e^{beta x / q}.  Since psi ~ q/beta^2 is huge,
phases are reduced modulo 1 in extended precision before any trig call;
naive double evaluation would lose every digit of the phase.

The stationary-phase approximation (van der Corput second-derivative
regime with explicit constants) replaces the sum by contributions of the
points x_j with f'(x_j) = j, f = t psi, plus an error bounded by the
closed-form budget E assembled from the derivative bounds c_1..c_4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LD = np.longdouble


@dataclass(frozen=True)
class PhaseSpec:
    """Interval, phase parameters, and derivative bounds for one sum.

    The phase is f(x) = t psi(x) on [a, b] = [0, q]; the canonical budget
    parameters are A = U = q, lambda = 1, c1 = tau1, c2 = c3 = c4 = e tau2
    for t ranging over [tau1, tau2].
    """

    q: int
    beta: float
    t: float
    a: float
    b: float
    U: float
    A: float
    lam: float
    c1: float
    c2: float
    c3: float
    c4: float

    def f(self, x):
        return self.t * psi(self.q, self.beta, x)

    def f_prime(self, x):
        return self.t * np.exp(self.beta * np.asarray(x, dtype=float) / self.q) / self.beta

    def f_second(self, x):
        return self.t * np.exp(self.beta * np.asarray(x, dtype=float) / self.q) / self.q

    def check_derivative_bounds(self, grid_n: int = 257) -> bool:
        """Numerically verify U >= 1, 0 < b-a <= lam U and the c_i bounds
        on a grid over [a, b]."""
        if not (self.U >= 1 and 0 < self.b - self.a <= self.lam * self.U):
            return False
        x = np.linspace(self.a, self.b, grid_n)
        e = np.exp(self.beta * x / self.q)
        f2 = self.t * e / self.q
        f3 = self.t * self.beta * e / self.q ** 2
        f4 = self.t * self.beta ** 2 * e / self.q ** 3
        return bool(
            np.all(self.c1 / self.A <= f2) and np.all(f2 <= self.c2 / self.A)
            and np.all(np.abs(f3) <= self.c3 / (self.A * self.U))
            and np.all(np.abs(f4) <= self.c4 / (self.A * self.U ** 2)))


def appendix_phase_spec(q: int, beta: float, t: float, tau1: float, tau2: float) -> PhaseSpec:
    """The canonical parameter choice for t in [tau1, tau2]."""
    if not (0 < tau1 < tau2):
        raise ValueError("need 0 < tau1 < tau2")
    c2 = math.e * tau2
    return PhaseSpec(q=q, beta=beta, t=t, a=0.0, b=float(q), U=float(q), A=float(q),
                     lam=1.0, c1=tau1, c2=c2, c3=c2, c4=c2)


@dataclass(frozen=True)
class KKConstants:
    k: float
    K: float
    K1: float
    K2: float
    K3: float

    @classmethod
    def from_spec(cls, ps: PhaseSpec) -> "KKConstants":
        c1, c2, c3, c4 = ps.c1, ps.c2, ps.c3, ps.c4
        k = min(c1 / (4 * c2), math.sqrt(c1 / (2 * c2)))
        K = 5 * c3 + 0.5 * max(
            (9 / 8) * c4 + (13 / 6) ** 2 * (1 / c1) * (c3 + 0.5 * k * c4) ** 2,
            2 * c2 / k ** 2)
        K1 = (1 / math.pi) * (6.5 + 2 * c1 / c2)
        K2 = (1 / (math.pi * c1 ** 2)) * (
            (ps.lam * c2 + 2 * ps.A / ps.U) * K + 2 * c2 * (c1 + ps.A / (ps.b - ps.a))
        ) + (22.5 + 9 * c2 / ps.A)
        K3 = 2 * (2 + 1 / math.pi) + (1 / (math.pi * c1)) * (
            4 + 2.8 * math.sqrt(c1) + c2 + 2 * c2 / c1)
        return cls(k=k, K=K, K1=K1, K2=K2, K3=K3)


# ---------------------------------------------------------------------------
# Direct evaluation
# ---------------------------------------------------------------------------

def psi(q: int, beta: float, x):
    """(q / beta^2) e^{beta x / q}; the log-derivative is beta/q at every
    order, so f'/f = f''/f' = beta/q."""
    return (q / beta ** 2) * np.exp(beta * np.asarray(x, dtype=float) / q)


def psi_lattice(q: int, beta: float) -> np.ndarray:
    """psi(j), j = 0..q-1, in extended precision."""
    j = np.arange(q, dtype=LD)
    return (LD(q) / LD(beta) ** 2) * np.exp(LD(beta) * j / LD(q))


def direct_q(q: int, beta: float, t: float, _psi_cache=None) -> complex:
    """(1/sqrt q) sum_j e^{2 pi i psi(j) t} with extended-precision phase
    reduction; |result| <= sqrt(q)."""
    ps = psi_lattice(q, beta) if _psi_cache is None else _psi_cache
    frac = np.mod(ps * LD(t), LD(1.0)).astype(np.float64)
    vals = np.exp((2j * np.pi) * frac)
    return complex(vals.sum()) / math.sqrt(q)


def direct_q_many(q: int, beta: float, ts) -> np.ndarray:
    ps = psi_lattice(q, beta)
    return np.array([direct_q(q, beta, float(t), _psi_cache=ps) for t in np.atleast_1d(ts)])


# ---------------------------------------------------------------------------
# Stationary phase
# ---------------------------------------------------------------------------

def stationary_point(q: int, beta: float, t: float, j) -> np.ndarray:
    """x_j = (q/beta) ln(beta j / t), the solution of f'(x) = j; admissible
    j lie in [t/beta, (t/beta) e^beta]."""
    j = np.asarray(j, dtype=float)
    lo, hi = t / beta, (t / beta) * math.exp(beta)
    if np.any((j < lo - 1e-9 * hi) | (j > hi + 1e-9 * hi)):
        raise ValueError(f"j out of the admissible range [{lo}, {hi}]")
    return (q / beta) * np.log(beta * j / t)


def nearest_int(x) -> np.ndarray:
    """Distance of x to the nearest integer."""
    x = np.asarray(x, dtype=float)
    frac = np.mod(x, 1.0)
    return np.minimum(frac, 1.0 - frac)


def t_bound(fprime_at_x: float, rho: float) -> float:
    """T_{f,x,rho}: 0 if f'(x) is an integer, else min(sqrt(rho), 1/||f'(x)||)."""
    d = float(nearest_int(fprime_at_x))
    if d == 0.0:
        return 0.0
    return min(math.sqrt(rho), 1.0 / d)


def kk_approx(ps: PhaseSpec) -> tuple[complex, float, np.ndarray]:
    """Main stationary-phase term and error budget for sqrt(q) Q_n(t).

    Returns (main, E, js): main = sum over integers j in [f'(a), f'(b)] of
    c(j) Z(j) with boundary weights 1/2, Z(j) = ((1+i)/sqrt2)
    f''(x_j)^{-1/2} e^{2 pi i (f(x_j) - j x_j)}; E bounds |sum - main|.
    Phases f(x_j) - j x_j are reduced in extended precision.
    """
    fa = ps.t / ps.beta
    fb = fa * math.exp(ps.beta)
    js = np.arange(math.ceil(fa - 1e-12), math.floor(fb + 1e-12) + 1, dtype=float)
    main = 0.0 + 0.0j
    if len(js):
        x_j = stationary_point(ps.q, ps.beta, ps.t, js)
        f2 = ps.beta * js / ps.q
        # f(x_j) = (q/beta) j; phase reduced as longdoubles before the exp
        D = LD(ps.q) / LD(ps.beta)
        phase = D * js.astype(LD) - js.astype(LD) * x_j.astype(LD)
        frac = np.mod(phase, LD(1.0)).astype(np.float64)
        weights = np.ones(len(js))
        weights[np.abs(js - fa) < 1e-12 * max(1.0, fb)] = 0.5
        weights[np.abs(js - fb) < 1e-12 * max(1.0, fb)] = 0.5
        z = ((1 + 1j) / math.sqrt(2)) * f2 ** -0.5 * np.exp(2j * np.pi * frac)
        main = complex((weights * z).sum())
    cons = KKConstants.from_spec(ps)
    T_a = t_bound(float(ps.f_prime(ps.a)), ps.A)
    T_b = t_bound(float(ps.f_prime(ps.b)), ps.A)
    E = cons.K1 * math.log(fb - fa + 2) + cons.K2 + cons.K3 * (T_a + T_b)
    return main, float(E), js


# ---------------------------------------------------------------------------
# Flatness profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlatnessProfile:
    q: int
    beta: float
    ts: np.ndarray
    abs_q: np.ndarray
    ratio: np.ndarray          # |Q_n(t)| / sqrt(t)
    max_ratio: float
    l1_deficit: float          # int ||Q_n| - 1| dt over [tau1, tau2]
    rolle_quantity: float      # (tau2-tau1) - (2/3)(tau2^{3/2} - tau1^{3/2})


def flatness_profile(q: int, beta: float, tau1: float, tau2: float,
                     grid_n: int = 200, q_eval=None) -> FlatnessProfile:
    """|Q_n| on a uniform t-grid of [tau1, tau2], the sqrt-t envelope ratio,
    and the unweighted L1 flatness deficit by composite Simpson quadrature
    over the grid.

    The rolle quantity (tau2 - tau1) - (2/3)(tau2^{3/2} - tau1^{3/2}) is
    positive for [tau1, tau2] inside (1/2, 1); flat |Q_n| -> 1 would force
    the deficit under it, which the sqrt-t envelope forbids.
    """
    if not (0 < tau1 < tau2):
        raise ValueError("need 0 < tau1 < tau2")
    ts = np.linspace(tau1, tau2, grid_n)
    if q_eval is None:
        vals = direct_q_many(q, beta, ts)
    else:
        vals = np.asarray(q_eval(ts))
    abs_q = np.abs(vals)
    ratio = abs_q / np.sqrt(ts)
    deficit = _composite_simpson(np.abs(abs_q - 1.0), ts)
    rolle = (tau2 - tau1) - (2.0 / 3.0) * (tau2 ** 1.5 - tau1 ** 1.5)
    return FlatnessProfile(q=q, beta=beta, ts=ts, abs_q=abs_q, ratio=ratio,
                           max_ratio=float(ratio.max()), l1_deficit=float(deficit),
                           rolle_quantity=float(rolle))


def _composite_simpson(y: np.ndarray, x: np.ndarray) -> float:
    n = len(x)
    if n < 3:
        return float(np.trapezoid(y, x))
    h = x[1] - x[0]
    if (n - 1) % 2 == 1:            # odd interval count: trapezoid on the last
        return float(_composite_simpson(y[:-1], x[:-1]) + 0.5 * h * (y[-2] + y[-1]))
    return float((h / 3.0) * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-2:2].sum()))

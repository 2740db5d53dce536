"""Fejer-weighted integration on the real line.

The weight lambda_s = K_s(theta) dtheta has the triangular Fourier transform
(1 - |t|/s)_+, unit mass, and a slowly decaying 1/theta^2 tail, so plain
truncation converges like 1/T.  The engine integrates over dyadically
growing bands [-T, T] with fixed-order Gauss-Legendre panels and corrects
the truncated tail with the outer band's weighted mean against the
closed-form tail mass; the remaining error decays like 1/T^2 and its
leading term is removed by Richardson extrapolation across the last
doubling.  Convergence is tracked per evaluation point, and two consecutive
doublings must agree before a point is accepted.

Panel nodes lie on a uniform lattice inside each band, so the oscillating
factor e^{-i t theta} and trigonometric-polynomial integrands factor into
per-panel rotations; lattice sums then reduce to one cumulative product and
one matrix product per band instead of per-node complex exponentials.

Absolute values, fractional powers and logarithms of trigonometric
polynomials are smooth except at the zeros of the underlying polynomial;
panels whose values trigger a kink heuristic are refined by recursive
bisection until the refined contribution stabilizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import sici

from .trigpoly import TrigPoly

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_OSC_PER_PANEL = 6.0          # max (frequency x width) resolved by order-12 panels
_REFINE_DEPTH_CAP = 40


class QuadratureError(RuntimeError):
    """Tolerance unreachable within the panel budget; carries best estimate."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class FejerWeight:
    s: float

    def __post_init__(self):
        if not (0 < self.s <= 1):
            raise ValueError(f"s must lie in (0, 1], got {self.s}")

    def kernel(self, theta):
        return kernel(self.s, theta)

    def kernel_ft(self, t):
        return kernel_ft(self.s, t)


@dataclass(frozen=True)
class QuadResult:
    value: complex
    abs_error_estimate: float
    truncation_radius: float
    panels: int
    converged: bool = True
    flags: tuple = ()

    @property
    def real(self) -> float:
        return float(np.real(self.value))


def kernel(s: float, theta):
    """K_s(theta) = (s/2pi) (sin(s theta/2) / (s theta/2))^2; K_s(0) = s/2pi."""
    return (s / (2 * np.pi)) * np.sinc(s * np.asarray(theta, dtype=float) / (2 * np.pi)) ** 2


def kernel_ft(s: float, t):
    """Triangular transform (1 - |t|/s)_+, supported on [-s, s]."""
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(t, dtype=float)) / s)


def fejer_tail_mass(s: float, T: float) -> float:
    """Exact mass of K_s outside [-T, T]; bounded by 4/(pi s T)."""
    si, _ = sici(s * T)
    return float((2.0 / (np.pi * s)) * ((1.0 - math.cos(s * T)) / T + s * (np.pi / 2 - si)))


# ---------------------------------------------------------------------------
# Integrands
# ---------------------------------------------------------------------------

class Integrand:
    """Evaluation interface the engine consumes.

    ``eval_theta``/``eval_lattice`` return (value, carrier) pairs: the value
    enters the integral while the carrier drives the kink heuristic named by
    ``refine`` ("none", "near-zero" for |.|- or log-type kinks at carrier
    zeros, "sign-change" for kinks where the carrier crosses zero).  By
    default the carrier is the value itself.
    """

    max_freq: float = 0.0
    refine: str = "none"
    refine_floor: float = 0.0     # absolute near-zero trigger, e.g. 1e-3 for logs

    def eval_theta(self, theta: np.ndarray):
        raise NotImplementedError

    def eval_lattice(self, lo: float, width: float, n_panels: int,
                     offsets: np.ndarray):
        nodes = lo + width * np.arange(n_panels)[:, None] + offsets[None, :]
        value, carrier = self.eval_theta(nodes.ravel())
        shape = (n_panels, len(offsets))
        return value.reshape(shape), (carrier.reshape(shape) if carrier is not value else None)

    def trigger_mask(self, value: np.ndarray, carrier) -> np.ndarray:
        c = value if carrier is None else carrier
        if self.refine == "near-zero":
            a = np.abs(c.reshape(len(c), -1))
            amin = a.min(axis=1)
            return (amin < 0.3 * a.max(axis=1)) | (amin < self.refine_floor)
        if self.refine == "sign-change":
            c2 = c.reshape(len(c), -1)
            return (c2.min(axis=1) < 0.0) & (c2.max(axis=1) > 0.0)
        return np.zeros(len(value), dtype=bool)


class _CallableIntegrand(Integrand):
    def __init__(self, fn, max_freq, refine="none", refine_floor=0.0):
        self.fn = fn
        self.max_freq = float(max_freq)
        self.refine = refine
        self.refine_floor = refine_floor

    def eval_theta(self, theta):
        v = np.asarray(self.fn(theta))
        return v, v


class PolyProduct(Integrand):
    """prod_i |P_i(theta)|^{pow_i} for trigonometric polynomials P_i.

    On the panel lattice each polynomial is assembled from a cumulative
    rotation along panels and a 12-column in-panel phase matrix, so the
    dominant cost is matrix products rather than complex exponentials.
    Odd or fractional powers have kinks at the zeros of the product; pass
    refine="near-zero" when integrating them tightly.
    """

    def __init__(self, factors: Sequence, refine: str = "none", refine_floor: float = 0.0):
        self.factors = [(poly, float(power)) for poly, power in factors]
        self.max_freq = float(sum(p.max_freq for p, _ in self.factors))
        self.refine = refine
        self.refine_floor = refine_floor

    @staticmethod
    def _apply_power(v, power):
        if power == 1.0:
            return v
        if power == 2.0:
            return v * v
        return v ** power

    def product_values(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.ones(theta.shape)
        for poly, power in self.factors:
            v = np.abs(np.exp(1j * theta[..., None] * poly.freqs) @ poly.coeffs)
            out *= self._apply_power(v, power)
        return out

    def eval_theta(self, theta):
        v = self.product_values(theta)
        return v, v

    def eval_lattice(self, lo, width, n_panels, offsets):
        out = np.ones((n_panels, len(offsets)))
        for poly, power in self.factors:
            w = poly.freqs
            rot = np.tile(np.exp(1j * w * width)[:, None], (1, n_panels))
            rot[:, 0] = np.exp(1j * w * lo)
            lattice_phase = np.cumprod(rot, axis=1)          # e^{i w (lo + p width)}
            col_phase = np.exp(1j * np.outer(w, offsets))    # e^{i w off_g}
            v = np.abs((lattice_phase * poly.coeffs[:, None]).T @ col_phase)
            out *= self._apply_power(v, power)
        return out, None


class Compose(Integrand):
    """fn applied pointwise to the values of sub-integrands.

    ``carrier_fn`` (same signature as fn) computes the kink carrier; by
    default the composed value carries its own trigger.
    """

    def __init__(self, fn, *parts: Integrand, refine: str = "none",
                 refine_floor: float = 0.0, carrier_fn=None):
        self.fn = fn
        self.parts = parts
        self.carrier_fn = carrier_fn
        self.max_freq = float(sum(p.max_freq for p in parts))
        self.refine = refine
        self.refine_floor = refine_floor

    def eval_theta(self, theta):
        vals = [p.eval_theta(theta)[0] for p in self.parts]
        v = self.fn(*vals)
        carrier = self.carrier_fn(*vals) if self.carrier_fn is not None else v
        return v, carrier

    def eval_lattice(self, lo, width, n_panels, offsets):
        vals = [p.eval_lattice(lo, width, n_panels, offsets)[0] for p in self.parts]
        v = self.fn(*vals)
        carrier = self.carrier_fn(*vals) if self.carrier_fn is not None else None
        return v, carrier


class LogOf(Integrand):
    """log of a nonnegative integrand; kinks where the base dips below 1e-3."""

    def __init__(self, base: Integrand):
        self.base = base
        self.max_freq = base.max_freq
        self.refine = "near-zero"
        self.refine_floor = 1e-3

    @staticmethod
    def _log(v):
        return np.log(np.maximum(np.abs(v), 1e-300))

    def eval_theta(self, theta):
        b = self.base.eval_theta(theta)[0]
        return self._log(b), b

    def eval_lattice(self, lo, width, n_panels, offsets):
        b = self.base.eval_lattice(lo, width, n_panels, offsets)[0]
        return self._log(b), b


def as_integrand(f, max_freq=None, refine="none", refine_floor=0.0) -> Integrand:
    if isinstance(f, Integrand):
        return f
    if isinstance(f, TrigPoly):
        return PolyProduct([(f, 2.0)])
    if max_freq is None:
        raise ValueError("plain callables need an explicit max_freq")
    return _CallableIntegrand(f, max_freq, refine=refine, refine_floor=refine_floor)


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

def _refine_panel(integrand, s, a, b, parent_sum, panel_tol, depth,
                  nodes_out, g_out, flags):
    """Recursively bisect [a, b] while the split still moves the panel's
    contribution; append accepted sub-panel nodes and kernel-weighted
    contributions.  Returns the refined integral over [a, b]."""
    halves = ((a, 0.5 * (a + b)), (0.5 * (a + b), b))
    child_data = []
    children_sum = 0.0
    for lo, hi in halves:
        half = 0.5 * (hi - lo)
        nodes = 0.5 * (lo + hi) + half * _GL_NODES
        value, carrier = integrand.eval_theta(nodes)
        g = value * kernel(s, nodes) * (half * _GL_WEIGHTS)
        child_data.append((lo, hi, nodes, value, carrier, g))
        children_sum += g.sum()
    stable = abs(children_sum - parent_sum) < panel_tol
    narrow = (b - a) < 1e-12 * (1.0 + abs(a) + abs(b))
    total = 0.0
    for lo, hi, nodes, value, carrier, g in child_data:
        trigger = bool(integrand.trigger_mask(
            value[None, :], None if carrier is None else carrier[None, :])[0])
        if trigger and not stable and not narrow and depth < _REFINE_DEPTH_CAP:
            total += _refine_panel(integrand, s, lo, hi, g.sum(), panel_tol,
                                   depth + 1, nodes_out, g_out, flags)
        else:
            if trigger and depth >= _REFINE_DEPTH_CAP:
                flags.add("refinement-depth-cap")
            nodes_out.append(nodes)
            g_out.append(g)
            total += g.sum()
    return total


def _ft_engine(integrand: Integrand, ts: np.ndarray, s: float, tol: float,
               start_radius: float = 64.0, max_doublings: int = 18,
               max_panels: int = 40_000_000, chunk_panels: int = 20_000):
    """Batch transform int e^{-i t theta} f(theta) K_s(theta) dtheta.

    Returns (values, error_estimates, radius, panel_count, flags).
    """
    if not (0 < s <= 1):
        raise ValueError(f"s must lie in (0, 1], got {s}")
    ts = np.asarray(ts, dtype=float)
    nt = len(ts)
    width_scale = integrand.max_freq + float(np.max(np.abs(ts), initial=0.0)) + s + 1.0
    width = _OSC_PER_PANEL / width_scale
    T0 = max(start_radius, 16.0 / s)
    panel_tol = tol * 1e-3

    active = np.ones(nt, dtype=bool)
    cum = np.zeros(nt, dtype=complex)
    last_band = np.zeros(nt, dtype=complex)
    V_prev = np.full(nt, np.nan + 0j)
    dv_prev = np.full(nt, np.inf)
    values = np.zeros(nt, dtype=complex)
    errors = np.full(nt, np.inf)
    flags: set = set()
    lo_edge, hi_edge = 0.0, T0
    panels_used = 0
    radius = T0

    for band_index in range(max_doublings):
        band_len = hi_edge - lo_edge
        n_pan = int(math.ceil(band_len / width))
        if panels_used + 2 * n_pan > max_panels:
            flags.add("panel-budget")
            break
        w_actual = band_len / n_pan
        offsets = 0.5 * w_actual * (_GL_NODES + 1.0)
        wts = 0.5 * w_actual * _GL_WEIGHTS
        idx = np.nonzero(active)[0]
        t_act = ts[idx]
        S = np.zeros(len(idx), dtype=complex)
        for side in (+1.0, -1.0):
            for st in range(0, n_pan, chunk_panels):
                cnt = min(chunk_panels, n_pan - st)
                lo_chunk = (lo_edge + st * w_actual) if side > 0 else \
                    -(lo_edge + (st + cnt) * w_actual)
                value, carrier = integrand.eval_lattice(lo_chunk, w_actual, cnt, offsets)
                node_matrix = (lo_chunk + w_actual * np.arange(cnt)[:, None]) + offsets[None, :]
                G = value * kernel(s, node_matrix) * wts[None, :]
                extra_nodes, extra_g = [], []
                if integrand.refine != "none":
                    for p_i in np.nonzero(integrand.trigger_mask(value, carrier))[0]:
                        a = lo_chunk + p_i * w_actual
                        sub_nodes, sub_g = [], []
                        _refine_panel(integrand, s, a, a + w_actual, G[p_i].sum(),
                                      panel_tol, 0, sub_nodes, sub_g, flags)
                        extra_nodes.append(np.concatenate(sub_nodes))
                        extra_g.append(np.concatenate(sub_g))
                        extra_nodes.append(node_matrix[p_i])
                        extra_g.append(-G[p_i])
                # lattice phase sum: S_t += sum_{p,g} e^{-i t node(p,g)} G[p,g]
                inner = G.astype(complex) @ np.exp(-1j * np.outer(offsets, t_act))
                rot = np.tile(np.exp(-1j * t_act * w_actual)[None, :], (cnt, 1))
                rot[0, :] = np.exp(-1j * t_act * lo_chunk)
                lattice_phase = np.cumprod(rot, axis=0)      # (cnt, n_active)
                S += (lattice_phase * inner).sum(axis=0)
                for en, eg in zip(extra_nodes, extra_g):
                    S += np.exp(-1j * np.outer(t_act, en)) @ eg.astype(complex)
                panels_used += cnt
        cum[idx] += S
        last_band[idx] = S
        radius = hi_edge
        if band_index > 0:
            band_mass = fejer_tail_mass(s, hi_edge / 2) - fejer_tail_mass(s, hi_edge)
            V = cum + (last_band / band_mass) * fejer_tail_mass(s, hi_edge)
            dv = np.abs(V - V_prev)
            done = active & (dv < 0.5 * tol) & (dv_prev < 2.0 * tol)
            values[done] = V[done] + (V[done] - V_prev[done]) / 3.0
            errors[done] = np.maximum(dv[done], 1e-16)
            active &= ~done
            V_prev, dv_prev = V, dv
            if not active.any():
                return values, errors, radius, panels_used, flags
        lo_edge, hi_edge = hi_edge, 2 * hi_edge

    if np.isnan(V_prev[active]).any():
        raise QuadratureError(
            "no full doubling completed within the panel budget",
            QuadResult(complex(float("nan"), 0.0), np.inf, radius, panels_used, converged=False,
                       flags=tuple(sorted(flags | {"unconverged"}))))
    values[active] = V_prev[active]
    errors[active] = np.where(np.isfinite(dv_prev[active]), dv_prev[active], np.inf)
    flags.add("unconverged")
    return values, errors, radius, panels_used, flags


def _single(integrand, t, s, tol, **kw) -> QuadResult:
    vals, errs, radius, n_pan, flags = _ft_engine(integrand, np.array([t]), s, tol, **kw)
    converged = "unconverged" not in flags
    res = QuadResult(complex(vals[0]), float(errs[0]), radius, n_pan,
                     converged=converged, flags=tuple(sorted(flags)))
    if not converged:
        raise QuadratureError("tolerance not reached within panel budget", res)
    return res


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def integrate(f, s: float, tol: float = 1e-8, max_freq: float | None = None,
              refine: str = "none", **kw) -> QuadResult:
    """int f(theta) K_s(theta) dtheta to within ~tol.

    ``f`` may be a vectorized callable (then ``max_freq``, its largest
    oscillation frequency, is required for panel sizing), a TrigPoly (the
    density |P|^2 is integrated), or any Integrand.
    """
    return _single(as_integrand(f, max_freq, refine=refine), 0.0, s, tol, **kw)


def weighted_ft(f, t: float, s: float, tol: float = 1e-8,
                max_freq: float | None = None, **kw) -> QuadResult:
    """int e^{-i t theta} f(theta) K_s(theta) dtheta.

    For a single-stage density |P_n|^2 with h_n - |t| > s this equals the
    triangular transform (1 - |t|/s)_+ exactly, which the quadrature
    reproduces to its tolerance.
    """
    return _single(as_integrand(f, max_freq), t, s, tol, **kw)


def weighted_ft_many(f, ts, s: float, tol: float = 1e-8,
                     max_freq: float | None = None, **kw):
    """Transform at a batch of t sharing one panel sweep.

    Returns (values, QuadResult); the QuadResult carries the worst per-point
    error estimate.
    """
    integrand = as_integrand(f, max_freq)
    ts = np.asarray(ts, dtype=float)
    vals, errs, radius, n_pan, flags = _ft_engine(integrand, ts, s, tol, **kw)
    converged = "unconverged" not in flags
    worst = int(np.argmax(errs))
    res = QuadResult(complex(vals[worst]), float(errs[worst]), radius, n_pan,
                     converged=converged, flags=tuple(sorted(flags)))
    if not converged:
        raise QuadratureError("tolerance not reached within panel budget", res)
    return vals, res


def lp_norm(f, p: float, s: float, tol: float = 1e-8,
            max_freq: float | None = None, **kw) -> float:
    """(int |f|^p dlambda_s)^{1/p} for p > 0."""
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    base = as_integrand(f, max_freq)
    smooth = p == 2.0 or (p == int(p) and int(p) % 2 == 0)
    powered = Compose(lambda v: np.abs(v) ** p, base,
                      refine="none" if smooth else "near-zero",
                      carrier_fn=lambda v: v)
    res = _single(powered, 0.0, s, tol, **kw)
    return float(res.real ** (1.0 / p))


def mahler(f, s: float, tol: float = 1e-7, max_freq: float | None = None, **kw) -> QuadResult:
    """exp(int log|f| dlambda_s).

    Panels where |f| dips below 1e-3, or where the near-zero contrast
    heuristic fires, are refined by adaptive bisection down to a hard depth
    cap; hitting the cap flags the result with 'refinement-depth-cap'.
    """
    res = _single(LogOf(as_integrand(f, max_freq)), 0.0, s, tol, **kw)
    return replace(res, value=complex(math.exp(res.real)))

"""Spectral oracle: the space-time power spectrum and its numerical inversion.

Everything here is independent of any mesh or discretization.  The spectrum

    S(w_s, w_t) = (2 pi)^-3 gamma_e^-2
                  [gamma_t^2 w_t^2 + (gamma_s^2 + |w_s|^2)^alpha_s]^-alpha_t
                  (gamma_s^2 + |w_s|^2)^-alpha_e

is inverted to covariances by quadrature.  The temporal direction is handled
by the exact rescaling x = gamma_t*w_t/(gamma_s^2+r^2)^(alpha_s/2), which maps
the inner integral onto the universal kernel

    g_p(tau) = int_R (1 + x^2)^-p cos(tau x) dx,      p = alpha_t,

evaluated by adaptive/Fourier quadrature and cached on a log grid.  The outer
(Hankel) integral uses Gauss-Legendre panels with node doubling until the
result stabilizes; the radial cutoff comes from the analytic tail bound of the
marginal spatial spectrum, which decays like |w_s|^(-2 alpha).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.special import gammaln, j0, kv

from .params import (
    InterpretableParams,
    ParameterError,
    ScaleParams,
    SmoothnessParams,
    derived_smoothness,
    log_c1,
    scales_to_interpretable,
)

__all__ = [
    "QuadratureError",
    "QuadratureSpec",
    "SpectrumEvaluator",
    "matern_correlation",
]


class QuadratureError(RuntimeError):
    """Numerical quadrature failed to reach its tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls for the covariance quadrature.

    n_radial          Gauss-Legendre nodes per panel at the coarsest level.
    radial_cutoff     upper integration limit as a multiple of gamma_s; when
                      None it is derived from mass_tol via the tail bound
                      (1 + m^2)^(1 - alpha) <= mass_tol.
    n_temporal        size of the cached temporal-kernel table.
    temporal_cutoff   scaled lag beyond which the (exponentially small)
                      temporal kernel is treated as zero.
    rel_tol           stop node doubling when the relative change is below.
    mass_tol          admissible truncated spectral mass fraction.
    """

    n_radial: int = 24
    radial_cutoff: float | None = None
    n_temporal: int = 512
    temporal_cutoff: float = 40.0
    rel_tol: float = 1e-6
    mass_tol: float = 1e-8

    def __post_init__(self):
        if self.n_radial < 2 or self.n_temporal < 16:
            raise ParameterError("quadrature node counts too small")
        if self.temporal_cutoff <= 0 or self.rel_tol <= 0 or not 0 < self.mass_tol < 1:
            raise ParameterError("quadrature tolerances must be positive")
        if self.radial_cutoff is not None and self.radial_cutoff <= 0:
            raise ParameterError("radial_cutoff must be positive")
        if self.temporal_cutoff < -math.log(self.mass_tol):
            raise ParameterError(
                "temporal_cutoff too small for the requested mass tolerance"
            )

    def cutoff_multiple(self, alpha: float) -> float:
        """Radial cutoff as a multiple of gamma_s honouring the mass bound."""
        required = math.sqrt(self.mass_tol ** (1.0 / (1.0 - alpha)) - 1.0)
        if self.radial_cutoff is not None:
            if self.radial_cutoff < required:
                raise QuadratureError(
                    f"radial cutoff {self.radial_cutoff} gamma_s leaves a "
                    f"truncated mass fraction above {self.mass_tol:g} "
                    f"(needs >= {required:.3g})"
                )
            return self.radial_cutoff
        if required > 1e7:
            raise QuadratureError(
                f"mass tolerance {self.mass_tol:g} needs a radial cutoff of "
                f"{required:.3g} gamma_s; loosen mass_tol for alpha = {alpha}"
            )
        return required


def matern_correlation(nu: float, kappa: float, h) -> np.ndarray:
    """Whittle-Matern correlation (kappa h)^nu K_nu(kappa h) / (2^{nu-1} Gamma(nu))."""
    h = np.atleast_1d(np.abs(np.asarray(h, dtype=float)))
    x = kappa * h
    out = np.ones_like(x)
    pos = x > 0
    lognorm = (nu - 1.0) * math.log(2.0) + gammaln(nu)
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.exp(nu * np.log(x[pos]) - lognorm) * kv(nu, x[pos])
    out[pos] = np.where(np.isfinite(val), val, 0.0)
    return out if out.size > 1 else float(out[0])


class SpectrumEvaluator:
    """Evaluates the spectrum and its covariance transforms for one model."""

    def __init__(self, sp: SmoothnessParams, sc: ScaleParams):
        if sp.alpha_t <= 0.5:
            raise ParameterError(
                "alpha_t must exceed 1/2 for a finite-variance field"
            )
        self.sp = sp
        self.sc = sc
        self.derived = derived_smoothness(sp)
        self.sigma2 = math.exp(
            log_c1(sp)
            - 2.0 * math.log(sc.gamma_e)
            - math.log(sc.gamma_t)
            - 2.0 * (sp.alpha - 1.0) * math.log(sc.gamma_s)
        )
        self._kernel_cache: dict[tuple[int, float], tuple] = {}

    @property
    def interpretable(self) -> InterpretableParams:
        return scales_to_interpretable(self.sp, self.sc)

    # ------------------------------------------------------------------ #
    # pointwise spectra
    # ------------------------------------------------------------------ #

    def spectrum(self, omega_s_norm, omega_t) -> np.ndarray:
        """Space-time spectral density at |w_s| = omega_s_norm, w_t = omega_t."""
        w = np.asarray(omega_s_norm, dtype=float)
        wt = np.asarray(omega_t, dtype=float)
        if np.any(w < 0):
            raise ValueError("omega_s_norm must be >= 0")
        sp, sc = self.sp, self.sc
        A = sc.gamma_s**2 + w**2
        val = (
            (2.0 * math.pi) ** -3
            * sc.gamma_e**-2
            * (sc.gamma_t**2 * wt**2 + A**sp.alpha_s) ** -sp.alpha_t
            * A**-sp.alpha_e
        )
        return val if val.ndim else float(val)

    def spatial_marginal_spectrum(self, r) -> np.ndarray:
        """Marginal spatial spectral density (temporal direction integrated
        out numerically through the rescaled kernel at lag zero)."""
        A = self.sc.gamma_s**2 + np.asarray(r, dtype=float) ** 2
        val = self._marginal_prefactor * A ** (-self.sp.alpha) * self._kernel0
        return val if val.ndim else float(val)

    def temporal_spectrum(self, omega_t) -> np.ndarray:
        """Marginal temporal spectral density.

        Separable branch: closed-form Matern spectrum with nu_t = alpha_t-1/2
        and scale 1/gamma_t.  Otherwise the radial integral is reduced to

            int_0^inf (1+u)^-alpha_e (wtil^2 + (1+u)^alpha_s)^-alpha_t du

        with wtil = omega_t gamma_t / gamma_s^alpha_s and evaluated by
        adaptive quadrature; the prefactor
        gamma_e^-2 gamma_s^(-2(alpha-1)-alpha_s) / (8 pi^2) makes the result
        exact (its integral over omega_t is sigma^2).
        """
        wt = np.atleast_1d(np.asarray(omega_t, dtype=float))
        sp, sc = self.sp, self.sc
        if sp.separable:
            nu_t = sp.alpha_t - 0.5
            kt = 1.0 / sc.gamma_t
            coef = (
                self.sigma2
                * math.exp(gammaln(nu_t + 0.5) - gammaln(nu_t))
                * kt ** (2.0 * nu_t)
                / math.sqrt(math.pi)
            )
            out = coef * (kt**2 + wt**2) ** (-sp.alpha_t)
        else:
            pref = (
                sc.gamma_e**-2
                * sc.gamma_s ** (-2.0 * (sp.alpha - 1.0) - sp.alpha_s)
                / (8.0 * math.pi**2)
            )
            out = np.empty_like(wt)
            for i, w in enumerate(wt):
                wtil = abs(w) * sc.gamma_t / sc.gamma_s**sp.alpha_s
                out[i] = pref * self._radial_profile_integral(wtil)
        return out if out.size > 1 else float(out[0])

    def _radial_profile_integral(self, wtil: float) -> float:
        at, as_, ae = self.sp.alpha_t, self.sp.alpha_s, self.sp.alpha_e
        w2 = wtil * wtil

        def f(u):
            return (1.0 + u) ** -ae * (w2 + (1.0 + u) ** as_) ** -at

        val, err = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-11, limit=400)
        if val <= 0 or err > 1e-8 * val:
            raise QuadratureError(
                f"temporal-spectrum quadrature reached only rel. error "
                f"{err / max(val, 1e-300):.2e} at scaled frequency {wtil:g}"
            )
        return val

    # ------------------------------------------------------------------ #
    # covariances
    # ------------------------------------------------------------------ #

    def spatial_matern_cov(self, h_s) -> np.ndarray:
        """Closed-form marginal spatial covariance: sigma^2 times the
        Whittle-Matern correlation with smoothness nu_s and scale gamma_s."""
        return self.sigma2 * matern_correlation(
            self.derived.nu_s, self.sc.gamma_s, h_s
        )

    def spacetime_cov(self, h_s: float, h_t: float, q: QuadratureSpec | None = None) -> float:
        """Covariance C(h_s, h_t) by numerical inversion of the spectrum:

            C = int_0^inf 2 pi r J0(r h_s) [int_R S(r, w) cos(w h_t) dw] dr.

        The inner integral is the rescaled temporal kernel; the outer one uses
        Gauss-Legendre panels (geometric up to the cutoff, subdivided to track
        the J0 oscillation) with node doubling until the relative change drops
        below the spec tolerance.  Symmetric in the sign of both lags.
        """
        q = q or QuadratureSpec()
        h_s, h_t = abs(float(h_s)), abs(float(h_t))
        sp, sc = self.sp, self.sc
        T = q.cutoff_multiple(sp.alpha) * sc.gamma_s

        if h_t == 0.0:
            kern = None
        else:
            kern = self._kernel(q)
            # radii whose rescaled lag exceeds the kernel support contribute
            # nothing; shrink the cutoff accordingly
            if sp.alpha_s > 0:
                a_max = (kern.tau_max * sc.gamma_t / h_t) ** (2.0 / sp.alpha_s)
                if a_max <= sc.gamma_s**2:
                    return 0.0
                T = min(T, math.sqrt(a_max - sc.gamma_s**2))
            elif h_t / sc.gamma_t >= kern.tau_max:
                return 0.0

        pref = 2.0 * math.pi * self._marginal_prefactor

        def integrand(r):
            A = sc.gamma_s**2 + r * r
            if kern is None:
                k = self._kernel0
            else:
                k = kern(A ** (0.5 * sp.alpha_s) * h_t / sc.gamma_t)
            return pref * r * j0(r * h_s) * A ** (-sp.alpha) * k

        return self._panel_quadrature(integrand, T, h_s, q)

    def temporal_cov(self, h_t: float, q: QuadratureSpec | None = None) -> float:
        """Marginal temporal covariance C(0, h_t).

        Separable models use the closed-form Matern correlation with
        nu_t = alpha_t - 1/2 and scale 1/gamma_t; otherwise the cosine
        transform of :meth:`temporal_spectrum` is taken numerically (radial
        integral first, temporal second -- the opposite order from
        :meth:`spacetime_cov`, which makes the two mutually checking routes).
        """
        q = q or QuadratureSpec()
        h_t = abs(float(h_t))
        sp = self.sp
        if sp.separable:
            return self.sigma2 * float(
                matern_correlation(sp.alpha_t - 0.5, 1.0 / self.sc.gamma_t, h_t)
            )

        def st(w):
            return self.temporal_spectrum(w)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            if h_t == 0.0:
                val, err = integrate.quad(
                    st, 0.0, np.inf, epsabs=0.0, epsrel=1e-9, limit=400
                )
            else:
                val, err = integrate.quad(
                    st, 0.0, np.inf, weight="cos", wvar=h_t,
                    epsabs=1e-10 * self.sigma2, limlst=200, limit=400,
                )
        if err > 1e-4 * self.sigma2:
            raise QuadratureError(
                f"temporal covariance quadrature error {err:.2e} exceeds "
                f"tolerance at lag {h_t:g}"
            )
        return 2.0 * val

    def covariance_grid(
        self, h_s_values, h_t_values, q: QuadratureSpec | None = None
    ) -> np.ndarray:
        """C(h_s, h_t) on the tensor grid, shape (len(h_s), len(h_t))."""
        q = q or QuadratureSpec()
        out = np.empty((len(h_s_values), len(h_t_values)))
        for jt, ht in enumerate(h_t_values):
            for is_, hs in enumerate(h_s_values):
                out[is_, jt] = self.spacetime_cov(hs, ht, q)
        return out

    # ------------------------------------------------------------------ #
    # internals
    # ------------------------------------------------------------------ #

    @cached_property
    def _marginal_prefactor(self) -> float:
        return (2.0 * math.pi) ** -3 * self.sc.gamma_e**-2 / self.sc.gamma_t

    @cached_property
    def _kernel0(self) -> float:
        p = self.sp.alpha_t
        val, err = integrate.quad(
            lambda x: (1.0 + x * x) ** -p, 0.0, np.inf,
            epsabs=0.0, epsrel=1e-12, limit=200,
        )
        if err > 1e-10 * val:
            raise QuadratureError("temporal kernel normalization did not converge")
        return 2.0 * val

    def _kernel(self, q: QuadratureSpec) -> "_KernelTable":
        key = (q.n_temporal, q.temporal_cutoff)
        table = self._kernel_cache.get(key)
        if table is None:
            table = _KernelTable(self.sp.alpha_t, self._kernel0, q)
            self._kernel_cache[key] = table
        return table

    def _panel_quadrature(self, integrand, T: float, h_s: float, q: QuadratureSpec) -> float:
        edges = self._panel_edges(T, h_s)
        prev = None
        n = q.n_radial
        while n <= 16 * q.n_radial:
            x, w = np.polynomial.legendre.leggauss(n)
            a, b = edges[:-1], edges[1:]
            mid = 0.5 * (a + b)[:, None]
            half = 0.5 * (b - a)[:, None]
            nodes = (mid + half * x[None, :]).ravel()
            weights = (half * w[None, :]).ravel()
            total = float(np.dot(weights, integrand(nodes)))
            if prev is not None:
                scale = max(abs(total), 1e-14 * self.sigma2)
                if abs(total - prev) <= q.rel_tol * scale:
                    return total
            prev = total
            n *= 2
        raise QuadratureError(
            f"radial quadrature did not stabilize below rel_tol={q.rel_tol:g} "
            f"(last change {abs(total - prev):.3e})"
        )

    def _panel_edges(self, T: float, h_s: float) -> np.ndarray:
        g = self.sc.gamma_s
        edges = [0.0]
        b = min(g, T)
        while True:
            edges.append(b)
            if b >= T:
                break
            b = min(2.0 * b, T)
        if h_s > 0.0:
            # keep at most ~2 J0 periods per panel
            max_w = 4.0 * math.pi / h_s
            out = [0.0]
            for a, b in zip(edges[:-1], edges[1:]):
                k = max(1, int(math.ceil((b - a) / max_w)))
                out.extend(a + (b - a) * (np.arange(1, k + 1) / k))
            edges = out
        return np.asarray(edges)


class _KernelTable:
    """Log-log interpolated table of g_p(tau) = int (1+x^2)^-p cos(tau x) dx.

    Values are computed by QUADPACK Fourier quadrature on a geometric grid
    and truncated where they sink below 1e-13 of g_p(0) (the kernel decays
    exponentially, so the discarded tail is negligible against any covariance
    tolerance in use).
    """

    def __init__(self, p: float, kernel0: float, q: QuadratureSpec):
        tau = np.geomspace(1e-4, q.temporal_cutoff, q.n_temporal)
        vals = np.empty_like(tau)
        f = lambda x: (1.0 + x * x) ** -p  # noqa: E731
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for i, t in enumerate(tau):
                v, _ = integrate.quad(
                    f, 0.0, np.inf, weight="cos", wvar=t,
                    epsabs=1e-14 * kernel0, limlst=200, limit=200,
                )
                vals[i] = 2.0 * v
        floor = 1e-13 * kernel0
        bad = np.flatnonzero(vals <= floor)
        cut = int(bad[0]) if bad.size else len(tau)
        if cut < 8:
            raise QuadratureError("temporal kernel table collapsed; check alpha_t")
        self.kernel0 = kernel0
        self._tau = tau[:cut]
        self._spline = CubicSpline(np.log(self._tau), np.log(vals[:cut]))
        self.tau_max = float(self._tau[-1])
        self._v_lo = vals[0]

    def __call__(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        tau = np.atleast_1d(tau)
        out = np.zeros_like(tau)
        lo = tau < self._tau[0]
        mid = (~lo) & (tau <= self.tau_max)
        out[lo] = self.kernel0 + (self._v_lo - self.kernel0) * tau[lo] / self._tau[0]
        out[mid] = np.exp(self._spline(np.log(tau[mid])))
        return float(out[0]) if scalar else out

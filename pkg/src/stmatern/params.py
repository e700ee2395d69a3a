"""Model parameters and the exact algebra between their parameterizations.

A field in the family is indexed by three non-negative smoothness exponents
(alpha_t, alpha_s, alpha_e) and three positive scales.  The scales come in two
equivalent forms:

* raw scales (gamma_t, gamma_s, gamma_e) appearing in the operator, and
* interpretable quantities (sigma, r_s, r_t): marginal standard deviation,
  spatial correlation range and temporal correlation range.

The maps between the two are closed-form and exactly invertible.  Gamma
functions are evaluated through log-gamma differences so the ratio c1 stays
finite for large smoothness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple

from scipy.special import gammaln

__all__ = [
    "ParameterError",
    "SmoothnessParams",
    "ScaleParams",
    "InterpretableParams",
    "DerivedSmoothness",
    "derived_smoothness",
    "scales_to_interpretable",
    "interpretable_to_scales",
    "model_from_config",
    "model_to_config",
]

# log-gamma overflows double precision around alpha ~ 170; reject well before
# the c1 ratio loses all relative accuracy.
_ALPHA_MAX = 50.0


class ParameterError(ValueError):
    """Invalid or inconsistent model parameters."""


@dataclass(frozen=True)
class SmoothnessParams:
    """Smoothness exponents (alpha_t, alpha_s, alpha_e).

    Requires alpha = alpha_e + alpha_s*(alpha_t - 1/2) > 1, which is the
    condition for an integrable spectral density and a pointwise-defined field.
    """

    alpha_t: float
    alpha_s: float
    alpha_e: float

    def __post_init__(self):
        for name in ("alpha_t", "alpha_s", "alpha_e"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and >= 0, got {v}")
        if self.alpha <= 1.0:
            raise ParameterError(
                "alpha = alpha_e + alpha_s*(alpha_t - 1/2) must exceed 1 "
                f"(got alpha = {self.alpha}); the field is not well defined"
            )
        if self.alpha > _ALPHA_MAX:
            raise ParameterError(
                f"alpha = {self.alpha} too large; gamma-ratio evaluation is "
                f"only supported up to alpha = {_ALPHA_MAX}"
            )

    @property
    def alpha(self) -> float:
        return self.alpha_e + self.alpha_s * (self.alpha_t - 0.5)

    @property
    def nu_s(self) -> float:
        return self.alpha - 1.0

    @property
    def separable(self) -> bool:
        return self.alpha_s == 0.0


@dataclass(frozen=True)
class ScaleParams:
    """Raw operator scales: gamma_t (time), gamma_s (inverse spatial length),
    gamma_e (noise)."""

    gamma_t: float
    gamma_s: float
    gamma_e: float

    def __post_init__(self):
        for name in ("gamma_t", "gamma_s", "gamma_e"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ParameterError(f"{name} must be finite and > 0, got {v}")


@dataclass(frozen=True)
class InterpretableParams:
    """Marginal standard deviation and correlation ranges (sigma, r_s, r_t)."""

    sigma: float
    r_s: float
    r_t: float

    def __post_init__(self):
        for name in ("sigma", "r_s", "r_t"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ParameterError(f"{name} must be finite and > 0, got {v}")


class DerivedSmoothness(NamedTuple):
    alpha: float
    nu_s: float
    nu_t: float
    beta_s: float


def derived_smoothness(sp: SmoothnessParams) -> DerivedSmoothness:
    """Derived smoothness quantities (alpha, nu_s, nu_t, beta_s).

    nu_t is alpha_t - 1/2 in the separable case (alpha_s = 0) and
    min(alpha_t - 1/2, nu_s/alpha_s) otherwise.  The separability index
    beta_s = alpha_s*nu_t/nu_s lies in [0, 1]; 0 marks a separable model,
    1 the maximally non-separable ones.
    """
    alpha = sp.alpha
    nu_s = sp.nu_s
    if sp.alpha_s == 0.0:
        nu_t = sp.alpha_t - 0.5
        beta_s = 0.0
    else:
        nu_t = min(sp.alpha_t - 0.5, nu_s / sp.alpha_s)
        beta_s = sp.alpha_s * nu_t / nu_s
    if not 0.0 <= beta_s <= 1.0 + 1e-15:
        raise ParameterError(
            f"separability index beta_s = {beta_s} outside [0, 1]; "
            "smoothness exponents are internally inconsistent"
        )
    return DerivedSmoothness(alpha, nu_s, nu_t, min(beta_s, 1.0))


def log_c1(sp: SmoothnessParams) -> float:
    """log of c1 = Gamma(alpha_t - 1/2) Gamma(alpha - 1) /
    (Gamma(alpha_t) Gamma(alpha) 8 pi^{3/2}), so that
    sigma^2 = c1 / (gamma_e^2 gamma_t gamma_s^{2(alpha-1)})."""
    _require_temporal_range(sp)
    a = sp.alpha
    return (
        gammaln(sp.alpha_t - 0.5)
        + gammaln(a - 1.0)
        - gammaln(sp.alpha_t)
        - gammaln(a)
        - math.log(8.0) - 1.5 * math.log(math.pi)
    )


def _require_temporal_range(sp: SmoothnessParams) -> None:
    # r_t and c1 involve Gamma(alpha_t - 1/2) and sqrt(8(alpha_t - 1/2));
    # both degenerate at alpha_t = 1/2, so the inequality is strict.
    if sp.alpha_t <= 0.5:
        raise ParameterError(
            f"alpha_t must exceed 1/2 for scale conversions, got {sp.alpha_t}"
        )


def scales_to_interpretable(sp: SmoothnessParams, sc: ScaleParams) -> InterpretableParams:
    """Map raw scales to (sigma, r_s, r_t).

    sigma is the exact marginal standard deviation of the field,
    r_s = sqrt(8 nu_s)/gamma_s the spatial correlation range, and
    r_t = gamma_t sqrt(8(alpha_t - 1/2)) gamma_s^{-alpha_s} the temporal one.
    Correlation at a separation equal to the range is approximately 0.13.
    """
    _require_temporal_range(sp)
    a = sp.alpha
    log_sigma = (
        0.5 * log_c1(sp)
        - math.log(sc.gamma_e)
        - 0.5 * math.log(sc.gamma_t)
        - (a - 1.0) * math.log(sc.gamma_s)
    )
    if abs(log_sigma) > 300:
        raise ParameterError(
            f"sigma = exp({log_sigma:.1f}) overflows double precision; "
            "rescale the gamma parameters"
        )
    sigma = math.exp(log_sigma)
    r_s = math.sqrt(8.0 * sp.nu_s) / sc.gamma_s
    r_t = sc.gamma_t * math.sqrt(8.0 * (sp.alpha_t - 0.5)) * sc.gamma_s ** (-sp.alpha_s)
    return InterpretableParams(sigma=sigma, r_s=r_s, r_t=r_t)


def interpretable_to_scales(sp: SmoothnessParams, ip: InterpretableParams) -> ScaleParams:
    """Closed-form inverse of :func:`scales_to_interpretable`."""
    _require_temporal_range(sp)
    a = sp.alpha
    gamma_s = math.sqrt(8.0 * sp.nu_s) / ip.r_s
    gamma_t = ip.r_t * gamma_s ** sp.alpha_s / math.sqrt(8.0 * (sp.alpha_t - 0.5))
    log_gamma_e = (
        0.5 * log_c1(sp)
        - 0.5 * math.log(gamma_t)
        - (a - 1.0) * math.log(gamma_s)
        - math.log(ip.sigma)
    )
    if abs(log_gamma_e) > 300:
        raise ParameterError(
            f"gamma_e = exp({log_gamma_e:.1f}) overflows double precision"
        )
    return ScaleParams(gamma_t=gamma_t, gamma_s=gamma_s, gamma_e=math.exp(log_gamma_e))


_SMOOTHNESS_KEYS = ("alpha_t", "alpha_s", "alpha_e")
_SCALE_KEYS = ("gamma_t", "gamma_s", "gamma_e")
_INTERP_KEYS = ("sigma", "r_s", "r_t")


def model_from_config(section: Mapping[str, str]) -> tuple[SmoothnessParams, ScaleParams]:
    """Parse a flat key = value model block.

    Requires alpha_t/alpha_s/alpha_e plus exactly one complete scale group:
    either gamma_t/gamma_s/gamma_e or sigma/r_s/r_t.
    """
    missing = [k for k in _SMOOTHNESS_KEYS if k not in section]
    if missing:
        raise ParameterError(f"model block missing keys: {', '.join(missing)}")
    try:
        sp = SmoothnessParams(*(float(section[k]) for k in _SMOOTHNESS_KEYS))
    except ValueError as exc:
        raise ParameterError(f"bad smoothness values: {exc}") from exc

    has_gamma = [k for k in _SCALE_KEYS if k in section]
    has_interp = [k for k in _INTERP_KEYS if k in section]
    if has_gamma and has_interp:
        raise ParameterError(
            "model block mixes gamma_* and sigma/r_s/r_t; give exactly one group"
        )
    if len(has_gamma) == 3:
        sc = ScaleParams(*(float(section[k]) for k in _SCALE_KEYS))
    elif len(has_interp) == 3:
        ip = InterpretableParams(*(float(section[k]) for k in _INTERP_KEYS))
        sc = interpretable_to_scales(sp, ip)
    else:
        raise ParameterError(
            "model block needs a full scale group: gamma_t/gamma_s/gamma_e "
            "or sigma/r_s/r_t"
        )
    return sp, sc


def model_to_config(sp: SmoothnessParams, sc: ScaleParams, interpretable: bool = False) -> dict[str, str]:
    """Serialize a model to a flat key = value mapping."""
    out = {k: repr(getattr(sp, k)) for k in _SMOOTHNESS_KEYS}
    if interpretable:
        ip = scales_to_interpretable(sp, sc)
        out.update({k: repr(getattr(ip, k)) for k in _INTERP_KEYS})
    else:
        out.update({k: repr(getattr(sc, k)) for k in _SCALE_KEYS})
    return out

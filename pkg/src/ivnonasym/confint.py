"""Data-driven non-asymptotic confidence intervals.

Implements the pairwise spread matrix ``Q_n(v)``, the error functional
``e_n``, the scalar instrument-strength coefficient ``kappa_n``, and the four
interval constructions: a linear-functional bound, its refined per-coordinate
form, a uniform (union-bound) form, and the scalar corrected intervals with
regime classification.

Every report carries the nominal coverage ``1 - delta - delta'`` together
with an explicit caveat for the Berry-Esseen slack ``c * m3 / sqrt(n)``,
whose universal constant is unknown; the plug-in ``m3`` estimate is
diagnostic only and never folded into the level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .estimator import IVDataset, IVFit, SandwichCovariance, sigma_hat
from .exceptions import (
    DegenerateInstrumentError,
    DomainError,
    InsufficientSampleError,
    ShapeError,
)
from .numerics import normal_quantile, spectral_norm

__all__ = [
    "ConfidenceReport",
    "KappaCoefficient",
    "PairwiseSpread",
    "REGIME_CLASSICAL_CORRECTED",
    "REGIME_INAPPLICABLE",
    "REGIME_SHRUNK",
    "ci_linear",
    "ci_refined",
    "ci_scalar_corrected",
    "ci_uniform",
    "spread_error",
    "kappa",
    "m3_plugin",
    "pairwise_spread",
]

REGIME_CLASSICAL_CORRECTED = "classical-corrected-a"
REGIME_SHRUNK = "shrunk-b"
REGIME_INAPPLICABLE = "inapplicable"

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PairwiseSpread:
    """Pairwise spread matrix ``Q_n(v)`` of the vectors ``V_i = <v, z_i> x_i``.

    Stored value equals both the U-statistic form
    ``(1/(n(n-1))) sum_{i<j} (V_i - V_j)(V_i - V_j)^T`` and the centered sum
    ``(1/(n-1)) sum_i (V_i - Vbar)(V_i - Vbar)^T``; the centered O(n d^2)
    form is what gets computed.
    """

    Q: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class KappaCoefficient:
    """Scalar instrument-strength coefficient and its sample size."""

    kappa: float
    n: int


@dataclass(frozen=True)
class ConfidenceReport:
    """Interval plus the full additive breakdown of its governing inequality."""

    method: str
    point_estimate: float
    interval: tuple[float, float] | None
    sqrt_n_half_width: float | None
    regime: str | None
    kappa: float | None
    terms: dict
    nominal: dict
    provenance: dict

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "point_estimate": self.point_estimate,
            "interval": None if self.interval is None else list(self.interval),
            "sqrt_n_half_width": self.sqrt_n_half_width,
            "regime": self.regime,
            "kappa": self.kappa,
            "terms": self.terms,
            "nominal": self.nominal,
            "provenance": self.provenance,
        }
        return out

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def pairwise_spread(data: IVDataset, v: np.ndarray) -> PairwiseSpread:
    """Pairwise spread matrix of the direction ``v``.

    Uses the centered-sum identity, which agrees with the O(n^2) pairwise
    definition exactly.
    """
    n = data.n
    if n < 2:
        raise InsufficientSampleError("Q_n needs at least two observations")
    v = np.asarray(v, dtype=float).ravel()
    if v.size != data.d:
        raise ShapeError(f"direction v must have length {data.d}, got {v.size}")
    V = (data.Z @ v)[:, None] * data.X
    Vc = V - V.mean(axis=0)
    Q = Vc.T @ Vc / (n - 1)
    return PairwiseSpread(Q=0.5 * (Q + Q.T), v=v)


def spread_error(delta_hat: np.ndarray, spread: PairwiseSpread) -> float:
    """Error functional ``e_n(delta_hat; v) = sqrt(delta_hat^T Q_n(v) delta_hat)``."""
    delta_hat = np.asarray(delta_hat, dtype=float).ravel()
    if delta_hat.size != spread.Q.shape[0]:
        raise ShapeError(
            f"delta_hat must have length {spread.Q.shape[0]}, got {delta_hat.size}"
        )
    return math.sqrt(max(float(delta_hat @ spread.Q @ delta_hat), 0.0))


def kappa(data: IVDataset) -> KappaCoefficient:
    """Instrument-strength coefficient for scalar problems.

    ``kappa_n = (1/sqrt(n)) * sqrt(Q_n(1)) / |Gamma_hat|`` where ``Q_n(1)``
    is the pairwise spread of the products ``z_i x_i``.  Zero exactly when
    all products coincide; an exactly-zero ``Gamma_hat`` is degenerate.
    """
    if data.d != 1:
        raise ShapeError("kappa is defined for scalar (d = 1) problems")
    n = data.n
    if n < 2:
        raise InsufficientSampleError("kappa needs at least two observations")
    w = data.Z[:, 0] * data.X[:, 0]
    gam = float(w.mean())
    if gam == 0.0:
        raise DegenerateInstrumentError("empirical instrument-covariate moment is zero")
    q = float(np.sum((w - w.mean()) ** 2) / (n - 1))
    return KappaCoefficient(kappa=math.sqrt(max(q, 0.0)) / (math.sqrt(n) * abs(gam)), n=n)


def m3_plugin(fit: IVFit, data: IVDataset, cov: SandwichCovariance | None = None) -> float | None:
    """Diagnostic third-moment plug-in ``(1/n) sum ||Sigma_hat^{-1/2} resid_i z_i||^3``.

    Returns None when ``Sigma_hat`` is numerically singular.
    """
    cov = cov or sigma_hat(fit, data)
    vals, vecs = np.linalg.eigh(cov.sigma_hat)
    if vals[-1] <= 0 or vals[0] <= 1e-14 * vals[-1]:
        return None
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
    Z = data.Z if data.W is None else np.hstack([data.Z, data.W])
    scaled = (Z * fit.residuals[:, None]) @ inv_sqrt.T
    return float(np.mean(np.linalg.norm(scaled, axis=1) ** 3))


def _check_levels(delta: float, delta_prime: float) -> None:
    for name, value in (("delta", delta), ("delta_prime", delta_prime)):
        if not 0.0 < float(value) < 1.0:
            raise DomainError(f"{name} must lie in (0, 1), got {value!r}")


def _maurer_pontil(b: float, scale: float, delta_prime: float, n: int) -> float:
    """Deviation allowance for a sample standard deviation of bounded terms."""
    return b * scale * math.sqrt(8.0 * math.log(1.0 / delta_prime) / (n - 1))


def _nominal(delta: float, delta_prime: float, m3: float | None, n: int) -> dict:
    m3_txt = "unavailable" if m3 is None else f"{m3:.6g}"
    return {
        "delta": float(delta),
        "delta_prime": float(delta_prime),
        "nominal_coverage": 1.0 - float(delta) - float(delta_prime),
        "m3_plugin": m3,
        "berry_esseen_caveat": (
            f"true coverage is 1 - delta - delta' minus an uncomputable c*m3/sqrt(n) "
            f"slack (universal constant c unknown; plug-in m3 = {m3_txt}, n = {n})"
        ),
    }


def ci_linear(
    fit: IVFit,
    data: IVDataset,
    v: np.ndarray,
    delta: float,
    delta_prime: float,
    b: float,
    *,
    beta_true: np.ndarray | None = None,
    delta_hat_norm_bound: float | None = None,
    v_deterministic_attested: bool = True,
) -> ConfidenceReport:
    """Bound on the linear functional ``sqrt(n) |<v, Gamma_hat (beta_hat - beta*)>|``.

    The half-width on the sqrt(n) scale is

        r_delta * { sqrt(v^T Sigma_hat v) + b ||v|| sqrt(8 log(1/delta')/(n-1)) + e_n }

    where ``e_n`` comes from the supplied ``beta_true`` (oracle mode, for
    simulations) or is replaced by ``sqrt(||Q_n(v)||) * bound`` when the
    caller supplies a high-probability bound on ``||beta_hat - beta*||``.

    ``v`` must be deterministic; the library cannot verify this, so the
    report records the caller's attestation.  Data-dependent directions
    belong in :func:`ci_refined`.
    """
    _check_levels(delta, delta_prime)
    if (beta_true is None) == (delta_hat_norm_bound is None):
        raise DomainError("supply exactly one of beta_true (oracle) or delta_hat_norm_bound")
    v = np.asarray(v, dtype=float).ravel()
    if v.size != fit.d:
        raise ShapeError(f"v must have length {fit.d}, got {v.size}")
    cov = sigma_hat(fit, data)
    spread = pairwise_spread(data, v)
    r = normal_quantile(delta)
    term_sigma = math.sqrt(max(float(v @ cov.sigma_hat @ v), 0.0))
    term_mp = _maurer_pontil(b, float(np.linalg.norm(v)), delta_prime, fit.n)
    if beta_true is not None:
        delta_hat = fit.beta_hat - np.asarray(beta_true, dtype=float).ravel()
        term_e = spread_error(delta_hat, spread)
        mode = "oracle"
    else:
        if delta_hat_norm_bound < 0:
            raise DomainError("delta_hat_norm_bound must be non-negative")
        term_e = math.sqrt(spectral_norm(spread.Q)) * float(delta_hat_norm_bound)
        mode = "norm-bound"
    half = r * (term_sigma + term_mp + term_e)
    point = float(v @ (fit.gamma_hat @ fit.beta_hat))
    scale = half / math.sqrt(fit.n)
    return ConfidenceReport(
        method="linear-functional",
        point_estimate=point,
        interval=(point - scale, point + scale),
        sqrt_n_half_width=half,
        regime=None,
        kappa=None,
        terms={
            "quantile": r,
            "sigma_hat_quadratic": term_sigma,
            "maurer_pontil": term_mp,
            "e_n": term_e,
        },
        nominal=_nominal(delta, delta_prime, m3_plugin(fit, data, cov), fit.n),
        provenance={
            "target": "<v, Gamma_hat beta*>",
            "delta_hat_mode": mode,
            "b_source": "user",
            "v_deterministic_attested": bool(v_deterministic_attested),
        },
    )


def ci_refined(
    fit: IVFit,
    data: IVDataset,
    u: np.ndarray,
    delta: float,
    delta_prime: float,
    b: float,
    *,
    gamma_n: np.ndarray | None = None,
    beta_true: np.ndarray | None = None,
) -> ConfidenceReport:
    """Per-coordinate bound on ``sqrt(n) |<u, beta_hat - beta*>|`` for unit ``u``.

    The computable part is

        r_delta { sqrt(u^T Gh^{-1} Sigma_hat Gh^{-T} u)
                  + b ||Gh^{-T} u|| sqrt(8 log(1/delta')/(n-1)) }

    with ``Gh = Gamma_hat``.  The diagnostic remainder needs the
    population matrix (for ``D_n = Gamma_n^{-1} Gamma_hat - I``) and the true
    parameter, so it is assembled only in oracle mode; the report keeps the
    two parts separate.
    """
    _check_levels(delta, delta_prime)
    u = np.asarray(u, dtype=float).ravel()
    if u.size != fit.d:
        raise ShapeError(f"u must have length {fit.d}, got {u.size}")
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise DomainError("u must be a unit vector")
    cov = sigma_hat(fit, data)
    r = normal_quantile(delta)
    gh_inv_t_u = np.linalg.solve(fit.gamma_hat.T, u)
    term_sigma = math.sqrt(max(float(gh_inv_t_u @ cov.sigma_hat @ gh_inv_t_u), 0.0))
    term_mp = _maurer_pontil(b, float(np.linalg.norm(gh_inv_t_u)), delta_prime, fit.n)
    computable = r * (term_sigma + term_mp)

    gamma_source = "plugin" if gamma_n is None else "oracle"
    gamma_ref = fit.gamma_hat if gamma_n is None else np.asarray(gamma_n, dtype=float)
    diagnostic = None
    if beta_true is not None:
        delta_hat = fit.beta_hat - np.asarray(beta_true, dtype=float).ravel()
        d_n = np.linalg.solve(gamma_ref, fit.gamma_hat) - np.eye(fit.d)
        v = np.linalg.solve(gamma_ref.T, u)
        spread = pairwise_spread(data, v)
        vals, vecs = np.linalg.eigh(cov.sigma_hat)
        sig_sqrt = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
        diagnostic = (
            r * spectral_norm(spread.Q) * float(np.linalg.norm(delta_hat))
            + spectral_norm(d_n)
            * (
                r * spectral_norm(np.linalg.solve(fit.gamma_hat, sig_sqrt))
                + b
                * spectral_norm(fit.gamma_hat)
                * math.sqrt(8.0 * math.log(1.0 / delta_prime) / (fit.n - 1))
                + math.sqrt(fit.n) * float(np.linalg.norm(delta_hat))
            )
        )
    half = computable if diagnostic is None else computable + diagnostic
    point = float(u @ fit.beta_hat)
    scale = half / math.sqrt(fit.n)
    return ConfidenceReport(
        method="refined-coordinate",
        point_estimate=point,
        interval=(point - scale, point + scale),
        sqrt_n_half_width=half,
        regime=None,
        kappa=None,
        terms={
            "quantile": r,
            "computable_part": computable,
            "computable_sigma": term_sigma,
            "computable_maurer_pontil": term_mp,
            "diagnostic_remainder": diagnostic,
        },
        nominal=_nominal(delta, delta_prime, m3_plugin(fit, data, cov), fit.n),
        provenance={
            "target": "<u, beta*>",
            "gamma_source": gamma_source,
            "delta_hat_mode": "oracle" if beta_true is not None else "absent",
            "b_source": "user",
        },
    )


def ci_uniform(
    fit: IVFit,
    data: IVDataset,
    u: np.ndarray,
    gamma: np.ndarray,
    lam: float,
    delta: float,
    delta_prime: float,
    b: float,
    delta_hat_norm: float,
) -> ConfidenceReport:
    """Union-bound interval for ``<u, beta*>`` with inflated quantile ``r_{delta/2d}``.

    ``lam`` must be a caller-supplied high-probability bound on
    ``||Gamma_hat^{-1} u - Gamma^{-1} u||`` at level ``1 - delta'``; for
    synthetic ensembles it is typically a Monte Carlo quantile over oracle
    draws, which the report records as caller-provided.
    """
    _check_levels(delta, delta_prime)
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    if delta_hat_norm < 0:
        raise DomainError("delta_hat_norm must be non-negative")
    u = np.asarray(u, dtype=float).ravel()
    if u.size != fit.d:
        raise ShapeError(f"u must have length {fit.d}, got {u.size}")
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (fit.d, fit.d):
        raise ShapeError(f"gamma must be {fit.d}x{fit.d}")
    d = fit.d
    cov = sigma_hat(fit, data)
    r_inflated = normal_quantile(delta / (2.0 * d))
    g_inv_u = np.linalg.solve(gamma, u)
    gh_inv_u = np.linalg.solve(fit.gamma_hat, u)
    term_sigma = math.sqrt(max(float(gh_inv_u @ cov.sigma_hat @ gh_inv_u), 0.0))

    vertices = [g_inv_u + lam * sign * e for sign in (1.0, -1.0) for e in np.eye(d)]
    vertex_norm_max = max(float(np.linalg.norm(w)) for w in vertices)
    vertex_spread_max = max(math.sqrt(spectral_norm(pairwise_spread(data, w).Q)) for w in vertices)
    term_mp = b * vertex_norm_max * math.sqrt(8.0 * math.log(2.0 * d / delta_prime) / (fit.n - 1))
    term_lam = 2.0 * lam * spectral_norm(cov.sigma_hat)
    term_e = vertex_spread_max * float(delta_hat_norm)
    half = r_inflated * (term_sigma + term_mp + term_lam + term_e)
    point = float(u @ fit.beta_hat)
    scale = half / math.sqrt(fit.n)
    return ConfidenceReport(
        method="uniform-coordinate",
        point_estimate=point,
        interval=(point - scale, point + scale),
        sqrt_n_half_width=half,
        regime=None,
        kappa=None,
        terms={
            "quantile_inflated": r_inflated,
            "sigma_hat_quadratic": term_sigma,
            "maurer_pontil": term_mp,
            "radius_max_norm": vertex_norm_max,
            "radius_max_spread": vertex_spread_max,
            "lambda_term": term_lam,
            "delta_hat_term": term_e,
        },
        nominal=_nominal(delta, delta_prime, m3_plugin(fit, data, cov), fit.n),
        provenance={
            "target": "<u, beta*>",
            "lambda_source": "caller",
            "delta_hat_norm_source": "caller",
            "b_source": "user",
        },
    )


def ci_scalar_corrected(
    fit: IVFit,
    data: IVDataset,
    delta: float,
    delta_prime: float,
    b: float,
    *,
    b_source: str = "user",
) -> ConfidenceReport:
    """Scalar corrected interval with regime classification.

    With ``H = sqrt(Gh^{-1} Sigma_hat Gh^{-1}) + (b/|Gh|) sqrt(8 log(1/delta')/(n-1))``:

    * regime (a), when ``kappa_n r_delta < 1``: half-width
      ``r_delta H / (1 - r_delta kappa_n)`` on the sqrt(n) scale;
    * regime (b), when ``kappa_n r_{1-delta} > 1``: half-width
      ``r_{1-delta} H / (kappa_n r_{1-delta} - 1)``;
    * otherwise the corrected construction is inapplicable and no interval
      is produced (the report still carries ``kappa_n`` and both thresholds).
    """
    _check_levels(delta, delta_prime)
    if fit.d != 1:
        raise ShapeError("corrected scalar intervals require d = 1")
    cov = sigma_hat(fit, data)
    kap = kappa(data).kappa
    gam = abs(float(fit.gamma_hat[0, 0]))
    r_lo = normal_quantile(delta)
    r_hi = normal_quantile(1.0 - delta)
    base = math.sqrt(max(float(cov.sandwich[0, 0]), 0.0))
    mp = (b / gam) * math.sqrt(8.0 * math.log(1.0 / delta_prime) / (fit.n - 1))
    h = base + mp
    point = float(fit.beta_hat[0])

    if kap * r_lo < 1.0:
        regime = REGIME_CLASSICAL_CORRECTED
        half = r_lo * h / (1.0 - r_lo * kap)
    elif kap * r_hi > 1.0:
        regime = REGIME_SHRUNK
        half = r_hi * h / (kap * r_hi - 1.0)
    else:
        regime = REGIME_INAPPLICABLE
        half = None
    interval = None
    if half is not None:
        scale = half / math.sqrt(fit.n)
        interval = (point - scale, point + scale)
    return ConfidenceReport(
        method="scalar-corrected",
        point_estimate=point,
        interval=interval,
        sqrt_n_half_width=half,
        regime=regime,
        kappa=kap,
        terms={
            "quantile": r_lo,
            "quantile_upper": r_hi,
            "sandwich_sqrt": base,
            "maurer_pontil": mp,
            "base_half_width": h,
            "kappa_r_delta": kap * r_lo,
            "kappa_r_one_minus_delta": kap * r_hi,
        },
        nominal=_nominal(delta, delta_prime, m3_plugin(fit, data, cov), fit.n),
        provenance={
            "target": "beta*",
            "b_source": b_source,
            "kappa_convention": "square-root form of the pairwise spread",
        },
    )

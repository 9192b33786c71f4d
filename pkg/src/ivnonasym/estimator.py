"""Linear IV model: datasets, the just-identified estimator, and sandwich covariance.

The estimator solves the empirical moment condition

    (1/n) sum_i z_i (y_i - <x_i, beta>) = 0,

so ``beta_hat = Gamma_hat^{-1} (1/n) sum_i z_i y_i`` with
``Gamma_hat = (1/n) sum_i z_i x_i^T``.  Exogenous covariates are handled by
lifting covariates and instruments to dimension ``D = d + p`` and fitting the
lifted system in one solve.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DataFormatError,
    InsufficientSampleError,
    RankDeficiencyError,
    ShapeError,
)
from .numerics import normal_quantile

__all__ = [
    "ClassicalIntervals",
    "IVDataset",
    "IVFit",
    "LiftedDataset",
    "SandwichCovariance",
    "classical_ci",
    "fit_iv",
    "lift",
    "read_dataset_csv",
    "sigma_hat",
    "sigma_tilde",
    "write_dataset_csv",
]

# Gamma_hat is treated as singular past this condition number; confidence
# statements are meaningless in that regime anyway.
CONDITION_LIMIT = 1e12


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeError(f"{name} must be a matrix, got ndim={a.ndim}")
    return a


@dataclass(frozen=True)
class IVDataset:
    """Aligned sample of responses, endogenous covariates, and instruments.

    ``X`` and ``Z`` must share the same column count (just-identified
    setting).  ``W`` optionally holds exogenous covariates.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float).ravel()
        X = _as_matrix(self.X, "X")
        Z = _as_matrix(self.Z, "Z")
        W = None if self.W is None else _as_matrix(self.W, "W")
        n = y.size
        if n < 1:
            raise ShapeError("dataset must contain at least one observation")
        if X.shape[0] != n or Z.shape[0] != n:
            raise ShapeError("y, X, Z must have the same number of rows")
        if X.shape[1] != Z.shape[1]:
            raise ShapeError(
                f"just-identified setting requires X and Z to share a column count, "
                f"got {X.shape[1]} and {Z.shape[1]}"
            )
        if W is not None and (W.shape[0] != n or W.shape[1] < 1):
            raise ShapeError("W must have one row per observation and at least one column")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return 0 if self.W is None else self.W.shape[1]


@dataclass(frozen=True)
class LiftedDataset:
    """Exogenous-covariate model rewritten as a standard IV problem.

    ``Xlift = [X | W]`` and ``Zlift = [Z | W]``; ``selector_U`` picks the
    first ``d`` coordinates of the lifted parameter back out.
    """

    y: np.ndarray
    Xlift: np.ndarray
    Zlift: np.ndarray
    selector_U: np.ndarray
    d: int
    p: int

    @property
    def D(self) -> int:
        return self.d + self.p

    def as_dataset(self) -> IVDataset:
        """View the lifted system as a plain IVDataset for fitting."""
        return IVDataset(y=self.y, X=self.Xlift, Z=self.Zlift)


@dataclass(frozen=True)
class IVFit:
    """Fitted IV estimate with its empirical cross-moment matrix."""

    beta_hat: np.ndarray
    gamma_hat: np.ndarray
    residuals: np.ndarray
    n: int
    condition_number: float

    @property
    def d(self) -> int:
        return self.beta_hat.size


@dataclass(frozen=True)
class SandwichCovariance:
    """Residual-based noise moment and the plug-in sandwich covariance."""

    sigma_hat: np.ndarray
    sandwich: np.ndarray
    sigma_tilde: np.ndarray | None = None


@dataclass(frozen=True)
class ClassicalIntervals:
    """Per-coordinate asymptotic intervals ``beta_j +- r_delta sqrt(S_jj/n)``."""

    lower: np.ndarray
    upper: np.ndarray
    half_width: np.ndarray
    delta: float


def fit_iv(data: IVDataset) -> IVFit:
    """Fit the just-identified IV estimator.

    Parameters
    ----------
    data : IVDataset
        Must not carry exogenous covariates; lift the dataset first if it
        does.

    Raises
    ------
    RankDeficiencyError
        If ``Gamma_hat`` has condition number above ``CONDITION_LIMIT``.
    """
    if data.W is not None:
        raise ShapeError("dataset has exogenous covariates; apply lift() and fit the lifted system")
    n = data.n
    gamma_hat = data.Z.T @ data.X / n
    svals = np.linalg.svd(gamma_hat, compute_uv=False)
    if svals[0] == 0.0 or svals[-1] <= svals[0] / CONDITION_LIMIT:
        cond = np.inf if svals[-1] == 0.0 else svals[0] / svals[-1]
        raise RankDeficiencyError(cond)
    cond = svals[0] / svals[-1]
    beta_hat = np.linalg.solve(gamma_hat, data.Z.T @ data.y / n)
    residuals = data.y - data.X @ beta_hat
    return IVFit(
        beta_hat=beta_hat,
        gamma_hat=gamma_hat,
        residuals=residuals,
        n=n,
        condition_number=float(cond),
    )


def lift(data: IVDataset) -> LiftedDataset:
    """Lift a dataset with exogenous covariates to the standard form.

    Fitting the lifted dataset and applying ``selector_U.T`` to the lifted
    coefficient vector recovers the endogenous-block estimate.
    """
    if data.W is None or data.p < 1:
        raise ShapeError("lift requires exogenous covariates W with at least one column")
    d, p = data.d, data.p
    selector = np.vstack([np.eye(d), np.zeros((p, d))])
    return LiftedDataset(
        y=data.y,
        Xlift=np.hstack([data.X, data.W]),
        Zlift=np.hstack([data.Z, data.W]),
        selector_U=selector,
        d=d,
        p=p,
    )


def sigma_hat(fit: IVFit, data: IVDataset) -> SandwichCovariance:
    """Residual-based noise moment and sandwich covariance.

    ``Sigma_hat = (1/(n-1)) sum_i resid_i^2 z_i z_i^T`` and
    ``sandwich = Gamma_hat^{-1} Sigma_hat Gamma_hat^{-T}``.
    """
    n = fit.n
    if n < 2:
        raise InsufficientSampleError("sandwich covariance needs n >= 2")
    Z = data.Z if data.W is None else np.hstack([data.Z, data.W])
    if Z.shape[1] != fit.d:
        raise ShapeError("fit dimension does not match the dataset instruments")
    weighted = Z * fit.residuals[:, None]
    shat = weighted.T @ weighted / (n - 1)
    shat = 0.5 * (shat + shat.T)
    inner = np.linalg.solve(fit.gamma_hat, shat)
    sandwich = np.linalg.solve(fit.gamma_hat, inner.T).T
    sandwich = 0.5 * (sandwich + sandwich.T)
    return SandwichCovariance(sigma_hat=shat, sandwich=sandwich)


def sigma_tilde(data: IVDataset, beta_true: np.ndarray) -> np.ndarray:
    """Oracle noise moment ``(1/n) sum_i eps_i^2 z_i z_i^T`` with true noise.

    Simulation use only: ``eps_i = y_i - <x_i, beta_true>``.
    """
    beta_true = np.asarray(beta_true, dtype=float).ravel()
    if beta_true.size != data.d:
        raise ShapeError(f"beta_true must have length {data.d}, got {beta_true.size}")
    eps = data.y - data.X @ beta_true
    Z = data.Z
    weighted = Z * eps[:, None]
    st = weighted.T @ weighted / data.n
    return 0.5 * (st + st.T)


def classical_ci(fit: IVFit, cov: SandwichCovariance, delta: float) -> ClassicalIntervals:
    """Per-coordinate asymptotic sandwich intervals at two-sided level ``delta``."""
    r = normal_quantile(delta)
    diag = np.clip(np.diag(cov.sandwich), 0.0, None)
    half = r * np.sqrt(diag / fit.n)
    return ClassicalIntervals(
        lower=fit.beta_hat - half,
        upper=fit.beta_hat + half,
        half_width=half,
        delta=float(delta),
    )


# ---------------------------------------------------------------------------
# CSV schema: header row y,x1..xd,z1..zd[,w1..wp]; RFC 4180, UTF-8.
# ---------------------------------------------------------------------------


def _expect_prefix(names: list[str], prefix: str) -> int:
    count = 0
    while count < len(names) and names[count] == f"{prefix}{count + 1}":
        count += 1
    return count


def read_dataset_csv(path) -> IVDataset:
    """Read a dataset from the documented CSV schema."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    if not header or header[0] != "y":
        raise DataFormatError(f"{path}: first column must be 'y'")
    rest = header[1:]
    d = _expect_prefix(rest, "x")
    if d < 1:
        raise DataFormatError(f"{path}: expected columns x1..xd after y")
    dz = _expect_prefix(rest[d:], "z")
    if dz != d:
        raise DataFormatError(f"{path}: expected {d} z-columns to match x-columns, found {dz}")
    p = _expect_prefix(rest[d + dz :], "w")
    if 1 + d + dz + p != len(header):
        raise DataFormatError(f"{path}: unrecognized trailing columns {header[1 + d + dz + p:]}")
    try:
        values = np.array([[float(v) for v in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric cell ({exc})") from None
    if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] != len(header):
        raise DataFormatError(f"{path}: ragged or empty data rows")
    y = values[:, 0]
    X = values[:, 1 : 1 + d]
    Z = values[:, 1 + d : 1 + 2 * d]
    W = values[:, 1 + 2 * d :] if p else None
    try:
        return IVDataset(y=y, X=X, Z=Z, W=W)
    except ShapeError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def write_dataset_csv(path, data: IVDataset) -> None:
    """Write a dataset using the documented CSV schema."""
    header = (
        ["y"]
        + [f"x{j + 1}" for j in range(data.d)]
        + [f"z{j + 1}" for j in range(data.d)]
        + [f"w{j + 1}" for j in range(data.p)]
    )
    blocks = [data.y[:, None], data.X, data.Z] + ([data.W] if data.W is not None else [])
    table = np.hstack(blocks)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in table:
        writer.writerow([repr(float(v)) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())

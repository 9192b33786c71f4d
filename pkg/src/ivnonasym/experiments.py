"""Monte Carlo harness for the five simulation studies.

Each study maps a manifest to a ``StudyResult`` whose rows serialize to one
CSV.  Trials are keyed by ``(seed, trial_index)`` counter-based streams and
grid points share trial indices, so parameter sweeps use common random
numbers and results are bit-identical no matter how many workers run the
trials.

Study names:

* ``endogeneity-sweep``   rescaled MSE and whole-vector bound vs eta
* ``growing-dims``        rescaled MSE vs n with d = ceil(n**0.3)
* ``hard-tracewise``      log MSE increase of the first coordinate vs omega
* ``corrected-ci-small-kappa``  classical vs corrected CI study, weak design
* ``corrected-ci-large-kappa``  same per-trial layout, large-kappa design

The corrected-CI studies emit three row kinds (``trial``, ``kde``,
``summary``) distinguished by the ``row_type`` column; density rows carry the
log10 ratio curves so downstream plotting needs no statistics.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .bounds import whole_vector_bound
from .confint import (
    REGIME_CLASSICAL_CORRECTED,
    REGIME_SHRUNK,
    ci_scalar_corrected,
    kappa,
)
from .ensembles import (
    EndoConfig,
    badkap_oracle,
    endo_oracle,
    normalized_endo_config,
    weak_oracle,
    hard_oracle,
)
from .estimator import fit_iv, sigma_hat
from .exceptions import DataFormatError, DomainError
from .numerics import RandomStream, gaussian_kde, normal_quantile

__all__ = [
    "ExperimentManifest",
    "STUDIES",
    "StudyResult",
    "default_manifest",
    "load_manifest",
    "run_study",
]

SCHEMA_VERSION = 1

STUDIES = (
    "endogeneity-sweep",
    "growing-dims",
    "hard-tracewise",
    "corrected-ci-small-kappa",
    "corrected-ci-large-kappa",
)

MANIFEST_VERSION = 1


@dataclass
class ExperimentManifest:
    """Study configuration; serializes to/from a versioned JSON manifest."""

    study: str
    M: int
    delta: float = 0.05
    delta_prime: float = 0.05
    seed: int | None = None
    n: int | None = None
    n_grid: list[int] | None = None
    d: int | None = None
    eta_grid: list[float] | None = None
    omega_grid: list[float] | None = None
    alpha1_grid: list[float] | None = None
    b: float | None = None
    eta: float | None = None
    nu: float | None = None
    instrument_law: str = "rademacher"
    mc_reps: int = 400
    prefactor_reps: int = 200
    kde_points: int = 201

    def __post_init__(self) -> None:
        if self.study not in STUDIES:
            raise DataFormatError(f"unknown study {self.study!r}; expected one of {STUDIES}")
        if self.M < 1:
            raise DataFormatError("M must be at least 1")
        for name in ("delta", "delta_prime"):
            v = getattr(self, name)
            if not 0.0 < float(v) < 1.0:
                raise DataFormatError(f"{name} must lie in (0, 1)")
        for name in ("n_grid", "eta_grid", "omega_grid", "alpha1_grid"):
            grid = getattr(self, name)
            if grid is not None:
                if len(grid) == 0:
                    raise DataFormatError(f"{name} must be non-empty")
                if sorted(grid) != list(grid):
                    raise DataFormatError(f"{name} must be sorted ascending")
        needs = {
            "endogeneity-sweep": ("n", "d", "eta_grid"),
            "growing-dims": ("n_grid",),
            "hard-tracewise": ("n", "d", "omega_grid"),
            "corrected-ci-small-kappa": ("n", "alpha1_grid", "b"),
            "corrected-ci-large-kappa": ("n", "alpha1_grid", "b"),
        }[self.study]
        for name in needs:
            if getattr(self, name) is None:
                raise DataFormatError(f"study {self.study!r} requires manifest field {name!r}")

    def to_dict(self) -> dict:
        out = {"manifest_version": MANIFEST_VERSION}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                out[f.name] = value
        return out

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def load_manifest(source) -> ExperimentManifest:
    """Read a manifest from a JSON file path or a parsed dict."""
    if isinstance(source, dict):
        raw = dict(source)
    else:
        try:
            with open(source, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"cannot read manifest {source}: {exc}") from None
        if not isinstance(raw, dict):
            raise DataFormatError(f"{source}: manifest must be a JSON object")
    version = raw.pop("manifest_version", MANIFEST_VERSION)
    if version != MANIFEST_VERSION:
        raise DataFormatError(f"unsupported manifest_version {version}")
    known = {f.name for f in fields(ExperimentManifest)}
    unknown = set(raw) - known
    if unknown:
        raise DataFormatError(f"unknown manifest keys: {sorted(unknown)}")
    try:
        return ExperimentManifest(**raw)
    except TypeError as exc:
        raise DataFormatError(f"invalid manifest: {exc}") from None


def default_manifest(study: str, seed: int | None = None) -> ExperimentManifest:
    """Desk-scale manifest for a named study (acceptance-grade settings)."""
    if study == "endogeneity-sweep":
        return ExperimentManifest(
            study=study, M=5000, n=400, d=5,
            eta_grid=[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0], seed=seed,
        )
    if study == "growing-dims":
        return ExperimentManifest(study=study, M=500, n_grid=[256, 1024, 4096], seed=seed)
    if study == "hard-tracewise":
        return ExperimentManifest(
            study=study, M=2500, n=256, d=5,
            omega_grid=[0.0, 0.25, 0.5, 0.75, 1.0], eta=0.1, nu=1.0, seed=seed,
        )
    if study == "corrected-ci-small-kappa":
        return ExperimentManifest(
            study=study, M=10000, n=256, alpha1_grid=[4.0, 6.0, 10.0], b=1.0, seed=seed,
        )
    if study == "corrected-ci-large-kappa":
        return ExperimentManifest(
            study=study, M=10000, n=256, alpha1_grid=[0.25, 0.75],
            b=1.0, eta=0.1, nu=10.0, seed=seed,
        )
    raise DataFormatError(f"unknown study {study!r}")


@dataclass
class StudyResult:
    """Ordered result rows plus the manifest that produced them."""

    study: str
    columns: list[str]
    rows: list[dict]
    manifest: dict = field(default_factory=dict)

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_format_cell(row.get(col)) for col in self.columns])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_string())


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
    return m, se


def _binomial_se(p: float, m: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / m) if m > 0 else float("nan")


def _median_se(values: np.ndarray) -> float:
    """Distribution-free order-statistic approximation to the median's SE."""
    m = values.size
    if m < 8:
        return float("nan")
    ordered = np.sort(values)
    half_window = 0.5 * math.sqrt(m)
    lo = int(max(0, math.floor(m / 2 - half_window)))
    hi = int(min(m - 1, math.ceil(m / 2 + half_window)))
    return float((ordered[hi] - ordered[lo]) / 2.0)


def growing_dimension(n: int) -> int:
    """Instrument count for the growing-dimension study: ``ceil(n ** 0.3)``."""
    return math.ceil(n ** 0.3)


# ---------------------------------------------------------------------------
# Per-chunk trial computations.  Each returns a list of per-trial tuples for
# trials [lo, hi); module-level so process pools can pickle them.
# ---------------------------------------------------------------------------


def _chunk_endo(manifest: dict, grid_value: float, lo: int, hi: int) -> list:
    cfg = normalized_endo_config(manifest["d"], grid_value, manifest["instrument_law"])
    oracle = endo_oracle(cfg)
    n, seed = manifest["n"], manifest["seed"]
    out = []
    for t in range(lo, hi):
        data, beta = oracle.generate(n, RandomStream(seed, t))
        fit = fit_iv(data)
        out.append((float(np.sum((fit.beta_hat - beta) ** 2)),))
    return out


def _chunk_growing(manifest: dict, grid_value: float, lo: int, hi: int) -> list:
    n = int(grid_value)
    d = growing_dimension(n)
    cfg = EndoConfig(d=d, alpha=1.0, eta=1.0, nu=1.0, instrument_law=manifest["instrument_law"])
    oracle = endo_oracle(cfg)
    seed = manifest["seed"]
    out = []
    for t in range(lo, hi):
        data, beta = oracle.generate(n, RandomStream(seed, t))
        fit = fit_iv(data)
        out.append((float(np.sum((fit.beta_hat - beta) ** 2)),))
    return out


def _chunk_hard(manifest: dict, grid_value: float, lo: int, hi: int) -> list:
    omega = float(grid_value)
    d, n, seed = manifest["d"], manifest["n"], manifest["seed"]
    oracle = hard_oracle(omega, d, eta=manifest["eta"], nu=manifest["nu"])
    trace_l = 1.0 + (d - 1) * omega
    e1 = np.zeros(d)
    e1[0] = 1.0
    out = []
    for t in range(lo, hi):
        data, beta = oracle.generate(n, RandomStream(seed, t))
        fit = fit_iv(data)
        err1 = float(fit.beta_hat[0] - beta[0])
        # per-trial prediction: sqrt(u'Lu) + ||u'(Gh^{-1}Gamma - I)|| sqrt(trace L)
        row = np.linalg.solve(fit.gamma_hat.T, e1) - e1
        pred = 1.0 + float(np.linalg.norm(row)) * math.sqrt(trace_l)
        out.append((err1 * err1, pred))
    return out


def _chunk_corrected(manifest: dict, grid_value: float, lo: int, hi: int) -> list:
    alpha1 = float(grid_value)
    n, seed = manifest["n"], manifest["seed"]
    delta, delta_prime, b = manifest["delta"], manifest["delta_prime"], manifest["b"]
    if manifest["study"] == "corrected-ci-small-kappa":
        oracle = weak_oracle(alpha1)
    else:
        oracle = badkap_oracle(alpha1, eta=manifest["eta"], nu=manifest["nu"])
    r_delta = normal_quantile(delta)
    mp_gate = b * math.sqrt(8.0 * math.log(1.0 / delta_prime) / (n - 1))
    out = []
    for t in range(lo, hi):
        data, beta = oracle.generate(n, RandomStream(seed, t))
        fit = fit_iv(data)
        cov = sigma_hat(fit, data)
        classical_half = r_delta * math.sqrt(max(cov.sandwich[0, 0], 0.0) / n)
        err = abs(float(fit.beta_hat[0] - beta[0]))
        report = ci_scalar_corrected(fit, data, delta, delta_prime, b)
        regime = {REGIME_CLASSICAL_CORRECTED: "a", REGIME_SHRUNK: "b"}.get(report.regime, "none")
        gate_ok = mp_gate < abs(float(fit.gamma_hat[0, 0]))
        if manifest["study"] == "corrected-ci-small-kappa":
            # the reported applicability statistic additionally requires the
            # Maurer-Pontil allowance to sit below the first-stage moment
            applicable = regime == "a" and gate_ok
        else:
            applicable = regime == "b"
        corrected_half = (
            report.sqrt_n_half_width / math.sqrt(n)
            if report.sqrt_n_half_width is not None
            else float("nan")
        )
        log_cl = math.log10(classical_half / err) if err > 0 and classical_half > 0 else float("nan")
        log_co = (
            math.log10(corrected_half / err)
            if applicable and err > 0 and not math.isnan(corrected_half)
            else float("nan")
        )
        shrink = (
            math.log10(classical_half / corrected_half)
            if regime == "b" and corrected_half > 0
            else float("nan")
        )
        covered_cl = err <= classical_half
        covered_co = err <= corrected_half if not math.isnan(corrected_half) else None
        out.append(
            (
                report.kappa,
                regime,
                applicable,
                classical_half,
                corrected_half,
                err,
                log_cl,
                log_co,
                shrink,
                covered_cl,
                covered_co,
                gate_ok,
            )
        )
    return out


_CHUNK_FN = {
    "endogeneity-sweep": _chunk_endo,
    "growing-dims": _chunk_growing,
    "hard-tracewise": _chunk_hard,
    "corrected-ci-small-kappa": _chunk_corrected,
    "corrected-ci-large-kappa": _chunk_corrected,
}


def _chunk_entry(study: str, manifest: dict, grid_value, lo: int, hi: int):
    return _CHUNK_FN[study](manifest, grid_value, lo, hi)


def _gather_trials(manifest: ExperimentManifest, grid: list, workers: int) -> list[list]:
    """Run all (grid point, trial) chunks, in order, optionally in parallel."""
    m = manifest.to_dict()
    study = manifest.study
    M = manifest.M
    if workers <= 1:
        return [_chunk_entry(study, m, gv, 0, M) for gv in grid]
    chunk = max(1, math.ceil(M / (4 * workers)))
    bounds = [(gi, lo, min(lo + chunk, M)) for gi in range(len(grid)) for lo in range(0, M, chunk)]
    results: dict[tuple[int, int], list] = {}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(_chunk_entry, study, m, grid[gi], lo, hi): (gi, lo)
            for gi, lo, hi in bounds
        }
        for fut, key in futures.items():
            results[key] = fut.result()
    out: list[list] = []
    for gi in range(len(grid)):
        rows: list = []
        for lo in sorted(lo for g, lo in results if g == gi):
            rows.extend(results[(gi, lo)])
        out.append(rows)
    return out


def _require_seed(manifest: ExperimentManifest) -> None:
    if manifest.seed is None:
        raise DomainError("manifest seed is required to run a study")


def run_endogeneity_sweep(manifest: ExperimentManifest, workers: int = 1) -> StudyResult:
    """Rescaled MSE, whole-vector bound, and asymptote per endogeneity level."""
    _require_seed(manifest)
    n, d = manifest.n, manifest.d
    trials = _gather_trials(manifest, manifest.eta_grid, workers)
    columns = [
        "study", "schema_version", "eta", "n", "d", "M",
        "mse_rescaled", "mse_se", "bound_rescaled", "asymptote",
    ]
    rows = []
    stream = RandomStream(manifest.seed, 0)
    for eta, chunk in zip(manifest.eta_grid, trials):
        ssq = np.array([c[0] for c in chunk])
        mean, se = _mean_se(ssq)
        oracle = endo_oracle(normalized_endo_config(d, eta, manifest.instrument_law))
        report = whole_vector_bound(
            oracle, n, manifest.delta, manifest.mc_reps, stream,
            average_prefactor=True, prefactor_reps=manifest.prefactor_reps,
        )
        rows.append({
            "study": manifest.study, "schema_version": SCHEMA_VERSION,
            "eta": eta, "n": n, "d": d, "M": manifest.M,
            "mse_rescaled": n * mean, "mse_se": n * se,
            "bound_rescaled": n * report.total ** 2, "asymptote": 1.0,
        })
    return StudyResult(manifest.study, columns, rows, manifest.to_dict())


def run_growing_dims(manifest: ExperimentManifest, workers: int = 1) -> StudyResult:
    """Rescaled MSE versus n with the instrument count growing as ceil(n^0.3)."""
    _require_seed(manifest)
    trials = _gather_trials(manifest, manifest.n_grid, workers)
    columns = [
        "study", "schema_version", "n", "d", "M",
        "mse_rescaled", "mse_se", "bound_rescaled", "asymptote",
    ]
    rows = []
    stream = RandomStream(manifest.seed, 0)
    for n, chunk in zip(manifest.n_grid, trials):
        d = growing_dimension(n)
        ssq = np.array([c[0] for c in chunk])
        mean, se = _mean_se(ssq)
        cfg = EndoConfig(d=d, alpha=1.0, eta=1.0, nu=1.0, instrument_law=manifest.instrument_law)
        report = whole_vector_bound(
            endo_oracle(cfg), n, manifest.delta, manifest.mc_reps, stream,
            average_prefactor=True, prefactor_reps=manifest.prefactor_reps,
        )
        rows.append({
            "study": manifest.study, "schema_version": SCHEMA_VERSION,
            "n": n, "d": d, "M": manifest.M,
            "mse_rescaled": (n / d) * mean, "mse_se": (n / d) * se,
            "bound_rescaled": (n / d) * report.total ** 2, "asymptote": 1.0,
        })
    return StudyResult(manifest.study, columns, rows, manifest.to_dict())


def run_hard_tracewise(manifest: ExperimentManifest, workers: int = 1) -> StudyResult:
    """Log MSE increase of the first coordinate versus the noise weight."""
    _require_seed(manifest)
    n, d = manifest.n, manifest.d
    trials = _gather_trials(manifest, manifest.omega_grid, workers)
    columns = [
        "study", "schema_version", "omega", "n", "d", "M",
        "log_increase_empirical", "log_increase_se", "log_increase_prediction",
        "u_L_u", "trace_L", "asymptote_log",
    ]
    rows = []
    for omega, chunk in zip(manifest.omega_grid, trials):
        e1sq = np.array([c[0] for c in chunk])
        preds = np.array([c[1] for c in chunk])
        mean, se = _mean_se(e1sq)
        rows.append({
            "study": manifest.study, "schema_version": SCHEMA_VERSION,
            "omega": omega, "n": n, "d": d, "M": manifest.M,
            # u'Lu = 1 by construction, so the log increase is log(n * MSE)
            "log_increase_empirical": math.log(n * mean),
            "log_increase_se": se / mean,
            "log_increase_prediction": 2.0 * math.log(float(np.mean(preds))),
            "u_L_u": 1.0, "trace_L": 1.0 + (d - 1) * omega, "asymptote_log": 0.0,
        })
    return StudyResult(manifest.study, columns, rows, manifest.to_dict())


_CORRECTED_COLUMNS = [
    "study", "schema_version", "row_type", "alpha1", "n", "M", "trial",
    "kappa", "regime", "applicable", "classical_half_width", "corrected_half_width",
    "abs_error", "log10_ratio_classical", "log10_ratio_corrected", "log10_width_shrink",
    "covered_classical", "covered_corrected", "curve", "grid", "density",
    "coverage_classical", "coverage_classical_se", "applicability", "applicability_se",
    "coverage_corrected_given_applicable", "coverage_corrected_se",
    "regime_b_fraction", "regime_b_fraction_se",
    "median_log10_width_shrink_regime_b", "median_log10_width_shrink_se",
]


def _kde_rows(base: dict, curve: str, values: np.ndarray, points: int) -> list[dict]:
    values = values[np.isfinite(values)]
    if values.size < 2 or float(np.std(values, ddof=1)) == 0.0:
        return []
    h = float(np.std(values, ddof=1)) * values.size ** (-0.2)
    grid = np.linspace(values.min() - 4 * h, values.max() + 4 * h, points)
    estimate = gaussian_kde(values, grid)
    rows = []
    for gx, dx in zip(estimate.grid, estimate.density):
        row = dict(base)
        row.update({"row_type": "kde", "curve": curve, "grid": float(gx), "density": float(dx)})
        rows.append(row)
    return rows


def run_corrected_ci_study(manifest: ExperimentManifest, workers: int = 1) -> StudyResult:
    """Per-trial classical/corrected widths, coverage, and density summaries."""
    _require_seed(manifest)
    n = manifest.n
    trials = _gather_trials(manifest, manifest.alpha1_grid, workers)
    rows: list[dict] = []
    for alpha1, chunk in zip(manifest.alpha1_grid, trials):
        base = {
            "study": manifest.study, "schema_version": SCHEMA_VERSION,
            "alpha1": alpha1, "n": n, "M": manifest.M,
        }
        for t, rec in enumerate(chunk):
            (kap, regime, applicable, half_cl, half_co, err,
             log_cl, log_co, shrink, cov_cl, cov_co, _gate) = rec
            row = dict(base)
            row.update({
                "row_type": "trial", "trial": t, "kappa": kap, "regime": regime,
                "applicable": applicable, "classical_half_width": half_cl,
                "corrected_half_width": half_co, "abs_error": err,
                "log10_ratio_classical": log_cl, "log10_ratio_corrected": log_co,
                "log10_width_shrink": shrink,
                "covered_classical": cov_cl, "covered_corrected": cov_co,
            })
            rows.append(row)
        applicable = np.array([rec[2] for rec in chunk], dtype=bool)
        cov_cl = np.array([rec[9] for rec in chunk], dtype=float)
        cov_co = np.array([float(rec[10]) if rec[10] is not None else np.nan for rec in chunk])
        regimes = np.array([rec[1] for rec in chunk])
        shrinks = np.array([rec[8] for rec in chunk], dtype=float)
        log_cls = np.array([rec[6] for rec in chunk], dtype=float)
        log_cos = np.array([rec[7] for rec in chunk], dtype=float)
        m = len(chunk)
        p_cov = float(cov_cl.mean())
        p_app = float(applicable.mean())
        applicable_cov = cov_co[applicable & np.isfinite(cov_co)]
        b_mask = regimes == "b"
        b_shrinks = shrinks[b_mask & np.isfinite(shrinks)]
        p_b = float(b_mask.mean())
        p_cov_corr = float(applicable_cov.mean()) if applicable_cov.size else None
        summary = dict(base)
        summary.update({
            "row_type": "summary",
            "coverage_classical": p_cov,
            "coverage_classical_se": _binomial_se(p_cov, m),
            "applicability": p_app,
            "applicability_se": _binomial_se(p_app, m),
            "coverage_corrected_given_applicable": p_cov_corr,
            "coverage_corrected_se": (
                _binomial_se(p_cov_corr, applicable_cov.size) if p_cov_corr is not None else None
            ),
            "regime_b_fraction": p_b,
            "regime_b_fraction_se": _binomial_se(p_b, m),
            "median_log10_width_shrink_regime_b": (
                float(np.median(b_shrinks)) if b_shrinks.size else None
            ),
            "median_log10_width_shrink_se": (
                _median_se(b_shrinks) if b_shrinks.size else None
            ),
        })
        rows.append(summary)
        rows.extend(_kde_rows(base, "classical", log_cls, manifest.kde_points))
        rows.extend(_kde_rows(base, "corrected", log_cos, manifest.kde_points))
    return StudyResult(manifest.study, _CORRECTED_COLUMNS, rows, manifest.to_dict())


_RUNNERS = {
    "endogeneity-sweep": run_endogeneity_sweep,
    "growing-dims": run_growing_dims,
    "hard-tracewise": run_hard_tracewise,
    "corrected-ci-small-kappa": run_corrected_ci_study,
    "corrected-ci-large-kappa": run_corrected_ci_study,
}


def run_study(manifest: ExperimentManifest, workers: int = 1) -> StudyResult:
    """Dispatch a manifest to its study runner."""
    return _RUNNERS[manifest.study](manifest, workers=workers)

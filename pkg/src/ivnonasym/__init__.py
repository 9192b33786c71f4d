"""Non-asymptotic instrumental-variable estimation and inference.

Library layout:

* :mod:`~ivnonasym.numerics`    quantiles, spectral norms, KDE, random streams
* :mod:`~ivnonasym.estimator`   datasets, the IV estimator, sandwich covariance
* :mod:`~ivnonasym.bounds`      whole-vector and linear-functional error bounds
* :mod:`~ivnonasym.confint`     corrected confidence intervals and regimes
* :mod:`~ivnonasym.ensembles`   synthetic generators with exact moment oracles
* :mod:`~ivnonasym.experiments` Monte Carlo studies emitting CSV rows
* :mod:`~ivnonasym.instrument`  wildfire smoke-index instrument construction
* :mod:`~ivnonasym.figures`     matplotlib rendering of study CSVs
* :mod:`~ivnonasym.cli`         `iv-nonasym` command-line entry point
"""

from .bounds import (
    BoundReport,
    PopulationMoments,
    scaled_noise_vector,
    gamma_deviation,
    deviation_functional,
    whole_vector_bound,
    linear_functional_bound,
)
from .confint import (
    ConfidenceReport,
    KappaCoefficient,
    PairwiseSpread,
    ci_linear,
    ci_refined,
    ci_scalar_corrected,
    ci_uniform,
    spread_error,
    kappa,
    pairwise_spread,
)
from .ensembles import (
    EndoConfig,
    EnsembleOracle,
    badkap_oracle,
    endo_oracle,
    gen_badkap,
    gen_endo,
    gen_hard,
    gen_weak,
    hard_oracle,
    make_oracle,
    normalized_endo_config,
    weak_oracle,
)
from .estimator import (
    IVDataset,
    IVFit,
    LiftedDataset,
    SandwichCovariance,
    classical_ci,
    fit_iv,
    lift,
    read_dataset_csv,
    sigma_hat,
    sigma_tilde,
    write_dataset_csv,
)
from .exceptions import (
    DataFormatError,
    DegenerateInstrumentError,
    DegenerateSampleError,
    DomainError,
    InsufficientSampleError,
    IvError,
    RankDeficiencyError,
    ShapeError,
)
from .experiments import (
    ExperimentManifest,
    StudyResult,
    default_manifest,
    load_manifest,
    run_study,
)
from .instrument import (
    FireRecord,
    SmokeIndexConfig,
    TractRecord,
    haversine_km,
    smoke_index,
    threshold_instrument,
)
from .numerics import (
    DensityEstimate,
    RandomStream,
    gaussian_kde,
    normal_quantile,
    spectral_norm,
)

__version__ = "0.1.0"

"""linkmi: bipartite Bayesian record linkage with multiple-imputation
regression inference that is robust to false links."""

__version__ = "0.1.0"

from .comparison import (  # noqa: F401
    ComparisonMatrix,
    FieldSpec,
    RecordFile,
    ValidationError,
    build_comparison_matrix,
    compare_pair,
    normalized_levenshtein,
)
from .emcore import EMConfig, MixtureFit  # noqa: F401
from .gibbs import (  # noqa: F401
    Chain,
    GibbsConfig,
    LinkState,
    MatchParams,
    confidence_measure,
    full_conditional_z_entry,
    run_gibbs,
)
from .imputation import (  # noqa: F401
    LinkedDataset,
    PerDatasetEstimate,
    PooledEstimate,
    extract_all,
    extract_linked_dataset,
    pool_all,
    pool_rubin,
)
from .marginal import MarginalDensity, fit_kde_marginal, fit_normal_marginal  # noqa: F401
from .baselines import OlsFit, ols_fit, perfect_ols, ts_ols  # noqa: F401
from .plmi import fit_plmi  # noqa: F401
from .plmic import fit_plmic, logistic_h  # noqa: F401
from .simgen import ScenarioConfig, generate_scenario, sigma_for_r2  # noqa: F401
from .pipeline import PipelineConfig, run_pipeline  # noqa: F401
from .study import StudyConfig, run_simulation_study  # noqa: F401

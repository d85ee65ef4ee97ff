"""Cross-domain collaborative learning for hyperspectral classification.

A library plus CLI covering: raster ingestion and spectral preprocessing,
random-walker and extended-random-walker solvers on the 8-neighbor pixel
lattice, cluster correlation-subspace alignment between heterogeneous
domains, probabilistic linear classification, the iterative
pseudolabel/align/classify loop, baselines, and accuracy metrics.
"""

from .classifier import DEFAULT_C_GRID, LinearModel, predict_proba, train
from .engine import (
    BASELINES,
    CdclHistory,
    CdclParams,
    CdclResult,
    convergence_check,
    run_baseline,
    run_cdcl,
)
from .errors import CdclError, DataError, NumericalError
from .graph import (
    ProbabilityMap,
    SeedSet,
    WeightedGraph,
    argmax_segmentation,
    build_graph,
    erw_solve,
    rw_solve,
)
from .hsi import (
    ExperimentSplit,
    HsiCube,
    LabelMap,
    draw_split,
    first_principal_component,
    kmeans_band_reduce,
    load_cube,
    load_labels,
    save_cube,
    save_labels,
)
from .metrics import MetricsReport, compute_metrics
from .pseudolabel import (
    TargetClusters,
    TrainingSet,
    extract_target_clusters,
    label_verification,
    mbt_select,
    pseudolabel_round,
)
from .subspace import (
    ClusterStats,
    ProjectionPair,
    cca_pair_baseline,
    ccca_covariances,
    fit_ccca,
    project,
    select_components,
    solve_correlation_subspace,
)
from .synthetic import SyntheticSpec, default_spec, generate_synthetic

__version__ = "0.1.0"

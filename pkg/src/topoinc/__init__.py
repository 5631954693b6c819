"""Topology-aware flows and the invert-and-classify manifold defense on 2D
toy datasets, with exact density extension and superlevel-set analysis."""

__version__ = "0.1.0"

from .geometry import (
    CurveManifold,
    DataGeneratingManifold,
    LabeledSample,
    class_wise_distance,
    make_dataset,
    nearest_point,
    perturb_normal,
    sample_uniform,
)
from .noise import (
    NoiseModel,
    ThresholdReport,
    extended_density,
    monotonicity_probe,
    noise_pdf,
    omega_epsilon,
    radius_of_level,
    theorem1_report,
)
from .topofield import (
    LevelSetReport,
    ScalarField,
    check_inclusion_separation,
    hole_count,
    rasterize,
    superlevel_components,
)
from .latent import LatentMixture, standard_mixture
from .flow import CouplingLayer, FlowModel, Standardizer, gradient_wrt_input, loss_and_gradients
from .train import Adam, TrainConfig, train
from .inc import IncConfig, IncResult, project_aware, project_ideal, project_ignorant
from .svm import SvmModel, kkt_residual, svm_train
from .bench import (
    BoundaryGrid,
    ExperimentConfig,
    ProjectionBenchReport,
    boundary_eval,
    capture_failure_traces,
    run_alignment_scenario,
    run_levelset_report,
    run_projection_bench,
)

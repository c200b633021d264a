"""Mean-field inference for fully connected pairwise CRFs and CRF-GAT models."""

from .errors import (
    CrfError,
    FeatureShapeError,
    InstanceTooLargeError,
    ModelShapeError,
    ParseError,
    SchemaVersionError,
    SpecError,
    TrainingDivergedError,
)
from .model import (
    CompatibilityMatrix,
    CrfModel,
    ObservedSequence,
    distribution_from_potentials,
    gibbs_energy,
    unary_from_classifier,
)
from .kernels import (
    GaussianBilateral,
    GaussianComponent,
    Polynomial,
    Precomputed,
    eval_kernel,
    kernel_matrix,
    validate_spec,
)
from .oracle import ExactResult, SamplerConfig, enumerate_exact, exact_kl, gibbs_sample
from .meanfield import (
    MeanFieldConfig,
    MeanFieldDiagnostics,
    decode_argmax,
    init_marginals,
    mf_step_eq6,
    mf_step_eq7,
    mf_step_sequential,
    run_mean_field,
)
from .gat import (
    CrfGatModel,
    GatLayerParams,
    GatTrace,
    UnaryClassifierParams,
    decode_argmin,
    gat_forward,
    gat_layer,
)
from .data import LabeledDataset, SyntheticSpec, accuracy, gen_synthetic
from .training import (
    TrainConfig,
    cross_entropy,
    grad_analytic,
    grad_fd,
    init_crf_gat,
    train,
    train_unary,
)

__version__ = "0.1.0"

"""Differentially private synthetic-data ensembles.

Budget accounting, discrete tabular synthesis, downstream classifiers with
calibrated confidences, and a benchmark harness tying them together.
"""

__version__ = "0.1.0"

from .accounting import (
    BudgetLedger,
    LedgerEntry,
    PrivacyBudget,
    SamplingRate,
    amplify_by_subsampling,
    compose,
    inverse_amplify,
    per_run_budget,
)
from .data import (
    Attribute,
    AttributeSubset,
    ColumnSpec,
    Dataset,
    Schema,
    SchemaConfig,
    discretize_staging,
    dp_discretize,
    load_csv,
    marginal_counts,
    poisson_subsample,
    resample_fraction,
)
from .datasets import (
    bayes_accuracy,
    majority_baseline,
    make_desk_truth,
    make_smoke_truth,
    make_truth,
    truth_schema,
)
from .ensembles import (
    EnsembleModel,
    SynthesisPlan,
    aggregate_confidence,
    run_plan,
    synthesize_plan,
    train_members,
)
from .errors import (
    BudgetExceeded,
    CertificationError,
    DatasetNotFound,
    DeltaOverflow,
    DomainTooLarge,
    DpSynthError,
    EmptyDataset,
    EmptySubsample,
    InvalidBudget,
    InvalidConfig,
    MissingLabel,
    ParseError,
    SchemaError,
    UnknownColumn,
)
from .evaluation import (
    BenchmarkConfig,
    EvalReport,
    accuracy,
    ece,
    evaluate,
    run_benchmark,
    train_test_split,
    write_benchmark_outputs,
)
from .mechanisms import (
    DomainDistribution,
    MechanismConfig,
    generate,
    independent_marginals_fit,
    label_paired_marginals_fit,
    mwem_fit,
)
from .models import (
    FeatureEncoder,
    ModelConfig,
    PlattCalibrator,
    model_from_dict,
    train_model,
)

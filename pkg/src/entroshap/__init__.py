"""entroshap: model-agnostic Shapley attribution with uncertainty-based
reweighting, directed feature-interaction analysis, and a faithfulness
evaluation harness, fronted by an HTTP service and a thin CLI."""

__version__ = "0.1.0"

from .core import (
    AttributionVector,
    Coalition,
    Instance,
    LabelDistribution,
    Model,
    PartialInstance,
    SamplingConfig,
    compose,
    normalized_entropy,
    predict_singleton,
)
from .distributions import (
    ConditionalProvider,
    Dataset,
    TabularJointModel,
    conditional_probability,
    draw_random_donor,
    marginal_label,
    sample_conditional,
)
from .engine import (
    ConditionalBaseline,
    RandomBaseline,
    ShapleyEstimate,
    ValueFunctionSpec,
    exact_shapley,
    select_uninformative_replacement,
    shapley_sampling,
    value_function,
)
from .evaluation import (
    EvalConfig,
    EvalReport,
    Ranking,
    comprehensiveness,
    log_odds,
    overlap_rate,
    perturb,
    rank_features,
    spearman,
    sufficiency,
)
from .interaction import (
    InfluenceGraph,
    InteractionEdge,
    WorldModel,
    asymmetric_interaction,
    build_influence_graph,
    feature_influence,
    pmi,
    replacement_bias,
    symmetric_interaction,
)

__all__ = [
    "__version__",
    "AttributionVector",
    "Coalition",
    "ConditionalBaseline",
    "ConditionalProvider",
    "Dataset",
    "EvalConfig",
    "EvalReport",
    "InfluenceGraph",
    "InteractionEdge",
    "Instance",
    "LabelDistribution",
    "Model",
    "PartialInstance",
    "Ranking",
    "RandomBaseline",
    "SamplingConfig",
    "ShapleyEstimate",
    "TabularJointModel",
    "ValueFunctionSpec",
    "WorldModel",
    "asymmetric_interaction",
    "build_influence_graph",
    "compose",
    "comprehensiveness",
    "conditional_probability",
    "draw_random_donor",
    "exact_shapley",
    "feature_influence",
    "log_odds",
    "marginal_label",
    "normalized_entropy",
    "overlap_rate",
    "perturb",
    "pmi",
    "predict_singleton",
    "rank_features",
    "replacement_bias",
    "sample_conditional",
    "select_uninformative_replacement",
    "shapley_sampling",
    "spearman",
    "sufficiency",
    "symmetric_interaction",
    "value_function",
]

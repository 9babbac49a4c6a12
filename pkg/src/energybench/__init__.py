"""Building energy benchmarking: models, scores, and explanations."""

from .datamodel import (
    ColumnSpec,
    Dataset,
    FilterSpec,
    PeerGroupSpec,
    apply_filters,
    build_peer_group,
    load_table,
    merge_sources,
)
from .features import DesignMatrix, TermSpec, check_budget, expand_interactions
from .gbt import GbtModel, GbtParams, TreeNode, TuneGrid, fit_cart, fit_gbt, grid_search_cv, predict_gbt
from .linreg import LinearModel, fit_wls, predict_linear, summarize_model
from .explain import (
    Explanation,
    ForceData,
    ImportanceReport,
    InteractionExplanation,
    force_data,
    importance,
    shap_exact,
    shap_interactions,
    shap_linear,
    shap_tree,
)
from .scoring import MetricReport, ScoreTable, compute_eer, evaluate, fit_score_table, score_building

__version__ = "0.1.0"

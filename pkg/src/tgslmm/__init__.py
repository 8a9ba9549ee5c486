"""Tree-guided sparse linear mixed model (TgSLMM).

Confounder correction by a linear-mixed-model rotation followed by a
tree-lasso fit over tree-structured responses, plus a synthetic benchmark
generator and ROC/PR scoring.
"""

from tgslmm.core import (
    DataSet,
    DegenerateResponses,
    DegenerateTruth,
    DimensionMismatch,
    EffectMatrix,
    EigenFailure,
    EmptyData,
    InvalidConfig,
    KinshipMatrix,
    MissingHeight,
    NonFinite,
    SolverConfig,
    TgslmmError,
    validate_dataset,
)
from tgslmm.kinship import (
    NullModelFit,
    RotatedData,
    fit_null_model,
    kinship_from_x,
    rotate,
)
from tgslmm.tree import (
    ResponseTree,
    TreeNode,
    cluster_responses,
    compute_weights,
    penalty_value,
)
from tgslmm.solver import SmoothedPenalty, SolveResult, objective, solve_tree_lasso
from tgslmm.models import MethodSpec, fit, predict
from tgslmm.synth import SynthConfig, SynthOutput, simulate
from tgslmm.evaluation import EvalReport, beta_mse, evaluate, pred_mse, roc_curve

__version__ = "0.1.0"

from .activations import ACTIVATION_NAMES, activation
from .fuzzy import IfScore, if_score, score_function
from .linalg import gaussian_kernel, linear_kernel, pinv, ridge_residual, ridge_solve
from .qp import QpProblem, QpResult, QpWarning, box_qp_solve, kkt_residual, kkt_scale, project
from .sgd import SgdParams, SgdResult, sgd_momentum

__all__ = [
    "ACTIVATION_NAMES", "activation", "IfScore", "if_score", "score_function",
    "gaussian_kernel", "linear_kernel", "pinv", "ridge_residual", "ridge_solve",
    "QpProblem", "QpResult", "QpWarning", "box_qp_solve", "kkt_residual", "kkt_scale", "project",
    "SgdParams", "SgdResult", "sgd_momentum",
]

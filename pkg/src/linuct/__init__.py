"""Low-dimensional tree search for cooperative multi-agent planning.

The package couples Monte Carlo Tree Search with a contextual linear bandit
over n-hot joint-action vectors: joint returns are regressed onto per-agent
action values with a curvature-weighted ridge estimator, selection scores
combine the estimate with an ellipsoid exploration radius, and new children
are generated by greedy maximization over the combinatorial action space.
A benchmark harness measures regret against the oracle optimum on matrix
games and checks the estimator's theoretical guarantees at desk scale.
"""

from linuct.bandit import (
    BetaSchedule,
    ConvexLoss,
    DesignState,
    InvalidActionError,
    JointAction,
    NumericError,
    encode_batch,
)
from linuct.selection import (
    SelectionObjective,
    brute_force_select,
    enumerate_joint_actions,
    greedy_select,
    marginal_gain,
    set_function_value,
)
from linuct.matgame import MatGame, MatGameSpec, oracle_optimum
from linuct.tree import SearchConfig, SearchNode, SearchStats, plan
from linuct.baselines import FlatUCB, RandomSelector, puct_score
from linuct.regret import regret_bound_value

__all__ = [
    "BetaSchedule",
    "ConvexLoss",
    "DesignState",
    "FlatUCB",
    "InvalidActionError",
    "JointAction",
    "MatGame",
    "MatGameSpec",
    "NumericError",
    "RandomSelector",
    "SearchConfig",
    "SearchNode",
    "SearchStats",
    "SelectionObjective",
    "brute_force_select",
    "encode_batch",
    "enumerate_joint_actions",
    "greedy_select",
    "marginal_gain",
    "oracle_optimum",
    "plan",
    "puct_score",
    "regret_bound_value",
    "set_function_value",
]

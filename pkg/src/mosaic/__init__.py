"""Pipeline search by Monte-Carlo tree search over structures coupled with
random-forest Bayesian optimization over hyperparameters."""
from .encoding import encode
from .evaluation import EvaluationRecord, Evaluator, FunctionEvaluator, Outcome, evaluate_with_cutoff
from .mcts import MctsNode, MctsTree, SearchParams, tree_walk
from .optimizer import OptimizationResult, OptimizerParams, initialize_metalearning, initialize_vanilla, run
from .sampling import neighbors, sample_default
from .space import (AlgorithmChoice, DecisionStep, HyperparameterSpec, Pipeline, SearchSpace, compatible,
                    default_pipeline, load_space, validate_space)
from .surrogate import ForestParams, expected_improvement, fit, policy, predict, q_hat

__all__ = [
    "AlgorithmChoice", "DecisionStep", "EvaluationRecord", "Evaluator", "ForestParams", "FunctionEvaluator",
    "HyperparameterSpec", "MctsNode", "MctsTree", "OptimizationResult", "OptimizerParams", "Outcome",
    "Pipeline", "SearchParams", "SearchSpace", "compatible", "default_pipeline", "encode",
    "evaluate_with_cutoff", "expected_improvement", "fit", "initialize_metalearning", "initialize_vanilla",
    "load_space", "neighbors", "policy", "predict", "q_hat", "run", "sample_default", "tree_walk",
    "validate_space",
]

"""F-score-gain IF-THEN rule extraction, centralized or across federated parties."""
from .core import (
    CATEGORICAL,
    NUMERIC,
    Condition,
    Dataset,
    Direction,
    HyperParams,
    OpaqueSplit,
    Rule,
    RuleMetrics,
    RuleSet,
    SplitStats,
    concat_columns,
    concat_rows,
    encode_categoricals,
    evaluate_rule,
    evaluate_rule_set,
    f_beta,
    precision_recall,
)
from .data import DataSchema, load_csv, save_csv
from .errors import *  # noqa: F401,F403
from .inducer import best_split, candidate_splits, learn_rule_set, learn_single_rule
from .serialize import format_table, report_csv, ruleset_from_json, ruleset_to_json
from .synthetic import PlantedCondition, SyntheticSpec, gen_synthetic

__version__ = "0.1.0"

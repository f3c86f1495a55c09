"""rulehound: distill trained models into readable interval rules.

The package wraps a four-stage extraction pipeline (observe, generalize,
combine, refine) and a range-based baseline behind scikit-learn style
estimators, together with the from-scratch networks they distill, scoring
utilities, and a simulated smart-home light service for end-to-end runs.
"""

__version__ = "0.1.0"

from .correlation import pearson_correlation, states_targets_corr
from .data import (
    CONTINUOUS,
    DISCRETE,
    DataError,
    Dataset,
    Sample,
    Schema,
    StateSpec,
    load_csv,
    load_schema,
    split_seen_unseen,
)
from .dqn import Encoding, QAgent, ReplayBuffer, StateEncoder, Transition
from .metrics import MetricsReport, evaluate
from .mlp import MLP, ClassifierOracle, NeuralClassifier, TrainingError
from .pbre import (
    ExtractionConfig,
    ExtractionResult,
    PBREExtractor,
    RuleSet,
    combine,
    extract,
    infer,
    remove_insignificant_states,
    select_actuator_states,
)
from .rules import Conclusion, InstanceRule, Rule, RuleTree, StateValue, rule_matches
from .rxncm import RxNCMExtractor, RxRule
from .smarthome import (
    EnvConfig,
    HabitualBehavior,
    LightEnv,
    Variant,
    indoor_light,
    make_variant,
    outdoor_light,
    run_cycle,
)

__all__ = [
    "CONTINUOUS",
    "DISCRETE",
    "ClassifierOracle",
    "Conclusion",
    "DataError",
    "Dataset",
    "Encoding",
    "EnvConfig",
    "ExtractionConfig",
    "ExtractionResult",
    "HabitualBehavior",
    "InstanceRule",
    "LightEnv",
    "MLP",
    "MetricsReport",
    "NeuralClassifier",
    "PBREExtractor",
    "QAgent",
    "ReplayBuffer",
    "Rule",
    "RuleSet",
    "RuleTree",
    "RxNCMExtractor",
    "RxRule",
    "Sample",
    "Schema",
    "StateEncoder",
    "StateSpec",
    "StateValue",
    "TrainingError",
    "Transition",
    "Variant",
    "combine",
    "evaluate",
    "extract",
    "indoor_light",
    "infer",
    "load_csv",
    "load_schema",
    "make_variant",
    "outdoor_light",
    "pearson_correlation",
    "remove_insignificant_states",
    "rule_matches",
    "run_cycle",
    "select_actuator_states",
    "split_seen_unseen",
    "states_targets_corr",
]

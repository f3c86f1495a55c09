"""Rule extraction pipeline and inference engine.

Extraction runs in four stages.  Observation turns each seen sample into an
instance rule by asking the model which actuator value it prefers per state
vector.  Generalization folds instance rules into a branch tree whose nodes
keep mean/min/max statistics.  Combination merges rules that share identical
conclusions and overlapping condition intervals.  Refinement greedily drops
input states whose removal does not hurt accuracy on held-out data, with a
second pass that offers every dropped state a way back in.

Inference picks a conclusion for a query by matching its values against rule
condition intervals; overlapping matches are arbitrated by correlation
between the query and each rule's condition means, weighted per state by the
state's correlation with the targets, falling back to observation counts
when correlations are too close to call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .correlation import states_targets_corr, weighted_rule_correlations
from .data import CONTINUOUS, DISCRETE, DataError, Dataset, Sample, Schema
from .rules import (
    Conclusion,
    InstanceRule,
    Rule,
    RuleTree,
    StateValue,
    load_rules_json,
    rule_matches,
    rules_from_dict,
    rules_to_dict,
    save_rules_json,
)


class Oracle(Protocol):
    """What extraction needs from a trained model.

    ``decide`` maps a sample (name -> value over at least the model's input
    states) to one chosen value per actuator/target state.  ``q_values``
    exposes the underlying per-actuator preference vectors.
    """

    input_names: tuple[str, ...]

    def decide(self, sample: Mapping[str, float]) -> dict[str, float]: ...

    def q_values(self, sample: Mapping[str, float]) -> dict[str, np.ndarray]: ...


def select_actuator_states(q_values: Mapping[str, np.ndarray]) -> dict[str, int]:
    """Pick the argmax index per actuator; ties go to the lowest index."""
    out: dict[str, int] = {}
    for name, vec in q_values.items():
        arr = np.asarray(vec, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"actuator {name!r} needs a non-empty 1-D value vector")
        out[name] = int(np.argmax(arr))
    return out


def make_instance_rule(
    sample: Mapping[str, float],
    chosen: Mapping[str, float],
    input_names: Sequence[str],
    step: int = 0,
) -> InstanceRule:
    """Package one observation: exact input values plus the model's choices."""
    return InstanceRule(
        conditions={n: float(sample[n]) for n in input_names},
        conclusions={n: float(v) for n, v in chosen.items()},
        step=step,
    )


def generalize(
    instance_rules: Sequence[InstanceRule],
    schema: Schema,
    tolerances: Mapping[str, float] | None = None,
) -> RuleTree:
    """Fold instance rules into a branch tree, merging within tolerance."""
    tree = RuleTree.for_schema(schema)
    for ir in instance_rules:
        tree.insert(ir, tolerances)
    return tree


def _merge_pair(a: Rule, b: Rule, continuous_names: Sequence[str], leaf_name: str) -> Rule:
    # Weight condition means by how many observations each rule's own branch
    # absorbed, which is the count on its deepest conclusion.
    wa = a.conclusions[leaf_name].count
    wb = b.conclusions[leaf_name].count
    conditions: dict[str, StateValue] = {}
    for name, sva in a.conditions.items():
        svb = b.conditions[name]
        if name in continuous_names:
            conditions[name] = StateValue.bounded(
                mean=(sva.mean * wa + svb.mean * wb) / (wa + wb),
                min=min(sva.min, svb.min),
                max=max(sva.max, svb.max),
            )
        else:
            conditions[name] = sva
    conclusions = {
        name: Conclusion(value=ca.value, count=ca.count + b.conclusions[name].count)
        for name, ca in a.conclusions.items()
    }
    return Rule(conditions=conditions, conclusions=conclusions)


def combine(rules: Sequence[Rule], schema: Schema) -> list[Rule]:
    """Merge same-conclusion rules whose condition intervals overlap.

    Rules are grouped by exact conclusion values plus exact discrete
    condition values; within a group, rules are swept per continuous state in
    min order and merged whenever the next interval starts at or before the
    running maximum.  A merge envelops every continuous condition at once,
    with count-weighted means, and repeats until no state admits another
    merge, so the result is a fixed point: combining it again changes
    nothing.
    """
    if not rules:
        return []
    target_names = tuple(schema.target_names)
    leaf_name = target_names[-1]
    continuous_names = tuple(
        s.name for s in schema.input_states if s.kind == CONTINUOUS and s.name in rules[0].conditions
    )
    discrete_names = tuple(
        s.name for s in schema.input_states if s.kind == DISCRETE and s.name in rules[0].conditions
    )

    groups: dict[tuple, list[Rule]] = {}
    order: list[tuple] = []
    for r in rules:
        key = (
            tuple((n, r.conclusions[n].value) for n in target_names),
            tuple((n, r.conditions[n].min, r.conditions[n].max) for n in discrete_names),
        )
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)

    out: list[Rule] = []
    for key in order:
        group = list(groups[key])
        if not continuous_names:
            merged = group[0]
            for r in group[1:]:
                merged = _merge_pair(merged, r, continuous_names, leaf_name)
            out.append(merged)
            continue
        changed = True
        while changed:
            changed = False
            for name in continuous_names:
                group.sort(key=lambda r: (r.conditions[name].min, r.conditions[name].max))
                swept = [group[0]]
                for r in group[1:]:
                    last = swept[-1]
                    if r.conditions[name].min <= last.conditions[name].max:
                        swept[-1] = _merge_pair(last, r, continuous_names, leaf_name)
                        changed = True
                    else:
                        swept.append(r)
                group = swept
        out.extend(group)
    return out


def infer(
    rules: Sequence[Rule],
    sample: Mapping[str, float],
    corr: Mapping[str, float],
    epsilon: float = 1e-3,
    dropped: frozenset[str] | Sequence[str] = frozenset(),
) -> dict[str, float] | None:
    """Derive conclusions for a sample from a rule set.

    A single matching rule answers directly.  Several matching rules are
    scored by correlation-weighted similarity between the query values and
    each rule's condition means; when the scores sit within ``epsilon`` of
    each other the rule with the largest total observation count wins.  A
    sample no rule matches is scored against every rule the same way, and
    only when that fallback is fully degenerate (all scores zero, all counts
    equal) does inference abstain and return None.
    """
    drop = frozenset(dropped)
    if not rules:
        return None
    candidates = [r for r in rules if rule_matches(r, sample, ignore=drop)]
    fallback = False
    if not candidates:
        candidates = list(rules)
        fallback = True
    if len(candidates) == 1 and not fallback:
        return candidates[0].conclusion_values()

    names = [n for n in candidates[0].conditions if n not in drop]
    arr = np.array(
        [[float(sample[n]) for n in names]]
        + [[r.conditions[n].mean for n in names] for r in candidates],
        dtype=np.float64,
    ).reshape(len(candidates) + 1, len(names))
    weights = [float(corr.get(n, 0.0)) for n in names]
    scores = weighted_rule_correlations(weights, arr)
    counts = np.array([r.count_sum() for r in candidates], dtype=np.int64)

    if fallback and not np.any(scores != 0.0) and bool(np.all(counts == counts[0])):
        return None
    if float(scores.max() - scores.min()) < epsilon:
        pick = int(np.argmax(counts))
    else:
        pick = int(np.argmax(scores))
    return candidates[pick].conclusion_values()


def strip_states(rules: Sequence[Rule], dropped: Sequence[str]) -> list[Rule]:
    """Remove dropped condition states; merge rules that become identical."""
    drop = frozenset(dropped)
    out: list[Rule] = []
    index: dict[tuple, int] = {}
    for r in rules:
        conditions = {n: sv for n, sv in r.conditions.items() if n not in drop}
        key = (
            tuple((n, sv.mean, sv.min, sv.max) for n, sv in conditions.items()),
            tuple((n, c.value) for n, c in r.conclusions.items()),
        )
        if key in index:
            kept = out[index[key]]
            out[index[key]] = Rule(
                conditions=kept.conditions,
                conclusions={
                    n: Conclusion(value=c.value, count=c.count + r.conclusions[n].count)
                    for n, c in kept.conclusions.items()
                },
            )
        else:
            index[key] = len(out)
            out.append(Rule(conditions=conditions, conclusions=dict(r.conclusions)))
    return out


@dataclass
class RefineTrace:
    """Bookkeeping from refinement: per-state trial accuracies."""

    initial_accuracy: float
    drop_trials: list[tuple[str, float, bool]] = field(default_factory=list)
    readd_trials: list[tuple[str, float, bool]] = field(default_factory=list)
    final_accuracy: float = 0.0

    @property
    def accuracy_path(self) -> list[float]:
        """Accepted accuracy after each step, starting from the baseline."""
        path = [self.initial_accuracy]
        for _, acc, accepted in [*self.drop_trials, *self.readd_trials]:
            path.append(acc if accepted else path[-1])
        return path


def remove_insignificant_states(
    rules: Sequence[Rule],
    seen: Dataset,
    unseen: Dataset,
    epsilon: float = 1e-3,
    corr: Mapping[str, float] | None = None,
) -> tuple[list[Rule], list[str], RefineTrace]:
    """Greedily drop input states that do not pay their way.

    States are tried in ascending order of their correlation with the
    targets on the seen data.  A state joins the insignificant set when
    inference accuracy over the unseen data, with that state's conditions
    ignored, is at least the best accuracy so far (abstentions count as
    wrong).  A second pass re-admits any dropped state whose return does not
    lower the best accuracy.  Accuracy never decreases along the way.
    """
    if corr is None:
        corr = states_targets_corr(seen)
    present = set(rules[0].conditions) if rules else set()
    input_order = list(seen.schema.input_names)
    order = sorted(
        (n for n in input_order if n in present),
        key=lambda n: (corr[n], input_order.index(n)),
    )

    n_unseen = len(unseen)
    target_names = unseen.schema.target_names

    def accuracy(drop: frozenset[str]) -> float:
        if n_unseen == 0:
            return 0.0
        correct = 0
        for i in range(n_unseen):
            derived = infer(rules, unseen.row(i), corr, epsilon, dropped=drop)
            if derived is not None and all(
                derived[n] == unseen.values[i, unseen.schema.index(n)] for n in target_names
            ):
                correct += 1
        return correct / n_unseen

    insignificant: list[str] = []
    max_acc = accuracy(frozenset())
    trace = RefineTrace(initial_accuracy=max_acc)

    for name in order:
        acc = accuracy(frozenset([*insignificant, name]))
        accepted = acc >= max_acc
        if accepted:
            insignificant.append(name)
            max_acc = acc
        trace.drop_trials.append((name, acc, accepted))

    for name in list(insignificant):
        acc = accuracy(frozenset(n for n in insignificant if n != name))
        accepted = acc >= max_acc
        if accepted:
            insignificant.remove(name)
            max_acc = acc
        trace.readd_trials.append((name, acc, accepted))

    trace.final_accuracy = max_acc
    return strip_states(rules, insignificant), insignificant, trace


@dataclass
class RuleSet:
    """A finished rule set: typed states, rules, and what refinement cut."""

    states: tuple[tuple[str, str], ...]
    rules: list[Rule]
    insignificant_states: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.rules)

    def to_dict(self) -> dict:
        return rules_to_dict(self.states, self.rules, self.insignificant_states)

    @classmethod
    def from_dict(cls, payload: Mapping) -> "RuleSet":
        states, rules, insignificant = rules_from_dict(payload)
        return cls(states=tuple(states), rules=rules, insignificant_states=tuple(insignificant))

    def save(self, path: str | Path) -> None:
        save_rules_json(path, self.states, self.rules, self.insignificant_states)

    @classmethod
    def load(cls, path: str | Path) -> "RuleSet":
        states, rules, insignificant = load_rules_json(path)
        return cls(states=tuple(states), rules=rules, insignificant_states=tuple(insignificant))


@dataclass
class ExtractionConfig:
    """Knobs for the four extraction stages."""

    tolerance_fraction: float = 0.05
    tolerances: Mapping[str, float] | None = None
    epsilon: float = 1e-3

    def resolve_tolerances(self, dataset: Dataset) -> dict[str, float]:
        """Per-state merge tolerances: a fraction of each observed range.

        Continuous input states get ``tolerance_fraction`` times their seen
        range; discrete states merge on exact equality only.  Entries in
        ``tolerances`` override the derived values.
        """
        out: dict[str, float] = {}
        for s in dataset.schema.input_states:
            if s.kind == CONTINUOUS and len(dataset):
                lo, hi = dataset.observed_ranges([s.name])[s.name]
                out[s.name] = self.tolerance_fraction * (hi - lo)
        if self.tolerances:
            for name, tol in self.tolerances.items():
                out[str(name)] = float(tol)
        return out


@dataclass
class ExtractionResult:
    """Everything the pipeline produced, stage by stage."""

    ruleset: RuleSet
    tree: RuleTree
    prerefine_rules: list[Rule]
    corr: dict[str, float]
    tolerances: dict[str, float]
    trace: RefineTrace


def extract(
    model: Oracle,
    seen: Dataset,
    unseen: Dataset,
    config: ExtractionConfig | None = None,
) -> ExtractionResult:
    """Run the full pipeline against a trained model.

    The model's own decisions, not the recorded targets, are what the rules
    summarize: both splits have their target columns replaced by the model's
    choices before generalization and refinement.
    """
    config = config or ExtractionConfig()
    schema = seen.schema
    if unseen.schema.names != schema.names:
        raise DataError("seen and unseen splits must share a schema")

    seen_fid = seen.with_target_values([model.decide(seen.row(i)) for i in range(len(seen))])
    unseen_fid = unseen.with_target_values([model.decide(unseen.row(i)) for i in range(len(unseen))])

    tolerances = config.resolve_tolerances(seen_fid)
    instance_rules = [
        make_instance_rule(seen_fid.row(i), seen_fid.target_row(i), schema.input_names, step=i)
        for i in range(len(seen_fid))
    ]
    tree = generalize(instance_rules, schema, tolerances)
    combined = combine(tree.rules(), schema)
    corr = states_targets_corr(seen_fid)
    final, insignificant, trace = remove_insignificant_states(
        combined, seen_fid, unseen_fid, epsilon=config.epsilon, corr=corr
    )
    states = tuple(
        [(s.name, s.kind) for s in schema.input_states]
        + [(s.name, s.kind) for s in schema.target_states]
    )
    ruleset = RuleSet(states=states, rules=final, insignificant_states=tuple(insignificant))
    return ExtractionResult(
        ruleset=ruleset,
        tree=tree,
        prerefine_rules=combined,
        corr=corr,
        tolerances=tolerances,
        trace=trace,
    )


class PBREExtractor(BaseEstimator):
    """Estimator wrapper around the extraction pipeline.

    fit(model, seen, unseen) distills the model into ``ruleset_``;
    predict runs rule inference sample by sample.  Constructor arguments
    follow scikit-learn conventions so ``get_params`` and ``set_params``
    work for sweeps.
    """

    def __init__(
        self,
        tolerance_fraction: float = 0.05,
        tolerances: Mapping[str, float] | None = None,
        epsilon: float = 1e-3,
    ) -> None:
        self.tolerance_fraction = tolerance_fraction
        self.tolerances = tolerances
        self.epsilon = epsilon

    def fit(self, model: Oracle, seen: Dataset, unseen: Dataset) -> "PBREExtractor":
        config = ExtractionConfig(
            tolerance_fraction=self.tolerance_fraction,
            tolerances=self.tolerances,
            epsilon=self.epsilon,
        )
        result = extract(model, seen, unseen, config)
        self.ruleset_ = result.ruleset
        self.rules_ = result.ruleset.rules
        self.tree_ = result.tree
        self.prerefine_rules_ = result.prerefine_rules
        self.corr_ = result.corr
        self.tolerances_ = result.tolerances
        self.refine_trace_ = result.trace
        self.insignificant_states_ = result.ruleset.insignificant_states
        return self

    @property
    def num_rules_(self) -> int:
        return len(self.rules_)

    def predict_one(self, sample: Mapping[str, float]) -> dict[str, float] | None:
        return infer(self.rules_, sample, self.corr_, self.epsilon)

    def predict(self, data: Dataset | Sequence[Sample]) -> list[dict[str, float] | None]:
        samples = data.iter_rows() if isinstance(data, Dataset) else data
        return [self.predict_one(s) for s in samples]

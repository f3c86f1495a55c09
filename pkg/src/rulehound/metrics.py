"""Rule-set scoring.

Three fractions describe a rule set against a dataset: accuracy (how often
derived conclusions are right), similarity (how often they agree with the
model the rules were distilled from), and inference coverage (how often the
rules produce any conclusion at all).  Their mean is the headline number.
Samples the rules abstain on are excluded from the accuracy and similarity
denominators by default, since coverage already charges for them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Protocol

from .data import Dataset, Sample


class RuleModel(Protocol):
    """A fitted extractor: counts rules and derives conclusions."""

    @property
    def num_rules_(self) -> int: ...

    def predict_one(self, sample: Mapping[str, float]) -> dict[str, float] | None: ...


TruthFn = Callable[[Sample, Mapping[str, float]], bool]


@dataclass(frozen=True)
class MetricsReport:
    """Scores for one rule set on one split."""

    num_rules: int
    accuracy: float
    similarity: float
    inference_coverage: float
    n_samples: int
    n_abstained: int

    @property
    def average(self) -> float:
        return (self.accuracy + self.similarity + self.inference_coverage) / 3.0

    def to_row(self, dataset: str, method: str, split: str) -> dict:
        return {
            "dataset": dataset,
            "method": method,
            "split": split,
            "numRules": self.num_rules,
            "accuracy": self.accuracy,
            "similarity": self.similarity,
            "inference": self.inference_coverage,
            "average": self.average,
        }


def evaluate(
    rule_model: RuleModel,
    oracle,
    dataset: Dataset,
    truth_fn: TruthFn | None = None,
    include_abstained: bool = False,
) -> MetricsReport:
    """Score a fitted rule model over one dataset split.

    ``truth_fn(sample, conclusions)`` decides whether derived conclusions
    count as correct; the default compares them with the sample's recorded
    target values.  With ``include_abstained`` the abstained samples stay in
    the accuracy and similarity denominators and count as wrong.
    """
    target_names = dataset.schema.target_names

    def default_truth(sample: Sample, derived: Mapping[str, float]) -> bool:
        return all(derived[n] == sample[n] for n in target_names)

    judge = truth_fn or default_truth

    n = len(dataset)
    n_abstained = 0
    n_correct = 0
    n_agree = 0
    for i in range(n):
        sample = dataset.row(i)
        derived = rule_model.predict_one(sample)
        if derived is None:
            n_abstained += 1
            continue
        if judge(sample, derived):
            n_correct += 1
        decided = oracle.decide(sample)
        if all(derived[k] == decided[k] for k in decided):
            n_agree += 1

    denom = n if include_abstained else n - n_abstained
    accuracy = n_correct / denom if denom else 0.0
    similarity = n_agree / denom if denom else 0.0
    coverage = (n - n_abstained) / n if n else 0.0
    return MetricsReport(
        num_rules=rule_model.num_rules_,
        accuracy=accuracy,
        similarity=similarity,
        inference_coverage=coverage,
        n_samples=n,
        n_abstained=n_abstained,
    )

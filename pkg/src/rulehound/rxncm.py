"""Range-based baseline extractor.

A deliberately simple competitor for the tree pipeline: one rule per
predicted class, whose conditions are the per-attribute min/max ranges of
the seen samples the model assigned to that class.  Attributes whose mean
replacement leaves the model's decisions untouched are filtered up front;
conditions that do not pay their way on unseen data are pruned; ranges of
rules with different conclusions that overlap are pulled apart at the
midpoint when that helps.  Inference answers with the matching rule whose
conditions are tightest relative to the observed spans.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .correlation import states_targets_corr
from .data import CONTINUOUS, DataError, Dataset, Sample
from .pbre import Oracle


@dataclass
class RxRule:
    """Closed per-attribute ranges implying one conclusion per target."""

    conditions: dict[str, tuple[float, float]]
    conclusions: dict[str, float]


def rx_matches(rule: RxRule, sample: Mapping[str, float]) -> bool:
    return all(lo <= sample[n] <= hi for n, (lo, hi) in rule.conditions.items())


def rx_infer(
    rules: Sequence[RxRule],
    sample: Mapping[str, float],
    spans: Mapping[str, float],
) -> dict[str, float] | None:
    """Conclusions of the tightest matching rule, or None when nothing matches.

    Tightness is the sum of condition widths, each normalized by the span
    that attribute covered in the seen data; ties go to the earliest rule.
    """
    best = None
    best_width = None
    for rule in rules:
        if not rx_matches(rule, sample):
            continue
        width = 0.0
        for n, (lo, hi) in rule.conditions.items():
            span = spans.get(n, 0.0)
            width += (hi - lo) / span if span > 0.0 else 0.0
        if best is None or width < best_width:
            best = rule
            best_width = width
    return dict(best.conclusions) if best is not None else None


def _decisions_match(a: Mapping[str, float], b: Mapping[str, float]) -> bool:
    return all(a[k] == b[k] for k in a)


def _neutral_fill(seen: Dataset, name: str) -> float:
    # Continuous attributes neutralize to their mean; for discrete ones the
    # mean is usually not a legal category, so the most frequent value
    # stands in (ties break toward the smallest).
    col = seen.column(name)
    if seen.schema.state(name).kind == CONTINUOUS:
        return float(col.mean())
    values, counts = np.unique(col, return_counts=True)
    return float(values[np.argmax(counts)])


def filter_attributes(model: Oracle, seen: Dataset) -> list[str]:
    """Input attributes that survive neutral-replacement screening.

    Attributes are screened in schema order against a cumulative drop set:
    replacing the whole set by neutral fills (seen mean, or mode for
    discrete states) must not change any decision the model makes on the
    seen data.  At least one attribute always survives; if everything
    screens out, the one correlating strongest with the targets is
    retained.
    """
    input_names = list(seen.schema.input_names)
    baseline = [model.decide(seen.row(i)) for i in range(len(seen))]
    fills = {n: _neutral_fill(seen, n) for n in input_names}

    dropped: list[str] = []
    for name in input_names:
        trial = [*dropped, name]
        unchanged = True
        for i in range(len(seen)):
            sample = seen.row(i)
            for t in trial:
                sample[t] = fills[t]
            if not _decisions_match(baseline[i], model.decide(sample)):
                unchanged = False
                break
        if unchanged:
            dropped.append(name)

    kept = [n for n in input_names if n not in dropped]
    if not kept:
        corr = states_targets_corr(seen)
        kept = [max(input_names, key=lambda n: (abs(corr[n]), -input_names.index(n)))]
    return kept


def build_rules(model: Oracle, seen: Dataset, attributes: Sequence[str]) -> list[RxRule]:
    """One rule per distinct model decision: per-attribute seen ranges."""
    target_names = seen.schema.target_names
    groups: dict[tuple, list[int]] = {}
    order: list[tuple] = []
    decisions: dict[tuple, dict[str, float]] = {}
    for i in range(len(seen)):
        decided = model.decide(seen.row(i))
        key = tuple(decided[n] for n in target_names)
        if key not in groups:
            groups[key] = []
            order.append(key)
            decisions[key] = {n: float(decided[n]) for n in target_names}
        groups[key].append(i)

    rules = []
    for key in order:
        idx = groups[key]
        conditions = {}
        for n in attributes:
            col = seen.column(n)[idx]
            conditions[n] = (float(col.min()), float(col.max()))
        rules.append(RxRule(conditions=conditions, conclusions=decisions[key]))
    return rules


def _ruleset_accuracy(rules: Sequence[RxRule], dataset: Dataset, spans: Mapping[str, float]) -> float:
    if not len(dataset):
        return 0.0
    target_names = dataset.schema.target_names
    correct = 0
    for i in range(len(dataset)):
        sample = dataset.row(i)
        derived = rx_infer(rules, sample, spans)
        if derived is not None and all(derived[n] == sample[n] for n in target_names):
            correct += 1
    return correct / len(dataset)


def prune_rules(
    rules: Sequence[RxRule],
    unseen: Dataset,
    corr: Mapping[str, float],
    spans: Mapping[str, float],
) -> list[RxRule]:
    """Greedily drop per-rule conditions that do not help unseen accuracy.

    Conditions are tried weakest correlation first; a removal sticks when
    rule-set accuracy on the unseen split stays at least as high.
    """
    rules = [RxRule(dict(r.conditions), dict(r.conclusions)) for r in rules]
    best = _ruleset_accuracy(rules, unseen, spans)
    for rule in rules:
        names = sorted(rule.conditions, key=lambda n: (abs(corr.get(n, 0.0)),))
        for name in names:
            if len(rule.conditions) == 1:
                break
            saved = rule.conditions.pop(name)
            acc = _ruleset_accuracy(rules, unseen, spans)
            if acc >= best:
                best = acc
            else:
                rule.conditions[name] = saved
    return rules


def update_overlaps(
    rules: Sequence[RxRule],
    unseen: Dataset,
    spans: Mapping[str, float],
) -> list[RxRule]:
    """Pull apart overlapping ranges of rules with different conclusions.

    Each overlapping attribute of each differing pair is split at the
    midpoint of the shared region; the edit is kept only when unseen
    accuracy strictly improves.
    """
    rules = [RxRule(dict(r.conditions), dict(r.conclusions)) for r in rules]
    best = _ruleset_accuracy(rules, unseen, spans)
    for i in range(len(rules)):
        for j in range(i + 1, len(rules)):
            a, b = rules[i], rules[j]
            if a.conclusions == b.conclusions:
                continue
            for name in [n for n in a.conditions if n in b.conditions]:
                alo, ahi = a.conditions[name]
                blo, bhi = b.conditions[name]
                if max(alo, blo) >= min(ahi, bhi):
                    continue
                mid = (max(alo, blo) + min(ahi, bhi)) / 2.0
                lower, upper = (a, b) if alo <= blo else (b, a)
                saved_lower = lower.conditions[name]
                saved_upper = upper.conditions[name]
                lower.conditions[name] = (saved_lower[0], mid)
                upper.conditions[name] = (mid, saved_upper[1])
                acc = _ruleset_accuracy(rules, unseen, spans)
                if acc > best:
                    best = acc
                else:
                    lower.conditions[name] = saved_lower
                    upper.conditions[name] = saved_upper
    return rules


class RxNCMExtractor(BaseEstimator):
    """Estimator wrapper around the range-based baseline.

    Mirrors the tree pipeline's interface: fit(model, seen, unseen)
    distills the model's decisions, predict runs range inference.
    """

    def fit(self, model: Oracle, seen: Dataset, unseen: Dataset) -> "RxNCMExtractor":
        if unseen.schema.names != seen.schema.names:
            raise DataError("seen and unseen splits must share a schema")
        seen_fid = seen.with_target_values([model.decide(seen.row(i)) for i in range(len(seen))])
        unseen_fid = unseen.with_target_values(
            [model.decide(unseen.row(i)) for i in range(len(unseen))]
        )
        attributes = filter_attributes(model, seen_fid)
        spans = {
            n: hi - lo for n, (lo, hi) in seen_fid.observed_ranges(attributes).items()
        }
        corr = states_targets_corr(seen_fid)
        rules = build_rules(model, seen_fid, attributes)
        rules = prune_rules(rules, unseen_fid, corr, spans)
        rules = update_overlaps(rules, unseen_fid, spans)
        self.attributes_ = tuple(attributes)
        self.spans_ = spans
        self.corr_ = corr
        self.rules_ = rules
        self.states_ = tuple(
            [(s.name, s.kind) for s in seen.schema.input_states]
            + [(s.name, s.kind) for s in seen.schema.target_states]
        )
        return self

    @property
    def num_rules_(self) -> int:
        return len(self.rules_)

    def predict_one(self, sample: Mapping[str, float]) -> dict[str, float] | None:
        return rx_infer(self.rules_, sample, self.spans_)

    def predict(self, data: Dataset | Sequence[Sample]) -> list[dict[str, float] | None]:
        samples = data.iter_rows() if isinstance(data, Dataset) else data
        return [self.predict_one(s) for s in samples]

    def to_dict(self) -> dict:
        return {
            "format": "rxncm",
            "schema": [{"name": n, "kind": k} for n, k in self.states_],
            "attributes": list(self.attributes_),
            "spans": {n: float(v) for n, v in self.spans_.items()},
            "rules": [
                {
                    "conditions": {n: {"min": lo, "max": hi} for n, (lo, hi) in r.conditions.items()},
                    "conclusions": dict(r.conclusions),
                }
                for r in self.rules_
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, payload: Mapping) -> "RxNCMExtractor":
        if payload.get("format") != "rxncm":
            raise DataError("not a range-rule payload: missing format marker")
        est = cls()
        est.states_ = tuple((str(e["name"]), str(e["kind"])) for e in payload["schema"])
        est.attributes_ = tuple(str(a) for a in payload["attributes"])
        est.spans_ = {str(n): float(v) for n, v in payload["spans"].items()}
        est.corr_ = {}
        est.rules_ = [
            RxRule(
                conditions={
                    str(n): (float(v["min"]), float(v["max"]))
                    for n, v in entry["conditions"].items()
                },
                conclusions={str(n): float(v) for n, v in entry["conclusions"].items()},
            )
            for entry in payload["rules"]
        ]
        return est

    @classmethod
    def load(cls, path: str | Path) -> "RxNCMExtractor":
        try:
            payload = json.loads(Path(path).read_text())
        except OSError as exc:
            raise DataError(f"cannot read rule set {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"rule set {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(payload)

"""Interval rules and the branch tree that generalizes instance observations.

An instance rule is a single observation: exact input values paired with the
actuator values a model chose there.  The tree folds instance rules together
branch by branch: each level holds one state, each node keeps the running
mean/min/max of the values that were merged into it plus how often it was
visited.  Reading the tree back out yields interval rules whose conditions
are [min, max] ranges annotated with means and whose conclusions carry
occurrence counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .data import CONTINUOUS, DISCRETE, DataError, Sample, Schema


@dataclass(frozen=True)
class StateValue:
    """A summarized condition: mean inside a closed [min, max] interval."""

    mean: float
    min: float
    max: float

    def __post_init__(self) -> None:
        if not (self.min <= self.mean <= self.max):
            raise ValueError(f"StateValue needs min <= mean <= max, got {self}")

    @classmethod
    def exact(cls, value: float) -> "StateValue":
        return cls(mean=value, min=value, max=value)

    @classmethod
    def bounded(cls, mean: float, min: float, max: float) -> "StateValue":
        """Build with the mean clamped into [min, max] to absorb ulp drift."""
        return cls(mean=sorted((min, mean, max))[1], min=min, max=max)

    @property
    def is_exact(self) -> bool:
        return self.min == self.max

    def contains(self, value: float) -> bool:
        return self.min <= value <= self.max


@dataclass(frozen=True)
class Conclusion:
    """A chosen actuator value and how many observations backed it."""

    value: float
    count: int

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"conclusion count must be positive, got {self.count}")


@dataclass(frozen=True)
class InstanceRule:
    """One observation: exact condition values plus the model's choices."""

    conditions: Mapping[str, float]
    conclusions: Mapping[str, float]
    step: int = 0


@dataclass
class Rule:
    """An interval rule: per-state conditions implying counted conclusions."""

    conditions: dict[str, StateValue]
    conclusions: dict[str, Conclusion]

    def conclusion_values(self) -> dict[str, float]:
        return {name: c.value for name, c in self.conclusions.items()}

    def count_sum(self) -> int:
        return sum(c.count for c in self.conclusions.values())


def rule_matches(rule: Rule, sample: Mapping[str, float], ignore: frozenset[str] = frozenset()) -> bool:
    """True when the sample lies inside every (non-ignored) condition interval."""
    for name, sv in rule.conditions.items():
        if name in ignore:
            continue
        if not sv.contains(sample[name]):
            return False
    return True


class TreeNode:
    """One tree level entry: running value stats plus visit count."""

    __slots__ = ("mean", "min", "max", "count", "children")

    def __init__(self, value: float) -> None:
        self.mean = value
        self.min = value
        self.max = value
        self.count = 1
        self.children: list[TreeNode] = []

    def absorb(self, value: float) -> None:
        self.mean = (self.mean * self.count + value) / (self.count + 1)
        self.min = min(self.min, value)
        self.max = max(self.max, value)
        self.count += 1
        # The running mean can drift a few ulps outside a degenerate
        # interval; clamping keeps it honest.
        if self.mean < self.min:
            self.mean = self.min
        elif self.mean > self.max:
            self.mean = self.max

    def state_value(self) -> StateValue:
        return StateValue(mean=self.mean, min=self.min, max=self.max)


@dataclass(frozen=True)
class LevelSpec:
    """What one tree level holds: a state name, its kind, and its role."""

    name: str
    kind: str
    is_conclusion: bool


class RuleTree:
    """Generalizes instance rules by merging them into shared branches.

    Levels are ordered: all condition states first (schema input order),
    then all conclusion states (schema target order).  An incoming instance
    rule merges into an existing branch only when every level matches it:
    discrete conditions and all conclusions by exact value, continuous
    conditions by falling inside the node interval widened by that state's
    tolerance.  When no branch matches in full, a new branch is laid down;
    it shares leading nodes only while values match exactly, and never
    shares a continuous condition node, so intervals only ever widen through
    genuine merges.
    """

    def __init__(self, levels: Sequence[LevelSpec]) -> None:
        if not levels:
            raise ValueError("a rule tree needs at least one level")
        order_ok = all(
            not (earlier.is_conclusion and not later.is_conclusion)
            for earlier, later in zip(levels, levels[1:])
        )
        if not order_ok:
            raise ValueError("condition levels must precede conclusion levels")
        if not levels[-1].is_conclusion:
            raise ValueError("a rule tree needs at least one conclusion level")
        self.levels: tuple[LevelSpec, ...] = tuple(levels)
        self.root = TreeNode(0.0)
        self.root.count = 0

    @classmethod
    def for_schema(cls, schema: Schema) -> "RuleTree":
        levels = [LevelSpec(s.name, s.kind, False) for s in schema.input_states]
        levels += [LevelSpec(s.name, s.kind, True) for s in schema.target_states]
        return cls(levels)

    def _values_for(self, ir: InstanceRule) -> list[float]:
        try:
            return [
                float(ir.conclusions[lv.name] if lv.is_conclusion else ir.conditions[lv.name])
                for lv in self.levels
            ]
        except KeyError as exc:
            raise DataError(f"instance rule is missing state {exc.args[0]!r}") from None

    def _level_matches(
        self, node: TreeNode, level: LevelSpec, value: float, tolerances: Mapping[str, float]
    ) -> bool:
        if level.is_conclusion or level.kind == DISCRETE:
            return node.min == value and node.max == value
        tol = float(tolerances.get(level.name, 0.0))
        return node.min - tol <= value <= node.max + tol

    def _find_merge_path(
        self, node: TreeNode, depth: int, values: Sequence[float], tolerances: Mapping[str, float]
    ) -> list[TreeNode] | None:
        # Depth-first over children in insertion order; the first branch that
        # matches on every remaining level wins.
        if depth == len(self.levels):
            return []
        value = values[depth]
        level = self.levels[depth]
        for child in node.children:
            if self._level_matches(child, level, value, tolerances):
                rest = self._find_merge_path(child, depth + 1, values, tolerances)
                if rest is not None:
                    return [child, *rest]
        return None

    def insert(self, ir: InstanceRule, tolerances: Mapping[str, float] | None = None) -> None:
        tolerances = tolerances or {}
        values = self._values_for(ir)
        path = self._find_merge_path(self.root, 0, values, tolerances)
        if path is not None:
            for node, value in zip(path, values):
                node.absorb(value)
            self.root.count += 1
            return

        # No branch matched in full.  Walk down reusing nodes only while the
        # incoming value is exactly the node value; a continuous condition
        # level always stops the walk so merged intervals stay honest.
        node = self.root
        depth = 0
        while depth < len(self.levels):
            level = self.levels[depth]
            if not level.is_conclusion and level.kind == CONTINUOUS:
                break
            value = values[depth]
            shared = None
            for child in node.children:
                if child.min == value and child.max == value:
                    shared = child
                    break
            if shared is None:
                break
            shared.absorb(value)
            node = shared
            depth += 1
        for value in values[depth:]:
            child = TreeNode(value)
            node.children.append(child)
            node = child
        self.root.count += 1

    def node_child_lookup(
        self, node: TreeNode, depth: int, value: float, tolerances: Mapping[str, float] | None = None
    ) -> TreeNode | None:
        """First child of ``node`` (a level-``depth-1`` node) matching ``value``."""
        tolerances = tolerances or {}
        level = self.levels[depth]
        for child in node.children:
            if self._level_matches(child, level, value, tolerances):
                return child
        return None

    def rules(self) -> list[Rule]:
        """Read every root-to-leaf branch out as an interval rule."""
        n_cond = sum(1 for lv in self.levels if not lv.is_conclusion)
        out: list[Rule] = []

        def walk(node: TreeNode, depth: int, path: list[TreeNode]) -> None:
            if depth == len(self.levels):
                conditions = {
                    lv.name: path[i].state_value() for i, lv in enumerate(self.levels[:n_cond])
                }
                conclusions = {
                    lv.name: Conclusion(value=path[n_cond + j].mean, count=path[n_cond + j].count)
                    for j, lv in enumerate(self.levels[n_cond:])
                }
                out.append(Rule(conditions=conditions, conclusions=conclusions))
                return
            for child in node.children:
                walk(child, depth + 1, path + [child])

        walk(self.root, 0, [])
        return out

    def leaf_count(self) -> int:
        def count(node: TreeNode, depth: int) -> int:
            if depth == len(self.levels):
                return node.count
            return sum(count(c, depth + 1) for c in node.children)

        return count(self.root, 0)


# ---------------------------------------------------------------------------
# Rule-set serialization.  JSON floats go through repr, which round-trips
# IEEE doubles exactly, so written and re-read rule sets compare equal.


def rules_to_dict(
    states: Sequence[tuple[str, str]],
    rules: Sequence[Rule],
    insignificant_states: Sequence[str] = (),
) -> dict:
    payload: dict = {
        "schema": [{"name": name, "kind": kind} for name, kind in states],
        "rules": [
            {
                "conditions": {
                    name: {"min": sv.min, "mean": sv.mean, "max": sv.max}
                    for name, sv in r.conditions.items()
                },
                "conclusions": {
                    name: {"value": c.value, "count": c.count} for name, c in r.conclusions.items()
                },
            }
            for r in rules
        ],
    }
    if insignificant_states:
        payload["insignificant_states"] = list(insignificant_states)
    return payload


def rules_from_dict(payload: Mapping) -> tuple[list[tuple[str, str]], list[Rule], list[str]]:
    try:
        schema_part = payload["schema"]
        rules_part = payload["rules"]
    except (KeyError, TypeError):
        raise DataError("rule-set payload needs 'schema' and 'rules'") from None
    states = [(str(e["name"]), str(e["kind"])) for e in schema_part]
    rules = []
    for entry in rules_part:
        conditions = {
            name: StateValue(mean=float(v["mean"]), min=float(v["min"]), max=float(v["max"]))
            for name, v in entry["conditions"].items()
        }
        conclusions = {
            name: Conclusion(value=float(v["value"]), count=int(v["count"]))
            for name, v in entry["conclusions"].items()
        }
        rules.append(Rule(conditions=conditions, conclusions=conclusions))
    insignificant = [str(s) for s in payload.get("insignificant_states", [])]
    return states, rules, insignificant


def save_rules_json(
    path: str | Path,
    states: Sequence[tuple[str, str]],
    rules: Sequence[Rule],
    insignificant_states: Sequence[str] = (),
) -> None:
    Path(path).write_text(
        json.dumps(rules_to_dict(states, rules, insignificant_states), indent=2) + "\n"
    )


def load_rules_json(path: str | Path) -> tuple[list[tuple[str, str]], list[Rule], list[str]]:
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read rule set {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"rule set {path} is not valid JSON: {exc}") from exc
    return rules_from_dict(payload)

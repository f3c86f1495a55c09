"""Interval rules and the generalization tree."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rulehound.data import CONTINUOUS, DISCRETE, Schema, StateSpec
from rulehound.rules import (
    Conclusion,
    InstanceRule,
    LevelSpec,
    Rule,
    RuleTree,
    StateValue,
    load_rules_json,
    rule_matches,
    rules_from_dict,
    rules_to_dict,
    save_rules_json,
)

from _oracles import tree_count_consistent, tree_interval_sound


def policy_schema() -> Schema:
    return Schema(
        states=(
            StateSpec("us", DISCRETE, "input"),
            StateSpec("le", CONTINUOUS, "input"),
            StateSpec("lp", DISCRETE, "target"),
            StateSpec("cur", DISCRETE, "target"),
        )
    )


def ir(us, le, lp, cur, step=0) -> InstanceRule:
    return InstanceRule(
        conditions={"us": float(us), "le": float(le)},
        conclusions={"lp": float(lp), "cur": float(cur)},
        step=step,
    )


class TestStateValue:
    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            StateValue(mean=5.0, min=6.0, max=7.0)
        with pytest.raises(ValueError):
            StateValue(mean=8.0, min=6.0, max=7.0)

    def test_exact(self):
        sv = StateValue.exact(3.0)
        assert sv.is_exact
        assert (sv.min, sv.mean, sv.max) == (3.0, 3.0, 3.0)

    def test_bounded_clamps_drifted_mean(self):
        sv = StateValue.bounded(mean=7.000000001, min=2.0, max=7.0)
        assert sv.mean == 7.0
        sv = StateValue.bounded(mean=1.999999999, min=2.0, max=7.0)
        assert sv.mean == 2.0

    def test_contains(self):
        sv = StateValue(mean=5.0, min=4.0, max=6.0)
        assert sv.contains(4.0) and sv.contains(6.0)
        assert not sv.contains(3.999999)


class TestConclusion:
    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            Conclusion(value=1.0, count=0)


class TestRuleMatches:
    def rule(self):
        return Rule(
            conditions={"us": StateValue.exact(1.0), "le": StateValue(mean=5.0, min=0.0, max=10.0)},
            conclusions={"lp": Conclusion(value=3.0, count=2)},
        )

    def test_containment(self):
        assert rule_matches(self.rule(), {"us": 1.0, "le": 10.0})
        assert not rule_matches(self.rule(), {"us": 2.0, "le": 5.0})
        assert not rule_matches(self.rule(), {"us": 1.0, "le": 10.5})

    def test_ignored_states_are_skipped(self):
        assert rule_matches(self.rule(), {"us": 2.0, "le": 5.0}, ignore=frozenset({"us"}))


class TestTreeLevels:
    def test_conclusion_levels_must_trail(self):
        with pytest.raises(ValueError):
            RuleTree(
                levels=(
                    LevelSpec("lp", DISCRETE, True),
                    LevelSpec("us", DISCRETE, False),
                )
            )

    def test_needs_a_conclusion(self):
        with pytest.raises(ValueError):
            RuleTree(levels=(LevelSpec("us", DISCRETE, False),))


class TestTreeMerging:
    def test_close_values_share_a_branch(self):
        tree = RuleTree.for_schema(policy_schema())
        tree.insert(ir(1, 100.0, 3, 0), {"le": 20.0})
        tree.insert(ir(1, 110.0, 3, 0), {"le": 20.0})
        rules = tree.rules()
        assert len(rules) == 1
        le = rules[0].conditions["le"]
        assert (le.min, le.mean, le.max) == (100.0, 105.0, 110.0)
        assert rules[0].conclusions["lp"].count == 2

    def test_different_conclusion_forces_a_new_branch(self):
        tree = RuleTree.for_schema(policy_schema())
        tree.insert(ir(1, 100.0, 3, 0), {"le": 20.0})
        tree.insert(ir(1, 105.0, 4, 0), {"le": 20.0})
        rules = tree.rules()
        assert len(rules) == 2
        # The first branch keeps its own interval: the diverging insert must
        # not widen a branch it did not join.
        first = [r for r in rules if r.conclusions["lp"].value == 3.0][0]
        assert (first.conditions["le"].min, first.conditions["le"].max) == (100.0, 100.0)

    def test_far_value_forces_a_new_branch(self):
        tree = RuleTree.for_schema(policy_schema())
        tree.insert(ir(1, 100.0, 3, 0), {"le": 20.0})
        tree.insert(ir(1, 400.0, 3, 0), {"le": 20.0})
        assert len(tree.rules()) == 2

    def test_different_discrete_value_forces_a_new_branch(self):
        tree = RuleTree.for_schema(policy_schema())
        tree.insert(ir(1, 100.0, 3, 0), {"le": 20.0})
        tree.insert(ir(2, 100.0, 3, 0), {"le": 20.0})
        assert len(tree.rules()) == 2

    def test_tolerance_widens_through_absorbed_extremes(self):
        tree = RuleTree.for_schema(policy_schema())
        tree.insert(ir(1, 100.0, 3, 0), {"le": 20.0})
        tree.insert(ir(1, 118.0, 3, 0), {"le": 20.0})
        # 130 is outside 100's tolerance but inside the widened [100, 118].
        tree.insert(ir(1, 130.0, 3, 0), {"le": 20.0})
        rules = tree.rules()
        assert len(rules) == 1
        assert rules[0].conditions["le"].max == 130.0

    def test_first_matching_branch_wins(self):
        tree = RuleTree.for_schema(policy_schema())
        tree.insert(ir(1, 100.0, 3, 0), {"le": 30.0})
        tree.insert(ir(1, 140.0, 3, 0), {"le": 30.0})
        # 120 fits both branches' tolerance windows; insertion order decides.
        tree.insert(ir(1, 120.0, 3, 0), {"le": 30.0})
        rules = tree.rules()
        assert len(rules) == 2
        first = [r for r in rules if r.conditions["le"].min == 100.0][0]
        second = [r for r in rules if r.conditions["le"].min == 140.0][0]
        assert first.conclusions["lp"].count == 2
        assert first.conditions["le"].max == 120.0
        assert second.conclusions["lp"].count == 1

    def test_backtracks_to_a_fully_matching_branch(self):
        tree = RuleTree.for_schema(policy_schema())
        tree.insert(ir(1, 100.0, 3, 0), {"le": 20.0})
        tree.insert(ir(1, 110.0, 4, 0), {"le": 20.0})
        # Fits the first branch's interval only by conclusion; the second
        # branch matches end to end and must receive the insert even though
        # the first one matched at the le level.
        tree.insert(ir(1, 102.0, 4, 0), {"le": 20.0})
        rules = tree.rules()
        by_lp = {r.conclusions["lp"].value: r for r in rules}
        assert by_lp[4.0].conclusions["lp"].count == 2
        assert by_lp[4.0].conditions["le"].min == 102.0
        assert by_lp[3.0].conclusions["lp"].count == 1

    def test_identical_inserts_accumulate_count(self):
        tree = RuleTree.for_schema(policy_schema())
        for k in range(7):
            tree.insert(ir(2, 250.0, 1, 1), {"le": 10.0})
        rules = tree.rules()
        assert len(rules) == 1
        assert rules[0].conclusions["lp"].count == 7
        assert rules[0].conclusions["cur"].count == 7
        assert tree.leaf_count() == 7
        assert tree.root.count == 7

    def test_missing_state_rejected(self):
        tree = RuleTree.for_schema(policy_schema())
        bad = InstanceRule(conditions={"us": 1.0}, conclusions={"lp": 3.0, "cur": 0.0}, step=0)
        with pytest.raises(Exception):
            tree.insert(bad)


class TestTreeInvariants:
    @settings(max_examples=60)
    @given(
        draws=st.lists(
            st.tuples(
                st.integers(min_value=0, max_value=2),
                st.floats(min_value=0.0, max_value=600.0, allow_nan=False),
                st.integers(min_value=0, max_value=4),
                st.sampled_from([0.0, 0.5, 1.0]),
            ),
            min_size=1,
            max_size=60,
        ),
        tol=st.floats(min_value=0.0, max_value=50.0),
    )
    def test_random_streams_keep_structure_sound(self, draws, tol):
        tree = RuleTree.for_schema(policy_schema())
        for step, (us, le, lp, cur) in enumerate(draws):
            tree.insert(ir(us, le, lp, cur, step), {"le": tol})
        assert tree_count_consistent(tree)
        assert tree_interval_sound(tree)
        assert tree.root.count == len(draws)
        assert tree.leaf_count() == len(draws)
        rules = tree.rules()
        assert sum(r.conclusions["lp"].count for r in rules) == len(draws)
        # Every inserted sample is matched by at least one branch whose
        # conclusions are exactly the sample's own.
        for us, le, lp, cur in draws:
            hit = [
                r
                for r in rules
                if rule_matches(r, {"us": float(us), "le": le})
                and r.conclusions["lp"].value == float(lp)
                and r.conclusions["cur"].value == cur
            ]
            assert hit

    @settings(max_examples=30)
    @given(
        k=st.integers(min_value=1, max_value=40),
        us=st.integers(min_value=0, max_value=3),
        le=st.floats(min_value=0.0, max_value=600.0, allow_nan=False),
    )
    def test_k_identical_inserts_count_k(self, k, us, le):
        tree = RuleTree.for_schema(policy_schema())
        for step in range(k):
            tree.insert(ir(us, le, 2, 0.5, step), {"le": 5.0})
        rules = tree.rules()
        assert len(rules) == 1
        assert rules[0].conclusions["lp"].count == k

    def test_branch_mean_tracks_true_mean(self):
        rng = np.random.default_rng(11)
        values = rng.uniform(100.0, 120.0, size=50)
        tree = RuleTree.for_schema(policy_schema())
        for step, v in enumerate(values):
            tree.insert(ir(1, float(v), 3, 0, step), {"le": 50.0})
        rules = tree.rules()
        assert len(rules) == 1
        le = rules[0].conditions["le"]
        assert le.mean == pytest.approx(float(np.mean(values)), rel=1e-12)
        assert le.min == float(np.min(values))
        assert le.max == float(np.max(values))


class TestSerialization:
    def sample_rules(self):
        return [
            Rule(
                conditions={
                    "us": StateValue.exact(1.0),
                    "le": StateValue(mean=105.3, min=100.0, max=110.7),
                },
                conclusions={
                    "lp": Conclusion(value=3.0, count=4),
                    "cur": Conclusion(value=0.0, count=4),
                },
            ),
            Rule(
                conditions={
                    "us": StateValue.exact(0.0),
                    "le": StateValue(mean=0.1, min=0.1, max=0.1),
                },
                conclusions={
                    "lp": Conclusion(value=0.0, count=9),
                    "cur": Conclusion(value=0.0, count=9),
                },
            ),
        ]

    def states(self):
        return [("us", DISCRETE), ("le", CONTINUOUS), ("lp", DISCRETE), ("cur", DISCRETE)]

    def test_dict_round_trip(self):
        payload = rules_to_dict(self.states(), self.sample_rules(), ["le"])
        states, rules, insignificant = rules_from_dict(payload)
        assert states == self.states()
        assert insignificant == ["le"]
        assert rules == self.sample_rules()

    def test_file_round_trip_is_exact(self, tmp_path):
        path = tmp_path / "rules.json"
        save_rules_json(path, self.states(), self.sample_rules(), [])
        states, rules, _ = load_rules_json(path)
        assert rules == self.sample_rules()
        json.loads(path.read_text())  # the file is plain JSON

    @settings(max_examples=40)
    @given(
        mins=st.lists(
            st.floats(min_value=-1e12, max_value=1e12, allow_nan=False),
            min_size=1,
            max_size=5,
        ),
        spans=st.lists(
            st.floats(min_value=0.0, max_value=1e6, allow_nan=False), min_size=5, max_size=5
        ),
    )
    def test_awkward_floats_survive_the_trip(self, tmp_path_factory, mins, spans):
        rules = []
        for i, lo in enumerate(mins):
            hi = lo + spans[i % len(spans)]
            rules.append(
                Rule(
                    conditions={"le": StateValue.bounded(mean=(lo + hi) / 2, min=lo, max=hi)},
                    conclusions={"lp": Conclusion(value=float(i), count=i + 1)},
                )
            )
        path = tmp_path_factory.mktemp("roundtrip") / "rules.json"
        save_rules_json(path, [("le", CONTINUOUS), ("lp", DISCRETE)], rules, [])
        _, back, _ = load_rules_json(path)
        assert back == rules

import random

import numpy as np
import pytest

from helpers import DAY, T0, meta, rec
from personasim import simulate as sm
from personasim.persona import PersonalityProfile

EDGES = np.array([10.0, 20.0, 30.0, 40.0])
PRICE_OF_TIER = {0: 5.0, 2: 25.0, 4: 50.0}


def catalogue(spec, popularity=None):
    """spec: item -> (category, tier)."""
    md = {i: meta(i, PRICE_OF_TIER[t], c) for i, (c, t) in spec.items()}
    return sm.Catalogue(sorted(spec), md, popularity or {}, EDGES)


def person(o=0.6, c=0.4, e=0.5, a=0.5, n=0.2):
    return PersonalityProfile("u", o, c, e, a, n)


SHEET = {"h1": ("A", 2), "h2": ("A", 2), "h3": ("B", 0), "x": ("A", 2), "y": ("B", 0), "z": ("Z", 4)}
POP = {"x": 0.5, "y": 1.0, "z": 0.0}


def sheet_history(cat):
    return sm.UserHistory(cat, [rec("u", h, T0 + k * DAY, category=SHEET[h][0]) for k, h in enumerate(["h1", "h2", "h3"])])


class TestScore:
    # hand-computed with weights (1, .5, .5, .25, .25), O=.6 C=.4 E=.5 N=.2,
    # history A, A, B all priced in tiers 2, 2, 0 (modal tier 2)
    EXPECTED = {
        "x": 0.25 * 0.5 * 0.5 + 2 / 3 + 0.5 * 0.6 / 3 + 0.5 * 0.4,
        "y": 0.25 * 1.0 * 0.5 + 1 / 3 + 0.5 * 0.6 * 2 / 3 + 0.5 * 0.4 * 0.5 - 0.25 * 0.2 * 0.5,
        "z": 0.5 * 0.6 + 0.5 * 0.4 * 0.5 - 0.25 * 0.2 * 0.5,
    }

    def test_hand_sheet(self):
        cat = catalogue(SHEET, POP)
        hist = sheet_history(cat)
        for item, want in self.EXPECTED.items():
            got = sm.deterministic_item_score(person(), cat.metadata[item], hist, POP[item], cat.tier(item))
            assert got == pytest.approx(want, abs=1e-12), item

    def test_closed_novel_category_scores_zero(self):
        cat = catalogue(SHEET, POP)
        got = sm.deterministic_item_score(person(o=0.0), cat.metadata["z"], sheet_history(cat), 0.0, None)
        assert got == 0.0

    def test_missing_metadata_keeps_popularity_term(self):
        cat = catalogue(SHEET, POP)
        assert sm.deterministic_item_score(person(e=1.0), None, sheet_history(cat), 0.8, None) == pytest.approx(0.2)

    def test_selection_is_argmax(self):
        cat = catalogue(SHEET, POP)
        lst = sm.RecommendationList(0, ("z", "y", "x"), "y")
        pick = sm.agent_select(sm.PolicySpec("personality-deterministic"), person(), lst, cat,
                               sheet_history(cat), random.Random(0))
        assert pick == "x"

    def test_ties_break_lexicographically(self):
        spec = {"b": ("A", 2), "a": ("A", 2), "c": ("A", 2)}
        cat = catalogue(spec)
        lst = sm.RecommendationList(0, ("c", "b", "a"), "c")
        for seed in range(5):
            pick = sm.agent_select(sm.PolicySpec("personality-deterministic"), person(), lst, cat,
                                   sm.UserHistory(cat), random.Random(seed))
            assert pick == "a"


def test_modal_tier_prefers_lowest_on_tie():
    cat = catalogue({"p": ("A", 0), "q": ("A", 4)})
    hist = sm.UserHistory(cat)
    assert hist.modal_tier is None
    hist.add("q")
    hist.add("p")
    assert hist.modal_tier == 0 and hist.transitions["A"]["A"] == 1


class TestMockList:
    ITEMS = [f"i{k:02d}" for k in range(40)]

    def test_contract(self):
        interacted = set(self.ITEMS[:12])
        positives = ["i10", "i11", "i03"]
        rng = random.Random(1)
        for step, pos in enumerate(positives):
            lst = sm.build_mock_list("u", step, positives, interacted, self.ITEMS, rng)
            assert lst.validate(interacted) == []
            assert lst.positive_item == pos and lst.step == step
            assert len(lst.items) == 10 and set(lst.items) - {pos} <= set(self.ITEMS[12:])

    def test_too_small(self):
        with pytest.raises(sm.SimulationError, match="need 9"):
            sm.build_mock_list("u", 0, ["i00"], set(self.ITEMS[:35]), self.ITEMS, random.Random(0))

    def test_step_range(self):
        with pytest.raises(sm.SimulationError):
            sm.build_mock_list("u", 2, ["i00"], set(), self.ITEMS, random.Random(0))

    def test_validate_flags_problems(self):
        lst = sm.RecommendationList(0, ("a", "a", "b"), "c")
        problems = lst.validate({"b"})
        assert len(problems) == 4


def test_user_streams():
    a = sm.user_stream(3, "u1", "lists").random()
    assert a == sm.user_stream(3, "u1", "lists").random()
    assert a != sm.user_stream(4, "u1", "lists").random()
    assert a != sm.user_stream(3, "u2", "lists").random()
    assert a != sm.user_stream(3, "u1", "policy").random()


def test_oracle_requires_harness():
    with pytest.raises(ValueError, match="harness"):
        sm.PolicySpec("oracle")
    with pytest.raises(ValueError):
        sm.PolicySpec("clairvoyant")
    assert sm.PolicySpec("oracle", harness=True).kind == "oracle"


def small_world():
    spec = {f"i{k:02d}": ("AB"[k % 2], (0, 2, 4)[k % 3]) for k in range(30)}
    cat = catalogue(spec, {i: k / 30 for k, i in enumerate(sorted(spec))})
    train = [rec("u", f"i{k:02d}", T0 + k * DAY, category="AB"[k % 2]) for k in range(5)]
    truth = [rec("u", i, T0 + (10 + k) * DAY, category="AB"[int(i[1:]) % 2]) for k, i in enumerate(["i07", "i12", "i20"])]
    interacted = {r.item_id for r in train + truth}
    return cat, train, truth, interacted


class TestSimulateUser:
    def run(self, kind, seed=0, harness=False):
        cat, train, truth, interacted = small_world()
        return sm.simulate_user("u", sm.PolicySpec(kind, harness=harness), truth, interacted, cat, seed,
                                person(), train)

    def test_one_selection_per_truth_item(self):
        seq = self.run("personality-deterministic")
        assert [s.step for s in seq.selections] == [0, 1, 2]
        assert [s.timestamp for s in seq.selections] == [T0 + 10 * DAY, T0 + 11 * DAY, T0 + 12 * DAY]
        assert [lst.positive_item for lst in seq.lists] == ["i07", "i12", "i20"]
        _, _, _, interacted = small_world()
        assert all(lst.validate(interacted) == [] for lst in seq.lists)

    @pytest.mark.parametrize("kind", ["random", "markov", "personality-deterministic", "ablation-random-personality"])
    def test_reproducible(self, kind):
        assert self.run(kind, 5).to_rows() == self.run(kind, 5).to_rows()

    def test_seed_changes_negatives(self):
        a, b = self.run("random", 1), self.run("random", 2)
        assert [lst.items for lst in a.lists] != [lst.items for lst in b.lists]

    def test_oracle_hits_every_step(self):
        seq = self.run("oracle", harness=True)
        assert seq.items == ["i07", "i12", "i20"] and all(s.was_positive for s in seq.selections)

    def test_lists_do_not_depend_on_policy(self):
        assert [lst.items for lst in self.run("random").lists] == [lst.items for lst in self.run("markov").lists]

    def test_needs_truth_and_profile(self):
        cat, train, truth, interacted = small_world()
        with pytest.raises(sm.SimulationError):
            sm.simulate_user("u", sm.PolicySpec("random"), [], interacted, cat, 0)
        with pytest.raises(sm.SimulationError, match="personality"):
            sm.simulate_user("u", sm.PolicySpec("personality-deterministic"), truth, interacted, cat, 0)

    def test_rows(self):
        row = self.run("oracle", harness=True).to_rows()[0]
        assert row == {"user_id": "u", "policy": "oracle", "step": 0, "item_id": "i07",
                       "was_positive": True, "timestamp": T0 + 10 * DAY}


def test_markov_policy_follows_transitions():
    spec = {"a1": ("A", 0), "a2": ("A", 0), "b1": ("B", 0), "b2": ("B", 0)}
    cat = catalogue(spec)
    hist = sm.UserHistory(cat)
    for item in ["a1", "b1", "a2", "b2", "a1"]:
        hist.add(item)
    lst = sm.RecommendationList(0, ("a2", "b2", "b1"), "a2")
    picks = {sm.agent_select(sm.PolicySpec("markov"), None, lst, cat, hist, random.Random(s)) for s in range(20)}
    assert picks == {"b1", "b2"}


def test_llm_selection_parses_json():
    class Session:
        model = "m"

        def __init__(self):
            self.replies = ['pick {"item_id": "nope"}', 'noise {"x": 1} {"item_id": "b"}']

        def chat(self, req):
            return self.replies.pop(0)

    cat = catalogue({"a": ("A", 0), "b": ("B", 4)})
    lst = sm.RecommendationList(0, ("a", "b"), "a")
    pick = sm.agent_select(sm.PolicySpec("personality-llm"), person(), lst, cat, sm.UserHistory(cat),
                           random.Random(0), Session())
    assert pick == "b"


def test_random_policy_uses_every_slot_evenly():
    cat = catalogue({f"i{k:02d}": ("A", 0) for k in range(10)})
    lst = sm.RecommendationList(0, tuple(sorted(cat.items)), "i00")
    rng = random.Random(11)
    slots = [lst.items.index(sm.agent_select(sm.PolicySpec("random"), None, lst, cat, sm.UserHistory(cat), rng))
             for _ in range(5000)]
    for slot in range(10):
        assert abs(slots.count(slot) / 5000 - 0.1) <= 0.02

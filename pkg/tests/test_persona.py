import json
import random

import pytest
from hypothesis import given, strategies as st

from personasim import persona as ps
from personasim.context import PromptContext
from personasim.profile import BehavioralSignature

TEXT_KEYS = ("social_word_ratio", "positive_sentiment_ratio", "politeness_ratio",
             "negative_emotion_volatility", "metaphor_density")


def sig(user, entropy=1.0, cv=0.3, dev=0.1, rhythm=0.5, text=None):
    return BehavioralSignature(
        user_id=user, purchase_count=10, span_days=100.0, purchase_frequency=3.0,
        rhythm={"7": (rhythm, 0.0)}, category_entropy=entropy,
        review_length_cv=cv, rating_deviation=dev, text=text,
    )


def text(v):
    return {k: v for k in TEXT_KEYS}


def population(n=9):
    return [sig(f"p{k}", entropy=k, cv=k, dev=k, rhythm=k / 10, text=text(k / 10)) for k in range(n)]


class TestDeterministic:
    def test_median_user_is_neutral(self):
        pop = population()
        p = ps.infer_deterministic(pop[4], None, pop)
        assert p.scores() == pytest.approx({t: 0.5 for t in ps.TRAITS})

    def test_maximal_openness(self):
        pop = population()
        top = sig("x", entropy=100, text={**text(0.0), "metaphor_density": 5.0})
        assert ps.infer_deterministic(top, None, pop).openness > 0.9

    def test_no_text_falls_back(self):
        pop = population()
        p = ps.infer_deterministic(sig("x", entropy=100, text=None), None, pop)
        assert p.extraversion == p.agreeableness == p.neuroticism == 0.5
        assert p.evidence["extraversion"] == [("neutral_prior", 0.5)]
        assert [name for name, _ in p.evidence["openness"]] == ["category_entropy"]
        assert p.openness == pytest.approx(1 - 0.5 / 10)

    def test_inverted_correlates(self):
        pop = population()
        steady = ps.infer_deterministic(sig("x", cv=-1, dev=0.0, rhythm=1.0, text=text(0.4)), None, pop)
        erratic = ps.infer_deterministic(sig("y", cv=99, dev=50, rhythm=0.0, text=text(0.4)), None, pop)
        assert steady.conscientiousness > 0.9 > 0.1 > erratic.conscientiousness
        assert [n for n, _ in steady.evidence["conscientiousness"]][:2] == ["1-review_length_cv",
                                                                           "1-abs_rating_deviation"]

    def test_evidence_sums_to_score(self):
        pop = population()
        p = ps.infer_deterministic(sig("x", entropy=3.3, cv=1.2, dev=-2, rhythm=0.25, text=text(0.33)), None, pop)
        for t in ps.TRAITS:
            assert sum(c for _, c in p.evidence[t]) == pytest.approx(p.scores()[t])

    def test_weights(self):
        pop = population()
        s = sig("x", entropy=100, text={**text(0.4), "metaphor_density": -1.0})
        equal = ps.infer_deterministic(s, None, pop).openness
        tilted = ps.infer_deterministic(s, None, pop, {"openness": {"metaphor_density": 3.0}}).openness
        assert tilted < equal

    def test_text_argument_overrides_signature_text(self):
        pop = population()
        s = sig("x", text=None)
        p = ps.infer_deterministic(s, ps.TextFeatures(**text(0.85)), pop)
        assert p.extraversion > 0.5

    @given(st.lists(st.floats(-1e3, 1e3), min_size=9, max_size=9))
    def test_bounds(self, values):
        pop = population()
        s = sig("x", entropy=values[0], cv=values[1], dev=values[2], rhythm=values[3],
                text=dict(zip(TEXT_KEYS, values[4:])))
        assert all(0.0 <= v <= 1.0 for v in ps.infer_deterministic(s, None, pop).scores().values())

    def test_needs_population(self):
        with pytest.raises(ValueError):
            ps.infer_deterministic(sig("x"), None, [])


def test_profile_validation_and_json():
    with pytest.raises(ValueError):
        ps.PersonalityProfile("u", 1.2, 0, 0, 0, 0)
    p = ps.random_profile("u", 3)
    assert ps.PersonalityProfile.from_json(json.loads(json.dumps(p.to_json()))) == p
    assert ps.random_profile("u", 3) == p and ps.random_profile("u", 4) != p


class TestParsing:
    def test_exact_values(self):
        assert ps.parse_trait_scores('{"O":0.8,"C":0.3,"E":0.5,"A":0.7,"N":0.2}') == {
            "openness": 0.8, "conscientiousness": 0.3, "extraversion": 0.5, "agreeableness": 0.7, "neuroticism": 0.2}

    def test_embedded_and_named(self):
        raw = 'Sure! {"note": 1} then {"openness": 1, "conscientiousness": 0, "extraversion": 0.5, ' \
              '"agreeableness": 0.5, "neuroticism": 0.5} done'
        assert ps.parse_trait_scores(raw)["openness"] == 1.0

    @pytest.mark.parametrize("raw", ["no json", '{"O": 0.1}', '{"O":"high","C":0,"E":0,"A":0,"N":0}',
                                     '{"O":true,"C":0,"E":0,"A":0,"N":0}'])
    def test_rejects(self, raw):
        assert ps.parse_trait_scores(raw) is None


class FakeSession:
    """Returns queued replies and records the requests it saw."""

    model = "fake"

    def __init__(self, *replies):
        self.replies = list(replies)
        self.requests = []

    def chat(self, req):
        self.requests.append(req)
        return self.replies.pop(0)


def ctx():
    return PromptContext("u", [], "", 100, "USER u\nstats")


class TestLLMBackend:
    def test_values_pass_through(self):
        p = ps.infer_llm(ctx(), FakeSession('{"O":0.8,"C":0.3,"E":0.5,"A":0.7,"N":0.2}'))
        assert (p.openness, p.neuroticism, p.backend) == (0.8, 0.2, "llm")

    def test_out_of_range_clamped_with_warning(self):
        p = ps.infer_llm(ctx(), FakeSession('{"O":1.4,"C":-0.2,"E":0.5,"A":0.7,"N":0.2}'))
        assert p.openness == 1.0 and p.conscientiousness == 0.0
        assert len(p.warnings) == 2

    def test_retries_with_nudge(self):
        session = FakeSession("I think they are open.", '{"O":0.1,"C":0.2,"E":0.3,"A":0.4,"N":0.5}')
        p = ps.infer_llm(ctx(), session)
        assert p.agreeableness == 0.4
        assert session.requests[0].messages[0][0] == "system"
        assert session.requests[1].messages[1][1].startswith(session.requests[0].messages[1][1])
        assert session.requests[1] != session.requests[0]

    def test_gives_up(self):
        with pytest.raises(ps.PersonaParseError) as err:
            ps.infer_llm(ctx(), FakeSession("a", "b", "c"))
        assert err.value.raw == "c"


def test_monotone_in_each_correlate():
    rng = random.Random(5)
    pop = [sig(f"p{k}", *(rng.uniform(0, 5) for _ in range(3)), rng.random(), text(rng.random())) for k in range(30)]
    for _ in range(200):
        base = dict(entropy=rng.uniform(0, 5), cv=rng.uniform(0, 5), dev=rng.uniform(0, 5), rhythm=rng.random())
        txt = text(rng.random())
        field_name = rng.choice(list(base))
        bumped = dict(base, **{field_name: base[field_name] + rng.uniform(0.1, 2)})
        a = ps.infer_deterministic(sig("x", **base, text=txt), None, pop)
        b = ps.infer_deterministic(sig("x", **bumped, text=txt), None, pop)
        if field_name == "entropy":
            assert b.openness >= a.openness
        elif field_name == "rhythm":
            assert b.conscientiousness >= a.conscientiousness
        else:
            assert b.conscientiousness <= a.conscientiousness
        unaffected = [t for t in ps.TRAITS if t not in ("openness", "conscientiousness")]
        assert all(a.scores()[t] == b.scores()[t] for t in unaffected)

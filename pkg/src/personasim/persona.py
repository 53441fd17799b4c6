"""Big Five inference.

Two interchangeable backends produce :class:`PersonalityProfile`:

* ``infer_deterministic`` composes population percentiles of behavioural and
  text correlates, one small weighted mean per trait;
* ``infer_llm`` sends the rendered prompt context to a chat model and parses
  the JSON scores it returns.
"""
from __future__ import annotations

import json
import logging
import random
import zlib
from dataclasses import dataclass, field

from .context import PromptContext, percentile_of
from .llmclient import ChatRequest, ChatSession, LLMError
from .profile import BehavioralSignature
from .text import TextFeatures

logger = logging.getLogger(__name__)

TRAITS = ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism")
LETTERS = dict(zip("OCEAN", TRAITS))
NEUTRAL = 0.5
LLM_RETRIES = 2

# trait -> [(feature, inverted)]; inverted correlates contribute 1 - percentile
CORRELATES: dict[str, list[tuple[str, bool]]] = {
    "openness": [("category_entropy", False), ("metaphor_density", False)],
    "conscientiousness": [
        ("review_length_cv", True),
        ("abs_rating_deviation", True),
        ("rhythm_7_strength", False),
    ],
    "extraversion": [("social_word_ratio", False)],
    "agreeableness": [("positive_sentiment_ratio", False), ("politeness_ratio", False)],
    "neuroticism": [("negative_emotion_volatility", False)],
}

SYSTEM_PROMPT = (
    "You are a personality psychologist. From the shopper's behavioural statistics and purchase "
    "history, estimate their Big Five traits. Use these cues: Openness - category entropy and "
    "figurative language; Conscientiousness - consistent review length, ratings close to category "
    "averages, regular purchase rhythm; Extraversion - references to other people and gifts; "
    "Agreeableness - positive sentiment and politeness; Neuroticism - volatile negative emotion. "
    'Reply with strict JSON only, exactly {"O":x,"C":x,"E":x,"A":x,"N":x} with each x in [0,1].'
)
RETRY_NUDGE = "\n\n(Reply attempt {n}: respond with the JSON object only.)"


class PersonaParseError(LLMError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass
class PersonalityProfile:
    user_id: str
    openness: float
    conscientiousness: float
    extraversion: float
    agreeableness: float
    neuroticism: float
    backend: str = "deterministic"
    evidence: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        for t in TRAITS:
            v = getattr(self, t)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{t} = {v} outside [0, 1]")

    def scores(self) -> dict[str, float]:
        return {t: getattr(self, t) for t in TRAITS}

    def to_json(self) -> dict:
        obj = {"user_id": self.user_id, "backend": self.backend, **self.scores()}
        obj["evidence"] = {t: [[n, c] for n, c in ev] for t, ev in self.evidence.items()}
        if self.warnings:
            obj["warnings"] = self.warnings
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "PersonalityProfile":
        return cls(
            user_id=obj["user_id"],
            backend=obj.get("backend", "deterministic"),
            evidence={t: [(n, c) for n, c in ev] for t, ev in obj.get("evidence", {}).items()},
            warnings=list(obj.get("warnings", [])),
            **{t: obj[t] for t in TRAITS},
        )


def clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def correlate_values(s: BehavioralSignature, t: TextFeatures | dict | None = None) -> dict[str, float]:
    values = s.scalars()
    if t is not None:
        values.update(t.as_dict() if isinstance(t, TextFeatures) else t)
    if "rating_deviation" in values:
        values["abs_rating_deviation"] = abs(values["rating_deviation"])
    return values


def infer_deterministic(
    s: BehavioralSignature,
    t: TextFeatures | None,
    population: list[BehavioralSignature],
    weights: dict[str, dict[str, float]] | None = None,
) -> PersonalityProfile:
    """Percentile-composition trait scores.

    Each trait is the weighted mean of its available correlates' population
    percentiles (as fractions).  Correlates the user lacks are dropped and the
    remaining weights renormalised; with none left the trait is neutral.
    """
    if not population:
        raise ValueError("population must be non-empty")
    weights = weights or {}
    mine = correlate_values(s, t)
    pop = [correlate_values(p) for p in population]
    scores, evidence = {}, {}
    for trait, correlates in CORRELATES.items():
        terms = []
        for name, inverted in correlates:
            if name not in mine:
                continue
            values = [p[name] for p in pop if name in p]
            if mine[name] not in values:
                values.append(mine[name])
            frac = percentile_of(mine[name], values) / 100.0
            label = f"1-{name}" if inverted else name
            terms.append((label, 1.0 - frac if inverted else frac, weights.get(trait, {}).get(name, 1.0)))
        total_w = sum(w for _, _, w in terms)
        if not terms or total_w <= 0:
            evidence[trait] = [("neutral_prior", NEUTRAL)]
            scores[trait] = NEUTRAL
            continue
        evidence[trait] = [(label, w / total_w * v) for label, v, w in terms]
        scores[trait] = clamp01(sum(c for _, c in evidence[trait]))
    return PersonalityProfile(s.user_id, backend="deterministic", evidence=evidence, **scores)


def random_profile(user_id: str, seed: int) -> PersonalityProfile:
    """Uniform random traits from a stream keyed on (seed, user_id)."""
    rng = random.Random(seed * 1_000_003 + zlib.crc32(user_id.encode("utf-8")))
    scores = {t: rng.random() for t in TRAITS}
    return PersonalityProfile(user_id, backend="random", evidence={t: [("random", v)] for t, v in scores.items()},
                              **scores)


def json_objects(text: str):
    """Yield every decodable JSON object embedded in ``text``, in order."""
    decoder = json.JSONDecoder()
    start = text.find("{")
    while start != -1:
        try:
            obj, end = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            start = text.find("{", start + 1)
            continue
        if isinstance(obj, dict):
            yield obj
            start = text.find("{", end)
        else:
            start = text.find("{", start + 1)


def _trait_scores(obj: dict) -> dict[str, float] | None:
    out = {}
    for letter, trait in LETTERS.items():
        value = obj.get(letter, obj.get(trait))
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None
        out[trait] = float(value)
    return out


def parse_trait_scores(text: str) -> dict[str, float] | None:
    """Scores from the first embedded JSON object carrying all five traits."""
    for obj in json_objects(text):
        scores = _trait_scores(obj)
        if scores is not None:
            return scores
    return None


def persona_request(c: PromptContext, model: str, attempt: int = 0) -> ChatRequest:
    user = c.text if attempt == 0 else c.text + RETRY_NUDGE.format(n=attempt + 1)
    return ChatRequest(model=model, messages=(("system", SYSTEM_PROMPT), ("user", user)), temperature=0.0)


def infer_llm(c: PromptContext, client: ChatSession, retries: int = LLM_RETRIES) -> PersonalityProfile:
    raw = ""
    for attempt in range(retries + 1):
        raw = client.chat(persona_request(c, client.model, attempt))
        scores = parse_trait_scores(raw)
        if scores is not None:
            break
        logger.warning("unparseable persona response for %s (attempt %d)", c.user_id, attempt + 1)
    else:
        raise PersonaParseError(f"no parseable trait JSON for {c.user_id} after {retries + 1} attempts", raw)
    warnings = [f"{t} = {v:g} clamped to [0, 1]" for t, v in scores.items() if not 0.0 <= v <= 1.0]
    for w in warnings:
        logger.warning("%s: %s", c.user_id, w)
    return PersonalityProfile(
        c.user_id,
        backend="llm",
        evidence={t: [("llm_response", v)] for t, v in scores.items()},
        warnings=warnings,
        **{t: clamp01(v) for t, v in scores.items()},
    )

"""Lexicon-based review text features: valence scoring and word-list ratios."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, fields
from functools import lru_cache
from importlib import resources

import numpy as np

_TOKEN = re.compile(r"[a-z0-9']+")

# Normalisation constant of the valence sum: s / sqrt(s^2 + ALPHA).
ALPHA = 15.0
NEGATION_WINDOW = 3
POSITIVE_THRESHOLD = 0.05


@dataclass(frozen=True)
class Lexicons:
    social: frozenset
    positive_emotion: frozenset
    negative_emotion: frozenset
    politeness: frozenset
    figurative_markers: frozenset
    figurative_phrases: tuple
    negations: frozenset
    boosters: dict
    valence: dict
    version: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "Lexicons":
        def words(key):
            return frozenset(w.strip().lower() for w in d.get(key, ()))

        valence = {k.lower(): float(v) for k, v in d.get("valence", {}).items()}
        bad = [k for k, v in valence.items() if not -1.0 <= v <= 1.0]
        if bad:
            raise ValueError(f"valence outside [-1, 1] for {bad}")
        return cls(
            social=words("social"),
            positive_emotion=words("positive_emotion"),
            negative_emotion=words("negative_emotion"),
            politeness=words("politeness"),
            figurative_markers=words("figurative_markers"),
            figurative_phrases=tuple(sorted({p.lower() for p in d.get("figurative_phrases", ())})),
            negations=words("negations"),
            boosters={k.lower(): float(v) for k, v in d.get("boosters", {}).items()},
            valence=valence,
            version=str(d.get("version", "")),
        )


@lru_cache(maxsize=1)
def default_lexicons() -> Lexicons:
    raw = resources.files("personasim.assets").joinpath("lexicons.json").read_text(encoding="utf-8")
    return Lexicons.from_dict(json.loads(raw))


def tokenize(text: str | None) -> list[str]:
    if not text:
        return []
    return [t.replace("'", "") for t in _TOKEN.findall(text.lower()) if t.replace("'", "")]


def sentiment_score(text: str | None, lex: Lexicons | None = None) -> float:
    """Compound valence in [-1, 1].

    Each lexicon hit is boosted by an immediately preceding booster word and
    sign-flipped when a negation occurs in the three preceding tokens.
    """
    lex = lex or default_lexicons()
    tokens = tokenize(text)
    total = 0.0
    for i, tok in enumerate(tokens):
        v = lex.valence.get(tok)
        if v is None:
            continue
        if i > 0 and tokens[i - 1] in lex.boosters:
            # positive boosters push away from zero, dampeners toward it
            v += math.copysign(1.0, v) * lex.boosters[tokens[i - 1]] if v else 0.0
        if any(t in lex.negations for t in tokens[max(0, i - NEGATION_WINDOW):i]):
            v = -v
        total += v
    if total == 0.0:
        return 0.0
    return total / math.sqrt(total * total + ALPHA)


def _phrase_hits(text: str, phrases) -> int:
    padded = " " + " ".join(tokenize(text)) + " "
    return sum(padded.count(" " + p + " ") for p in phrases)


@dataclass(frozen=True)
class TextFeatures:
    social_word_ratio: float
    positive_sentiment_ratio: float
    politeness_ratio: float
    negative_emotion_volatility: float
    metaphor_density: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


TEXT_FEATURE_NAMES = tuple(f.name for f in fields(TextFeatures))


def text_features(reviews, lex: Lexicons | None = None) -> TextFeatures | None:
    """Pooled lexicon ratios over a user's reviews, or None with no text."""
    lex = lex or default_lexicons()
    reviews = [r for r in reviews if r]
    if not reviews:
        return None
    n_tokens = social = polite = figurative = 0
    neg_ratios = []
    positive = 0
    for text in reviews:
        toks = tokenize(text)
        n_tokens += len(toks)
        social += sum(t in lex.social for t in toks)
        polite += sum(t in lex.politeness for t in toks)
        figurative += sum(t in lex.figurative_markers for t in toks) + _phrase_hits(text, lex.figurative_phrases)
        neg_ratios.append(sum(t in lex.negative_emotion for t in toks) / len(toks) if toks else 0.0)
        positive += sentiment_score(text, lex) > POSITIVE_THRESHOLD
    denom = max(n_tokens, 1)
    return TextFeatures(
        social_word_ratio=social / denom,
        positive_sentiment_ratio=positive / len(reviews),
        politeness_ratio=polite / denom,
        negative_emotion_volatility=float(np.std(neg_ratios)),
        metaphor_density=min(1.0, figurative / denom),
    )

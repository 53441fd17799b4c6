"""Prompt context construction: percentile-normalised statistics fused with
item metadata snippets into one rendered document."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from string import Template

import numpy as np

from .ingest import ItemMetadata
from .profile import BehavioralSignature, SampledHistory

BAND_CUTS = (10.0, 35.0, 65.0, 90.0)
BANDS = ("very low", "low", "medium", "high", "very high")
DEFAULT_BUDGET = 3000

# Truncation ladders (tokens) tried in order when the render is over budget.
DESCRIPTION_CAPS = (40, 20, 10, 5, 0)
REVIEW_CAPS = (60, 30, 15, 5, 0)


class ContextBudgetError(ValueError):
    """The token budget cannot hold even the statistics section."""


def percentile_of(value: float, population) -> float:
    """Midpoint-rank percentile: 100 * (#less + #equal / 2) / n."""
    pop = np.asarray(population, dtype=float)
    if pop.size == 0:
        raise ValueError("empty population")
    less = np.count_nonzero(pop < value)
    equal = np.count_nonzero(pop == value)
    return float(100.0 * (less + 0.5 * equal) / pop.size)


def band(percentile: float) -> str:
    return BANDS[int(np.searchsorted(BAND_CUTS, percentile, side="right"))]


@dataclass(frozen=True)
class NormalizedFeature:
    raw: float
    percentile: float
    band: str


def normalize_stats(s: BehavioralSignature, population: list[BehavioralSignature]) -> dict[str, NormalizedFeature]:
    """Map each present scalar feature of ``s`` to its population percentile."""
    if not population:
        raise ValueError("population must be non-empty")
    pop_scalars = [p.scalars() for p in population]
    out = {}
    for name, value in sorted(s.scalars().items()):
        values = [ps[name] for ps in pop_scalars if name in ps]
        if value not in values:
            values.append(value)
        pct = percentile_of(value, values)
        out[name] = NormalizedFeature(float(value), pct, band(pct))
    return out


def n_tokens(text: str) -> int:
    return len(text.split())


def _truncate(text: str | None, cap: int) -> str:
    if not text or cap <= 0:
        return ""
    words = text.split()
    if len(words) <= cap:
        return " ".join(words)
    return " ".join(words[:cap]) + " ..."


@dataclass
class ItemSnippet:
    item_id: str
    date: str
    title: str
    category: str
    price: float | None
    rating: float
    description: str
    review: str

    def render(self, desc_cap: int, review_cap: int) -> str:
        head = f"- [{self.date}] {self.title or self.item_id} | category: {self.category or 'unknown'}"
        if self.price is not None:
            head += f" | price: {self.price:.2f}"
        head += f" | rated {self.rating:g}/5"
        lines = [head]
        desc = _truncate(self.description, desc_cap)
        if desc:
            lines.append(f"  description: {desc}")
        review = _truncate(self.review, review_cap)
        if review:
            lines.append(f"  review: {review}")
        return "\n".join(lines)


@dataclass
class PromptContext:
    user_id: str
    metadata_digest: list[ItemSnippet]
    stats_section: str
    token_budget: int
    text: str
    description_cap: int = DESCRIPTION_CAPS[0]
    review_cap: int = REVIEW_CAPS[0]
    dropped_items: int = 0
    stats: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "token_budget": self.token_budget,
            "n_tokens": n_tokens(self.text),
            "items": [s.item_id for s in self.metadata_digest],
            "description_cap": self.description_cap,
            "review_cap": self.review_cap,
            "dropped_items": self.dropped_items,
            "text": self.text,
        }


@lru_cache(maxsize=1)
def context_template() -> Template:
    raw = resources.files("personasim.assets").joinpath("context_template.txt").read_text(encoding="utf-8")
    return Template(raw)


def render_stats(ns: dict[str, NormalizedFeature]) -> str:
    return "\n".join(
        f"- {name}: {f.raw:.4g} (percentile {f.percentile:.1f}, {f.band})" for name, f in sorted(ns.items())
    )


def _snippets(h: SampledHistory, meta: dict[str, ItemMetadata]) -> list[ItemSnippet]:
    out = []
    for r in h.records:
        m = meta.get(r.item_id)
        out.append(ItemSnippet(
            item_id=r.item_id,
            date=datetime.fromtimestamp(r.timestamp, tz=timezone.utc).strftime("%Y-%m-%d"),
            title=m.title if m else "",
            category=r.category or (m.category if m else ""),
            price=m.price if m else None,
            rating=r.rating,
            description=m.description if m else "",
            review=r.review_text or "",
        ))
    return out


def _render(user_id, stats_text, snippets, n_total, desc_cap, review_cap) -> str:
    items = "\n".join(s.render(desc_cap, review_cap) for s in snippets) or "(none)"
    return context_template().substitute(
        user_id=user_id, stats=stats_text or "(none)", items=items, n_items=len(snippets), n_total=n_total
    )


def build_context(
    user_id: str,
    h: SampledHistory,
    meta: dict[str, ItemMetadata],
    ns: dict[str, NormalizedFeature],
    budget: int = DEFAULT_BUDGET,
) -> PromptContext:
    """Render the user's context within ``budget`` whitespace tokens.

    Over budget, descriptions shrink first, then reviews, then the oldest
    items are dropped one at a time.
    """
    if not h.records:
        raise ValueError("sampled history is empty")
    if budget < 1:
        raise ContextBudgetError("token budget must be positive")
    stats_text = render_stats(ns)
    snippets = _snippets(h, meta)
    total = len(snippets)

    def attempt(items, dc, rc):
        text = _render(user_id, stats_text, items, total, dc, rc)
        return text if n_tokens(text) <= budget else None

    if attempt([], 0, 0) is None:
        raise ContextBudgetError(f"budget of {budget} tokens cannot hold the statistics section for {user_id}")

    review_cap = REVIEW_CAPS[0]
    for desc_cap in DESCRIPTION_CAPS:
        text = attempt(snippets, desc_cap, review_cap)
        if text is not None:
            return PromptContext(user_id, snippets, stats_text, budget, text, desc_cap, review_cap, 0, ns)
    desc_cap = 0
    for review_cap in REVIEW_CAPS[1:]:
        text = attempt(snippets, desc_cap, review_cap)
        if text is not None:
            return PromptContext(user_id, snippets, stats_text, budget, text, desc_cap, review_cap, 0, ns)
    for dropped in range(1, total + 1):
        kept = snippets[dropped:]
        text = attempt(kept, 0, 0)
        if text is not None:
            return PromptContext(user_id, kept, stats_text, budget, text, 0, 0, dropped, ns)
    raise AssertionError("unreachable: empty render fits the budget")

"""Per-user behavioural signatures and temporal stratified sampling."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np

from .ingest import Dataset, InteractionRecord, ItemMetadata
from .text import TEXT_FEATURE_NAMES, Lexicons, text_features

DAY = 86400
YEAR_DAYS = 365
MONTH_DAYS = 30
QUARTER_DAYS = 91
WINDOW_DAYS = {"week": 7, "month": MONTH_DAYS, "quarter": QUARTER_DAYS}

DEFAULT_CYCLES = (7, 365)
# Left edges (days) of the inter-purchase gap buckets: <1, 1-2, 2-4, ..., >=64.
INTERVAL_EDGES_DAYS = (1, 2, 4, 8, 16, 32, 64)
N_TIERS = 5


def angular_transform(timestamp, cycle_days: int) -> float:
    """Map a timestamp in seconds onto [0, 2*pi) for a cycle of ``cycle_days``."""
    if cycle_days < 1:
        raise ValueError("cycle_days must be >= 1")
    period = cycle_days * DAY
    if isinstance(timestamp, (int, np.integer)):
        # Integer modulo first so shifting by whole cycles is exact.
        frac = (int(timestamp) % period) / period
    else:
        frac = math.fmod(float(timestamp), period) / period
        if frac < 0:
            frac += 1.0
    theta = 2.0 * math.pi * frac
    return 0.0 if theta >= 2.0 * math.pi else theta


def purchase_rhythm(timestamps, cycle_days: int) -> tuple[float, float] | None:
    """Mean resultant vector of the timestamps' phases: (strength, phase).

    Returns None for an empty list.
    """
    if len(timestamps) == 0:
        return None
    theta = np.array([angular_transform(t, cycle_days) for t in timestamps])
    if theta.size == 1:
        return 1.0, float(theta[0])
    gamma = np.mean(np.exp(1j * theta))
    strength = min(1.0, float(abs(gamma)))
    phase = float(np.angle(gamma)) % (2.0 * math.pi)
    return strength, phase


def _entropy_bits(counts) -> float:
    counts = np.asarray([c for c in counts if c > 0], dtype=float)
    if counts.size <= 1:
        return 0.0
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def interval_bucket(gap_seconds: float) -> int:
    return int(np.searchsorted(INTERVAL_EDGES_DAYS, gap_seconds / DAY, side="right"))


def interval_entropy(timestamps) -> float | None:
    """Shannon entropy (bits) of bucketed inter-purchase gaps; None if n < 2."""
    ts = sorted(timestamps)
    if len(ts) < 2:
        return None
    buckets = Counter(interval_bucket(b - a) for a, b in zip(ts, ts[1:]))
    return _entropy_bits(buckets.values())


def category_histogram(records) -> dict[str, float]:
    counts = Counter(r.category for r in records)
    n = sum(counts.values())
    return {c: counts[c] / n for c in sorted(counts)}


def category_entropy(records) -> float:
    if not records:
        raise ValueError("category_entropy needs at least one record")
    return _entropy_bits(Counter(r.category for r in records).values())


def price_quintiles(metadata: dict[str, ItemMetadata]) -> np.ndarray | None:
    prices = [m.price for m in metadata.values() if m.price is not None]
    if not prices:
        return None
    return np.quantile(prices, [0.2, 0.4, 0.6, 0.8])


def price_tier(price: float, edges) -> int:
    # side="left": a price equal to an edge stays in the lower tier
    return int(np.searchsorted(edges, price, side="left"))


def price_tiers(records, metadata: dict[str, ItemMetadata], edges=None) -> np.ndarray | None:
    """Proportion of the user's priced purchases in each global price quintile."""
    if edges is None:
        edges = price_quintiles(metadata)
    if edges is None:
        return None
    counts = np.zeros(N_TIERS)
    for r in records:
        m = metadata.get(r.item_id)
        if m is not None and m.price is not None:
            counts[price_tier(m.price, edges)] += 1
    if counts.sum() == 0:
        return None
    return counts / counts.sum()


def category_means(d: Dataset) -> dict[str, float]:
    sums: dict[str, list[float]] = defaultdict(list)
    for r in d.interactions:
        sums[r.category].append(r.rating)
    return {c: float(np.mean(v)) for c, v in sorted(sums.items())}


def review_length(text: str | None) -> int:
    return len(text.split()) if text else 0


def review_statistics(records, category_means: dict[str, float]):
    """(mean review length, length coefficient of variation, rating deviation).

    Length entries are None when no record carries text; rating deviation is
    None when no record's category has a known mean.
    """
    if not records:
        raise ValueError("review_statistics needs at least one record")
    lengths = np.array([review_length(r.review_text) for r in records if r.review_text])
    if lengths.size:
        mean = float(lengths.mean())
        cv = float(lengths.std() / mean) if mean > 0 else 0.0
    else:
        mean = cv = None
    devs = [r.rating - category_means[r.category] for r in records if r.category in category_means]
    deviation = float(np.mean(devs)) if devs else None
    return mean, cv, deviation


@dataclass
class BehavioralSignature:
    user_id: str
    purchase_count: int
    span_days: float
    purchase_frequency: float
    rhythm: dict[str, tuple[float, float]] = field(default_factory=dict)
    interval_entropy: float | None = None
    category_entropy: float = 0.0
    category_histogram: dict[str, float] = field(default_factory=dict)
    price_tier_distribution: list[float] | None = None
    review_length_mean: float | None = None
    review_length_cv: float | None = None
    rating_deviation: float | None = None
    text: dict[str, float] | None = None

    OPTIONAL = ("interval_entropy", "price_tier_distribution", "review_length_mean",
                "review_length_cv", "rating_deviation")

    @property
    def feature_coverage(self) -> dict[str, bool]:
        cov = {name: getattr(self, name) is not None for name in self.OPTIONAL}
        for name in TEXT_FEATURE_NAMES:
            cov[name] = self.text is not None and name in self.text
        for cycle in self.rhythm:
            cov[f"rhythm_{cycle}"] = True
        return cov

    def scalars(self) -> dict[str, float]:
        """Present scalar features by stable name (used for percentile scaling)."""
        out = {
            "purchase_count": float(self.purchase_count),
            "span_days": self.span_days,
            "purchase_frequency": self.purchase_frequency,
            "category_entropy": self.category_entropy,
        }
        for cycle, (strength, _) in self.rhythm.items():
            out[f"rhythm_{cycle}_strength"] = strength
        for name in ("interval_entropy", "review_length_mean", "review_length_cv", "rating_deviation"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.text:
            out.update(self.text)
        return out

    def to_json(self) -> dict:
        obj = {
            "user_id": self.user_id,
            "purchase_count": self.purchase_count,
            "span_days": self.span_days,
            "purchase_frequency": self.purchase_frequency,
            "rhythm": {k: {"strength": s, "phase": p} for k, (s, p) in self.rhythm.items()},
            "category_entropy": self.category_entropy,
            "category_histogram": self.category_histogram,
        }
        for name in self.OPTIONAL:
            value = getattr(self, name)
            if value is not None:
                obj[name] = value
        if self.text is not None:
            obj["text"] = self.text
        obj["feature_coverage"] = self.feature_coverage
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "BehavioralSignature":
        return cls(
            user_id=obj["user_id"],
            purchase_count=obj["purchase_count"],
            span_days=obj["span_days"],
            purchase_frequency=obj["purchase_frequency"],
            rhythm={k: (v["strength"], v["phase"]) for k, v in obj.get("rhythm", {}).items()},
            interval_entropy=obj.get("interval_entropy"),
            category_entropy=obj["category_entropy"],
            category_histogram=obj.get("category_histogram", {}),
            price_tier_distribution=obj.get("price_tier_distribution"),
            review_length_mean=obj.get("review_length_mean"),
            review_length_cv=obj.get("review_length_cv"),
            rating_deviation=obj.get("rating_deviation"),
            text=obj.get("text"),
        )


def build_signature(
    records: list[InteractionRecord],
    metadata: dict[str, ItemMetadata],
    category_means: dict[str, float],
    cycles=DEFAULT_CYCLES,
    price_edges=None,
    lexicons: Lexicons | None = None,
) -> BehavioralSignature:
    if not records:
        raise ValueError("build_signature needs at least one record")
    records = sorted(records, key=lambda r: r.timestamp)
    ts = [r.timestamp for r in records]
    span_days = (ts[-1] - ts[0]) / DAY
    rhythm = {}
    for cycle in cycles:
        rhythm[str(cycle)] = purchase_rhythm(ts, cycle)
    tiers = price_tiers(records, metadata, price_edges)
    length_mean, length_cv, deviation = review_statistics(records, category_means)
    text = text_features([r.review_text for r in records], lexicons)
    return BehavioralSignature(
        user_id=records[0].user_id,
        purchase_count=len(records),
        span_days=span_days,
        purchase_frequency=len(records) / max(span_days, 1.0) * 30.0,
        rhythm=rhythm,
        interval_entropy=interval_entropy(ts),
        category_entropy=category_entropy(records),
        category_histogram=category_histogram(records),
        price_tier_distribution=None if tiers is None else [float(x) for x in tiers],
        review_length_mean=length_mean,
        review_length_cv=length_cv,
        rating_deviation=deviation,
        text=None if text is None else text.as_dict(),
    )


def window_kind(span) -> str:
    """Adaptive bin length for a history spanning ``span`` (seconds or timedelta)."""
    seconds = span.total_seconds() if isinstance(span, timedelta) else float(span)
    if seconds < 0:
        raise ValueError("span must be non-negative")
    if seconds <= YEAR_DAYS * DAY:
        return "week"
    if seconds <= 3 * YEAR_DAYS * DAY:
        return "month"
    return "quarter"


@dataclass
class SampledHistory:
    user_id: str
    window_kind: str
    anchor: int
    bins: list[tuple[int, int, list[InteractionRecord]]]

    @property
    def records(self) -> list[InteractionRecord]:
        return [r for _, _, recs in self.bins for r in recs]

    def to_json(self) -> dict:
        from .ingest import record_to_json

        return {
            "user_id": self.user_id,
            "window_kind": self.window_kind,
            "anchor": self.anchor,
            "bins": [
                {"start": s, "end": e, "records": [record_to_json(r) for r in recs]}
                for s, e, recs in self.bins
            ],
        }


def _keep_order(r: InteractionRecord):
    # longest review first, then most recent
    return (-review_length(r.review_text), -r.timestamp)


def temporal_stratified_sample(
    records: list[InteractionRecord],
    eta: int = 5,
    anchor: int | None = None,
    kind: str | None = None,
) -> SampledHistory:
    """Keep at most ``eta`` records per adaptive time bin.

    Bins are contiguous windows anchored at the first timestamp (or at
    ``anchor``); within a bin the records with the longest reviews survive,
    ties going to the most recent.  Output is in chronological order.
    """
    if eta < 1:
        raise ValueError("eta must be >= 1")
    if not records:
        raise ValueError("cannot sample an empty history")
    records = sorted(records, key=lambda r: r.timestamp)
    start = records[0].timestamp if anchor is None else anchor
    if start > records[0].timestamp:
        raise ValueError("anchor lies after the first record")
    kind = kind or window_kind(records[-1].timestamp - records[0].timestamp)
    width = WINDOW_DAYS[kind] * DAY
    n_bins = (records[-1].timestamp - start) // width + 1
    grouped: list[list[tuple[int, InteractionRecord]]] = [[] for _ in range(n_bins)]
    for pos, r in enumerate(records):
        grouped[(r.timestamp - start) // width].append((pos, r))
    bins = []
    for k, members in enumerate(grouped):
        kept = sorted(members, key=lambda pr: _keep_order(pr[1]))[:eta]
        kept.sort(key=lambda pr: pr[0])
        bins.append((start + k * width, start + (k + 1) * width, [r for _, r in kept]))
    return SampledHistory(records[0].user_id, kind, start, bins)

"""Review-log ingestion: parsing, category unification, k-core filtering and
chronological splitting.

Everything here is a pure function over immutable inputs.  Datasets are
rebuilt rather than mutated.
"""
from __future__ import annotations

import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, asdict
from typing import IO, Iterable, Iterator

logger = logging.getLogger(__name__)

# Timestamps above this are milliseconds (10**11 s is the year 5138).
MS_THRESHOLD = 10**11


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    timestamp: int
    rating: float
    category: str = ""
    review_text: str | None = None
    review_title: str | None = None

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise ValueError("user_id and item_id must be non-empty")
        if self.timestamp <= 0:
            raise ValueError(f"timestamp must be positive, got {self.timestamp}")
        if not 1.0 <= self.rating <= 5.0:
            raise ValueError(f"rating must lie in [1, 5], got {self.rating}")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.user_id, self.item_id, self.timestamp)


@dataclass(frozen=True)
class ItemMetadata:
    item_id: str
    title: str = ""
    description: str = ""
    price: float | None = None
    category: str = ""
    average_rating: float | None = None

    def __post_init__(self):
        if not self.item_id:
            raise ValueError("item_id must be non-empty")
        if self.price is not None and self.price < 0:
            raise ValueError(f"price must be non-negative, got {self.price}")


def _chrono_key(r: InteractionRecord):
    return r.timestamp


@dataclass
class Dataset:
    """Interactions plus item metadata with a per-user chronological index.

    Items without a metadata entry are kept; they are reported by
    :attr:`missing_metadata` so downstream features can degrade to absent.
    """

    interactions: list[InteractionRecord]
    metadata: dict[str, ItemMetadata] = field(default_factory=dict)
    by_user: dict[str, list[InteractionRecord]] = field(init=False, repr=False)

    def __post_init__(self):
        grouped: dict[str, list[InteractionRecord]] = defaultdict(list)
        for rec in self.interactions:
            grouped[rec.user_id].append(rec)
        # sorted() is stable: equal timestamps keep input order
        self.by_user = {u: sorted(recs, key=_chrono_key) for u, recs in sorted(grouped.items())}

    @property
    def users(self) -> list[str]:
        return list(self.by_user)

    @property
    def items(self) -> list[str]:
        return sorted({r.item_id for r in self.interactions})

    @property
    def missing_metadata(self) -> set[str]:
        return {r.item_id for r in self.interactions if r.item_id not in self.metadata}

    def has_metadata(self, item_id: str) -> bool:
        return item_id in self.metadata

    def user_items(self, user_id: str) -> set[str]:
        return {r.item_id for r in self.by_user.get(user_id, ())}

    def __len__(self) -> int:
        return len(self.interactions)

    def subset(self, interactions: Iterable[InteractionRecord]) -> "Dataset":
        return Dataset(list(interactions), self.metadata)


@dataclass
class ParseReport:
    parsed: int = 0
    skipped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)


def normalize_timestamp(value) -> int:
    ts = int(value)
    if ts > MS_THRESHOLD:
        ts //= 1000
    return ts


def _item_id(obj: dict) -> str:
    item = obj.get("parent_asin") or obj.get("item_id") or obj.get("asin")
    if not item:
        raise KeyError("parent_asin/item_id")
    return str(item)


def _record_from_obj(obj: dict, category: str = "") -> InteractionRecord:
    text = obj.get("text", obj.get("review_text"))
    title = obj.get("title", obj.get("review_title"))
    return InteractionRecord(
        user_id=str(obj["user_id"]),
        item_id=_item_id(obj),
        timestamp=normalize_timestamp(obj["timestamp"]),
        rating=float(obj["rating"]),
        category=str(obj.get("category") or category),
        review_text=text if text else None,
        review_title=title if title else None,
    )


def _lines(stream: IO[str] | Iterable[str]) -> Iterator[str]:
    try:
        yield from stream
    except (OSError, UnicodeDecodeError) as exc:
        raise OSError(f"unreadable interaction stream: {exc}") from exc


def parse_interactions(stream, category: str = "", report: ParseReport | None = None) -> list[InteractionRecord]:
    """Parse review JSONL lines into records.

    Malformed lines are skipped and counted in ``report``; an unreadable
    stream raises :class:`OSError`.
    """
    report = report if report is not None else ParseReport()
    records = []
    for lineno, line in enumerate(_lines(stream), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(_record_from_obj(json.loads(line), category))
        except (ValueError, KeyError, TypeError) as exc:
            report.skipped += 1
            report.errors.append((lineno, f"{type(exc).__name__}: {exc}"))
    report.parsed = len(records)
    if report.skipped:
        logger.warning("skipped %d malformed interaction lines", report.skipped)
    return records


def parse_metadata(stream, report: ParseReport | None = None) -> dict[str, ItemMetadata]:
    report = report if report is not None else ParseReport()
    meta = {}
    for lineno, line in enumerate(_lines(stream), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            desc = obj.get("description", "")
            if isinstance(desc, list):
                desc = " ".join(map(str, desc))
            price = obj.get("price")
            avg = obj.get("average_rating")
            m = ItemMetadata(
                item_id=_item_id(obj),
                title=str(obj.get("title") or ""),
                description=str(desc or ""),
                price=None if price in (None, "") else float(price),
                category=str(obj.get("main_category") or obj.get("category") or ""),
                average_rating=None if avg is None else float(avg),
            )
        except (ValueError, KeyError, TypeError) as exc:
            report.skipped += 1
            report.errors.append((lineno, f"{type(exc).__name__}: {exc}"))
            continue
        meta[m.item_id] = m
    report.parsed = len(meta)
    return meta


def record_to_json(r: InteractionRecord) -> dict:
    obj = {
        "user_id": r.user_id,
        "item_id": r.item_id,
        "timestamp": r.timestamp,
        "rating": r.rating,
        "category": r.category,
    }
    if r.review_text is not None:
        obj["text"] = r.review_text
    if r.review_title is not None:
        obj["title"] = r.review_title
    return obj


def metadata_to_json(m: ItemMetadata) -> dict:
    obj = asdict(m)
    obj["main_category"] = obj.pop("category")
    return obj


def serialize_interactions(records: Iterable[InteractionRecord]) -> str:
    return "".join(json.dumps(record_to_json(r), sort_keys=True, ensure_ascii=False) + "\n" for r in records)


def serialize_metadata(meta: dict[str, ItemMetadata]) -> str:
    return "".join(
        json.dumps(metadata_to_json(meta[k]), sort_keys=True, ensure_ascii=False) + "\n" for k in sorted(meta)
    )


def attach_categories(records: list[InteractionRecord], metadata: dict[str, ItemMetadata]) -> list[InteractionRecord]:
    """Fill missing record categories from item metadata."""
    out = []
    for r in records:
        if not r.category and r.item_id in metadata and metadata[r.item_id].category:
            r = InteractionRecord(r.user_id, r.item_id, r.timestamp, r.rating,
                                  metadata[r.item_id].category, r.review_text, r.review_title)
        out.append(r)
    return out


def unify_categories(parts: list[tuple[str, Dataset]]) -> tuple[Dataset, int]:
    """Union category-specific datasets into one.

    Each record takes the category label of its source part.  Returns the
    unified dataset and the number of duplicate (user, item, timestamp)
    triples dropped.
    """
    seen: set[tuple[str, str, int]] = set()
    merged: list[InteractionRecord] = []
    metadata: dict[str, ItemMetadata] = {}
    duplicates = 0
    for category, part in parts:
        metadata.update(part.metadata)
        for r in part.interactions:
            if r.key in seen:
                duplicates += 1
                continue
            seen.add(r.key)
            if r.category != category:
                r = InteractionRecord(r.user_id, r.item_id, r.timestamp, r.rating,
                                      category, r.review_text, r.review_title)
            merged.append(r)
    if duplicates:
        logger.info("dropped %d duplicate interactions while unifying", duplicates)
    return Dataset(merged, metadata), duplicates


def filter_k_core(d: Dataset, min_count: int) -> Dataset:
    """Iteratively drop users and items with fewer than ``min_count``
    interactions until every survivor meets the threshold."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    records = list(d.interactions)
    while True:
        users = Counter(r.user_id for r in records)
        items = Counter(r.item_id for r in records)
        kept = [r for r in records if users[r.user_id] >= min_count and items[r.item_id] >= min_count]
        if len(kept) == len(records):
            break
        records = kept
    return Dataset(records, d.metadata)


def chronological_split(d: Dataset, test_fraction: float = 0.2) -> tuple[Dataset, Dataset]:
    """Per-user chronological split: the earliest ceil((1-f)*n) interactions of
    each user train, the remainder test."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    train, test = [], []
    for user, recs in d.by_user.items():
        n = len(recs)
        if n < 2:
            raise ValueError(f"user {user!r} has {n} interaction(s); splitting needs at least 2")
        # round() guards ceil against float noise such as 8.000000000000002
        n_train = min(math.ceil(round((1.0 - test_fraction) * n, 9)), n - 1)
        if len({r.timestamp for r in recs}) == 1:
            logger.warning("user %s has identical timestamps; splitting by input order", user)
        train.extend(recs[:n_train])
        test.extend(recs[n_train:])
    return Dataset(train, d.metadata), Dataset(test, d.metadata)


def split_manifest(train: Dataset, test: Dataset) -> dict:
    users = {}
    for u in sorted(set(train.by_user) | set(test.by_user)):
        tr, te = train.by_user.get(u, []), test.by_user.get(u, [])
        users[u] = {
            "n_train": len(tr),
            "n_test": len(te),
            "last_train_timestamp": tr[-1].timestamp if tr else None,
            "first_test_timestamp": te[0].timestamp if te else None,
        }
    return {"version": 1, "users": users}


def apply_manifest(d: Dataset, manifest: dict) -> tuple[Dataset, Dataset]:
    """Rebuild a split from a manifest and the canonical interaction file."""
    train, test = [], []
    for u, recs in d.by_user.items():
        entry = manifest["users"].get(u)
        if entry is None:
            raise KeyError(f"user {u!r} missing from split manifest")
        train.extend(recs[: entry["n_train"]])
        test.extend(recs[entry["n_train"]:])
    return Dataset(train, d.metadata), Dataset(test, d.metadata)


def load_dataset(review_paths, metadata_paths=()) -> tuple[Dataset, ParseReport]:
    """Read review (and metadata) JSONL files into a unified dataset.

    A review file named like ``Books.jsonl`` whose records lack a category is
    labelled ``Books`` unless metadata supplies one.
    """
    from pathlib import Path

    report = ParseReport()
    metadata: dict[str, ItemMetadata] = {}
    for p in metadata_paths:
        with open(p, encoding="utf-8") as fh:
            metadata.update(parse_metadata(fh))
    parts = []
    for p in review_paths:
        sub = ParseReport()
        with open(p, encoding="utf-8") as fh:
            recs = parse_interactions(fh, report=sub)
        report.parsed += sub.parsed
        report.skipped += sub.skipped
        report.errors.extend((ln, f"{p}: {msg}") for ln, msg in sub.errors)
        recs = attach_categories(recs, metadata)
        label = Path(p).name.split(".")[0]
        for cat, group in _group_by_category(recs, label).items():
            parts.append((cat, Dataset(group, metadata)))
    unified, _ = unify_categories(parts)
    return unified, report


def _group_by_category(recs, default):
    groups: dict[str, list[InteractionRecord]] = defaultdict(list)
    for r in recs:
        groups[r.category or default].append(r)
    return groups

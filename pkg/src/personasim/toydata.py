"""Generator for the bundled desk-scale review corpus.

Every synthetic shopper gets latent Big Five traits that drive their logs:

* openness: share of purchases outside the two favourite categories, and
  figurative phrasing in reviews;
* conscientiousness: weekly purchase schedule, stable review length,
  ratings near the category mean, loyalty to a personal price tier;
* extraversion: social words in reviews and a taste for popular items;
* agreeableness: positive and polite wording, higher ratings;
* neuroticism: occasional strongly negative reviews (volatile negativity)
  and aversion to items outside the personal price tier.

Within a category the next product is drawn, among those the shopper has not
reviewed yet, with probability proportional to ``exp(CHOICE_SHARPNESS * u)``
where ``u = 0.5 * C * tier_match + 0.25 * E * appeal - 0.25 * N * tier_gap``.
Habit strength (share of purchases in the favourite categories) grows with a
user's activity level.  One hand-written user, ``u_regular``, is a weekly
buyer used for golden-file tests.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CATEGORIES = ("Books", "Electronics", "Kitchen", "Toys", "Beauty", "Sports", "Garden", "Music")
ITEMS_PER_CATEGORY = 30
FINISHES = ("budget", "value", "standard", "premium", "luxury")
BASE_PRICE = {"Books": 12, "Electronics": 60, "Kitchen": 30, "Toys": 20,
              "Beauty": 15, "Sports": 35, "Garden": 25, "Music": 10}
START = 1_420_070_400  # 2015-01-01 UTC
DAY = 86400
CHOICE_SHARPNESS = 15.0  # inverse temperature of the within-category choice

FILLER = ("the", "it", "this", "item", "arrived", "size", "color", "use", "used", "box", "fits", "quality",
          "price", "order", "product", "daily", "for", "with", "and", "a", "is", "was", "on", "my", "time")
SOCIAL = ("we", "our", "family", "friend", "gift", "kids", "wife", "husband", "together", "party")
POSITIVE = ("great", "love", "excellent", "perfect", "happy", "nice", "wonderful", "best")
POLITE = ("thanks", "please", "appreciate", "grateful", "kindly")
NEGATIVE = ("terrible", "disappointed", "broken", "waste", "awful", "useless", "junk", "regret")
FIGURATIVE = ("like a dream", "as if by magic", "works like a charm", "a real gem", "feels like heaven")
NOUNS = {"Books": "novel", "Electronics": "charger", "Kitchen": "pan", "Toys": "puzzle",
         "Beauty": "cream", "Sports": "ball", "Garden": "hose", "Music": "album"}


def _catalogue(rng):
    items = []
    for c in CATEGORIES:
        for k in range(ITEMS_PER_CATEGORY):
            price = round(BASE_PRICE[c] * (0.5 + 3.0 * k / (ITEMS_PER_CATEGORY - 1)) * rng.uniform(0.9, 1.1), 2)
            items.append({
                "item_id": f"{c[:3].upper()}{k:02d}",
                "title": f"{c} {NOUNS[c]} model {k}",
                "description": f"A {NOUNS[c]} for everyday {c.lower()} needs, durable and simple, "
                               f"with a {FINISHES[k * len(FINISHES) // ITEMS_PER_CATEGORY]} finish.",
                "price": price,
                "main_category": c,
                "popularity": float(rng.lognormal(0.0, 0.6)),
            })
    return items


def _review(rng, traits, category, length, upset):
    o, c, e, a, n = traits
    words = []
    while len(words) < length:
        x = rng.random()
        if upset and x < 0.08 + 0.22 * n:
            words.append(rng.choice(NEGATIVE))
        elif x < 0.02 + 0.10 * e + (0.30 if upset else 0.0):
            words.append(rng.choice(SOCIAL))
        elif not upset and x < 0.06 + 0.10 * e + 0.14 * a:
            words.append(rng.choice(POSITIVE))
        elif x < 0.08 + 0.10 * e + 0.14 * a + 0.06 * a:
            words.append(rng.choice(POLITE))
        elif rng.random() < 0.04 * o:
            words.extend(rng.choice(FIGURATIVE).split())
        else:
            words.append(rng.choice(FILLER))
    words = words[:length]
    words.insert(min(3, len(words)), NOUNS[category])
    return " ".join(words).capitalize() + "."


def _timestamps(rng, n, conscientious, span_days):
    start = START + int(rng.integers(0, 5 * 365)) * DAY
    if rng.random() < conscientious:
        # weekly schedule on a fixed weekday and hour, skipping some weeks
        weeks = np.sort(rng.choice(max(n, span_days // 7), size=n, replace=False))
        hour = int(rng.integers(8, 20)) * 3600
        return [int(start + w * 7 * DAY + hour + rng.integers(0, 600)) for w in weeks]
    return sorted(int(start + rng.integers(0, span_days * DAY)) for _ in range(n))


def generate(seed: int = 7, n_users: int = 52):
    """Return (reviews, metadata) as lists of JSON-ready dicts."""
    rng = np.random.default_rng(seed)
    items = _catalogue(rng)
    by_cat = {c: [it for it in items if it["main_category"] == c] for c in CATEGORIES}
    tier_of = {it["item_id"]: k * 5 // ITEMS_PER_CATEGORY for c in CATEGORIES for k, it in enumerate(by_cat[c])}
    cat_mean = {c: float(rng.uniform(3.6, 4.4)) for c in CATEGORIES}
    reviews = []
    user_specs = [(f"u{idx:03d}", None) for idx in range(n_users - 1)] + [("u_regular", (0.2, 0.97, 0.3, 0.6, 0.1))]
    activity = np.sort(rng.uniform(0.0, 1.0, n_users))
    rng.shuffle(activity)
    tiers = np.array([tier_of[it["item_id"]] for it in items])
    appeal = np.array([it["popularity"] for it in items]) / max(it["popularity"] for it in items)
    index = {it["item_id"]: k for k, it in enumerate(items)}
    for (user, fixed), act in zip(user_specs, activity):
        traits = fixed if fixed is not None else tuple(float(v) for v in rng.uniform(0.0, 1.0, 5))
        o, c, e, a, n = traits
        count = int(22 + act * 40) if fixed is None else 40
        span_days = int(rng.choice([200, 700, 1500]))
        favourites = list(rng.choice(CATEGORIES, size=2, replace=False))
        habit = 0.3 + 0.65 * act
        explore = (1.0 - habit) * (0.4 + 1.2 * o)
        gap = np.abs(tiers - int(rng.integers(0, 5))) / 4.0
        utility = 0.5 * c * (1.0 - gap) + 0.25 * e * appeal - 0.25 * n * gap
        owned: set[str] = set()
        mean_len = int(rng.integers(15, 60))
        for ts in _timestamps(rng, count, c, span_days):
            if rng.random() < explore:
                cat = str(rng.choice(CATEGORIES))
            else:
                cat = favourites[0] if rng.random() < 0.7 else favourites[1]
            # shoppers review each product once; a full category sends them to
            # the other favourite, then anywhere
            pool = next((by_cat[k] for k in (cat, *favourites) if any(it["item_id"] not in owned for it in by_cat[k])),
                        items)
            pool = [it for it in pool if it["item_id"] not in owned] or pool
            u = np.array([utility[index[it["item_id"]]] for it in pool])
            weights = np.exp(CHOICE_SHARPNESS * (u - u.max()))
            item = pool[int(rng.choice(len(pool), p=weights / weights.sum()))]
            owned.add(item["item_id"])
            cat = item["main_category"]
            upset = rng.random() < 0.05 + 0.35 * n
            rating = cat_mean[cat] + 0.8 * (a - 0.5) + rng.normal(0.0, 0.2 + 1.3 * (1 - c))
            if upset:
                rating -= 1.5
            rating = float(np.clip(round(rating), 1, 5))
            length = max(4, int(rng.normal(mean_len, mean_len * (0.05 + 0.6 * (1 - c)))))
            reviews.append({
                "user_id": user,
                "parent_asin": item["item_id"],
                "rating": rating,
                "timestamp": ts * 1000 + int(rng.integers(0, 1000)),
                "title": "Review",
                "text": _review(rng, traits, cat, length, upset),
                "_category": cat,
                "_traits": dict(zip("OCEAN", traits)),
            })
    meta = [{k: v for k, v in it.items() if k != "popularity"} for it in items]
    return reviews, meta


def write_toy_corpus(directory, seed: int = 7, n_users: int = 52) -> dict:
    """Write per-category review files, ``meta.jsonl`` and the planted traits."""
    directory = Path(directory)
    (directory / "reviews").mkdir(parents=True, exist_ok=True)
    reviews, meta = generate(seed, n_users)
    traits = {}
    for c in CATEGORIES:
        rows = [r for r in reviews if r["_category"] == c]
        with open(directory / "reviews" / f"{c}.jsonl", "w", encoding="utf-8") as fh:
            for r in sorted(rows, key=lambda r: (r["user_id"], r["timestamp"])):
                traits[r["user_id"]] = r["_traits"]
                clean = {k: v for k, v in r.items() if not k.startswith("_")}
                fh.write(json.dumps(clean, sort_keys=True) + "\n")
    with open(directory / "meta.jsonl", "w", encoding="utf-8") as fh:
        for m in meta:
            fh.write(json.dumps(m, sort_keys=True) + "\n")
    with open(directory / "planted_traits.json", "w", encoding="utf-8") as fh:
        json.dump({u: traits[u] for u in sorted(traits)}, fh, indent=1, sort_keys=True)
    return {"reviews": len(reviews), "items": len(meta), "users": len(traits)}


def toy_corpus_dir() -> Path:
    from importlib import resources

    return Path(str(resources.files("personasim") / "data" / "toy"))

"""Proxy-recommender simulation loop.

At every step a mock list holds the user's next real test item plus nine
negatives the user never touched; an agent policy picks one item, and the
picks form the synthetic sequence compared against the real test sequence.
"""
from __future__ import annotations

import hashlib
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .ingest import Dataset, InteractionRecord, ItemMetadata
from .llmclient import ChatRequest, ChatSession, LLMError
from .persona import PersonalityProfile, json_objects, random_profile
from .profile import N_TIERS, price_quintiles, price_tier

LIST_SIZE = 10
N_NEGATIVES = LIST_SIZE - 1
POLICY_KINDS = (
    "personality-deterministic",
    "personality-llm",
    "random",
    "markov",
    "ablation-random-personality",
    "oracle",
)
DEFAULT_WEIGHTS = (1.0, 0.5, 0.5, 0.25, 0.25)


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    params: dict = field(default_factory=dict, hash=False, compare=False)
    harness: bool = False

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "oracle" and not self.harness:
            raise ValueError("the oracle policy is only available in test-harness mode")


@dataclass(frozen=True)
class RecommendationList:
    step: int
    items: tuple[str, ...]
    positive_item: str

    def validate(self, interacted: set[str]) -> list[str]:
        problems = []
        if len(self.items) != LIST_SIZE:
            problems.append(f"list has {len(self.items)} items")
        if len(set(self.items)) != len(self.items):
            problems.append("duplicate items")
        if self.positive_item not in self.items:
            problems.append("positive missing")
        leaked = [i for i in self.items if i != self.positive_item and i in interacted]
        if leaked:
            problems.append(f"negatives the user interacted with: {leaked}")
        return problems


@dataclass(frozen=True)
class Selection:
    step: int
    item_id: str
    was_positive: bool
    timestamp: int


@dataclass
class SyntheticSequence:
    user_id: str
    policy: str
    seed: int
    selections: list[Selection] = field(default_factory=list)
    lists: list[RecommendationList] = field(default_factory=list, repr=False)

    @property
    def items(self) -> list[str]:
        return [s.item_id for s in self.selections]

    def to_rows(self) -> list[dict]:
        return [
            {"user_id": self.user_id, "policy": self.policy, "step": s.step, "item_id": s.item_id,
             "was_positive": s.was_positive, "timestamp": s.timestamp}
            for s in self.selections
        ]


def user_stream(seed: int, user_id: str, purpose: str) -> random.Random:
    """Independent RNG stream for (seed, user, purpose); stable across runs
    and independent of processing order."""
    digest = hashlib.sha256(f"{seed}:{user_id}:{purpose}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass
class Catalogue:
    """Read-only item universe shared by all users."""

    items: list[str]
    metadata: dict[str, ItemMetadata]
    popularity: dict[str, float]
    price_edges: object = None

    @classmethod
    def from_datasets(cls, full: Dataset, train: Dataset) -> "Catalogue":
        counts = Counter(r.item_id for r in train.interactions)
        top = max(counts.values(), default=1)
        items = full.items
        return cls(
            items=items,
            metadata=full.metadata,
            popularity={i: counts.get(i, 0) / top for i in items},
            price_edges=price_quintiles({i: full.metadata[i] for i in items if i in full.metadata}),
        )

    def tier(self, item_id: str) -> int | None:
        m = self.metadata.get(item_id)
        if m is None or m.price is None or self.price_edges is None:
            return None
        return price_tier(m.price, self.price_edges)

    def category(self, item_id: str) -> str:
        m = self.metadata.get(item_id)
        return m.category if m is not None else ""


class UserHistory:
    """Mutable per-user view: real training history plus synthetic picks."""

    def __init__(self, catalogue: Catalogue, records: list[InteractionRecord] = ()):
        self.catalogue = catalogue
        self.categories: Counter = Counter()
        self.tiers: Counter = Counter()
        self.transitions: dict[str, Counter] = defaultdict(Counter)
        self.last_category: str | None = None
        self.n = 0
        for r in records:
            self.add(r.item_id, r.category or catalogue.category(r.item_id))

    def add(self, item_id: str, category: str | None = None) -> None:
        category = category if category is not None else self.catalogue.category(item_id)
        if self.last_category is not None:
            self.transitions[self.last_category][category] += 1
        self.categories[category] += 1
        tier = self.catalogue.tier(item_id)
        if tier is not None:
            self.tiers[tier] += 1
        self.last_category = category
        self.n += 1

    def affinity(self, category: str) -> float:
        return self.categories[category] / self.n if self.n else 0.0

    @property
    def modal_tier(self) -> int | None:
        if not self.tiers:
            return None
        # lowest tier wins ties
        return min(self.tiers, key=lambda t: (-self.tiers[t], t))


def build_mock_list(
    user_id: str,
    step: int,
    positives: list[str],
    interacted: set[str],
    catalogue: list[str],
    rng: random.Random,
) -> RecommendationList:
    """One positive (the step-th test item) plus nine unseen negatives, shuffled."""
    if not 0 <= step < len(positives):
        raise SimulationError(f"step {step} out of range for {user_id}")
    positive = positives[step]
    pool = [i for i in catalogue if i not in interacted and i != positive]
    if len(pool) < N_NEGATIVES:
        raise SimulationError(
            f"catalogue too small for user {user_id}: {len(pool)} candidate negatives, need {N_NEGATIVES}"
        )
    items = [positive] + rng.sample(pool, N_NEGATIVES)
    rng.shuffle(items)
    return RecommendationList(step, tuple(items), positive)


def deterministic_item_score(
    p: PersonalityProfile,
    item: ItemMetadata | None,
    history: UserHistory,
    popularity: float = 0.0,
    tier: int | None = None,
    weights=DEFAULT_WEIGHTS,
) -> float:
    """Personality-weighted relevance of one item for one user.

    affinity + O * novelty + C * price-tier match + E * popularity
    - N * price-tier deviation, each term weighted; terms whose metadata is
    missing contribute nothing.
    """
    w1, w2, w3, w4, w5 = weights
    score = w4 * popularity * p.extraversion
    if item is not None and item.category:
        affinity = history.affinity(item.category)
        score += w1 * affinity + w2 * p.openness * (1.0 - affinity)
    modal = history.modal_tier
    if tier is not None and modal is not None:
        gap = abs(tier - modal) / (N_TIERS - 1)
        score += w3 * p.conscientiousness * (1.0 - gap) - w5 * p.neuroticism * gap
    return score


def _argmax_lexicographic(scores: dict[str, float]) -> str:
    return min(scores, key=lambda i: (-scores[i], i))


SELECT_PROMPT = (
    "You are role-playing a shopper with the Big Five personality below. Pick the single item you "
    'would most likely buy next. Reply with strict JSON only: {"item_id": "<id>"}.'
)


def _llm_select(session: ChatSession, p: PersonalityProfile, lst: RecommendationList, catalogue: Catalogue,
                retries: int = 2) -> str:
    lines = ["Personality: " + ", ".join(f"{t}={v:.2f}" for t, v in p.scores().items()), "Candidates:"]
    for i in lst.items:
        m = catalogue.metadata.get(i)
        desc = f"{m.title} | {m.category} | price {m.price}" if m else "(no metadata)"
        lines.append(f"- {i}: {desc}")
    body = "\n".join(lines)
    raw = ""
    for attempt in range(retries + 1):
        text = body if attempt == 0 else body + f"\n(Reply attempt {attempt + 1}: JSON only.)"
        raw = session.chat(ChatRequest(session.model, (("system", SELECT_PROMPT), ("user", text))))
        for obj in json_objects(raw):
            if str(obj.get("item_id")) in lst.items:
                return str(obj["item_id"])
    raise LLMError(f"no valid item selection for {p.user_id} at step {lst.step}: {raw[:200]!r}")


def agent_select(
    policy: PolicySpec,
    personality: PersonalityProfile | None,
    lst: RecommendationList,
    catalogue: Catalogue,
    history: UserHistory,
    rng: random.Random,
    session: ChatSession | None = None,
) -> str:
    kind = policy.kind
    if kind == "oracle":
        return lst.positive_item
    if kind == "random":
        return rng.choice(lst.items)
    if kind == "markov":
        row = history.transitions.get(history.last_category) if history.last_category is not None else None
        if not row:
            return rng.choice(lst.items)
        total = sum(row.values())
        probs = {i: row[catalogue.category(i)] / total for i in lst.items}
        best = max(probs.values())
        return rng.choice(sorted(i for i, v in probs.items() if v == best))
    if kind == "personality-llm":
        if session is None:
            raise SimulationError("personality-llm policy needs a chat session")
        return _llm_select(session, personality, lst, catalogue)
    # personality-deterministic and the random-personality ablation
    weights = tuple(policy.params.get("weights", DEFAULT_WEIGHTS))
    scores = {
        i: deterministic_item_score(personality, catalogue.metadata.get(i), history,
                                    catalogue.popularity.get(i, 0.0), catalogue.tier(i), weights)
        for i in lst.items
    }
    return _argmax_lexicographic(scores)


def simulate_user(
    user_id: str,
    policy: PolicySpec,
    truth: list[InteractionRecord],
    interacted: set[str],
    catalogue: Catalogue,
    seed: int,
    personality: PersonalityProfile | None = None,
    train_history: list[InteractionRecord] = (),
    session: ChatSession | None = None,
) -> SyntheticSequence:
    """Run one user through ``len(truth)`` simulation steps."""
    if not truth:
        raise SimulationError(f"user {user_id} has no ground-truth test items")
    if policy.kind == "ablation-random-personality":
        personality = random_profile(user_id, seed)
    elif policy.kind.startswith("personality") and personality is None:
        raise SimulationError(f"policy {policy.kind} needs a personality profile for {user_id}")
    list_rng = user_stream(seed, user_id, "lists")
    policy_rng = user_stream(seed, user_id, f"policy:{policy.kind}")
    history = UserHistory(catalogue, train_history)
    positives = [r.item_id for r in truth]
    seq = SyntheticSequence(user_id, policy.kind, seed)
    for step, real in enumerate(truth):
        lst = build_mock_list(user_id, step, positives, interacted, catalogue.items, list_rng)
        chosen = agent_select(policy, personality, lst, catalogue, history, policy_rng, session)
        seq.lists.append(lst)
        seq.selections.append(Selection(step, chosen, chosen == lst.positive_item, real.timestamp))
        history.add(chosen)
    return seq

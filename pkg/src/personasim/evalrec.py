"""Fidelity and downstream evaluation of synthetic logs."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .ingest import Dataset, InteractionRecord
from .metrics import frequency_deciles, jaccard, ndcg_at_k
from .persona import TRAITS, PersonalityProfile
from .recommenders import recommend, train
from .simulate import SyntheticSequence

PERCENTILES = (0, 10, 25, 50, 75, 90, 100)
N_BINS = 10


@dataclass
class PolicyFidelity:
    policy: str
    per_user: dict[str, float]
    mean: float
    percentiles: dict[int, float]
    by_decile: dict[int, float]
    decile_trend: float | None


def fidelity_report(
    synthetic: dict[str, SyntheticSequence],
    test: Dataset,
    interaction_counts: dict[str, int],
) -> PolicyFidelity:
    """Per-user Jaccard between synthetic picks and real test items, with a
    per-activity-decile breakdown."""
    per_user = {}
    for u in sorted(synthetic):
        truth = {r.item_id for r in test.by_user.get(u, ())}
        per_user[u] = jaccard(set(synthetic[u].items), truth)
    values = np.array([per_user[u] for u in per_user])
    by_decile: dict[int, float] = {}
    trend = None
    counts = {u: interaction_counts[u] for u in per_user}
    if len(counts) >= 10:
        deciles = frequency_deciles(counts)
        groups = defaultdict(list)
        for u, dec in deciles.items():
            groups[dec].append(per_user[u])
        by_decile = {dec: float(np.mean(groups[dec])) for dec in sorted(groups)}
        trend = spearman(list(by_decile), list(by_decile.values()))
    policy = next(iter(synthetic.values())).policy if synthetic else ""
    return PolicyFidelity(
        policy=policy,
        per_user=per_user,
        mean=float(values.mean()) if values.size else 0.0,
        percentiles={p: float(np.percentile(values, p)) for p in PERCENTILES} if values.size else {},
        by_decile=by_decile,
        decile_trend=trend,
    )


def spearman(a, b) -> float | None:
    """Spearman rank correlation; None when undefined (n < 2 or constant)."""
    if len(a) < 2 or len(set(a)) < 2 or len(set(b)) < 2:
        return None
    rho = spearmanr(a, b).statistic
    return None if not math.isfinite(rho) else float(rho)


def evaluate_model(model, train_log: Dataset, test_log: Dataset, k: int) -> dict[str, float]:
    """Per-user nDCG@k ranking the catalogue minus each user's training items.

    Users whose test items all occur in their training history are skipped.
    """
    out = {}
    for u, recs in test_log.by_user.items():
        seen = train_log.user_items(u)
        relevant = {r.item_id for r in recs} - seen
        if not relevant:
            continue
        ranked = recommend(model, u, exclude=seen, k=k).items
        out[u] = ndcg_at_k(ranked, relevant, k)
    return out


def synthetic_log(
    train: Dataset,
    test: Dataset,
    synthetic: dict[str, SyntheticSequence],
) -> tuple[Dataset, Dataset, list[str]]:
    """Continue each user's real training history with their synthetic picks
    and split off a test set sized like the real one.

    Picks inherit the timestamp and rating of the real positive at the same
    step.  Returns (synthetic train, synthetic test, users with a shortfall).
    """
    missing = sorted(set(test.by_user) - set(synthetic))
    if missing:
        raise ValueError(f"synthetic logs missing users: {missing}")
    tr, te, short = [], [], []
    for u, real_test in test.by_user.items():
        seq = synthetic[u]
        picks = []
        for sel, real in zip(seq.selections, real_test):
            m = train.metadata.get(sel.item_id)
            picks.append(InteractionRecord(u, sel.item_id, sel.timestamp, real.rating,
                                           m.category if m else "", None, None))
        full = list(train.by_user.get(u, [])) + picks
        n_test = len(real_test)
        if len(picks) < n_test:
            short.append(u)
            n_test = len(picks)
        tr.extend(full[: len(full) - n_test])
        te.extend(full[len(full) - n_test:])
    return Dataset(tr, train.metadata), Dataset(te, train.metadata), short


@dataclass
class ComparisonReport:
    k: int
    rows: dict[str, dict[str, float]]
    order_real: list[str]
    order_synthetic: list[str]
    spearman: float | None
    per_user_real: dict[str, dict[str, float]] = field(default_factory=dict)
    per_user_synthetic: dict[str, dict[str, float]] = field(default_factory=dict)
    shortfall_users: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        """JSON form; ``spearman`` is omitted when undefined (fewer than two
        algorithms or a constant column)."""
        obj = {
            "k": self.k,
            "algorithms": {a: dict(r) for a, r in self.rows.items()},
            "order_real": self.order_real,
            "order_synthetic": self.order_synthetic,
            "shortfall_users": self.shortfall_users,
        }
        if self.spearman is not None:
            obj["spearman"] = self.spearman
        return obj


def _ordering(col: dict[str, float]) -> list[str]:
    return sorted(col, key=lambda a: (-col[a], a))


def compare_real_synthetic(
    train_log: Dataset,
    test_log: Dataset,
    synthetic: dict[str, SyntheticSequence],
    algorithms=("pop", "mf", "bpr", "markov-seq"),
    k: int = 20,
    hyperparams: dict | None = None,
    seed: int = 0,
    catalogue=None,
) -> ComparisonReport:
    """Train every algorithm on the real and the synthetic split and compare
    mean nDCG@k and the induced algorithm orderings."""
    syn_train, syn_test, short = synthetic_log(train_log, test_log, synthetic)
    items = catalogue if catalogue is not None else sorted(set(train_log.items) | set(test_log.items))
    rows, per_real, per_syn = {}, {}, {}
    for algo in algorithms:
        hp = (hyperparams or {}).get(algo, {})
        real_model = train(algo, train_log, hp, seed, items=items)
        per_real[algo] = evaluate_model(real_model, train_log, test_log, k)
        syn_model = train(algo, syn_train, hp, seed, items=items)
        per_syn[algo] = evaluate_model(syn_model, syn_train, syn_test, k)
        rows[algo] = {
            "ndcg_real": float(np.mean(list(per_real[algo].values()))) if per_real[algo] else 0.0,
            "ndcg_synthetic": float(np.mean(list(per_syn[algo].values()))) if per_syn[algo] else 0.0,
        }
    real_col = {a: r["ndcg_real"] for a, r in rows.items()}
    syn_col = {a: r["ndcg_synthetic"] for a, r in rows.items()}
    algos = list(rows)
    rho = spearman([real_col[a] for a in algos], [syn_col[a] for a in algos])
    return ComparisonReport(k, rows, _ordering(real_col), _ordering(syn_col), rho, per_real, per_syn, short)


def trait_distribution(profiles: list[PersonalityProfile]) -> dict[str, dict]:
    if not profiles:
        raise ValueError("need at least one profile")
    edges = np.linspace(0.0, 1.0, N_BINS + 1)
    out = {}
    for t in TRAITS:
        values = np.array([getattr(p, t) for p in profiles])
        counts, _ = np.histogram(values, bins=edges)
        out[t] = {"mean": float(values.mean()), "counts": [int(c) for c in counts]}
    return out


def susceptibility(per_user_ndcg: dict[str, float], profiles: dict[str, PersonalityProfile]) -> dict:
    """Trait means of the top and bottom nDCG deciles and their difference."""
    users = sorted(u for u in per_user_ndcg if u in profiles)
    n = len(users)
    if n < 20:
        raise ValueError(f"susceptibility analysis needs at least 20 users, got {n}")
    size = math.ceil(0.1 * n)
    top = sorted(users, key=lambda u: (-per_user_ndcg[u], u))[:size]
    bottom = sorted(users, key=lambda u: (per_user_ndcg[u], u))[:size]
    table = {}
    for t in TRAITS:
        hi = float(np.mean([getattr(profiles[u], t) for u in top]))
        lo = float(np.mean([getattr(profiles[u], t) for u in bottom]))
        table[t] = {"top_mean": hi, "bottom_mean": lo, "difference": hi - lo}
    return {"cohort_size": size, "top_users": top, "bottom_users": bottom, "traits": table}

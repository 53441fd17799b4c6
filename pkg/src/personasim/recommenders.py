"""Small recommenders used to compare real and synthetic logs: popularity,
biased MF (squared error, SGD), BPR (pairwise logistic, SGD) and a
first-order category Markov model."""
from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .ingest import Dataset

_logger = logging.getLogger(__name__)

KINDS = ("pop", "mf", "bpr", "markov-seq")
DEFAULTS = {"dims": 32, "lr": 0.01, "reg": 0.02, "epochs": 30, "init_scale": 0.1}


class TrainingDiverged(RuntimeError):
    def __init__(self, kind: str, epoch: int):
        super().__init__(f"{kind} training diverged at epoch {epoch} (non-finite objective)")
        self.epoch = epoch


@dataclass
class RecModel:
    kind: str
    items: list[str]
    users: list[str]
    popularity: np.ndarray
    params: dict = field(default_factory=dict)
    log: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.item_index = {i: n for n, i in enumerate(self.items)}
        self.user_index = {u: n for n, u in enumerate(self.users)}

    def scores(self, user_id: str) -> np.ndarray | None:
        """Score every catalogue item for ``user_id``; None for an unknown user."""
        if self.kind == "pop":
            return self.popularity.astype(float)
        u = self.user_index.get(user_id)
        if u is None:
            return None
        if self.kind == "mf":
            p = self.params
            return p["mu"] + p["bu"][u] + p["bi"] + p["Q"] @ p["P"][u]
        if self.kind == "bpr":
            p = self.params
            return p["bi"] + p["Q"] @ p["P"][u]
        if self.kind == "markov-seq":
            p = self.params
            return p["T"][p["last"][u], p["item_cat"]] * p["within"]
        raise ValueError(self.kind)


@dataclass
class Ranking:
    items: list[str]
    cold_start: bool = False


def _rating_triples(d: Dataset, model_users, model_items):
    uidx = {u: n for n, u in enumerate(model_users)}
    iidx = {i: n for n, i in enumerate(model_items)}
    return np.array([(uidx[r.user_id], iidx[r.item_id], r.rating) for r in d.interactions], dtype=float)


def _check(kind, epoch, value):
    if not math.isfinite(value):
        raise TrainingDiverged(kind, epoch)


def _train_mf(d, users, items, hp, rng):
    data = _rating_triples(d, users, items)
    uu, ii, rr = data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2]
    dims, lr, reg = hp["dims"], hp["lr"], hp["reg"]
    P = rng.normal(0.0, hp["init_scale"], (len(users), dims))
    Q = rng.normal(0.0, hp["init_scale"], (len(items), dims))
    bu, bi = np.zeros(len(users)), np.zeros(len(items))
    mu = float(rr.mean())

    # overflow shows up as a non-finite objective and is reported by _check
    @np.errstate(over="ignore", invalid="ignore")
    def objective():
        err = rr - (mu + bu[uu] + bi[ii] + np.einsum("nd,nd->n", P[uu], Q[ii]))
        penalty = reg * ((P**2).sum() + (Q**2).sum() + (bu**2).sum() + (bi**2).sum())
        return float((err**2).sum() + penalty) / len(rr)

    log = [objective()]
    for epoch in range(1, hp["epochs"] + 1):
        for n in rng.permutation(len(rr)):
            u, i = uu[n], ii[n]
            e = rr[n] - (mu + bu[u] + bi[i] + P[u] @ Q[i])
            bu[u] += lr * (e - reg * bu[u])
            bi[i] += lr * (e - reg * bi[i])
            pu = P[u].copy()
            P[u] += lr * (e * Q[i] - reg * P[u])
            Q[i] += lr * (e * pu - reg * Q[i])
        log.append(objective())
        _check("mf", epoch, log[-1])
    return {"mu": mu, "bu": bu, "bi": bi, "P": P, "Q": Q}, log


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _train_bpr(d, users, items, hp, rng):
    uidx = {u: n for n, u in enumerate(users)}
    iidx = {i: n for n, i in enumerate(items)}
    positives = defaultdict(set)
    for r in d.interactions:
        positives[uidx[r.user_id]].add(iidx[r.item_id])
    pairs = np.array(sorted((u, i) for u, s in positives.items() for i in s))
    n_items = len(items)
    dims, lr, reg = hp["dims"], hp["lr"], hp["reg"]
    P = rng.normal(0.0, hp["init_scale"], (len(users), dims))
    Q = rng.normal(0.0, hp["init_scale"], (n_items, dims))
    bi = np.zeros(n_items)

    def negative(u, gen):
        while True:
            j = int(gen.integers(n_items))
            if j not in positives[u]:
                return j

    # fixed evaluation triples keep the per-epoch objective comparable
    eval_gen = np.random.default_rng(hp.get("eval_seed", 0))
    take = eval_gen.choice(len(pairs), size=min(len(pairs), 2000), replace=False)
    ev = np.array([(pairs[t][0], pairs[t][1], negative(pairs[t][0], eval_gen)) for t in sorted(take)])

    @np.errstate(over="ignore", invalid="ignore")
    def objective():
        u, i, j = ev[:, 0], ev[:, 1], ev[:, 2]
        x = bi[i] - bi[j] + np.einsum("nd,nd->n", P[u], Q[i] - Q[j])
        penalty = reg * ((P**2).sum() + (Q**2).sum() + (bi**2).sum()) / len(pairs)
        return float(-_log_sigmoid(x).mean() + penalty)

    log = [objective()]
    for epoch in range(1, hp["epochs"] + 1):
        for t in rng.integers(len(pairs), size=len(pairs)):
            u, i = pairs[t]
            j = negative(u, rng)
            x = bi[i] - bi[j] + P[u] @ (Q[i] - Q[j])
            g = 1.0 / (1.0 + math.exp(x)) if x > -700 else 1.0
            pu = P[u].copy()
            P[u] += lr * (g * (Q[i] - Q[j]) - reg * P[u])
            Q[i] += lr * (g * pu - reg * Q[i])
            Q[j] += lr * (-g * pu - reg * Q[j])
            bi[i] += lr * (g - reg * bi[i])
            bi[j] += lr * (-g - reg * bi[j])
        log.append(objective())
        _check("bpr", epoch, log[-1])
    return {"P": P, "Q": Q, "bi": bi}, log


def _train_markov(d, users, items, counts):
    cats = sorted({r.category for r in d.interactions} | {d.metadata[i].category for i in items if i in d.metadata})
    cidx = {c: n for n, c in enumerate(cats)}
    item_cat = {}
    for r in d.interactions:
        item_cat.setdefault(r.item_id, r.category)
    item_cat_idx = np.array([cidx[item_cat.get(i) or (d.metadata[i].category if i in d.metadata else cats[0])]
                             for i in items])
    T = np.ones((len(cats), len(cats)))
    last = np.zeros(len(users), dtype=int)
    uidx = {u: n for n, u in enumerate(users)}
    n_trans = 0
    for u, recs in d.by_user.items():
        for a, b in zip(recs, recs[1:]):
            T[cidx[a.category], cidx[b.category]] += 1
            n_trans += 1
        last[uidx[u]] = cidx[recs[-1].category]
    T /= T.sum(axis=1, keepdims=True)
    cat_total = np.zeros(len(cats))
    cat_size = np.zeros(len(cats))
    np.add.at(cat_total, item_cat_idx, counts)
    np.add.at(cat_size, item_cat_idx, 1)
    within = (counts + 1.0) / (cat_total[item_cat_idx] + cat_size[item_cat_idx])
    nll = 0.0
    for u, recs in d.by_user.items():
        for a, b in zip(recs, recs[1:]):
            nll -= math.log(T[cidx[a.category], cidx[b.category]])
    log = [nll / max(n_trans, 1)]
    return {"T": T, "last": last, "item_cat": item_cat_idx, "within": within, "categories": cats}, log


def train(kind: str, log: Dataset, hyperparams: dict | None = None, seed: int = 0, items=None) -> RecModel:
    """Fit a recommender of ``kind`` on ``log``.

    ``items`` fixes the candidate catalogue (defaults to the items in the log).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown recommender {kind!r}")
    if len(log) == 0:
        raise ValueError("cannot train on an empty log")
    hp = {**DEFAULTS, **(hyperparams or {})}
    items = sorted(set(items) if items is not None else set(log.items))
    users = log.users
    counts = Counter(r.item_id for r in log.interactions)
    pop = np.array([counts.get(i, 0) for i in items], dtype=float)
    rng = np.random.default_rng(seed)
    if kind == "pop":
        params, trace = {}, [float(pop.sum())]
    elif kind == "mf":
        params, trace = _train_mf(log, users, items, hp, rng)
    elif kind == "bpr":
        params, trace = _train_bpr(log, users, items, hp, rng)
    else:
        params, trace = _train_markov(log, users, items, pop)
    _logger.debug("%s trained: objective %s -> %s", kind, trace[0], trace[-1])
    return RecModel(kind, items, users, pop, params, trace)


def recommend(m: RecModel, user_id: str, exclude=(), k: int = 20) -> Ranking:
    """Top-k items by model score, skipping ``exclude``; ties by item_id.

    Unknown users get the popularity ranking with ``cold_start`` set.
    """
    scores = m.scores(user_id)
    cold = scores is None
    if cold:
        scores = m.popularity.astype(float)
    # items are sorted, so a stable sort on -score breaks ties by item_id
    order = np.argsort(-scores, kind="stable")
    exclude = set(exclude)
    out = []
    for n in order:
        item = m.items[n]
        if item in exclude:
            continue
        out.append(item)
        if len(out) == k:
            break
    return Ranking(out, cold)

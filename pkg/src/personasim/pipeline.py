"""Pipeline stages over a run directory.

Each stage reads the artifacts of the previous one from ``cfg.out``, writes
its own atomically and returns a one-line summary.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import ingest as ing
from .config import RunConfig
from .context import build_context, normalize_stats
from .evalrec import (compare_real_synthetic, evaluate_model, fidelity_report, susceptibility,
                      trait_distribution)
from .recommenders import train as train_model
from .ingest import Dataset
from .llmclient import Cassette, ChatSession
from .persona import PersonalityProfile, infer_deterministic, infer_llm
from .profile import (BehavioralSignature, build_signature, category_means, price_quintiles,
                      temporal_stratified_sample)
from .simulate import Catalogue, PolicySpec, Selection, SyntheticSequence, simulate_user

logger = logging.getLogger(__name__)

REPORT_SCHEMA = 1


class MissingArtifact(FileNotFoundError):
    pass


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def write_jsonl(path: Path, rows) -> None:
    atomic_write(path, "".join(dumps(r) + "\n" for r in rows))


def read_jsonl(path: Path) -> list[dict]:
    require(path)
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifact(str(path))
    return path


def pmap(fn, items, jobs: int = 1) -> list:
    """Map preserving input order; ``jobs`` caps worker threads."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write(path, buf.getvalue())


# ---------------------------------------------------------------- loading

def load_split(out: Path) -> tuple[Dataset, Dataset, Dataset]:
    with open(require(out / "interactions.jsonl"), encoding="utf-8") as fh:
        records = ing.parse_interactions(fh)
    with open(require(out / "metadata.jsonl"), encoding="utf-8") as fh:
        meta = ing.parse_metadata(fh)
    manifest = json.loads(require(out / "split_manifest.json").read_text(encoding="utf-8"))
    full = Dataset(records, meta)
    train, test = ing.apply_manifest(full, manifest)
    return full, train, test


def load_signatures(out: Path) -> dict[str, BehavioralSignature]:
    return {o["user_id"]: BehavioralSignature.from_json(o) for o in read_jsonl(out / "signatures.jsonl")}


def load_personalities(out: Path) -> dict[str, PersonalityProfile]:
    return {o["user_id"]: PersonalityProfile.from_json(o) for o in read_jsonl(out / "personalities.jsonl")}


def load_synthetic(out: Path, policy: str) -> dict[str, SyntheticSequence]:
    seqs: dict[str, SyntheticSequence] = {}
    for row in read_jsonl(out / f"synthetic_{policy}.jsonl"):
        seq = seqs.setdefault(row["user_id"], SyntheticSequence(row["user_id"], row["policy"], row.get("seed", 0)))
        seq.selections.append(Selection(row["step"], row["item_id"], row["was_positive"], row["timestamp"]))
    return seqs


# ---------------------------------------------------------------- stages

def run_ingest(cfg: RunConfig) -> str:
    out = Path(cfg.out)
    dataset, report = ing.load_dataset(cfg.review_files(), cfg.metadata_files())
    raw_n = len(dataset)
    core = ing.filter_k_core(dataset, cfg.min_interactions)
    if len(core) == 0:
        raise RuntimeError(f"no interactions survive {cfg.min_interactions}-core filtering")
    train, test = ing.chronological_split(core, cfg.test_fraction)
    items = set(core.items)
    meta = {i: m for i, m in dataset.metadata.items() if i in items}
    ordered = [r for recs in core.by_user.values() for r in recs]
    atomic_write(out / "interactions.jsonl", ing.serialize_interactions(ordered))
    atomic_write(out / "metadata.jsonl", ing.serialize_metadata(meta))
    atomic_write(out / "split_manifest.json", json.dumps(ing.split_manifest(train, test), indent=1, sort_keys=True))
    return (f"ingest: {raw_n} parsed ({report.skipped} skipped) -> {len(core)} interactions, "
            f"{len(core.users)} users, {len(items)} items after {cfg.min_interactions}-core; "
            f"{len(train)} train / {len(test)} test")


def run_profile(cfg: RunConfig) -> str:
    out = Path(cfg.out)
    full, train, _ = load_split(out)
    means = category_means(train)
    edges = price_quintiles(full.metadata)

    def one(user):
        recs = train.by_user[user]
        sig = build_signature(recs, full.metadata, means, cycles=cfg.cycles, price_edges=edges)
        return sig, temporal_stratified_sample(recs, cfg.eta)

    results = pmap(one, train.users, cfg.jobs)
    write_jsonl(out / "signatures.jsonl", [s.to_json() for s, _ in results])
    write_jsonl(out / "sampled.jsonl", [h.to_json() for _, h in results])
    kept = sum(len(h.records) for _, h in results)
    return f"profile: {len(results)} signatures; sampled {kept} of {len(train)} training interactions"


def _sampled_histories(out: Path, train: Dataset):
    from .profile import SampledHistory

    hists = {}
    for o in read_jsonl(out / "sampled.jsonl"):
        bins = [(b["start"], b["end"], [ing._record_from_obj(r) for r in b["records"]]) for b in o["bins"]]
        hists[o["user_id"]] = SampledHistory(o["user_id"], o["window_kind"], o["anchor"], bins)
    return hists


def make_session(cfg: RunConfig) -> ChatSession:
    cassette = Cassette(Path(cfg.cassette), cfg.cassette_mode)
    return ChatSession(cfg.llm_base_url, cfg.llm_model, cassette, timeout=cfg.llm_timeout,
                       max_in_flight=cfg.llm_max_in_flight)


def run_infer(cfg: RunConfig) -> str:
    out = Path(cfg.out)
    full, train, _ = load_split(out)
    sigs = load_signatures(out)
    hists = _sampled_histories(out, train)
    population = [sigs[u] for u in sorted(sigs)]
    users = sorted(sigs)

    def context(user):
        return build_context(user, hists[user], full.metadata, normalize_stats(sigs[user], population),
                             cfg.token_budget)

    contexts = pmap(context, users, cfg.jobs)
    write_jsonl(out / "contexts.jsonl", [c.to_json() for c in contexts])
    if cfg.backend == "llm":
        session = make_session(cfg)
        try:
            profiles = pmap(lambda c: infer_llm(c, session), contexts, cfg.jobs)
        finally:
            session.close()
    else:
        profiles = pmap(lambda u: infer_deterministic(sigs[u], None, population, cfg.trait_weights), users, cfg.jobs)
    write_jsonl(out / "personalities.jsonl", [p.to_json() for p in profiles])
    return f"infer: {len(profiles)} {cfg.backend} personality profiles"


def run_simulate(cfg: RunConfig) -> str:
    out = Path(cfg.out)
    profiles = load_personalities(out)
    full, train, test = load_split(out)
    catalogue = Catalogue.from_datasets(full, train)
    session = make_session(cfg) if "personality-llm" in cfg.policies else None
    lines = []
    try:
        for kind in cfg.policies:
            policy = PolicySpec(kind)

            def one(user):
                return simulate_user(user, policy, test.by_user[user], full.user_items(user), catalogue, cfg.seed,
                                     profiles.get(user), train.by_user.get(user, []), session)

            seqs = pmap(one, test.users, cfg.jobs)
            write_jsonl(out / f"synthetic_{kind}.jsonl",
                        [dict(row, seed=cfg.seed) for s in seqs for row in s.to_rows()])
            hits = sum(sel.was_positive for s in seqs for sel in s.selections)
            steps = sum(len(s.selections) for s in seqs)
            lines.append(f"{kind} {hits}/{steps}")
    finally:
        if session is not None:
            session.close()
    return "simulate: hits " + ", ".join(lines)


def comparison_policy(policies) -> str:
    for p in policies:
        if p.startswith("personality"):
            return p
    return policies[0]


def build_report(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    full, train, test = load_split(out)
    profiles = load_personalities(out)
    counts = {u: len(recs) for u, recs in full.by_user.items()}
    fidelity = {}
    synthetic = {}
    for kind in cfg.policies:
        synthetic[kind] = load_synthetic(out, kind)
        fidelity[kind] = fidelity_report(synthetic[kind], test, counts)
    main = comparison_policy(cfg.policies)
    comparison = compare_real_synthetic(train, test, synthetic[main], cfg.algorithms, cfg.k, cfg.hyperparams,
                                        cfg.seed, catalogue=full.items)
    algo = cfg.susceptibility_algorithm
    if algo in comparison.per_user_real:
        per_user = comparison.per_user_real[algo]
    else:
        model = train_model(algo, train, cfg.hyperparams.get(algo, {}), cfg.seed, items=full.items)
        per_user = evaluate_model(model, train, test, cfg.k)
    try:
        sus = susceptibility(per_user, profiles)
    except ValueError as exc:
        sus = {"error": str(exc)}
    sus["algorithm"] = cfg.susceptibility_algorithm
    return {
        "schema_version": REPORT_SCHEMA,
        "config": {"seed": cfg.seed, "k": cfg.k, "policies": cfg.policies, "algorithms": cfg.algorithms,
                   "backend": cfg.backend, "min_interactions": cfg.min_interactions,
                   "test_fraction": cfg.test_fraction, "eta": cfg.eta, "cycles": cfg.cycles},
        "dataset": {"users": len(full.users), "items": len(full.items), "interactions": len(full),
                    "train": len(train), "test": len(test)},
        "fidelity": {
            k: {"mean_jaccard": f.mean, "percentiles": {str(p): v for p, v in f.percentiles.items()},
                "by_decile": {str(d): v for d, v in f.by_decile.items()}, "decile_trend_spearman": f.decile_trend,
                "per_user": f.per_user}
            for k, f in fidelity.items()
        },
        "comparison": {"policy": main, **comparison.to_json()},
        "traits": trait_distribution([profiles[u] for u in sorted(profiles)]),
        "susceptibility": sus,
    }


def run_evaluate(cfg: RunConfig) -> str:
    out = Path(cfg.out)
    report = build_report(cfg)
    atomic_write(out / "report.json", json.dumps(report, indent=1, sort_keys=True) + "\n")
    fid = report["fidelity"]
    write_csv(out / "jaccard_by_user.csv", ["policy", "user_id", "jaccard"],
              [(p, u, v) for p in fid for u, v in fid[p]["per_user"].items()])
    write_csv(out / "jaccard_by_decile.csv", ["policy", "decile", "mean_jaccard"],
              [(p, d, v) for p in fid for d, v in fid[p]["by_decile"].items()])
    comp = report["comparison"]
    write_csv(out / "algo_comparison.csv", ["algorithm", "ndcg_real", "ndcg_synthetic"],
              [(a, r["ndcg_real"], r["ndcg_synthetic"]) for a, r in comp["algorithms"].items()])
    write_csv(out / "trait_distribution.csv", ["trait", "mean"] + [f"bin_{b}" for b in range(10)],
              [(t, d["mean"], *d["counts"]) for t, d in report["traits"].items()])
    sus = report["susceptibility"]
    write_csv(out / "susceptibility.csv", ["trait", "top_mean", "bottom_mean", "difference"],
              [(t, d["top_mean"], d["bottom_mean"], d["difference"]) for t, d in sus.get("traits", {}).items()])
    means = ", ".join(f"{p}={fid[p]['mean_jaccard']:.3f}" for p in fid)
    rho = f"{comp['spearman']:.3f}" if "spearman" in comp else "undefined"
    return f"evaluate: mean Jaccard {means}; Spearman(real, synthetic) = {rho}"


STAGES = {
    "ingest": run_ingest,
    "profile": run_profile,
    "infer": run_infer,
    "simulate": run_simulate,
    "evaluate": run_evaluate,
}


def run_all(cfg: RunConfig) -> list[str]:
    return [stage(cfg) for stage in STAGES.values()]

import json


from personasim.config import load_config
from personasim.llmclient import Cassette, ChatSession
from personasim.persona import infer_llm
from personasim.pipeline import STAGES, read_jsonl, run_all
from personasim.context import PromptContext
from personasim.stubllm import serve

LLM = {"backend": "llm", "cassette_mode": "replay", "llm_base_url": "http://127.0.0.1:9",
       "policies": "personality-llm,random"}


def test_bundled_cassette_replays_llm_backend(toy_toml, tmp_path):
    outs = []
    for n, jobs in enumerate((1, 4)):
        out = tmp_path / f"r{n}"
        cfg = load_config(toy_toml, {**LLM, "out": str(out), "jobs": jobs}).validate()
        for name in ("ingest", "profile", "infer", "simulate"):
            STAGES[name](cfg)
        outs.append(out)
    for name in ("personalities.jsonl", "synthetic_personality-llm.jsonl"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    profiles = read_jsonl(outs[0] / "personalities.jsonl")
    assert len(profiles) == 52 and {p["backend"] for p in profiles} == {"llm"}


def test_replayed_profiles_equal_live_stub_answers(toy_toml, tmp_path):
    cfg = load_config(toy_toml, {**LLM, "out": str(tmp_path)}).validate()
    for name in ("ingest", "profile", "infer"):
        STAGES[name](cfg)
    contexts = [PromptContext(o["user_id"], [], "", o["token_budget"], o["text"])
                for o in read_jsonl(tmp_path / "contexts.jsonl")[:5]]
    replayed = {p["user_id"]: p for p in read_jsonl(tmp_path / "personalities.jsonl")}
    with serve() as server:
        session = ChatSession(server.base_url, cfg.llm_model, Cassette(mode="live"))
        for c in contexts:
            assert infer_llm(c, session).to_json() == replayed[c.user_id]


def test_report_layout(toy_run):
    cfg, out, lines = toy_run
    assert [line.split(":")[0] for line in lines] == list(STAGES)
    report = json.loads((out / "report.json").read_text())
    assert set(report) == {"schema_version", "config", "dataset", "fidelity", "comparison", "traits",
                           "susceptibility"}
    assert set(report["fidelity"]) == set(cfg.policies)
    assert report["dataset"] == {"users": 52, "items": 233, "interactions": 2093, "train": 1696, "test": 397}
    for name in ("jaccard_by_user.csv", "jaccard_by_decile.csv", "algo_comparison.csv",
                 "trait_distribution.csv", "susceptibility.csv"):
        assert (out / name).stat().st_size > 0


def test_rerun_is_byte_identical(toy_toml, toy_run, tmp_path):
    cfg = load_config(toy_toml, {"out": str(tmp_path)}).validate()
    run_all(cfg)
    assert (tmp_path / "report.json").read_bytes() == (toy_run[1] / "report.json").read_bytes()

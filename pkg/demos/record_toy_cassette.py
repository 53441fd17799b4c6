"""
Recording the bundled LLM cassette
==================================

The toy corpus ships a cassette so the ``llm`` persona backend and the
``personality-llm`` policy replay without network access.  It is recorded
against the local heuristic stub in :mod:`personasim.stubllm`, not a real model,
so its trait scores are percentile averages rather than model judgements.
Re-run this script after changing prompts or the toy corpus.
"""

import tempfile

from personasim.config import load_config
from personasim.pipeline import run_infer, run_ingest, run_profile, run_simulate
from personasim.stubllm import serve
from personasim.toydata import toy_corpus_dir

toy = toy_corpus_dir()
cassette = toy / "cassettes" / "persona.jsonl"
cassette.parent.mkdir(exist_ok=True)
cassette.unlink(missing_ok=True)

with tempfile.TemporaryDirectory() as out, serve() as stub:
    cfg = load_config(toy / "toy.toml", {
        "out": out, "backend": "llm", "cassette_mode": "record", "llm_base_url": stub.base_url,
        "policies": ["personality-llm"],
    }).validate()
    # ingest and profile are deterministic; infer and simulate hit the stub
    for stage in (run_ingest, run_profile, run_infer, run_simulate):
        print(stage(cfg))
    print(f"{len(stub.requests)} requests recorded to {cassette}")

# %%
# Replaying needs no endpoint: the same configuration in ``replay`` mode
# answers every request from the cassette.
with tempfile.TemporaryDirectory() as out:
    cfg = load_config(toy / "toy.toml", {"out": out, "backend": "llm", "policies": ["personality-llm"]}).validate()
    for stage in (run_ingest, run_profile, run_infer, run_simulate):
        print(stage(cfg))

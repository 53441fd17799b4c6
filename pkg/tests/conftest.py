import pytest

from personasim.config import load_config
from personasim.pipeline import run_all
from personasim.toydata import toy_corpus_dir

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def toy_toml():
    return toy_corpus_dir() / "toy.toml"


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory, toy_toml):
    """One full deterministic run over the bundled corpus, shared by tests."""
    out = tmp_path_factory.mktemp("toy_run")
    cfg = load_config(toy_toml, {"out": str(out)}).validate()
    lines = run_all(cfg)
    return cfg, out, lines

"""A local OpenAI-compatible stub endpoint for recording cassettes offline.

The stub is not a language model.  Persona requests are answered by averaging
the population percentiles of the cue statistics found in the prompt; item
selection requests get the first listed candidate.  Failures can be injected
to exercise client retries.
"""
from __future__ import annotations

import json
import re
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

STAT_LINE = re.compile(r"^- (\w+): \S+ \(percentile ([0-9.]+),", re.MULTILINE)
CANDIDATE_LINE = re.compile(r"^- (\S+): ", re.MULTILINE)
CUES = {
    "O": {"category_entropy": 1, "metaphor_density": 1},
    "C": {"review_length_cv": -1, "rating_deviation": -1, "rhythm_7_strength": 1},
    "E": {"social_word_ratio": 1},
    "A": {"positive_sentiment_ratio": 1, "politeness_ratio": 1},
    "N": {"negative_emotion_volatility": 1},
}


def persona_answer(prompt: str) -> str:
    pct = {name: float(value) / 100.0 for name, value in STAT_LINE.findall(prompt)}
    scores = {}
    for letter, cues in CUES.items():
        vals = [pct[c] if sign > 0 else 1.0 - pct[c] for c, sign in cues.items() if c in pct]
        scores[letter] = round(sum(vals) / len(vals), 3) if vals else 0.5
    return json.dumps(scores)


def selection_answer(prompt: str) -> str:
    body = prompt.split("Candidates:", 1)[-1]
    ids = CANDIDATE_LINE.findall(body)
    return json.dumps({"item_id": ids[0] if ids else ""})


def completion(body: dict) -> dict:
    messages = body.get("messages", [])
    prompt = messages[-1]["content"] if messages else ""
    text = selection_answer(prompt) if "Candidates:" in prompt else persona_answer(prompt)
    return {
        "object": "chat.completion",
        "model": body.get("model", ""),
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
    }


class StubServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address=("127.0.0.1", 0), fail_first: int = 0, reply=None):
        super().__init__(address, _Handler)
        self.fail_first = fail_first
        self.reply = reply or completion
        self.requests: list[dict] = []
        self.lock = threading.Lock()

    @property
    def base_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


class _Handler(BaseHTTPRequestHandler):
    server: StubServer

    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        with self.server.lock:
            self.server.requests.append(body)
            failing = self.server.fail_first > 0
            if failing:
                self.server.fail_first -= 1
        if self.path != "/chat/completions":
            status, payload = 404, {"error": "not found"}
        elif failing:
            status, payload = 503, {"error": "injected failure"}
        else:
            status, payload = 200, self.server.reply(body)
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@contextmanager
def serve(fail_first: int = 0, reply=None):
    """Run a stub server on a free local port for the duration of the block."""
    server = StubServer(fail_first=fail_first, reply=reply)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from ragintent.evaluation.corpus import CorpusSpec, VerticalSpec, generate_synthetic_corpus

SMALL_SPEC = CorpusSpec(
    verticals=(VerticalSpec("a", "Alpha", (3, 4)), VerticalSpec("b", "Beta", (2, 3, 3))),
    index_per_intent=4,
    test_per_intent=2,
    noise_rate=0.3,
    seed=11,
)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(SMALL_SPEC)


@pytest.fixture(scope="session")
def bench_corpus():
    return generate_synthetic_corpus(CorpusSpec())


@contextmanager
def json_server(handler):
    """Run ``handler(path, body) -> (status, doc)`` behind a local HTTP server; yields the base URL."""

    class _H(BaseHTTPRequestHandler):
        def do_POST(self):
            n = int(self.headers.get("content-length", 0))
            body = json.loads(self.rfile.read(n) or b"{}")
            status, doc = handler(self.path, body, dict(self.headers))
            raw = json.dumps(doc).encode()
            self.send_response(status)
            self.send_header("content-type", "application/json")
            self.send_header("content-length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), _H)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        server.server_close()


# Hand-specified bigram model: every row sums to one and smoothing is zero,
# so a continuation's per-token probabilities can be read straight off the table.
BIGRAM_ROWS = {
    "intent:": {"track": 0.5, "cancel": 0.3, "refund": 0.2},
    "track": {"order": 0.6, "parcel": 0.4},
    "cancel": {"order": 0.9, "subscription": 0.1},
    "refund": {"status": 1.0},
    "order": {">": 0.7, "now": 0.3},
    ">": {"where": 0.25, "late": 0.75},
    "<unigram>": {"track": 0.1, "cancel": 0.1, "refund": 0.1, "order": 0.2, "parcel": 0.1,
                  "subscription": 0.1, "status": 0.1, ">": 0.1, "where": 0.05, "late": 0.05},
}

# (candidate text, per-token probabilities evaluated by hand)
BIGRAM_CASES = [
    ("track order", [0.5, 0.6]),
    ("track parcel", [0.5, 0.4]),
    ("cancel order", [0.3, 0.9]),
    ("cancel subscription", [0.3, 0.1]),
    ("refund status", [0.2, 1.0]),
    ("track order now", [0.5, 0.6, 0.3]),
    ("track order > where", [0.5, 0.6, 0.7, 0.25]),
    ("cancel order > late", [0.3, 0.9, 0.7, 0.75]),
    ("refund status order", [0.2, 1.0, 0.2]),
    ("track parcel late", [0.5, 0.4, 0.05]),
    ("cancel subscription status", [0.3, 0.1, 0.1]),
]

BIGRAM_PROMPT = "Classify the query.\nQuery: where is my stuff\nIntent:"


# Acceptance summary: one PASS/FAIL line per criterion in the terminal summary.
_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    label = props.get("criterion")
    if label is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "PASS" if report.outcome == "passed" else "FAIL"
        _ACCEPTANCE[label] = (outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda x: int(x.split()[0])):
        outcome, detail = _ACCEPTANCE[label]
        terminalreporter.write_line(f"{outcome}  {label}  {detail}".rstrip())

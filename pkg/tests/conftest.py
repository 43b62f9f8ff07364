"""Shared fixtures: language pairs, TM builders, and a scripted HTTP stub.

The stub server speaks just enough of the completion and MT wire formats to
exercise the real HTTP clients. Tests enqueue one-shot behaviors (status,
headers, body) and read back the recorded payloads plus a concurrency
high-water mark.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from adaptmt.languages import LanguagePair
from adaptmt.retrieval import FuzzyMatch
from adaptmt.tm import SegmentPair, TranslationMemory


def make_tm(rows, src="en", tgt="ar", origin="fixture"):
    tm = TranslationMemory(LanguagePair(src, tgt))
    for source, target in rows:
        tm.add(source, target, origin=origin)
    return tm


def make_match(pair_id, source, target, score):
    pair = SegmentPair(id=pair_id, source=source, target=target, origin="fixture")
    return FuzzyMatch(pair=pair, score=score)


@pytest.fixture
def en_ar():
    return LanguagePair("en", "ar")


@pytest.fixture
def en_zh():
    return LanguagePair("en", "zh")


@pytest.fixture
def en_es():
    return LanguagePair("en", "es")


class StubServer:
    """Scripted HTTP endpoint for the completion and MT clients.

    ``script`` entries are consumed one per request:
    ``{"status": 429, "headers": {...}, "body": {...}}``. When the script is
    empty the default responder answers 200: an OpenAI-shaped choices list
    computed by ``text_for(prompt)`` for completion payloads, or a
    translations list for MT payloads (detected by a "texts" key).
    """

    def __init__(self):
        self.script = []
        self.payloads = []
        self.headers_seen = []
        self.lock = threading.Lock()
        self.inflight = 0
        self.max_inflight = 0
        self.latency = 0.0  # float seconds, or callable(payload) -> float
        self.text_for = lambda prompt: f"out({prompt})"
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass  # keep pytest output clean

            def do_GET(self):
                body = b"{}"
                self.send_response(200)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length) or b"{}")
                with server.lock:
                    server.payloads.append(payload)
                    server.headers_seen.append({k: v for k, v in self.headers.items()})
                    server.inflight += 1
                    server.max_inflight = max(server.max_inflight, server.inflight)
                    step = server.script.pop(0) if server.script else None
                try:
                    delay = (
                        server.latency(payload)
                        if callable(server.latency)
                        else server.latency
                    )
                    if delay:
                        time.sleep(delay)
                    if step is not None:
                        status = step.get("status", 200)
                        body = json.dumps(step.get("body", {})).encode()
                        self.send_response(status)
                        for key, value in step.get("headers", {}).items():
                            self.send_header(key, value)
                        self.send_header("Content-Length", str(len(body)))
                        self.end_headers()
                        self.wfile.write(body)
                        return
                    body = json.dumps(server._default(payload)).encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                finally:
                    with server.lock:
                        server.inflight -= 1

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.port = self.httpd.server_address[1]
        self.url = f"http://127.0.0.1:{self.port}/v1/completions"
        self.mt_url = f"http://127.0.0.1:{self.port}/mt"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def _default(self, payload):
        if "texts" in payload:
            return {"translations": [f"mt({t})" for t in payload["texts"]]}
        prompts = payload.get("prompt", "")
        if isinstance(prompts, str):
            prompts = [prompts]
        return {
            "id": "stub-1",
            "choices": [
                {"index": i, "text": self.text_for(p), "finish_reason": "stop"}
                for i, p in enumerate(prompts)
            ],
        }

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()

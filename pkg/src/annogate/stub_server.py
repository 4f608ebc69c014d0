"""Deterministic stub endpoint for hermetic tests and demos.

Scripted by a (prompt digest -> response) table; every behavior is a pure
function of the request, so test runs are reproducible. Runs in-process on a
daemon thread or standalone via ``python -m annogate.stub_server``.

Script file: JSON Lines, one entry per line::

    {"prompt_sha256": ..., "mode": "generate_text", "text": "..."}
    {"prompt_sha256": ..., "mode": "next_token_distribution",
     "top_tokens": {"1": 0.9, "0": 0.1}}
    {"text_sha256": ..., "mode": "embedding", "embedding": [...]}
    {"query_sha256": ..., "mode": "rerank", "scores": [...]}

Optional per-entry fields: ``top_logprobs`` (serve raw log space instead of
``top_tokens``), ``fail_first`` (serve that many HTTP 503s before
succeeding). Fallback rules: a completion entry scripted only with
``top_tokens`` answers generate_text requests with its argmax token, so the
two modes stay consistent; unscripted embeddings fall back to a
hash-derived unit vector; unscripted rerank scores count shared tokens;
unscripted completions get HTTP 404.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional, Union

import numpy as np


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def hash_embedding(text: str, dim: int) -> list[float]:
    """Deterministic pseudo-random unit vector derived from the text."""
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
    vec = np.random.default_rng(seed).standard_normal(dim)
    return (vec / np.linalg.norm(vec)).tolist()


def overlap_score(query: str, document: str) -> float:
    """Shared unique lowercase tokens between query and document."""
    q = set(query.lower().split())
    d = set(document.lower().split())
    return float(len(q & d))


class StubServer:
    """Scripted HTTP endpoint on 127.0.0.1, one instance per test."""

    def __init__(self, script: Optional[list[dict]] = None, embed_dim: int = 16):
        self.embed_dim = embed_dim
        self._entries: dict[str, dict] = {}
        self._served: dict[str, int] = {}
        self._requests: list[dict] = []
        self._lock = threading.Lock()
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None
        for entry in script or []:
            self.add_entry(entry)

    # -- scripting -----------------------------------------------------------

    @staticmethod
    def _entry_key(entry: dict) -> str:
        for key in ("prompt_sha256", "text_sha256", "query_sha256"):
            if key in entry:
                return entry[key]
        raise ValueError(f"script entry without a digest key: {entry!r}")

    def add_entry(self, entry: dict) -> None:
        self._entries[self._entry_key(entry)] = dict(entry)

    @classmethod
    def from_script_file(cls, path: Union[str, Path], embed_dim: int = 16) -> "StubServer":
        entries = [
            json.loads(line)
            for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        return cls(script=entries, embed_dim=embed_dim)

    # -- bookkeeping -----------------------------------------------------------

    def request_count(self, digest: str) -> int:
        with self._lock:
            return self._served.get(digest, 0)

    @property
    def total_requests(self) -> int:
        with self._lock:
            return len(self._requests)

    @property
    def requests(self) -> list[dict]:
        with self._lock:
            return list(self._requests)

    # -- request handling -----------------------------------------------------

    def _record(self, path: str, digest: str) -> int:
        """Log the request; returns how many times this digest was served."""
        with self._lock:
            self._requests.append({"path": path, "digest": digest})
            self._served[digest] = self._served.get(digest, 0) + 1
            return self._served[digest]

    def _maybe_fail(self, entry: Optional[dict], seen: int) -> bool:
        return bool(entry) and seen <= int(entry.get("fail_first", 0))

    def handle(self, path: str, payload: dict) -> tuple[int, dict]:
        """Pure request handler; exposed for in-process use."""
        if path == "/v1/completions":
            return self._handle_completion(payload)
        if path == "/v1/embeddings":
            return self._handle_embeddings(payload)
        if path == "/v1/rerank":
            return self._handle_rerank(payload)
        return 404, {"error": f"unknown route {path}"}

    def _handle_completion(self, payload: dict) -> tuple[int, dict]:
        prompt = payload.get("prompt", "")
        digest = sha256_text(prompt)
        seen = self._record("/v1/completions", digest)
        entry = self._entries.get(digest)
        if self._maybe_fail(entry, seen):
            return 503, {"error": "scripted failure"}
        if entry is None:
            return 404, {"error": f"no script entry for prompt digest {digest}"}
        wants_logprobs = payload.get("logprobs") is not None
        choice: dict = {"text": entry.get("text", ""), "logprobs": None}
        if wants_logprobs:
            if "top_logprobs" in entry:
                choice["logprobs"] = {"top_logprobs": [entry["top_logprobs"]]}
            elif "top_tokens" in entry:
                top = {
                    token: math.log(prob)
                    for token, prob in entry["top_tokens"].items()
                }
                choice["logprobs"] = {"top_logprobs": [top]}
            # else: logprobs stay null -> client raises MissingLogprobs
        elif not entry.get("text") and "top_tokens" in entry:
            # Text request against a distribution-only entry: greedy decode.
            choice["text"] = max(
                entry["top_tokens"].items(), key=lambda kv: (kv[1], kv[0])
            )[0]
        return 200, {"model": payload.get("model", ""), "choices": [choice]}

    def _handle_embeddings(self, payload: dict) -> tuple[int, dict]:
        data = []
        for i, text in enumerate(payload.get("input", [])):
            digest = sha256_text(text)
            seen = self._record("/v1/embeddings", digest)
            entry = self._entries.get(digest)
            if self._maybe_fail(entry, seen):
                return 503, {"error": "scripted failure"}
            if entry is not None and "embedding" in entry:
                vector = entry["embedding"]
            else:
                vector = hash_embedding(text, self.embed_dim)
            data.append({"index": i, "embedding": vector})
        return 200, {"data": data}

    def _handle_rerank(self, payload: dict) -> tuple[int, dict]:
        query = payload.get("query", "")
        documents = payload.get("documents", [])
        digest = sha256_text(query)
        seen = self._record("/v1/rerank", digest)
        entry = self._entries.get(digest)
        if self._maybe_fail(entry, seen):
            return 503, {"error": "scripted failure"}
        if entry is not None and "scores" in entry:
            scores = entry["scores"]
            if len(scores) != len(documents):
                return 400, {"error": "scripted scores do not match documents"}
        else:
            scores = [overlap_score(query, doc) for doc in documents]
        return 200, {"scores": scores}

    # -- lifecycle ---------------------------------------------------------------

    def start(self, port: int = 0) -> str:
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    payload = {}
                status, body = stub.handle(self.path, payload)
                encoded = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(encoded)))
                self.end_headers()
                self.wfile.write(encoded)

            def log_message(self, *args) -> None:
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self.url

    @property
    def url(self) -> str:
        if self._httpd is None:
            raise RuntimeError("stub server not started")
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "StubServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def main(argv: Optional[list[str]] = None) -> None:
    parser = argparse.ArgumentParser(description="Run the scripted stub endpoint.")
    parser.add_argument("--script", required=True, help="JSON Lines script file")
    parser.add_argument("--port", type=int, default=8900)
    parser.add_argument("--embed-dim", type=int, default=16)
    args = parser.parse_args(argv)
    server = StubServer.from_script_file(args.script, embed_dim=args.embed_dim)
    url = server.start(port=args.port)
    print(f"stub endpoint listening on {url}", flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()

"""LLM gateway: completion providers, batching, retry, post-processing.

One wire protocol (OpenAI-style text completions) with three provider
behaviors:

* ``HTTPProvider`` posts to a real endpoint, batching prompts into a single
  request per chunk and retrying transient failures.
* ``FixtureProvider`` replays canned responses keyed by the SHA-256 of the
  prompt, for bit-deterministic offline tests.
* ``EchoTopMatchProvider`` answers a few-shot translation prompt with the
  target of its last in-context example. With perfect retrieval this closes
  the translate/approve loop exactly, which the end-to-end tests rely on.

All providers expose ``complete_chunk`` and raise ``GatewayError`` on
terminal failure; ``complete_batch`` catches per chunk so one bad chunk
cannot poison the others.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

DEFAULT_BATCH_SIZE = 20
MAX_NEW_TOKENS_CAP = 250


class GatewayError(RuntimeError):
    """Terminal provider failure (after retries, if any)."""

    def __init__(self, message: str, status: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class AuthError(GatewayError):
    """Authentication rejected; never retried."""


@dataclass
class GenerationConfig:
    """Decoding parameters plus client-side batching knobs.

    decoding="greedy" is for providers without a greedy flag: the adapter
    sends temperature 0 / top_p 1 regardless of what this config carries.
    """

    model: str
    top_p: float = 1.0
    temperature: float = 0.3
    stop: list[str] | None = None
    max_tokens: int = MAX_NEW_TOKENS_CAP
    decoding: str = "sampling"
    batch_size: int = DEFAULT_BATCH_SIZE
    max_parallel: int = 4

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model must be non-empty")
        if not 0.0 <= self.top_p <= 1.0:
            raise ValueError(f"top_p must be in [0, 1], got {self.top_p}")
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.decoding not in ("sampling", "greedy"):
            raise ValueError(f"unknown decoding mode: {self.decoding!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str  # "stop" | "length" | "other"
    request_id: str = ""
    error: str | None = None


def prompt_hash(prompt: str) -> str:
    """Key used by fixture files to match prompts."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def dynamic_max_new_tokens(source: str, cap: int = MAX_NEW_TOKENS_CAP) -> int:
    """Twice the source word count, capped (dynamic budget for greedy providers)."""
    words = len(source.split())
    if words == 0:
        raise ValueError("source must be non-empty")
    return min(2 * words, cap)


@dataclass
class RetryPolicy:
    """Exponential backoff with jitter; Retry-After wins when the server sends it."""

    max_attempts: int = 6
    base_delay: float = 1.0
    factor: float = 2.0
    max_delay: float = 60.0

    def delay(self, attempt: int, retry_after: float | None, rng: random.Random) -> float:
        if retry_after is not None:
            return min(retry_after, self.max_delay)
        backoff = min(self.base_delay * self.factor ** (attempt - 1), self.max_delay)
        return backoff * (0.5 + 0.5 * rng.random())


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

class HTTPProvider:
    """OpenAI-compatible /completions endpoint.

    One POST per chunk, with `prompt` carrying the whole list; responses are
    realigned by choice index. The API key is read from the environment
    variable named at construction, never stored in config files.
    """

    name = "http"

    def __init__(
        self,
        endpoint: str,
        api_key_env: str | None = None,
        timeout: float = 60.0,
        retry: RetryPolicy | None = None,
        rng: random.Random | None = None,
        sleep=time.sleep,
    ):
        if not endpoint:
            raise ValueError("http provider requires an endpoint")
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.retry = retry or RetryPolicy()
        self.rng = rng or random.Random()
        self.sleep = sleep
        self.requests_sent = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            import os

            key = os.environ.get(self.api_key_env, "")
            if not key:
                raise AuthError(
                    f"environment variable {self.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, prompts: list[str], cfg: GenerationConfig) -> dict:
        if cfg.decoding == "greedy":
            temperature, top_p = 0.0, 1.0
        else:
            temperature, top_p = cfg.temperature, cfg.top_p
        payload = {
            "model": cfg.model,
            "prompt": prompts if len(prompts) > 1 else prompts[0],
            "top_p": top_p,
            "temperature": temperature,
            "max_tokens": cfg.max_tokens,
        }
        if cfg.stop:
            payload["stop"] = cfg.stop
        return payload

    def complete_chunk(self, prompts: list[str], cfg: GenerationConfig) -> list[Completion]:
        headers = self._headers()
        payload = self._payload(prompts, cfg)
        last_status: int | None = None
        for attempt in range(1, self.retry.max_attempts + 1):
            self.requests_sent += 1
            try:
                resp = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_status = None
                if attempt == self.retry.max_attempts:
                    raise GatewayError(
                        f"request failed after {attempt} attempts: {exc}",
                        attempts=attempt,
                    ) from exc
                self.sleep(self.retry.delay(attempt, None, self.rng))
                continue

            if resp.status_code in (401, 403):
                raise AuthError(
                    f"authentication rejected ({resp.status_code})",
                    status=resp.status_code,
                    attempts=attempt,
                )
            if resp.status_code == 429 or resp.status_code >= 500:
                last_status = resp.status_code
                if attempt == self.retry.max_attempts:
                    break
                retry_after = _parse_retry_after(resp.headers.get("Retry-After"))
                self.sleep(self.retry.delay(attempt, retry_after, self.rng))
                continue
            if resp.status_code != 200:
                raise GatewayError(
                    f"unexpected status {resp.status_code}: {resp.text[:200]}",
                    status=resp.status_code,
                    attempts=attempt,
                )
            return _parse_choices(resp.json(), len(prompts))
        raise GatewayError(
            f"gave up after {self.retry.max_attempts} attempts"
            f" (last status {last_status})",
            status=last_status,
            attempts=self.retry.max_attempts,
        )


def _parse_retry_after(value: str | None) -> float | None:
    if value is None:
        return None
    try:
        return max(float(value), 0.0)
    except ValueError:
        return None


def _parse_choices(body: dict, expected: int) -> list[Completion]:
    request_id = str(body.get("id", ""))
    choices = body.get("choices", [])
    slots: list[Completion | None] = [None] * expected
    for pos, choice in enumerate(choices):
        idx = choice.get("index", pos)
        if not 0 <= idx < expected:
            continue
        reason = choice.get("finish_reason") or "other"
        if reason not in ("stop", "length"):
            reason = "other"
        slots[idx] = Completion(
            text=choice.get("text", ""), finish_reason=reason, request_id=request_id
        )
    return [
        slot
        if slot is not None
        else Completion("", "other", request_id, error="missing choice in response")
        for slot in slots
    ]


class FixtureProvider:
    """Replays canned completions from a JSONL file or in-memory mapping.

    Rows look like {"match": "<sha256 of prompt>", "response": "...",
    "status": 200}. A non-200 status or an unknown prompt becomes an error
    completion in that slot, so fixtures can script partial failures. Passing
    ``default`` turns unknown prompts into that canned response instead, which
    is handy for load-style runs where only a handful of prompts matter.
    """

    name = "fixture"

    def __init__(self, rows: dict[str, tuple[str, int]], default: str | None = None):
        self.rows = rows
        self.default = default

    @classmethod
    def from_file(cls, path: str, default: str | None = None) -> "FixtureProvider":
        rows: dict[str, tuple[str, int]] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                rows[obj["match"]] = (obj.get("response", ""), obj.get("status", 200))
        return cls(rows, default=default)

    @classmethod
    def from_pairs(cls, pairs: dict[str, str]) -> "FixtureProvider":
        """Convenience: prompt text -> response text (hashes computed here)."""
        return cls({prompt_hash(p): (r, 200) for p, r in pairs.items()})

    def complete_chunk(self, prompts: list[str], cfg: GenerationConfig) -> list[Completion]:
        out = []
        for prompt in prompts:
            h = prompt_hash(prompt)
            row = self.rows.get(h)
            if row is None:
                if self.default is not None:
                    out.append(Completion(self.default, "stop", h[:12]))
                else:
                    out.append(
                        Completion("", "other", h[:12], error="no fixture for prompt")
                    )
                continue
            response, status = row
            if status != 200:
                out.append(
                    Completion("", "other", h[:12], error=f"fixture status {status}")
                )
                continue
            out.append(Completion(response, "stop", h[:12]))
        return out


class EchoTopMatchProvider:
    """Answers with the target text of the prompt's last in-context example.

    The final line of a translation prompt is the cue "<TargetName>:"; the
    last earlier line with that same label holds the best match's target.
    Prompts without such a line (zero-shot, term extraction) yield an error
    completion rather than a guess.
    """

    name = "echo_top_match"

    def complete_chunk(self, prompts: list[str], cfg: GenerationConfig) -> list[Completion]:
        return [self._echo(p) for p in prompts]

    @staticmethod
    def _echo(prompt: str) -> Completion:
        lines = prompt.split("\n")
        cue = lines[-1]
        if not cue.endswith(":"):
            return Completion("", "other", error="prompt does not end with a cue line")
        prefix = cue[:-1] + ": "
        for line in reversed(lines[:-1]):
            if line.startswith(prefix):
                return Completion(line[len(prefix):], "stop")
        return Completion("", "other", error="no in-context example to echo")


# ---------------------------------------------------------------------------
# Batch entry points
# ---------------------------------------------------------------------------

def complete(prompt: str, cfg: GenerationConfig, provider) -> Completion:
    """Single completion; terminal provider failures propagate as exceptions."""
    if not prompt:
        raise ValueError("prompt must be non-empty")
    return provider.complete_chunk([prompt], cfg)[0]


def complete_batch(
    prompts: list[str], cfg: GenerationConfig, provider
) -> list[Completion]:
    """Positionally aligned completions with bounded parallelism.

    Prompts are chunked by cfg.batch_size; chunks run concurrently up to
    cfg.max_parallel. A chunk that fails terminally fills its own slots with
    error completions and leaves the rest alone.
    """
    if not prompts:
        raise ValueError("prompts must be non-empty")
    chunks = [
        prompts[i : i + cfg.batch_size] for i in range(0, len(prompts), cfg.batch_size)
    ]

    def run(chunk: list[str]) -> list[Completion]:
        try:
            result = provider.complete_chunk(chunk, cfg)
        except GatewayError as exc:
            return [Completion("", "other", error=str(exc)) for _ in chunk]
        if len(result) != len(chunk):
            return [
                Completion("", "other", error="provider returned misaligned batch")
                for _ in chunk
            ]
        return result

    if len(chunks) == 1:
        results = [run(chunks[0])]
    else:
        workers = min(cfg.max_parallel, len(chunks))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    return [completion for chunk_result in results for completion in chunk_result]


def postprocess(raw: Completion, mode: str = "stop_newline") -> str:
    """Turn a raw completion into a translation string.

    stop_newline trusts the provider's stop sequence and just trims;
    truncate_newline drops everything after the first newline (for providers
    that over-generate); verbatim returns the text untouched.
    """
    if mode == "verbatim":
        return raw.text
    text = raw.text
    if mode == "truncate_newline":
        text = text.split("\n", 1)[0]
    elif mode != "stop_newline":
        raise ValueError(f"unknown postprocess mode: {mode!r}")
    text = text.strip()
    if not text:
        warnings.warn("empty translation after postprocessing", stacklevel=2)
    return text

"""Bridge to external encoder-decoder MT systems.

The MT-augmented prompt strategies need a conventional MT translation for
the new segment (and sometimes for every fuzzy match). Commercial and
self-hosted systems all hide behind one tiny wire protocol here:

    POST endpoint  {"texts": [...], "source": "en", "target": "fr"}
    -> 200         {"translations": [...]}

Failures are per slot: a failed chunk yields None in its positions and the
strategy layer decides how to degrade (typically by dropping the MT lines
and recording that it did).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

import requests

from adaptmt.languages import LanguagePair


class MTError(RuntimeError):
    """Terminal MT provider failure for a chunk."""


class HTTPMTProvider:
    name = "http"

    def __init__(self, endpoint: str, lang: LanguagePair, timeout: float = 60.0):
        if not endpoint:
            raise ValueError("mt provider requires an endpoint")
        self.endpoint = endpoint
        self.lang = lang
        self.timeout = timeout

    def health_check(self) -> bool:
        try:
            resp = requests.get(self.endpoint, timeout=self.timeout)
        except requests.RequestException:
            return False
        return resp.status_code < 500

    def translate_chunk(self, texts: list[str]) -> list[str]:
        payload = {
            "texts": texts,
            "source": self.lang.source_lang,
            "target": self.lang.target_lang,
        }
        try:
            resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise MTError(f"mt request failed: {exc}") from exc
        if resp.status_code != 200:
            raise MTError(f"mt provider returned status {resp.status_code}")
        translations = resp.json().get("translations")
        if not isinstance(translations, list) or len(translations) != len(texts):
            raise MTError("mt provider returned a misaligned response")
        return [str(t) for t in translations]


class FixtureMTProvider:
    """Table-driven MT for offline tests; unknown sources fail their slot."""

    name = "fixture"

    def __init__(self, table: dict[str, str], lang: LanguagePair):
        self.table = table
        self.lang = lang

    @classmethod
    def from_file(cls, path: str, lang: LanguagePair) -> "FixtureMTProvider":
        table = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                table[obj["source"]] = obj["target"]
        return cls(table, lang)

    def health_check(self) -> bool:
        return True

    def translate_chunk(self, texts: list[str]) -> list[str]:
        missing = [t for t in texts if t not in self.table]
        if missing:
            raise MTError(f"no fixture translation for {missing[0]!r}")
        return [self.table[t] for t in texts]


def mt_translate(
    texts: list[str],
    provider,
    batch_size: int = 50,
    max_parallel: int = 4,
) -> list[str | None]:
    """Translate texts, positionally aligned; failed chunks become None slots."""
    if not texts:
        raise ValueError("texts must be non-empty")
    if batch_size < 1 or max_parallel < 1:
        raise ValueError("batch_size and max_parallel must be >= 1")
    chunks = [texts[i : i + batch_size] for i in range(0, len(texts), batch_size)]

    def run(chunk: list[str]) -> list[str | None]:
        try:
            return list(provider.translate_chunk(chunk))
        except MTError:
            return [None] * len(chunk)

    if len(chunks) == 1:
        results = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=min(max_parallel, len(chunks))) as pool:
            results = list(pool.map(run, chunks))
    return [item for chunk_result in results for item in chunk_result]

"""Translation memory: segment pairs, ingestion, approval, persistence.

The TM is an ordered collection of source/target sentence pairs. Dedup is
by whitespace-normalized (source, target); casing is preserved because it
is meaningful in translation. Stored text is whitespace-normalized too:
segments are single sentences and the prompt format is line-oriented, so
embedded newlines or tab runs would corrupt downstream formats.

Canonical persistence is JSONL (one pair per line, append-friendly for the
live approve loop); TSV is supported as an interchange format. TMX import
is a future extension.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field

from adaptmt.languages import LanguagePair

ORIGINS = ("approved", "machine", "fixture")


class TMError(ValueError):
    """Invalid TM operation."""


class IngestError(TMError):
    """Malformed ingestion input. `rows` lists offending 1-based line numbers."""

    def __init__(self, message: str, rows: list[int] | None = None):
        super().__init__(message)
        self.rows = rows or []


def normalize_text(text: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return " ".join(text.split())


@dataclass
class SegmentPair:
    """One source/target sentence pair; the TM unit."""

    id: int
    source: str
    target: str
    origin: str = "approved"
    created_at: float = 0.0

    def __post_init__(self) -> None:
        if self.origin not in ORIGINS:
            raise TMError(f"unknown origin {self.origin!r}")
        if not self.source:
            raise TMError("segment source must be non-empty")
        if self.origin == "approved" and not self.target:
            raise TMError("approved segment target must be non-empty")


class TranslationMemory:
    """Ordered, deduplicated store of segment pairs for one language pair.

    Reads may proceed concurrently; writes are serialized by an internal
    lock, so a handle is safe to share across threads.
    """

    def __init__(self, lang: LanguagePair, project_id: str = "default"):
        self.project_id = project_id
        self.lang = lang
        self.pairs: list[SegmentPair] = []
        self._by_key: dict[tuple[str, str], SegmentPair] = {}
        self._next_id = 1
        self._lock = threading.Lock()
        self.version = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @staticmethod
    def dedup_key(source: str, target: str) -> tuple[str, str]:
        return (normalize_text(source), normalize_text(target))

    def add(self, source: str, target: str, origin: str = "approved") -> SegmentPair:
        """Insert a pair, or return the existing one when it is a duplicate."""
        src = normalize_text(source)
        tgt = normalize_text(target)
        if not src:
            raise TMError("segment source must be non-empty")
        if origin == "approved" and not tgt:
            raise TMError("approved segment target must be non-empty")
        key = (src, tgt)
        with self._lock:
            existing = self._by_key.get(key)
            if existing is not None:
                return existing
            pair = SegmentPair(
                id=self._next_id,
                source=src,
                target=tgt,
                origin=origin,
                created_at=time.time(),
            )
            self._next_id += 1
            self.pairs.append(pair)
            self._by_key[key] = pair
            self.version += 1
            return pair

    def approve(self, source: str, target: str) -> SegmentPair:
        """Persist a user-approved pair; idempotent on exact duplicates."""
        if not normalize_text(source):
            raise TMError("approve: source must be non-empty")
        if not normalize_text(target):
            raise TMError("approve: target must be non-empty")
        return self.add(source, target, origin="approved")

    def extend(self, records: list[tuple[str, str, str]]) -> tuple[int, int]:
        """Add (source, target, origin) records; returns (kept, dropped)."""
        kept = 0
        dropped = 0
        for source, target, origin in records:
            before = len(self.pairs)
            self.add(source, target, origin=origin)
            if len(self.pairs) > before:
                kept += 1
            else:
                dropped += 1
        return kept, dropped


@dataclass
class IngestResult:
    tm: TranslationMemory
    read: int
    kept: int
    dropped: int


def parse_tsv(text: str) -> list[tuple[int, str, str]]:
    """Parse two-column TSV into (line_no, source, target) rows."""
    rows: list[tuple[int, str, str]] = []
    bad: list[int] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) < 2 or not cols[0].strip() or not cols[1].strip():
            bad.append(line_no)
            continue
        rows.append((line_no, cols[0], cols[1]))
    if bad:
        raise IngestError(
            f"malformed TSV record at line {bad[0]} "
            f"({len(bad)} malformed line(s) total)",
            rows=bad,
        )
    return rows


def parse_jsonl(text: str) -> list[tuple[int, str, str, str]]:
    """Parse JSONL into (line_no, source, target, origin) rows."""
    rows: list[tuple[int, str, str, str]] = []
    bad: list[int] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            bad.append(line_no)
            continue
        source = obj.get("source") if isinstance(obj, dict) else None
        target = obj.get("target") if isinstance(obj, dict) else None
        if not isinstance(source, str) or not isinstance(target, str):
            bad.append(line_no)
            continue
        if not source.strip() or not target.strip():
            bad.append(line_no)
            continue
        origin = obj.get("origin", "approved")
        if origin not in ORIGINS:
            bad.append(line_no)
            continue
        rows.append((line_no, source, target, origin))
    if bad:
        raise IngestError(
            f"malformed JSONL record at line {bad[0]} "
            f"({len(bad)} malformed line(s) total)",
            rows=bad,
        )
    return rows


def parse_records(text: str, fmt: str) -> list[tuple[str, str, str]]:
    """Parse TSV or JSONL text into (source, target, origin) records."""
    if fmt == "tsv":
        return [(s, t, "approved") for _, s, t in parse_tsv(text)]
    if fmt == "jsonl":
        return [(s, t, o) for _, s, t, o in parse_jsonl(text)]
    raise TMError(f"unknown TM format {fmt!r} (expected 'tsv' or 'jsonl')")


def ingest(path: str, fmt: str, lang: LanguagePair) -> IngestResult:
    """Load a TSV or JSONL file into a fresh TM, dropping duplicates."""
    with open(path, encoding="utf-8") as f:
        text = f.read()
    if not text.strip():
        raise IngestError(f"empty TM file: {path}")
    records = parse_records(text, fmt)
    tm = TranslationMemory(lang)
    kept, dropped = tm.extend(records)
    return IngestResult(tm=tm, read=len(records), kept=kept, dropped=dropped)


def export(tm: TranslationMemory, path: str, fmt: str = "jsonl") -> int:
    """Write the TM to `path`; returns the number of pairs written."""
    if len(tm) == 0:
        raise TMError("cannot export an empty TM")
    if fmt not in ("tsv", "jsonl"):
        raise TMError(f"unknown TM format {fmt!r} (expected 'tsv' or 'jsonl')")
    with open(path, "w", encoding="utf-8") as f:
        for pair in tm:
            if fmt == "tsv":
                f.write(f"{pair.source}\t{pair.target}\n")
            else:
                f.write(
                    json.dumps(
                        {
                            "id": pair.id,
                            "source": pair.source,
                            "target": pair.target,
                            "origin": pair.origin,
                            "created_at": pair.created_at,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    return len(tm)

"""Bilingual terminology: LLM extraction, glossary compilation, term matching.

The extraction step asks the model for term pairs line by line; the parser
is deliberately forgiving about enumeration formats ("2.", "3)", bare
lines). Compilation aggregates candidates across a dataset and keeps the
frequent, content-bearing ones; matching finds glossary entries inside a new
source segment by scanning its 1..5-gram inventory.

Presence flags on parsed terms use a strict case-insensitive substring test.
That is intentionally stricter than a human check, which would also accept
inflected variants; callers should treat a False flag as "suspect", not
"definitely fabricated".
"""

from __future__ import annotations

import re
import unicodedata
import warnings
from dataclasses import dataclass, field

from adaptmt.gateway import GenerationConfig, complete, complete_batch
from adaptmt.languages import LanguagePair
from adaptmt.prompts import PromptKind, PromptRequest, render
from adaptmt.tm import SegmentPair

# Minimal English function-word list, applied to the SOURCE side only when
# compiling glossaries. Target-side tokens are never filtered.
# Term extraction wants the single most likely reading of the sentence pair,
# so it always runs greedy regardless of the translation sampling settings.
EXTRACTION_TEMPERATURE = 0.0

STOPWORDS = frozenset(
    """
    a an the
    and or but nor so yet if while although though because since unless
    until when whenever where wherever whether as than that
    i you he she it we they me him her us them
    my your his its our their mine yours hers ours theirs
    this these those who whom whose which what
    myself yourself himself herself itself ourselves yourselves themselves
    anybody anyone anything everybody everyone everything
    nobody nothing somebody someone something
    each either neither both few many several all any most some such none
    about above across after against along among around at before behind
    below beneath beside between beyond by despite down during except for
    from in inside into like near of off on onto out outside over past per
    through throughout till to toward towards under underneath up upon
    with within without
    am is are was were be been being do does did doing
    have has had having will would shall should may might must can could
    ought need
    not no very too also just only quite rather almost always never often
    sometimes again further then once here there now how why
    own same other another
    """.split()
)


class TerminologyError(ValueError):
    """Invalid terminology input."""


@dataclass(frozen=True)
class TermPair:
    """A source term, its translation, and corpus statistics.

    ngram_len is always the whitespace-token count of source; passing 0
    (the default) computes it.
    """

    source: str
    target: str
    freq: int = 1
    ngram_len: int = 0

    def __post_init__(self) -> None:
        if not self.source.strip():
            raise TerminologyError("term source must be non-empty")
        if not self.target.strip():
            raise TerminologyError("term target must be non-empty")
        if self.freq < 1:
            raise TerminologyError(f"freq must be >= 1, got {self.freq}")
        actual = len(self.source.split())
        if self.ngram_len == 0:
            object.__setattr__(self, "ngram_len", actual)
        elif self.ngram_len != actual:
            raise TerminologyError(
                f"ngram_len {self.ngram_len} does not match source token count {actual}"
            )


@dataclass(frozen=True)
class ParsedTerm:
    """One line of model output after parsing, with validity flags."""

    source: str
    target: str
    source_in_sentence: bool
    target_in_sentence: bool


@dataclass
class GlossaryConfig:
    min_freq: int = 2
    max_ngram: int = 5
    max_terms_per_segment: int = 5
    stopwords: frozenset[str] = STOPWORDS
    separator: str = "="

    def __post_init__(self) -> None:
        if self.min_freq < 1:
            raise TerminologyError("min_freq must be >= 1")
        if not 1 <= self.max_ngram <= 5:
            raise TerminologyError("max_ngram must be in [1, 5]")
        if self.max_terms_per_segment < 1:
            raise TerminologyError("max_terms_per_segment must be >= 1")


@dataclass
class Glossary:
    """Compiled term list, longest n-grams first, then by falling frequency.

    Entries have unique sources (case-insensitive); order is part of the
    contract because match_terms consumes it as a priority list.
    """

    entries: list[TermPair] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.entries:
                fh.write(f"{t.source}\t{t.target}\t{t.freq}\t{t.ngram_len}\n")

    @classmethod
    def load(cls, path: str) -> "Glossary":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise TerminologyError(
                        f"glossary line {lineno} must have 4 tab-separated fields"
                    )
                src, tgt, freq, ngram_len = parts
                entries.append(
                    TermPair(src, tgt, freq=int(freq), ngram_len=int(ngram_len))
                )
        return cls(entries)


# ---------------------------------------------------------------------------
# Extraction and parsing
# ---------------------------------------------------------------------------

def extract_terms(
    pair: SegmentPair,
    lang: LanguagePair,
    provider,
    cfg: GenerationConfig,
    n: int = 5,
    separator: str = "=",
    display_names: dict[str, str] | None = None,
) -> list[str]:
    """Ask the model for n term pairs; returns raw completion lines, unparsed.

    Extraction is meant to run with temperature 0 / top_p 1; the caller owns
    cfg so batch runs can share one config.
    """
    prompt = render(_extraction_request(pair, lang, n, separator, display_names))
    completion = complete(prompt, cfg, provider)
    return _completion_lines(completion.text)


def extract_terms_batch(
    pairs: list[SegmentPair],
    lang: LanguagePair,
    provider,
    cfg: GenerationConfig,
    n: int = 5,
    separator: str = "=",
    display_names: dict[str, str] | None = None,
) -> list[list[str]]:
    """Batched extract_terms; output aligned with input pairs."""
    prompts = [
        render(_extraction_request(p, lang, n, separator, display_names))
        for p in pairs
    ]
    completions = complete_batch(prompts, cfg, provider)
    return [_completion_lines(c.text) for c in completions]


def _extraction_request(
    pair: SegmentPair,
    lang: LanguagePair,
    n: int,
    separator: str,
    display_names: dict[str, str] | None,
) -> PromptRequest:
    return PromptRequest(
        kind=PromptKind.TERM_EXTRACTION,
        lang=lang,
        source=pair.source,
        target=pair.target,
        extract_count=n,
        separator=separator,
        language_display_names=display_names,
    )


def _completion_lines(text: str) -> list[str]:
    lines = [line for line in text.strip().split("\n") if line.strip()]
    if not lines:
        warnings.warn("term extraction returned an empty completion", stacklevel=3)
    return lines


_ENUM_PREFIX = re.compile(r"^\s*\d+\s*[.)]\s*")


def parse_term_lines(
    lines: list[str],
    separator: str,
    source_sentence: str,
    target_sentence: str,
) -> tuple[list[ParsedTerm], int]:
    """Parse raw extraction lines into terms plus a malformed-line count.

    Enumeration prefixes are stripped, the line splits on the first
    separator, both sides are trimmed. Lines without the separator or with
    an empty side count as malformed and are dropped.
    """
    src_lower = source_sentence.lower()
    tgt_lower = target_sentence.lower()
    parsed: list[ParsedTerm] = []
    malformed = 0
    for line in lines:
        body = _ENUM_PREFIX.sub("", line).strip()
        if not body:
            continue
        if separator not in body:
            malformed += 1
            continue
        left, right = body.split(separator, 1)
        left, right = left.strip(), right.strip()
        if not left or not right:
            malformed += 1
            continue
        parsed.append(
            ParsedTerm(
                source=left,
                target=right,
                source_in_sentence=left.lower() in src_lower,
                target_in_sentence=right.lower() in tgt_lower,
            )
        )
    return parsed, malformed


def aggregate_candidates(
    parsed: list[ParsedTerm], require_present: bool = False
) -> list[TermPair]:
    """Fold parsed terms into frequency-counted candidates.

    Counting is case-insensitive on (source, target); the stored surface
    form is the most frequent casing (ties break lexicographically). With
    require_present, terms failing either presence flag are skipped.
    """
    counts: dict[tuple[str, str], int] = {}
    casings: dict[tuple[str, str], dict[tuple[str, str], int]] = {}
    for term in parsed:
        if require_present and not (term.source_in_sentence and term.target_in_sentence):
            continue
        key = (term.source.lower(), term.target.lower())
        counts[key] = counts.get(key, 0) + 1
        surface = casings.setdefault(key, {})
        surface_key = (term.source, term.target)
        surface[surface_key] = surface.get(surface_key, 0) + 1
    out = []
    for key, freq in counts.items():
        surface = casings[key]
        best_src, best_tgt = min(surface, key=lambda sk: (-surface[sk], sk))
        out.append(TermPair(best_src, best_tgt, freq=freq))
    return out


# ---------------------------------------------------------------------------
# Glossary compilation and matching
# ---------------------------------------------------------------------------

def compile_glossary(candidates: list[TermPair], cfg: GlossaryConfig) -> Glossary:
    """Filter, dedupe, and order candidates into a Glossary.

    Drops low-frequency entries, sources longer than max_ngram, and sources
    made entirely of stopwords. Multiple targets for one source collapse to
    the highest-frequency target (tie: lexicographically smallest). Sorted
    longest-ngram-first, then by descending frequency, then by source.
    """
    kept: dict[str, TermPair] = {}
    for term in candidates:
        if term.freq < cfg.min_freq:
            continue
        if term.ngram_len > cfg.max_ngram:
            continue
        tokens = term.source.lower().split()
        if all(tok in cfg.stopwords for tok in tokens):
            continue
        key = term.source.lower()
        current = kept.get(key)
        if (
            current is None
            or term.freq > current.freq
            or (term.freq == current.freq and term.target < current.target)
        ):
            kept[key] = term
    entries = sorted(
        kept.values(), key=lambda t: (-t.ngram_len, -t.freq, t.source.lower())
    )
    if not entries:
        warnings.warn("compiled glossary is empty", stacklevel=2)
    return Glossary(entries)


def _strip_edge_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize_for_matching(source: str) -> list[str]:
    """Whitespace tokens, lowercased, edge punctuation stripped.

    Tokens that were pure punctuation disappear, so n-grams may bridge them;
    term matching and its tests share this exact tokenizer.
    """
    tokens = []
    for raw in source.split():
        tok = _strip_edge_punct(raw).lower()
        if tok:
            tokens.append(tok)
    return tokens


def source_ngrams(source: str, max_ngram: int = 5) -> set[str]:
    tokens = tokenize_for_matching(source)
    grams = set()
    for n in range(1, max_ngram + 1):
        for i in range(len(tokens) - n + 1):
            grams.add(" ".join(tokens[i : i + n]))
    return grams


def match_terms(
    source: str,
    glossary: Glossary,
    max_terms: int = 5,
    suppress_overlaps: bool = True,
) -> list[TermPair]:
    """Glossary entries found among the source's 1..5-grams, glossary order.

    With suppress_overlaps (the default), an entry whose source tokens form
    a contiguous run inside an already selected entry's source is skipped,
    so "New York" never accompanies "New York Times". At most max_terms
    entries are returned.
    """
    grams = source_ngrams(source)
    selected: list[TermPair] = []
    selected_tokens: list[list[str]] = []
    for entry in glossary.entries:
        if len(selected) >= max_terms:
            break
        entry_lower = entry.source.lower()
        if entry_lower not in grams:
            continue
        tokens = entry_lower.split()
        if suppress_overlaps and any(
            _contains_run(longer, tokens) for longer in selected_tokens
        ):
            continue
        selected.append(entry)
        selected_tokens.append(tokens)
    return selected


def _contains_run(haystack: list[str], needle: list[str]) -> bool:
    if len(needle) > len(haystack):
        return False
    return any(
        haystack[i : i + len(needle)] == needle
        for i in range(len(haystack) - len(needle) + 1)
    )

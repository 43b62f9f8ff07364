"""Prompt construction for in-context-learning translation.

Each PromptKind maps to exactly one flat-text template. All templates are
line-oriented: one field per line, "Label: value" pairs, and a final cue line
("French:", "Arabic:", or "1." for term extraction) that the model is
expected to complete. In few-shot kinds the examples are laid out
worst-match FIRST, so the highest-similarity match sits immediately above
the segment to be translated.

Prompts never end with a newline: the cue line is the last line, which
keeps stop=["\\n"] usable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING

from adaptmt.languages import LanguagePair
from adaptmt.retrieval import FuzzyMatch

if TYPE_CHECKING:
    from adaptmt.terminology import TermPair


class PromptError(ValueError):
    """Request is missing or misusing a field for its kind."""


class PromptKind(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT_FUZZY = "few_shot_fuzzy"
    FEW_SHOT_RANDOM = "few_shot_random"
    FEW_SHOT_FUZZY_NEW_MT = "few_shot_fuzzy_new_mt"
    FEW_SHOT_FUZZY_ALL_MT = "few_shot_fuzzy_all_mt"
    ZERO_SHOT_GLOSSARY_TERMS = "zero_shot_glossary_terms"
    FEW_SHOT_FUZZY_TERMS = "few_shot_fuzzy_terms"
    FEW_SHOT_GLOSSARY_TERMS = "few_shot_glossary_terms"
    TERM_EXTRACTION = "term_extraction"


_FEW_SHOT_KINDS = {
    PromptKind.FEW_SHOT_FUZZY,
    PromptKind.FEW_SHOT_RANDOM,
    PromptKind.FEW_SHOT_FUZZY_NEW_MT,
    PromptKind.FEW_SHOT_FUZZY_ALL_MT,
    PromptKind.FEW_SHOT_FUZZY_TERMS,
    PromptKind.FEW_SHOT_GLOSSARY_TERMS,
}

_MT_KINDS = {PromptKind.FEW_SHOT_FUZZY_NEW_MT, PromptKind.FEW_SHOT_FUZZY_ALL_MT}

_TERMS_KINDS = {
    PromptKind.ZERO_SHOT_GLOSSARY_TERMS,
    PromptKind.FEW_SHOT_FUZZY_TERMS,
    PromptKind.FEW_SHOT_GLOSSARY_TERMS,
}

_EXAMPLE_TERMS_KINDS = {
    PromptKind.FEW_SHOT_FUZZY_TERMS,
    PromptKind.FEW_SHOT_GLOSSARY_TERMS,
}


@dataclass
class PromptRequest:
    """Everything needed to render one prompt.

    matches are expected in retrieval order (best first); rendering reverses
    them. mt_matches and match_terms, when present, are positionally aligned
    with matches. target/extract_count/separator are only read by
    TERM_EXTRACTION.
    """

    kind: PromptKind
    lang: LanguagePair
    source: str
    matches: list[FuzzyMatch] = field(default_factory=list)
    terms: list["TermPair"] = field(default_factory=list)
    mt_new: str | None = None
    mt_matches: list[str] | None = None
    match_terms: list[list["TermPair"]] | None = None
    target: str | None = None
    extract_count: int = 5
    separator: str = "="
    language_display_names: dict[str, str] | None = None

    def validate(self) -> None:
        kind = self.kind
        if not self.source:
            raise PromptError("source is required")
        if kind in _MT_KINDS and not self.mt_new:
            raise PromptError(f"mt_new is required for kind {kind.value}")
        if kind is PromptKind.FEW_SHOT_FUZZY_ALL_MT:
            if self.mt_matches is None or len(self.mt_matches) != len(self.matches):
                raise PromptError(
                    "mt_matches must align with matches for kind "
                    f"{kind.value}"
                )
        if kind in _EXAMPLE_TERMS_KINDS:
            if self.match_terms is None or len(self.match_terms) != len(self.matches):
                raise PromptError(
                    f"match_terms must align with matches for kind {kind.value}"
                )
        if kind in _TERMS_KINDS and self.terms is None:
            raise PromptError(f"terms is required for kind {kind.value}")
        if kind is PromptKind.TERM_EXTRACTION:
            if not self.target:
                raise PromptError("target is required for kind term_extraction")
            if self.extract_count < 1:
                raise PromptError("extract_count must be >= 1")
            if not self.separator:
                raise PromptError("separator must be non-empty")
        if kind not in _FEW_SHOT_KINDS and kind is not PromptKind.TERM_EXTRACTION:
            if self.matches:
                raise PromptError(f"kind {kind.value} does not take matches")
        if self.mt_new is not None and kind not in _MT_KINDS:
            raise PromptError(f"kind {kind.value} does not take mt_new")
        if self.terms and kind not in _TERMS_KINDS:
            raise PromptError(f"kind {kind.value} does not take terms")

    def names(self) -> tuple[str, str]:
        return self.lang.display_names(self.language_display_names)


def format_terms(terms: list["TermPair"]) -> str:
    """'src1 = tgt1 - src2 = tgt2 - ...'"""
    return " - ".join(f"{t.source} = {t.target}" for t in terms)


def render(req: PromptRequest) -> str:
    """Instantiate the template for req.kind, byte-exact.

    Few-shot examples appear in ascending similarity so the best match is
    the last example before the new source line. A few-shot request whose
    matches were all dropped by fit() degenerates to the zero-shot layout,
    and an empty terms list (for the query or for one example) omits that
    "Terms:" line rather than rendering a dangling label.
    """
    req.validate()
    src_name, tgt_name = req.names()
    kind = req.kind

    if kind is PromptKind.TERM_EXTRACTION:
        return "\n".join(
            [
                f"{src_name}: {req.source}",
                f"{tgt_name}: {req.target}",
                "",
                f"Extract {req.extract_count} terms from the above sentence"
                f" pair. Type each {src_name} term and its {tgt_name}"
                f" equivalent in one line, separated by '{req.separator}'.",
                "",
                "1.",
            ]
        )

    lines: list[str] = []
    ordered = list(reversed(req.matches))
    n = len(req.matches)
    for pos, match in enumerate(ordered):
        # index back into the aligned per-match lists (best-first order)
        i = n - 1 - pos
        if kind in _EXAMPLE_TERMS_KINDS and req.match_terms[i]:
            lines.append(f"Terms: {format_terms(req.match_terms[i])}")
        lines.append(f"{src_name}: {match.pair.source}")
        if kind is PromptKind.FEW_SHOT_FUZZY_ALL_MT:
            assert req.mt_matches is not None
            lines.append(f"MT: {req.mt_matches[i]}")
        lines.append(f"{tgt_name}: {match.pair.target}")

    if kind in _TERMS_KINDS and req.terms:
        lines.append(f"Terms: {format_terms(req.terms)}")
    lines.append(f"{src_name}: {req.source}")
    if kind in _MT_KINDS:
        lines.append(f"MT: {req.mt_new}")
    lines.append(f"{tgt_name}:")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Token budget
# ---------------------------------------------------------------------------

@dataclass
class BudgetConfig:
    """Model context window and the chars-per-token approximation.

    chars/4 deliberately overestimates token usage for most European text,
    which keeps the fit conservative without shipping a model tokenizer.
    """

    context_limit: int = 4097
    approx_chars_per_token: float = 4.0

    def __post_init__(self) -> None:
        if self.context_limit <= 0:
            raise PromptError("context_limit must be positive")
        if self.approx_chars_per_token <= 0:
            raise PromptError("approx_chars_per_token must be positive")


def estimate_tokens(text: str, budget: BudgetConfig) -> int:
    return math.ceil(len(text) / budget.approx_chars_per_token)


def output_budget(source: str, lang: LanguagePair) -> int:
    """Reserved completion tokens: source word count x language multiplier."""
    words = len(source.split())
    if words == 0:
        raise PromptError("source is required")
    return words * lang.length_multiplier


@dataclass
class FitResult:
    request: PromptRequest
    dropped_matches: list[FuzzyMatch]
    dropped_terms: list["TermPair"]
    prompt_tokens: int
    output_tokens: int

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.output_tokens


def fit(req: PromptRequest, budget: BudgetConfig | None = None) -> FitResult:
    """Shrink a request until prompt estimate + output budget fits the window.

    Drops the lowest-similarity matches first (the tail of the best-first
    input list, together with their aligned MT/terms entries), then excess
    terms from the end of the terms list. The source is never touched; if
    the bare request still overflows, that is an error.
    """
    if budget is None:
        budget = BudgetConfig()
    req.validate()
    out_tokens = output_budget(req.source, req.lang)
    current = replace(
        req,
        matches=list(req.matches),
        terms=list(req.terms),
        mt_matches=list(req.mt_matches) if req.mt_matches is not None else None,
        match_terms=[list(ts) for ts in req.match_terms]
        if req.match_terms is not None
        else None,
    )
    dropped_matches: list[FuzzyMatch] = []
    dropped_terms: list["TermPair"] = []

    while True:
        prompt_tokens = estimate_tokens(render(current), budget)
        if prompt_tokens + out_tokens <= budget.context_limit:
            return FitResult(
                request=current,
                dropped_matches=dropped_matches,
                dropped_terms=dropped_terms,
                prompt_tokens=prompt_tokens,
                output_tokens=out_tokens,
            )
        if current.matches:
            dropped_matches.append(current.matches.pop())
            if current.mt_matches:
                current.mt_matches.pop()
            if current.match_terms:
                current.match_terms.pop()
        elif current.terms:
            dropped_terms.append(current.terms.pop())
        else:
            raise PromptError(
                "request cannot fit the context window even with no matches"
                f" or terms: {prompt_tokens} prompt + {out_tokens} output"
                f" > {budget.context_limit}"
            )

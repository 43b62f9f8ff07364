"""Translation strategies: retrieval, terms, MT, prompting, and the gateway
composed into one pipeline with a full audit trail.

Every translation records the exact fitted prompt request it sent, so any
result can be re-rendered byte-for-byte later. Degradations (MT bridge
down, no glossary hit, dropped matches) never happen silently; they land in
the result's warnings and, where the prompt shape changes, in its kind.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
import warnings as pywarnings
from dataclasses import dataclass, field, replace

from adaptmt.gateway import (
    GatewayError,
    GenerationConfig,
    complete_batch,
    postprocess,
)
from adaptmt.languages import LanguagePair
from adaptmt.mt_bridge import mt_translate
from adaptmt.prompts import (
    BudgetConfig,
    FitResult,
    PromptKind,
    PromptRequest,
    fit,
    render,
)
from adaptmt.retrieval import FuzzyMatch, RetrievalConfig, TMIndex
from adaptmt.terminology import (
    EXTRACTION_TEMPERATURE,
    Glossary,
    GlossaryConfig,
    TermPair,
    aggregate_candidates,
    compile_glossary,
    extract_terms_batch,
    match_terms,
    parse_term_lines,
)
from adaptmt.tm import SegmentPair, TranslationMemory

logger = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = 1

_ZERO_SHOT_KINDS = {PromptKind.ZERO_SHOT, PromptKind.ZERO_SHOT_GLOSSARY_TERMS}

_TRANSLATION_KINDS = {k for k in PromptKind if k is not PromptKind.TERM_EXTRACTION}


class PipelineError(RuntimeError):
    """Terminal pipeline failure, tagged with the stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class StrategySpec:
    """A named combination of prompt kind, retrieval depth, and side inputs.

    The fields must agree with the kind: MT modes only with the MT kinds,
    term sources only with the terms kinds, top_k 0 for zero-shot kinds.
    """

    kind: PromptKind
    generation: GenerationConfig
    top_k: int = 5
    term_source: str = "none"  # none | fuzzy_terms | glossary
    max_terms: int = 5
    mt_mode: str = "none"  # none | new_only | all
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    postprocess_mode: str = "stop_newline"
    seed: int = 0  # only read by FewShotRandom
    extraction_count: int = 5
    separator: str = "="
    display_names: dict[str, str] | None = None

    def __post_init__(self) -> None:
        kind = self.kind
        if kind not in _TRANSLATION_KINDS:
            raise ValueError(f"{kind.value} is not a translation strategy")
        expected_mt = {
            PromptKind.FEW_SHOT_FUZZY_NEW_MT: "new_only",
            PromptKind.FEW_SHOT_FUZZY_ALL_MT: "all",
        }.get(kind, "none")
        if self.mt_mode != expected_mt:
            raise ValueError(
                f"kind {kind.value} requires mt_mode={expected_mt!r},"
                f" got {self.mt_mode!r}"
            )
        expected_terms = {
            PromptKind.FEW_SHOT_FUZZY_TERMS: "fuzzy_terms",
            PromptKind.FEW_SHOT_GLOSSARY_TERMS: "glossary",
            PromptKind.ZERO_SHOT_GLOSSARY_TERMS: "glossary",
        }.get(kind, "none")
        if self.term_source != expected_terms:
            raise ValueError(
                f"kind {kind.value} requires term_source={expected_terms!r},"
                f" got {self.term_source!r}"
            )
        if kind in _ZERO_SHOT_KINDS:
            if self.top_k != 0:
                raise ValueError(f"kind {kind.value} requires top_k=0")
        elif self.top_k < 1:
            raise ValueError(f"kind {kind.value} requires top_k >= 1")
        if self.term_source != "none" and self.max_terms < 1:
            raise ValueError("max_terms must be >= 1 when terms are used")


@dataclass
class TranslationResult:
    """One translated segment with everything needed to audit it."""

    source: str
    output: str
    prompt_used: str
    request: PromptRequest
    matches_used: list[tuple[int, float]]
    terms_used: list[TermPair]
    mt_used: str | None
    provider: str
    seconds: float
    warnings: list[str] = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        req = self.request
        return {
            "schema": RESULTS_SCHEMA_VERSION,
            "source": self.source,
            "output": self.output,
            "prompt": self.prompt_used,
            "kind": req.kind.value,
            "source_lang": req.lang.source_lang,
            "target_lang": req.lang.target_lang,
            "matches": [
                {
                    "id": m.pair.id,
                    "score": m.score,
                    "source": m.pair.source,
                    "target": m.pair.target,
                }
                for m in req.matches
            ],
            "terms": [{"source": t.source, "target": t.target} for t in self.terms_used],
            "mt": self.mt_used,
            "mt_matches": req.mt_matches,
            "provider": self.provider,
            "seconds": round(self.seconds, 6),
            "warnings": self.warnings,
            "error": self.error,
        }


def write_results(results: list[TranslationResult], path: str) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_dict(), ensure_ascii=False) + "\n")
    return len(results)


class TranslationPipeline:
    """Binds a TM, its index, and the providers into the strategy runner.

    approve() gives read-your-writes: the new pair is searchable before the
    call returns. Index swaps are atomic (plain reference assignment under
    a lock), so a concurrent run keeps its own snapshot untouched.
    """

    def __init__(
        self,
        tm: TranslationMemory,
        provider,
        mt_provider=None,
        glossary: Glossary | None = None,
    ):
        self.tm = tm
        self.provider = provider
        self.mt_provider = mt_provider
        self.glossary = glossary
        self._index: TMIndex | None = TMIndex.build(tm) if len(tm) else None
        self._lock = threading.Lock()

    @property
    def provider_name(self) -> str:
        return getattr(self.provider, "name", type(self.provider).__name__)

    def index(self) -> TMIndex:
        if not self.tm.pairs:
            raise PipelineError("retrieval", "translation memory is empty")
        if self._index is None or len(self._index) != len(self.tm.pairs):
            with self._lock:
                if self._index is None:
                    self._index = TMIndex.build(self.tm)
                elif len(self._index) != len(self.tm.pairs):
                    self._index = self._index.extended(
                        self.tm.pairs[len(self._index.pairs) :]
                    )
        if self._index is None:
            raise PipelineError("retrieval", "translation memory is empty")
        return self._index

    def approve(self, source: str, target: str) -> SegmentPair:
        """Store an approved pair and make it immediately retrievable."""
        with self._lock:
            pair = self.tm.approve(source, target)
            if self._index is None:
                self._index = TMIndex.build(self.tm)
            elif len(self._index) != len(self.tm.pairs):
                self._index = self._index.extended(
                    self.tm.pairs[len(self._index.pairs) :]
                )
        return pair

    # ------------------------------------------------------------------
    # Single-segment entry points
    # ------------------------------------------------------------------

    def translate(
        self,
        source: str,
        strategy: StrategySpec,
        self_id: int | None = None,
        self_exclusion: bool = False,
    ) -> TranslationResult:
        prepared = self._prepare(source, strategy, self_id, self_exclusion)
        return self._complete_prepared([prepared], strategy)[0]

    def translate_many(
        self,
        sources: list[str],
        strategy: StrategySpec,
    ) -> list[TranslationResult]:
        """Translate arbitrary new sources against the TM, order preserved."""
        index = self.index()
        rng = random.Random(strategy.seed)
        prepared = []
        for source in sources:
            random_matches = None
            if strategy.kind is PromptKind.FEW_SHOT_RANDOM:
                random_matches = _draw_random(index, rng, strategy.top_k, exclude=None)
            prepared.append(
                self._prepare(
                    source, strategy, None, False,
                    random_matches=random_matches, index=index,
                )
            )
        return self._complete_prepared(prepared, strategy)

    def translate_random_context(
        self,
        source: str,
        k: int,
        seed: int,
        generation: GenerationConfig,
        budget: BudgetConfig | None = None,
        postprocess_mode: str = "stop_newline",
    ) -> TranslationResult:
        """Few-shot with k uniformly drawn examples; same seed, same draw.

        The sampler is random.Random(seed).sample over TM row positions, in
        draw order. k=0 renders the zero-shot layout.
        """
        index = self.index()
        if k > len(index):
            raise PipelineError(
                "retrieval", f"k={k} exceeds TM size {len(index)}"
            )
        rng = random.Random(seed)
        matches = _draw_random(index, rng, k, exclude=None)
        strategy = StrategySpec(
            kind=PromptKind.FEW_SHOT_RANDOM if k else PromptKind.ZERO_SHOT,
            generation=generation,
            top_k=k if k else 0,
            budget=budget or BudgetConfig(),
            postprocess_mode=postprocess_mode,
            seed=seed,
        )
        prepared = self._prepare(
            source, strategy, None, False, random_matches=matches
        )
        return self._complete_prepared([prepared], strategy)[0]

    # ------------------------------------------------------------------
    # Dataset runs
    # ------------------------------------------------------------------

    def run_experiment(
        self,
        strategy: StrategySpec,
        self_exclusion: bool = True,
    ) -> list[TranslationResult]:
        """Translate every TM segment with the strategy, order preserved.

        Per-segment failures are recorded on their results; the run always
        yields one result per segment. TM writes during a run are not
        supported (the run works on its own index snapshot).
        """
        index = self.index()
        pairs = index.pairs
        rng = random.Random(strategy.seed)

        mt_all: list[str | None] | None = None
        if strategy.mt_mode != "none":
            if self.mt_provider is None:
                raise PipelineError("mt", "strategy needs an MT provider")
            mt_all = mt_translate([p.source for p in pairs], self.mt_provider)

        prepared = []
        for pos, pair in enumerate(pairs):
            random_matches = None
            if strategy.kind is PromptKind.FEW_SHOT_RANDOM:
                random_matches = _draw_random(
                    index, rng, strategy.top_k, exclude=pos if self_exclusion else None
                )
            prepared.append(
                self._prepare(
                    pair.source,
                    strategy,
                    self_id=pair.id if self_exclusion else None,
                    self_exclusion=self_exclusion,
                    random_matches=random_matches,
                    mt_precomputed=mt_all[pos] if mt_all is not None else None,
                    index=index,
                )
            )
        results = self._complete_prepared(prepared, strategy)
        failures = sum(1 for r in results if r.error)
        logger.info(
            "experiment complete: %d segments, %d failures, strategy=%s",
            len(results),
            failures,
            strategy.kind.value,
        )
        return results

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    def _prepare(
        self,
        source: str,
        strategy: StrategySpec,
        self_id: int | None,
        self_exclusion: bool,
        random_matches: list[FuzzyMatch] | None = None,
        mt_precomputed: str | None = None,
        index: TMIndex | None = None,
    ) -> tuple[FitResult, list[str], str | None]:
        """Retrieve, gather terms and MT, fit the budget, render nothing yet."""
        warnings: list[str] = []
        kind = strategy.kind

        if random_matches is not None:
            matches = random_matches
        elif kind in _ZERO_SHOT_KINDS:
            matches = []
        else:
            cfg = RetrievalConfig(
                top_k=strategy.top_k, exclude_exact_self=self_exclusion
            )
            matches = (index or self.index()).retrieve(source, cfg, self_id=self_id)

        terms: list[TermPair] = []
        match_term_lists: list[list[TermPair]] | None = None
        if strategy.term_source == "glossary":
            kind, terms, match_term_lists = self._glossary_terms(
                source, kind, matches, strategy, warnings
            )
        elif strategy.term_source == "fuzzy_terms":
            kind, terms, match_term_lists = self._fuzzy_terms(
                source, kind, matches, strategy, warnings
            )

        mt_new: str | None = None
        mt_matches: list[str] | None = None
        if strategy.mt_mode != "none":
            kind, mt_new, mt_matches = self._mt_inputs(
                source, kind, matches, strategy, warnings, mt_precomputed
            )

        request = PromptRequest(
            kind=kind,
            lang=self.tm.lang,
            source=source,
            matches=matches,
            terms=terms,
            mt_new=mt_new,
            mt_matches=mt_matches,
            match_terms=match_term_lists,
            language_display_names=strategy.display_names,
        )
        fitted = fit(request, strategy.budget)
        if fitted.dropped_matches:
            warnings.append(
                f"dropped {len(fitted.dropped_matches)} lowest-scoring matches"
                " to fit the context window"
            )
        if fitted.dropped_terms:
            warnings.append(
                f"dropped {len(fitted.dropped_terms)} terms to fit the context window"
            )
        return fitted, warnings, mt_new

    def _glossary_terms(self, source, kind, matches, strategy, warnings):
        if self.glossary is None:
            raise PipelineError("terms", "strategy needs a compiled glossary")
        terms = match_terms(source, self.glossary, strategy.max_terms)
        if not terms:
            fallback = (
                PromptKind.ZERO_SHOT
                if kind is PromptKind.ZERO_SHOT_GLOSSARY_TERMS
                else PromptKind.FEW_SHOT_FUZZY
            )
            warnings.append(
                f"no glossary terms matched; fell back to {fallback.value}"
            )
            return fallback, [], None
        if kind is PromptKind.ZERO_SHOT_GLOSSARY_TERMS:
            return kind, terms, None
        per_match = [
            match_terms(m.pair.source, self.glossary, strategy.max_terms)
            for m in matches
        ]
        return kind, terms, per_match

    def _fuzzy_terms(self, source, kind, matches, strategy, warnings):
        """Terms mined from the fuzzy matches themselves via LLM extraction."""
        if not matches:
            warnings.append("no matches to extract terms from; fell back to few_shot_fuzzy")
            return PromptKind.FEW_SHOT_FUZZY, [], None
        extraction_cfg = replace(
            strategy.generation, temperature=EXTRACTION_TEMPERATURE, top_p=1.0, stop=None
        )
        try:
            raw = extract_terms_batch(
                [m.pair for m in matches],
                self.tm.lang,
                self.provider,
                extraction_cfg,
                n=strategy.extraction_count,
                separator=strategy.separator,
                display_names=strategy.display_names,
            )
        except GatewayError as exc:
            warnings.append(f"term extraction failed ({exc}); proceeding without terms")
            return PromptKind.FEW_SHOT_FUZZY, [], None

        per_match: list[list[TermPair]] = []
        all_parsed = []
        for match, lines in zip(matches, raw):
            parsed, malformed = parse_term_lines(
                lines, strategy.separator, match.pair.source, match.pair.target
            )
            if malformed:
                warnings.append(
                    f"{malformed} malformed term lines for match id {match.pair.id}"
                )
            per_match.append(
                _dedupe_terms(
                    TermPair(p.source, p.target) for p in parsed
                )[: strategy.max_terms]
            )
            all_parsed.extend(parsed)

        pool = compile_glossary(
            aggregate_candidates(all_parsed),
            GlossaryConfig(min_freq=1, max_terms_per_segment=strategy.max_terms),
        )
        terms = match_terms(source, pool, strategy.max_terms)
        if not terms:
            warnings.append(
                "extracted terms do not occur in the new source; rendering examples only"
            )
        return kind, terms, per_match

    def _mt_inputs(self, source, kind, matches, strategy, warnings, precomputed):
        if self.mt_provider is None:
            raise PipelineError("mt", "strategy needs an MT provider")
        needs_all = strategy.mt_mode == "all"
        if precomputed is not None and not needs_all:
            return kind, precomputed, None
        texts = [source] + ([m.pair.source for m in matches] if needs_all else [])
        translated = mt_translate(texts, self.mt_provider)
        if any(t is None for t in translated):
            warnings.append("mt provider unavailable; dropped MT lines")
            return PromptKind.FEW_SHOT_FUZZY, None, None
        if needs_all:
            return kind, translated[0], [t for t in translated[1:] if t is not None]
        return kind, translated[0], None

    def _complete_prepared(
        self,
        prepared: list[tuple[FitResult, list[str], str | None]],
        strategy: StrategySpec,
    ) -> list[TranslationResult]:
        t0 = time.monotonic()
        prompts = [render(item[0].request) for item in prepared]
        try:
            completions = complete_batch(prompts, strategy.generation, self.provider)
        except GatewayError as exc:
            raise PipelineError("gateway", str(exc)) from exc
        elapsed = time.monotonic() - t0

        results = []
        for (fitted, warn, mt_new), prompt, completion in zip(
            prepared, prompts, completions
        ):
            warn = list(warn)
            output = ""
            if completion.error is None:
                with pywarnings.catch_warnings():
                    pywarnings.simplefilter("ignore")
                    output = postprocess(completion, strategy.postprocess_mode)
                if not output:
                    warn.append("empty translation")
            results.append(
                TranslationResult(
                    source=fitted.request.source,
                    output=output,
                    prompt_used=prompt,
                    request=fitted.request,
                    matches_used=[
                        (m.pair.id, m.score) for m in fitted.request.matches
                    ],
                    terms_used=list(fitted.request.terms),
                    mt_used=mt_new,
                    provider=self.provider_name,
                    seconds=elapsed / len(prepared),
                    warnings=warn,
                    error=completion.error,
                )
            )
        return results


def _draw_random(
    index: TMIndex, rng: random.Random, k: int, exclude: int | None
) -> list[FuzzyMatch]:
    positions = range(len(index.pairs))
    pool = [i for i in positions if i != exclude] if exclude is not None else list(positions)
    drawn = rng.sample(pool, k)
    return [FuzzyMatch(pair=index.pairs[i], score=0.0) for i in drawn]


def _dedupe_terms(terms) -> list[TermPair]:
    seen = set()
    out = []
    for term in terms:
        key = (term.source.lower(), term.target.lower())
        if key in seen:
            continue
        seen.add(key)
        out.append(term)
    return out


def strategy_from_dict(
    body: dict,
    default_generation: GenerationConfig,
    display_names: dict[str, str] | None = None,
) -> StrategySpec:
    """Build a StrategySpec from a plain dict (service body, config block).

    term_source and mt_mode are implied by the kind; generation fields named
    in the dict override the defaults.
    """
    kind = PromptKind(body.get("kind", PromptKind.FEW_SHOT_FUZZY.value))
    generation = default_generation
    gen_overrides = {
        key: body[key]
        for key in ("model", "temperature", "top_p", "max_tokens", "stop")
        if key in body
    }
    if gen_overrides:
        generation = replace(generation, **gen_overrides)

    zero_shot = kind in (PromptKind.ZERO_SHOT, PromptKind.ZERO_SHOT_GLOSSARY_TERMS)
    term_source = {
        PromptKind.FEW_SHOT_FUZZY_TERMS: "fuzzy_terms",
        PromptKind.FEW_SHOT_GLOSSARY_TERMS: "glossary",
        PromptKind.ZERO_SHOT_GLOSSARY_TERMS: "glossary",
    }.get(kind, "none")
    mt_mode = {
        PromptKind.FEW_SHOT_FUZZY_NEW_MT: "new_only",
        PromptKind.FEW_SHOT_FUZZY_ALL_MT: "all",
    }.get(kind, "none")
    budget = BudgetConfig(context_limit=int(body.get("context_limit", 4097)))
    return StrategySpec(
        kind=kind,
        generation=generation,
        top_k=0 if zero_shot else int(body.get("top_k", 5)),
        term_source=term_source,
        max_terms=int(body.get("max_terms", 5)),
        mt_mode=mt_mode,
        budget=budget,
        postprocess_mode=body.get("postprocess", "stop_newline"),
        seed=int(body.get("seed", 0)),
        display_names=display_names,
    )

import json
import random

import pytest

from adaptmt.gateway import (
    Completion,
    EchoTopMatchProvider,
    GatewayError,
    GenerationConfig,
)
from adaptmt.languages import LanguagePair
from adaptmt.mt_bridge import FixtureMTProvider
from adaptmt.pipeline import (
    PipelineError,
    StrategySpec,
    TranslationPipeline,
    TranslationResult,
    strategy_from_dict,
    write_results,
)
from adaptmt.prompts import BudgetConfig, PromptKind, render
from adaptmt.terminology import Glossary, TermPair
from adaptmt.tm import TranslationMemory
from tests.conftest import make_tm

GEN = GenerationConfig(model="test-model")


def fuzzy_strategy(**kw):
    return StrategySpec(kind=PromptKind.FEW_SHOT_FUZZY, generation=GEN, **kw)


class ScriptedProvider:
    """Answers extraction prompts and translation prompts separately,
    recording the decoding temperature used for each."""

    name = "scripted"

    def __init__(self, extraction_line="1. viral load = carga viral",
                 translation="La carga viral está subiendo."):
        self.extraction_line = extraction_line
        self.translation = translation
        self.calls = []

    def complete_chunk(self, prompts, cfg):
        out = []
        for prompt in prompts:
            if "Extract" in prompt:
                self.calls.append(("extract", cfg.temperature))
                out.append(Completion(self.extraction_line, "stop"))
            else:
                self.calls.append(("translate", cfg.temperature))
                out.append(Completion(self.translation, "stop"))
        return out


class FailingProvider:
    name = "failing"

    def complete_chunk(self, prompts, cfg):
        raise GatewayError("provider down", status=503)


ES_ROWS = [
    ("The viral load is high.", "La carga viral es alta."),
    ("The viral load dropped.", "La carga viral bajó."),
    ("Wash your hands.", "Lávate las manos."),
]


def es_pipeline(provider, **kw):
    return TranslationPipeline(make_tm(ES_ROWS, tgt="es"), provider, **kw)


# -- the closed loop ----------------------------------------------------------

def test_translate_echoes_best_match_target():
    pipeline = es_pipeline(EchoTopMatchProvider())
    result = pipeline.translate("The viral load is high!", fuzzy_strategy(top_k=2))
    assert result.output == "La carga viral es alta."
    assert result.error is None
    assert result.matches_used[0][0] == 1


def test_approve_then_translate_returns_the_approval():
    pipeline = es_pipeline(EchoTopMatchProvider())
    pipeline.approve("Cover your mouth when coughing.", "Cúbrete la boca al toser.")
    result = pipeline.translate(
        "Cover your mouth when coughing.", fuzzy_strategy(top_k=1)
    )
    assert result.output == "Cúbrete la boca al toser."


def test_run_experiment_round_trips_every_segment():
    pipeline = es_pipeline(EchoTopMatchProvider())
    results = pipeline.run_experiment(fuzzy_strategy(top_k=1), self_exclusion=False)
    assert [r.output for r in results] == [target for _, target in ES_ROWS]
    assert all(r.error is None for r in results)


def test_run_experiment_self_exclusion_uses_the_twin():
    tm = make_tm(
        [
            ("wash your hands", "twin one"),
            ("wash your hands", "twin two"),
            ("unrelated sentence", "other"),
        ]
    )
    pipeline = TranslationPipeline(tm, EchoTopMatchProvider())
    results = pipeline.run_experiment(fuzzy_strategy(top_k=1), self_exclusion=True)
    assert results[0].output == "twin two"
    assert results[1].output == "twin one"
    for result in results:
        own_id = tm.pairs[results.index(result)].id
        assert own_id not in [pid for pid, _ in result.matches_used]


def test_run_experiment_on_empty_tm_fails_at_retrieval(en_ar):
    pipeline = TranslationPipeline(TranslationMemory(en_ar), EchoTopMatchProvider())
    with pytest.raises(PipelineError) as exc:
        pipeline.run_experiment(fuzzy_strategy())
    assert exc.value.stage == "retrieval"


def test_zero_shot_works_without_any_tm(en_ar):
    pipeline = TranslationPipeline(
        TranslationMemory(en_ar), ScriptedProvider(translation="مرحبا")
    )
    strategy = StrategySpec(kind=PromptKind.ZERO_SHOT, generation=GEN, top_k=0)
    result = pipeline.translate("Hello.", strategy)
    assert result.prompt_used == "English: Hello.\nArabic:"
    assert result.output == "مرحبا"


def test_direct_tm_writes_are_picked_up_lazily():
    pipeline = es_pipeline(EchoTopMatchProvider())
    pipeline.tm.add("A brand new sentence.", "Una frase nueva.", origin="approved")
    result = pipeline.translate("A brand new sentence.", fuzzy_strategy(top_k=1))
    assert result.output == "Una frase nueva."


# -- audit trail ----------------------------------------------------------------

def test_results_re_render_byte_identically():
    pipeline = es_pipeline(EchoTopMatchProvider())
    for strategy in (
        fuzzy_strategy(top_k=2),
        fuzzy_strategy(top_k=3, budget=BudgetConfig(context_limit=200)),
    ):
        result = pipeline.translate("The viral load is very high.", strategy)
        assert render(result.request) == result.prompt_used


def test_result_to_dict_schema():
    pipeline = es_pipeline(EchoTopMatchProvider())
    result = pipeline.translate("The viral load is high.", fuzzy_strategy(top_k=2))
    payload = result.to_dict()
    assert set(payload) == {
        "schema", "source", "output", "prompt", "kind", "source_lang",
        "target_lang", "matches", "terms", "mt", "mt_matches", "provider",
        "seconds", "warnings", "error",
    }
    assert payload["schema"] == 1
    assert payload["kind"] == "few_shot_fuzzy"
    assert payload["source_lang"] == "en"
    assert payload["target_lang"] == "es"
    assert payload["provider"] == "echo_top_match"
    assert len(payload["matches"]) == 2
    assert {"id", "score", "source", "target"} == set(payload["matches"][0])


def test_write_results_jsonl(tmp_path):
    pipeline = es_pipeline(EchoTopMatchProvider())
    results = pipeline.run_experiment(fuzzy_strategy(top_k=1), self_exclusion=False)
    path = tmp_path / "results.jsonl"
    assert write_results(results, str(path)) == 3
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    assert len(lines) == 3
    first = json.loads(lines[0])
    assert first["output"] == "La carga viral es alta."
    # non-ascii passes through unescaped
    assert "carga" in lines[0]


# -- budget degradation -----------------------------------------------------

def test_budget_overflow_drops_lowest_matches_with_warning():
    rows = [(f"sentence number {i} " + "filler " * 30, f"target {i}") for i in range(6)]
    pipeline = TranslationPipeline(make_tm(rows, tgt="es"), EchoTopMatchProvider())
    strategy = fuzzy_strategy(top_k=6, budget=BudgetConfig(context_limit=400))
    result = pipeline.translate("sentence number zero", strategy)
    assert 0 < len(result.matches_used) < 6
    assert any("lowest-scoring" in w for w in result.warnings)
    scores = [s for _, s in result.matches_used]
    assert scores == sorted(scores, reverse=True)


# -- terms strategies ---------------------------------------------------------

def glossary_es():
    return Glossary([TermPair("viral load", "carga viral", freq=3)])


def test_glossary_terms_strategy_renders_terms_lines():
    provider = ScriptedProvider()
    pipeline = es_pipeline(provider, glossary=glossary_es())
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_GLOSSARY_TERMS,
        generation=GEN,
        top_k=2,
        term_source="glossary",
    )
    result = pipeline.translate("The viral load is rising.", strategy)
    assert result.request.kind is PromptKind.FEW_SHOT_GLOSSARY_TERMS
    assert result.terms_used == [TermPair("viral load", "carga viral", freq=3)]
    lines = result.prompt_used.split("\n")
    assert lines.count("Terms: viral load = carga viral") == 3  # 2 examples + query
    assert render(result.request) == result.prompt_used


def test_zero_shot_glossary_terms():
    provider = ScriptedProvider()
    pipeline = es_pipeline(provider, glossary=glossary_es())
    strategy = StrategySpec(
        kind=PromptKind.ZERO_SHOT_GLOSSARY_TERMS,
        generation=GEN,
        top_k=0,
        term_source="glossary",
    )
    result = pipeline.translate("The viral load is rising.", strategy)
    assert result.prompt_used == (
        "Terms: viral load = carga viral\n"
        "English: The viral load is rising.\n"
        "Spanish:"
    )


def test_glossary_strategy_without_glossary_is_a_terms_error():
    pipeline = es_pipeline(ScriptedProvider())
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_GLOSSARY_TERMS,
        generation=GEN,
        top_k=2,
        term_source="glossary",
    )
    with pytest.raises(PipelineError) as exc:
        pipeline.translate("The viral load is rising.", strategy)
    assert exc.value.stage == "terms"


def test_glossary_miss_falls_back_to_plain_fuzzy():
    pipeline = es_pipeline(ScriptedProvider(), glossary=glossary_es())
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_GLOSSARY_TERMS,
        generation=GEN,
        top_k=2,
        term_source="glossary",
    )
    result = pipeline.translate("Nothing matches here.", strategy)
    assert result.request.kind is PromptKind.FEW_SHOT_FUZZY
    assert any("no glossary terms matched" in w for w in result.warnings)
    assert "Terms:" not in result.prompt_used


def test_fuzzy_terms_strategy_extracts_and_matches():
    provider = ScriptedProvider()
    pipeline = es_pipeline(provider)
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_FUZZY_TERMS,
        generation=GEN,
        top_k=2,
        term_source="fuzzy_terms",
    )
    result = pipeline.translate("The viral load is rising.", strategy)
    assert result.request.kind is PromptKind.FEW_SHOT_FUZZY_TERMS
    assert [t.source for t in result.terms_used] == ["viral load"]
    assert render(result.request) == result.prompt_used
    # extraction ran greedy; the translation kept the sampling temperature
    assert ("extract", 0.0) in provider.calls
    assert ("translate", 0.3) in provider.calls


def test_fuzzy_terms_extraction_miss_keeps_examples():
    provider = ScriptedProvider(extraction_line="1. unrelated term = términos")
    pipeline = es_pipeline(provider)
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_FUZZY_TERMS,
        generation=GEN,
        top_k=2,
        term_source="fuzzy_terms",
    )
    result = pipeline.translate("Something else entirely.", strategy)
    assert result.terms_used == []
    assert any("do not occur" in w for w in result.warnings)


# -- MT strategies ------------------------------------------------------------

def mt_fixture(extra=None):
    table = {source: f"MT<{source}>" for source, _ in ES_ROWS}
    table.update(extra or {})
    return FixtureMTProvider(table, LanguagePair("en", "es"))


def test_new_mt_strategy_adds_one_mt_line():
    provider = ScriptedProvider()
    query = "The viral load is rising."
    pipeline = es_pipeline(provider, mt_provider=mt_fixture({query: "MT<query>"}))
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_FUZZY_NEW_MT,
        generation=GEN,
        top_k=2,
        mt_mode="new_only",
    )
    result = pipeline.translate(query, strategy)
    lines = result.prompt_used.split("\n")
    assert lines.count("MT: MT<query>") == 1
    assert sum(1 for ln in lines if ln.startswith("MT: ")) == 1
    assert result.mt_used == "MT<query>"
    assert render(result.request) == result.prompt_used


def test_all_mt_strategy_adds_mt_lines_everywhere():
    provider = ScriptedProvider()
    query = "The viral load is rising."
    pipeline = es_pipeline(provider, mt_provider=mt_fixture({query: "MT<query>"}))
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_FUZZY_ALL_MT,
        generation=GEN,
        top_k=2,
        mt_mode="all",
    )
    result = pipeline.translate(query, strategy)
    lines = result.prompt_used.split("\n")
    assert sum(1 for ln in lines if ln.startswith("MT: ")) == 3
    assert render(result.request) == result.prompt_used


def test_mt_strategy_without_provider_is_an_mt_error():
    pipeline = es_pipeline(ScriptedProvider())
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_FUZZY_NEW_MT,
        generation=GEN,
        top_k=2,
        mt_mode="new_only",
    )
    with pytest.raises(PipelineError) as exc:
        pipeline.translate("The viral load is rising.", strategy)
    assert exc.value.stage == "mt"


def test_mt_outage_degrades_to_plain_fuzzy():
    pipeline = es_pipeline(
        ScriptedProvider(), mt_provider=FixtureMTProvider({}, LanguagePair("en", "es"))
    )
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_FUZZY_NEW_MT,
        generation=GEN,
        top_k=2,
        mt_mode="new_only",
    )
    result = pipeline.translate("The viral load is rising.", strategy)
    assert result.request.kind is PromptKind.FEW_SHOT_FUZZY
    assert "MT:" not in result.prompt_used
    assert any("mt provider unavailable" in w for w in result.warnings)


# -- random contexts ----------------------------------------------------------

def test_random_context_is_seed_deterministic():
    pipeline = es_pipeline(EchoTopMatchProvider())
    r1 = pipeline.translate_random_context("A new sentence.", k=2, seed=42, generation=GEN)
    r2 = pipeline.translate_random_context("A new sentence.", k=2, seed=42, generation=GEN)
    assert r1.prompt_used == r2.prompt_used


def test_random_context_draw_matches_the_seeded_sampler():
    pipeline = es_pipeline(EchoTopMatchProvider())
    result = pipeline.translate_random_context("A new sentence.", k=2, seed=7, generation=GEN)
    expected_positions = random.Random(7).sample([0, 1, 2], 2)
    expected_ids = [pipeline.tm.pairs[i].id for i in expected_positions]
    assert [pid for pid, _ in result.matches_used] == expected_ids
    assert all(score == 0.0 for _, score in result.matches_used)


def test_random_context_k_zero_is_zero_shot():
    pipeline = es_pipeline(ScriptedProvider())
    result = pipeline.translate_random_context("Hello there.", k=0, seed=1, generation=GEN)
    assert result.prompt_used == "English: Hello there.\nSpanish:"


def test_random_context_k_too_large_fails():
    pipeline = es_pipeline(EchoTopMatchProvider())
    with pytest.raises(PipelineError):
        pipeline.translate_random_context("x", k=99, seed=1, generation=GEN)


def test_translate_many_random_is_reproducible():
    pipeline = es_pipeline(EchoTopMatchProvider())
    strategy = StrategySpec(
        kind=PromptKind.FEW_SHOT_RANDOM, generation=GEN, top_k=2, seed=5
    )
    sources = ["First new text.", "Second new text."]
    first = [r.prompt_used for r in pipeline.translate_many(sources, strategy)]
    second = [r.prompt_used for r in pipeline.translate_many(sources, strategy)]
    assert first == second


# -- provider failure ----------------------------------------------------------

def test_provider_failure_lands_in_result_errors():
    pipeline = es_pipeline(FailingProvider())
    result = pipeline.translate("The viral load is high.", fuzzy_strategy(top_k=1))
    assert result.error is not None
    assert "provider down" in result.error
    assert result.output == ""


# -- strategy construction ------------------------------------------------------

def test_strategy_spec_rejects_inconsistent_fields():
    with pytest.raises(ValueError):
        StrategySpec(kind=PromptKind.TERM_EXTRACTION, generation=GEN)
    with pytest.raises(ValueError):
        StrategySpec(kind=PromptKind.FEW_SHOT_FUZZY, generation=GEN, mt_mode="all")
    with pytest.raises(ValueError):
        StrategySpec(kind=PromptKind.FEW_SHOT_FUZZY_NEW_MT, generation=GEN)
    with pytest.raises(ValueError):
        StrategySpec(kind=PromptKind.ZERO_SHOT, generation=GEN, top_k=3)
    with pytest.raises(ValueError):
        StrategySpec(kind=PromptKind.FEW_SHOT_GLOSSARY_TERMS, generation=GEN)


def test_strategy_from_dict_defaults():
    strategy = strategy_from_dict({}, GEN)
    assert strategy.kind is PromptKind.FEW_SHOT_FUZZY
    assert strategy.top_k == 5
    assert strategy.generation is GEN
    assert strategy.budget.context_limit == 4097


def test_strategy_from_dict_implies_modes_and_overrides_generation():
    strategy = strategy_from_dict(
        {
            "kind": "few_shot_fuzzy_new_mt",
            "top_k": 3,
            "temperature": 0.7,
            "stop": ["\n"],
            "context_limit": 2048,
        },
        GEN,
    )
    assert strategy.kind is PromptKind.FEW_SHOT_FUZZY_NEW_MT
    assert strategy.mt_mode == "new_only"
    assert strategy.top_k == 3
    assert strategy.generation.temperature == 0.7
    assert strategy.generation.stop == ["\n"]
    assert strategy.generation.model == "test-model"
    assert strategy.budget.context_limit == 2048


def test_strategy_from_dict_zero_shot_ignores_top_k():
    strategy = strategy_from_dict({"kind": "zero_shot", "top_k": 9}, GEN)
    assert strategy.top_k == 0


def test_strategy_from_dict_rejects_unknown_kind():
    with pytest.raises(ValueError):
        strategy_from_dict({"kind": "chain_of_thought"}, GEN)


def test_pipeline_error_message_carries_stage_tag():
    err = PipelineError("gateway", "boom")
    assert str(err) == "[gateway] boom"
    assert err.stage == "gateway"

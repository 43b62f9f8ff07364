"""Real-time adaptive machine translation.

Retrieves fuzzy matches from a translation memory, builds in-context
prompts (optionally augmented with external MT output and/or glossary
terms), sends them to a text-completion provider, and feeds approved
translations back into the memory so the very next suggestion already
reflects them.
"""

from adaptmt.languages import LanguagePair
from adaptmt.tm import SegmentPair, TranslationMemory, ingest
from adaptmt.retrieval import FuzzyMatch, RetrievalConfig, TMIndex
from adaptmt.prompts import BudgetConfig, PromptKind, PromptRequest, render
from adaptmt.gateway import GenerationConfig
from adaptmt.terminology import Glossary, GlossaryConfig, TermPair
from adaptmt.pipeline import StrategySpec, TranslationPipeline, TranslationResult

__version__ = "0.1.0"

__all__ = [
    "BudgetConfig",
    "FuzzyMatch",
    "GenerationConfig",
    "Glossary",
    "GlossaryConfig",
    "LanguagePair",
    "PromptKind",
    "PromptRequest",
    "RetrievalConfig",
    "SegmentPair",
    "StrategySpec",
    "TMIndex",
    "TermPair",
    "TranslationMemory",
    "TranslationPipeline",
    "TranslationResult",
    "ingest",
    "render",
]

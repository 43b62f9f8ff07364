"""Language pairs, output-length multipliers, and display names.

The length multiplier converts a source word count into an output token
budget: target-language tokens per English source word. Values for the
five supported targets were chosen empirically (Arabic tokenizes much
longer than Latin-script languages); unknown targets fall back to a
middle-of-the-road default.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# tokens-per-source-word budget factors, keyed by target language code
DEFAULT_LENGTH_MULTIPLIERS = {
    "ar": 8,
    "zh": 5,
    "rw": 5,
    "fr": 4,
    "es": 4,
}

# fallback for targets not in the table above
FALLBACK_LENGTH_MULTIPLIER = 5

# prompt templates address languages by display name, not code
DISPLAY_NAMES = {
    "ar": "Arabic",
    "de": "German",
    "en": "English",
    "es": "Spanish",
    "fr": "French",
    "it": "Italian",
    "ja": "Japanese",
    "ko": "Korean",
    "nl": "Dutch",
    "pt": "Portuguese",
    "ru": "Russian",
    "rw": "Kinyarwanda",
    "zh": "Chinese",
}

_LANG_CODE_RE = re.compile(r"^[A-Za-z]{2,3}(-[A-Za-z0-9]{1,8})*$")


class LanguageError(ValueError):
    """Invalid language code or pair."""


def validate_lang_code(code: str) -> str:
    if not code or not _LANG_CODE_RE.match(code):
        raise LanguageError(f"invalid language code: {code!r}")
    return code


def default_multiplier(target_lang: str) -> int:
    base = target_lang.split("-")[0].lower()
    return DEFAULT_LENGTH_MULTIPLIERS.get(base, FALLBACK_LENGTH_MULTIPLIER)


def display_name(code: str, names: dict[str, str] | None = None) -> str:
    """Display name for a language code, e.g. "en" -> "English".

    `names` overrides or extends the built-in table (prompt templates label
    lines with display names, so unknown codes must be configured here).
    """
    merged = dict(DISPLAY_NAMES)
    if names:
        merged.update(names)
    base = code.split("-")[0].lower()
    if code in merged:
        return merged[code]
    if base in merged:
        return merged[base]
    raise LanguageError(f"no display name configured for language {code!r}")


@dataclass(frozen=True)
class LanguagePair:
    """A translation direction plus its output-token budget factor."""

    source_lang: str
    target_lang: str
    length_multiplier: int = 0  # 0 means "resolve from the defaults table"

    def __post_init__(self) -> None:
        validate_lang_code(self.source_lang)
        validate_lang_code(self.target_lang)
        if self.source_lang.lower() == self.target_lang.lower():
            raise LanguageError(
                f"source and target language must differ: {self.source_lang!r}"
            )
        if self.length_multiplier == 0:
            object.__setattr__(
                self, "length_multiplier", default_multiplier(self.target_lang)
            )
        if self.length_multiplier < 1:
            raise LanguageError(
                f"length_multiplier must be >= 1, got {self.length_multiplier}"
            )

    def display_names(self, names: dict[str, str] | None = None) -> tuple[str, str]:
        """(source, target) display names, e.g. ("English", "Arabic")."""
        return (
            display_name(self.source_lang, names),
            display_name(self.target_lang, names),
        )

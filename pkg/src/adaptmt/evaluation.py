"""Corpus-level BLEU and chrF/chrF++ plus table-shaped reports.

IMPORTANT: these metrics use their own documented tokenization (BLEU splits
Unicode punctuation into standalone tokens; chrF works on whitespace-free
character n-grams, chrF++ adds whitespace-token word n-grams). Scores are
internally consistent across runs of this package but are NOT comparable to
published numbers produced with other tokenizers (spBLEU, sacrebleu
defaults, etc.). Reports repeat this warning.

BLEU here is standard corpus BLEU: modified n-gram precision up to 4-grams,
geometric mean, brevity penalty, with add-one smoothing on the n>1
precisions so tiny fixture corpora do not zero out.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass

NON_COMPARABILITY_WARNING = (
    "Scores use this package's built-in tokenization and are not comparable"
    " to numbers computed with other tokenizers or toolkits."
)


class EvaluationError(ValueError):
    """Misaligned or empty evaluation input."""


@dataclass(frozen=True)
class MetricScore:
    metric: str  # "bleu" | "chrf" | "chrf_pp"
    value: float
    n_segments: int
    params: dict

    def __post_init__(self) -> None:
        if not -1e-9 <= self.value <= 100.0 + 1e-9:
            raise EvaluationError(f"metric value out of range: {self.value}")


def _check_aligned(hyps: list[str], refs: list[str]) -> None:
    if not hyps or not refs:
        raise EvaluationError("hypotheses and references must be non-empty")
    if len(hyps) != len(refs):
        raise EvaluationError(
            f"length mismatch: {len(hyps)} hypotheses vs {len(refs)} references"
        )


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def bleu_tokenize(text: str) -> list[str]:
    """Whitespace tokens after isolating every Unicode punctuation character."""
    out: list[str] = []
    for ch in text:
        if unicodedata.category(ch).startswith("P"):
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return "".join(out).split()


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hyps: list[str], refs: list[str], max_n: int = 4) -> MetricScore:
    """Corpus BLEU in [0, 100]; identical corpora score exactly 100.0."""
    _check_aligned(hyps, refs)
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_tokens = bleu_tokenize(hyp)
        ref_tokens = bleu_tokenize(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_n + 1):
            hyp_counts = _ngram_counts(hyp_tokens, n)
            if not hyp_counts:
                continue
            ref_counts = _ngram_counts(ref_tokens, n)
            total[n - 1] += sum(hyp_counts.values())
            matched[n - 1] += sum(
                min(count, ref_counts[gram]) for gram, count in hyp_counts.items()
            )

    params = {
        "max_n": max_n,
        "smoothing": "add-one on n>1 precisions",
        "tokenization": "whitespace after Unicode punctuation splitting",
    }
    if hyp_len == 0 or matched[0] == 0:
        return MetricScore("bleu", 0.0, len(hyps), params)

    log_sum = math.log(matched[0] / total[0])
    for n in range(2, max_n + 1):
        log_sum += math.log((matched[n - 1] + 1) / (total[n - 1] + 1))
    precision_mean = math.exp(log_sum / max_n)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return MetricScore("bleu", 100.0 * bp * precision_mean, len(hyps), params)


# ---------------------------------------------------------------------------
# chrF / chrF++
# ---------------------------------------------------------------------------

def char_ngrams(text: str, n: int) -> Counter:
    """Character n-grams with all whitespace removed first."""
    squeezed = "".join(text.split())
    return Counter(squeezed[i : i + n] for i in range(len(squeezed) - n + 1))


def word_ngrams(text: str, n: int) -> Counter:
    tokens = text.split()
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def chrf(
    hyps: list[str],
    refs: list[str],
    char_n: int = 6,
    word_n: int = 0,
    beta: float = 2.0,
) -> MetricScore:
    """chrF (word_n=0) or chrF++ (word_n=2), corpus-aggregated.

    Per order: counts are summed over the corpus, then precision and recall
    are averaged across the orders where both sides produced n-grams, and
    combined with an F-beta (recall-weighted, beta=2).
    """
    _check_aligned(hyps, refs)
    orders: list[tuple[str, int]] = [("char", n) for n in range(1, char_n + 1)]
    orders += [("word", n) for n in range(1, word_n + 1)]

    totals = {key: [0, 0, 0] for key in orders}  # hyp, ref, matched
    for hyp, ref in zip(hyps, refs):
        for kind, n in orders:
            extractor = char_ngrams if kind == "char" else word_ngrams
            hyp_counts = extractor(hyp, n)
            ref_counts = extractor(ref, n)
            slot = totals[(kind, n)]
            slot[0] += sum(hyp_counts.values())
            slot[1] += sum(ref_counts.values())
            slot[2] += sum(
                min(count, ref_counts[gram]) for gram, count in hyp_counts.items()
            )

    avg_precision = 0.0
    avg_recall = 0.0
    effective = 0
    for key in orders:
        n_hyp, n_ref, n_match = totals[key]
        if n_hyp > 0 and n_ref > 0:
            avg_precision += n_match / n_hyp
            avg_recall += n_match / n_ref
            effective += 1

    metric = "chrf_pp" if word_n else "chrf"
    params = {"char_n": char_n, "word_n": word_n, "beta": beta}
    if effective == 0:
        return MetricScore(metric, 0.0, len(hyps), params)
    avg_precision /= effective
    avg_recall /= effective
    if avg_precision + avg_recall == 0.0:
        return MetricScore(metric, 0.0, len(hyps), params)
    beta_sq = beta * beta
    f_score = (
        (1 + beta_sq)
        * avg_precision
        * avg_recall
        / (beta_sq * avg_precision + avg_recall)
    )
    return MetricScore(metric, 100.0 * f_score, len(hyps), params)


def chrf_pp(hyps: list[str], refs: list[str]) -> MetricScore:
    return chrf(hyps, refs, word_n=2)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class ReportRow:
    run_label: str
    score: MetricScore


def report(
    runs: list[tuple[str, list[str]]], refs: list[str]
) -> list[ReportRow]:
    """Score each labeled hypothesis set with all three metrics."""
    rows = []
    for label, hyps in runs:
        _check_aligned(hyps, refs)
        rows.append(ReportRow(label, corpus_bleu(hyps, refs)))
        rows.append(ReportRow(label, chrf(hyps, refs)))
        rows.append(ReportRow(label, chrf_pp(hyps, refs)))
    return rows


def report_csv(rows: list[ReportRow]) -> str:
    """CSV: run_label, metric, value, n_segments, params."""
    lines = ["run_label,metric,value,n_segments,params"]
    for row in rows:
        params = ";".join(f"{k}={v}" for k, v in sorted(row.score.params.items()))
        lines.append(
            f"{row.run_label},{row.score.metric},{row.score.value:.4f},"
            f"{row.score.n_segments},{params}"
        )
    return "\n".join(lines) + "\n"


def report_table(rows: list[ReportRow]) -> str:
    """Human-readable table, one run per line, metrics as columns."""
    by_run: dict[str, dict[str, float]] = {}
    n_segments = 0
    for row in rows:
        by_run.setdefault(row.run_label, {})[row.score.metric] = row.score.value
        n_segments = row.score.n_segments
    label_width = max([len("run")] + [len(label) for label in by_run])
    lines = [
        f"NOTE: {NON_COMPARABILITY_WARNING}",
        "",
        f"{'run':<{label_width}}  {'BLEU':>8}  {'chrF':>8}  {'chrF++':>8}"
        f"  (n={n_segments})",
    ]
    for label, metrics in by_run.items():
        lines.append(
            f"{label:<{label_width}}"
            f"  {metrics.get('bleu', float('nan')):>8.2f}"
            f"  {metrics.get('chrf', float('nan')):>8.2f}"
            f"  {metrics.get('chrf_pp', float('nan')):>8.2f}"
        )
    return "\n".join(lines) + "\n"

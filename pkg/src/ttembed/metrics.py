"""Perplexity bookkeeping over externally supplied token log-probabilities.

No language model runs here: callers score their own text and hand over
natural-log conditional probabilities, one per token.  Perplexity is the
inverse probability product taken literally, with no per-token exponent;
an explicit ``normalized`` flag divides by sequence length for callers who
want the conventional per-token quantity.

Text input format: one float per line (natural log, each <= 0), ``#``
starts a comment line, a blank line separates sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True)
class ScoredSequence:
    """Natural-log conditional probabilities for one token sequence."""

    logps: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "logps", tuple(float(v) for v in self.logps))
        if len(self.logps) < 1:
            raise ValueError("a scored sequence needs at least one token")
        for i, lp in enumerate(self.logps):
            if math.isnan(lp) or lp == math.inf:
                raise ValueError(f"logp at position {i} is not finite: {lp}")
            if lp == -math.inf:
                raise ValueError(
                    f"logp at position {i} is -inf (probability zero); clamp "
                    "upstream to a finite floor if that is intended"
                )
            if lp > 0.0:
                raise ValueError(
                    f"logp at position {i} is {lp} > 0; probabilities cannot exceed 1"
                )

    def __len__(self) -> int:
        return len(self.logps)


def log_perplexity(s: ScoredSequence, normalized: bool = False) -> float:
    """Negative sum of log-probabilities; per token when ``normalized``."""
    total = -math.fsum(s.logps)
    return total / len(s) if normalized else total


def perplexity(s: ScoredSequence, normalized: bool = False) -> float:
    """Inverse probability product; overflow reports infinity."""
    lp = log_perplexity(s, normalized=normalized)
    try:
        return math.exp(lp)
    except OverflowError:
        return math.inf


def delta_log_perplexity(base: ScoredSequence, cmpr: ScoredSequence) -> float:
    """Log-perplexity shift from base to compressed; positive means worse."""
    if len(base) != len(cmpr):
        raise ValueError(
            f"sequence lengths differ: base {len(base)}, compressed {len(cmpr)}"
        )
    return log_perplexity(cmpr) - log_perplexity(base)


# ---------------------------------------------------------------------------
# Text input


def parse_logp_text(text: str) -> list[ScoredSequence]:
    """Parse the one-logp-per-line format into sequences."""
    sequences: list[ScoredSequence] = []
    current: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            if current:
                sequences.append(ScoredSequence(tuple(current)))
                current = []
            continue
        try:
            value = float(line)
        except ValueError:
            raise ValueError(f"line {lineno}: not a number: {line!r}") from None
        current.append(value)
    if current:
        sequences.append(ScoredSequence(tuple(current)))
    if not sequences:
        raise ValueError("no token log-probabilities found")
    return sequences


def read_logp_file(path: str | Path) -> list[ScoredSequence]:
    return parse_logp_text(Path(path).read_text())


# ---------------------------------------------------------------------------
# Report helpers


def _seq_entry(s: ScoredSequence, normalized: bool) -> dict:
    return {
        "n_tokens": len(s),
        "ppl": perplexity(s, normalized=normalized),
        "ln_ppl": log_perplexity(s, normalized=normalized),
    }


def sequence_report(seqs: Sequence[ScoredSequence], normalized: bool = False) -> dict:
    """Per-sequence results plus the aggregate over the concatenation."""
    if not seqs:
        raise ValueError("no sequences to report on")
    merged = ScoredSequence(tuple(lp for s in seqs for lp in s.logps))
    return {
        "normalized": normalized,
        "sequences": [_seq_entry(s, normalized) for s in seqs],
        "aggregate": _seq_entry(merged, normalized),
    }


def delta_report(
    base: Sequence[ScoredSequence], cmpr: Sequence[ScoredSequence]
) -> dict:
    """Per-sequence and aggregate log-perplexity deltas."""
    if len(base) != len(cmpr):
        raise ValueError(
            f"sequence counts differ: base {len(base)}, compressed {len(cmpr)}"
        )
    entries = []
    for i, (b, c) in enumerate(zip(base, cmpr)):
        if len(b) != len(c):
            raise ValueError(
                f"sequence {i}: lengths differ (base {len(b)}, compressed {len(c)})"
            )
        entries.append({"n_tokens": len(b), "delta_ln_ppl": delta_log_perplexity(b, c)})
    merged_base = ScoredSequence(tuple(lp for s in base for lp in s.logps))
    merged_cmpr = ScoredSequence(tuple(lp for s in cmpr for lp in s.logps))
    return {
        "sequences": entries,
        "aggregate": {
            "n_tokens": len(merged_base),
            "delta_ln_ppl": delta_log_perplexity(merged_base, merged_cmpr),
        },
    }

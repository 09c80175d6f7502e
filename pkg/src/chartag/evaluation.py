"""Tag error rates and comparison tables.

Correctness is whole-string match on the tag for the configured tag set;
gold tags that never occurred in training are automatic errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP

TAGSET_ORDER = {"pos": 0, "morph": 1, "posmorph": 2}


@dataclass
class EvalReport:
    tagset: str
    token_count: int
    error_count: int
    confusion: dict | None = None  # (gold, predicted) -> count

    @property
    def error_rate(self):
        return 100.0 * self.error_count / self.token_count


def format_percent(value):
    """Two decimals, round half up: 8.715 -> '8.72'."""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.01"),
                                                    rounding=ROUND_HALF_UP))


def error_rate(pred_ids, gold_tags, tag_vocab, tagset, confusion=False):
    """Token-level error rate of predicted tag ids against gold strings.

    Args:
        pred_ids: per sentence, a list of predicted tag ids.
        gold_tags: per sentence, the gold tag strings.
        tag_vocab: the training tag inventory (id -> string).
        tagset: label recorded in the report.
        confusion: also collect (gold, predicted) counts.
    """
    if len(pred_ids) != len(gold_tags):
        raise ValueError("prediction/gold sentence counts differ")
    tokens = 0
    errors = 0
    pairs = {} if confusion else None
    for sent_pred, sent_gold in zip(pred_ids, gold_tags):
        if len(sent_pred) != len(sent_gold):
            raise ValueError("prediction/gold lengths differ within a sentence")
        for pid, gold in zip(sent_pred, sent_gold):
            tokens += 1
            predicted = tag_vocab.symbol(pid)
            wrong = gold not in tag_vocab or predicted != gold
            if wrong:
                errors += 1
            if pairs is not None and wrong:
                pairs[(gold, predicted)] = pairs.get((gold, predicted), 0) + 1
    if tokens == 0:
        raise ValueError("no tokens to evaluate")
    return EvalReport(tagset=tagset, token_count=tokens, error_count=errors,
                      confusion=pairs)


def report_table(reports):
    """Render reports as (text, csv); rows ordered POS, MORPH, POSMORPH."""
    rows = sorted(reports, key=lambda r: TAGSET_ORDER.get(r.tagset, 99))
    header = f"{'tagset':<10} {'tokens':>8} {'errors':>8} {'error_rate':>10}"
    lines = [header, "-" * len(header)]
    csv_lines = ["tagset,tokens,errors,error_rate"]
    for r in rows:
        rate = format_percent(r.error_rate)
        lines.append(f"{r.tagset:<10} {r.token_count:>8} {r.error_count:>8} {rate:>9}%")
        csv_lines.append(f"{r.tagset},{r.token_count},{r.error_count},{rate}")
    return "\n".join(lines) + "\n", "\n".join(csv_lines) + "\n"

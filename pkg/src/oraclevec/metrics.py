"""Layout grounding and caption metrics: IoU, mIoU, BLEU-4, component-count accuracy."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ArgumentError, OracleVecError, ParseError
from .layout import LayoutAnnotation, layout_from_dict

log = logging.getLogger(__name__)


def _check_box(box) -> tuple[float, float, float, float]:
    try:
        x0, y0, x1, y1 = (float(v) for v in box)
    except (TypeError, ValueError):
        raise ArgumentError(f"box must be 4 numbers, got {box!r}") from None
    if not (x0 < x1 and y0 < y1):
        raise ArgumentError(f"box {list(box)} needs x_tl < x_br and y_tl < y_br")
    return x0, y0, x1, y1


def iou(a, b) -> float:
    """Intersection over union of two axis-aligned boxes ``[x_tl, y_tl, x_br, y_br]``."""
    ax0, ay0, ax1, ay1 = _check_box(a)
    bx0, by0, bx1, by1 = _check_box(b)
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def miou(pred: LayoutAnnotation, gt: LayoutAnnotation) -> float:
    """Mean over ground-truth components of the IoU with the matched prediction.

    Components match by label; repeated labels are paired greedily by
    descending IoU. Unmatched ground-truth components score 0.
    """
    if not gt.components:
        raise ArgumentError("mIoU needs at least one ground-truth component")
    total = 0.0
    for label in dict.fromkeys(c.label for c in gt.components):
        g = [c.box for c in gt.components if c.label == label]
        p = [c.box for c in pred.components if c.label == label]
        pairs = sorted(((iou(gb, pb), gi, pi) for gi, gb in enumerate(g) for pi, pb in enumerate(p)),
                       key=lambda t: (-t[0], t[1], t[2]))
        used_g, used_p = set(), set()
        for v, gi, pi in pairs:
            if gi in used_g or pi in used_p:
                continue
            used_g.add(gi)
            used_p.add(pi)
            total += v
    return total / len(gt.components)


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_precisions(candidate, references) -> list[tuple[int, int]]:
    """Clipped matches and candidate n-gram totals for n = 1..4."""
    out = []
    for n in range(1, 5):
        cand = _ngrams(candidate, n)
        best: Counter = Counter()
        for ref in references:
            for gram, k in _ngrams(ref, n).items():
                best[gram] = max(best[gram], k)
        clipped = sum(min(k, best[gram]) for gram, k in cand.items())
        out.append((clipped, max(len(candidate) - n + 1, 0)))
    return out


def bleu4(candidate, references) -> float:
    """Sentence BLEU with uniform 1-4-gram weights, brevity penalty and no smoothing."""
    candidate = list(candidate)
    references = [list(r) for r in references]
    if not references:
        raise ArgumentError("BLEU needs at least one reference")
    if not candidate:
        log.warning("empty candidate scores 0")
        return 0.0
    precisions = bleu_precisions(candidate, references)
    if any(m == 0 for m, _ in precisions):
        return 0.0
    c = len(candidate)
    r = min((len(ref) for ref in references), key=lambda n: (abs(n - c), n))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(math.log(m / t) for m, t in precisions) / 4.0)


def count_accuracy(pred_counts, gt_counts) -> float:
    """Fraction of samples whose predicted component count equals the ground truth."""
    pred_counts, gt_counts = list(pred_counts), list(gt_counts)
    if len(pred_counts) != len(gt_counts):
        raise ArgumentError(f"count lists differ in length: {len(pred_counts)} vs {len(gt_counts)}")
    if not gt_counts:
        raise ArgumentError("count accuracy needs at least one sample")
    return sum(int(p) == int(g) for p, g in zip(pred_counts, gt_counts)) / len(gt_counts)


# --------------------------------------------------------------------------
# Batch evaluation

@dataclass
class EvalReport:
    """Per-sample scores, their means, and skipped-sample bookkeeping."""

    samples: list[dict] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    flags: dict[str, int] = field(default_factory=dict)
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def metrics(self) -> list[str]:
        keys: list[str] = []
        for s in self.samples:
            for k, v in s.items():
                if k != "index" and isinstance(v, (int, float)) and not isinstance(v, bool) and k not in keys:
                    keys.append(k)
        return keys

    @property
    def aggregate(self) -> dict[str, float]:
        out = {}
        for k in self.metrics:
            vals = [s[k] for s in self.samples if k in s]
            out[k] = math.fsum(vals) / len(vals)
        out.update(self.extra)
        return out

    def to_dict(self) -> dict:
        return {
            "aggregate": self.aggregate,
            "n_samples": len(self.samples),
            "n_skipped": len(self.skipped),
            "flags": dict(self.flags),
            "samples": self.samples,
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["index", *self.metrics]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for s in self.samples:
            writer.writerow([s.get(c, "") if c == "index" else repr(float(s[c])) if c in s else ""
                             for c in cols])
        return buf.getvalue()


def read_jsonl(path: str | Path) -> list[tuple[int, object]]:
    """Records with their 1-based line numbers; blank lines are ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror})") from None
    out = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append((n, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
    return out


def evaluate_layouts(records) -> EvalReport:
    """mIoU and count agreement for ``{"pred": layout, "gt": layout}`` records."""
    report = EvalReport()
    pred_counts, gt_counts = [], []
    for index, rec in records:
        try:
            if not isinstance(rec, dict) or "pred" not in rec or "gt" not in rec:
                raise ParseError("record needs 'pred' and 'gt' layouts")
            pred = layout_from_dict(rec["pred"], "pred")
            gt = layout_from_dict(rec["gt"], "gt")
            score = miou(pred, gt)
        except OracleVecError as exc:
            report.skipped.append({"index": index, "reason": str(exc)})
            continue
        pred_counts.append(len(pred.components))
        gt_counts.append(len(gt.components))
        report.samples.append({"index": index, "miou": score,
                               "count_match": float(len(pred.components) == len(gt.components))})
    if report.samples:
        report.extra["count_accuracy"] = count_accuracy(pred_counts, gt_counts)
    return report


def _tokens(value, where: str) -> list[str]:
    if isinstance(value, str):
        return value.split()
    if isinstance(value, list) and all(isinstance(t, str) for t in value):
        return value
    raise ParseError(f"{where} must be a string or a list of tokens")


def evaluate_captions(records) -> EvalReport:
    """BLEU-4 for ``{"candidate": tokens, "references": [tokens, ...]}`` records.

    Strings are split on whitespace; token lists are used as given.
    """
    report = EvalReport(flags={"zero_precision": 0, "empty_candidate": 0})
    for index, rec in records:
        try:
            if not isinstance(rec, dict) or "candidate" not in rec or "references" not in rec:
                raise ParseError("record needs 'candidate' and 'references'")
            refs = rec["references"]
            if not isinstance(refs, list) or not refs:
                raise ParseError("'references' must be a non-empty list")
            cand = _tokens(rec["candidate"], "candidate")
            refs = [_tokens(r, "reference") for r in refs]
            score = bleu4(cand, refs)
        except OracleVecError as exc:
            report.skipped.append({"index": index, "reason": str(exc)})
            continue
        sample = {"index": index, "bleu4": score}
        if not cand:
            report.flags["empty_candidate"] += 1
            sample["flag"] = "empty_candidate"
        elif any(m == 0 for m, _ in bleu_precisions(cand, refs)):
            report.flags["zero_precision"] += 1
            sample["flag"] = "zero_precision"
        report.samples.append(sample)
    return report

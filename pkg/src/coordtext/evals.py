"""Scoring of model responses against ground truth, one scorer per task family.

All scorers share the same shape: a list of dataset records, a mapping of
item id to response text, and a MetricsReport out, plus per-item records for
exact recounting. Missing responses score as incorrect and are tallied, never
dropped. Aggregation is order-independent.
"""

import string
from collections import Counter
from dataclasses import dataclass, field

from .meteor import score_meteor
from .prompts import HALLUCINATION, OPPOSITE_KEYWORD, parse_response

BOOLEAN_TASKS = ("spatial", "vqa", "hallucination")


@dataclass(frozen=True)
class EvalRecord:
    item_id: str
    task: str
    gt: str
    response: str
    correct: bool | None = None
    score: float | None = None
    missing: bool = False

    def __post_init__(self):
        if (self.correct is None) == (self.score is None):
            raise ValueError("exactly one of correct/score must be set")

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "task": self.task,
            "gt": self.gt,
            "response": self.response,
            "correct": self.correct,
            "score": self.score,
            "missing": self.missing,
        }


@dataclass
class MetricsReport:
    task: str
    n: int
    accuracy: float | None = None
    per_split: dict = field(default_factory=dict)
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    yes_ratio: float | None = None
    meteor_mean: float | None = None
    missing: int = 0
    flags: dict = field(default_factory=dict)
    config_digest: str | None = None
    dataset_digest: str | None = None

    def to_dict(self) -> dict:
        out = {
            "task": self.task,
            "n": self.n,
            "accuracy": self.accuracy,
            "per_split": dict(sorted(self.per_split.items())),
            "missing": self.missing,
            "flags": dict(sorted(self.flags.items())),
        }
        for name in ("precision", "recall", "f1", "yes_ratio", "meteor_mean", "config_digest", "dataset_digest"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


def _normalize(text: str) -> str:
    return text.lower().strip().rstrip(string.punctuation + " ")


def _sorted_records(records, responses) -> list[tuple[dict, str | None]]:
    paired = [(rec, responses.get(rec["sample_id"])) for rec in records]
    return sorted(paired, key=lambda pair: pair[0]["sample_id"])


def score_spatial(records, responses: dict, strict: bool = True) -> tuple[MetricsReport, list[EvalRecord]]:
    """Side-question accuracy: the ground-truth keyword must appear in the response.

    In strict mode (default) the opposing keyword must also be absent; with
    strict=False bare containment decides, matching the original protocol.
    Reports overall accuracy plus one split per ground-truth keyword.
    """
    items: list[EvalRecord] = []
    split_total: Counter = Counter()
    split_hit: Counter = Counter()
    missing = 0
    for rec, response in _sorted_records(records, responses):
        gt = rec["gt_keyword"]
        if response is None:
            missing += 1
            correct = False
            response_text = ""
        else:
            response_text = response
            lowered = response.lower()
            correct = gt in lowered
            if strict and OPPOSITE_KEYWORD[gt] in lowered:
                correct = False
        split_total[gt] += 1
        split_hit[gt] += correct
        items.append(
            EvalRecord(rec["sample_id"], "spatial", gt, response_text, correct=correct, missing=response is None)
        )
    report = MetricsReport(
        task="spatial",
        n=len(items),
        accuracy=(sum(split_hit.values()) / len(items)) if items else None,
        per_split={kw: split_hit[kw] / total for kw, total in split_total.items()},
        missing=missing,
        flags={"mode": "strict" if strict else "containment"},
    )
    return report, items


def score_keyword_vqa(records, responses: dict) -> tuple[MetricsReport, list[EvalRecord]]:
    """Top-1 accuracy by containment of the normalized answer in the response."""
    items: list[EvalRecord] = []
    missing = 0
    for rec, response in _sorted_records(records, responses):
        gt = rec["target"]
        if response is None:
            missing += 1
            correct = False
            response_text = ""
        else:
            response_text = response
            correct = _normalize(gt) in _normalize(response)
        items.append(
            EvalRecord(rec["sample_id"], "vqa", gt, response_text, correct=correct, missing=response is None)
        )
    report = MetricsReport(
        task="vqa",
        n=len(items),
        accuracy=(sum(r.correct for r in items) / len(items)) if items else None,
        missing=missing,
        flags={"normalization": "lowercase, strip terminal punctuation"},
    )
    return report, items


def score_hallucination(records, responses: dict) -> tuple[MetricsReport, list[EvalRecord]]:
    """Presence-question metrics, treating gt=yes as the positive class.

    Unparseable or missing responses score incorrect; they stay in the
    yes-ratio denominator without contributing a yes.
    """
    items: list[EvalRecord] = []
    tp = fp = tn = fn = 0
    yes_predictions = 0
    missing = 0
    for rec, response in _sorted_records(records, responses):
        gt = rec["gt"]
        if response is None:
            missing += 1
            prediction = None
            response_text = ""
        else:
            response_text = response
            parsed = parse_response(response, HALLUCINATION)
            prediction = parsed.polarity if parsed.kind == "yes_no" else None
        correct = prediction == gt
        if prediction == "yes":
            yes_predictions += 1
            if gt == "yes":
                tp += 1
            else:
                fp += 1
        elif prediction == "no":
            if gt == "no":
                tn += 1
            else:
                fn += 1
        elif gt == "yes":
            fn += 1  # unparseable counts against recall of the positive class
        items.append(
            EvalRecord(rec["sample_id"], "hallucination", gt, response_text, correct=correct, missing=response is None)
        )
    n = len(items)
    precision = tp / (tp + fp) if (tp + fp) else None
    recall = tp / (tp + fn) if (tp + fn) else None
    f1 = None
    if precision is not None and recall is not None and (precision + recall) > 0:
        f1 = 2 * precision * recall / (precision + recall)
    report = MetricsReport(
        task="hallucination",
        n=n,
        accuracy=(sum(r.correct for r in items) / n) if n else None,
        precision=precision,
        recall=recall,
        f1=f1,
        yes_ratio=(yes_predictions / n) if n else None,
        missing=missing,
        flags={"positive_class": "yes"},
    )
    return report, items


def score_region_description(records, responses: dict) -> tuple[MetricsReport, list[EvalRecord]]:
    """Per-item text similarity of the response against the stored description."""
    items: list[EvalRecord] = []
    missing = 0
    for rec, response in _sorted_records(records, responses):
        reference = rec["descriptor"]
        if response is None:
            missing += 1
            value = 0.0
            response_text = ""
        else:
            response_text = response
            value = score_meteor(reference, response)
        items.append(
            EvalRecord(rec["sample_id"], "region_description", reference, response_text, score=value, missing=response is None)
        )
    report = MetricsReport(
        task="region_description",
        n=len(items),
        meteor_mean=(sum(r.score for r in items) / len(items)) if items else None,
        missing=missing,
        flags={"metric": "meteor exact+stem, fmean weight 9, penalty 0.5*(ch/m)^3"},
    )
    return report, items


def aggregate_report(eval_records: list[EvalRecord]) -> MetricsReport:
    """Order-independent re-aggregation of per-item records from a single task."""
    if not eval_records:
        raise ValueError("empty evaluation")
    tasks = {r.task for r in eval_records}
    if len(tasks) > 1:
        raise ValueError(f"mixed task families: {sorted(tasks)}")
    task = tasks.pop()
    records = sorted(eval_records, key=lambda r: r.item_id)
    n = len(records)
    report = MetricsReport(task=task, n=n, missing=sum(r.missing for r in records))
    if task == "region_description":
        report.meteor_mean = sum(r.score for r in records) / n
    else:
        report.accuracy = sum(r.correct for r in records) / n
        split_total: Counter = Counter(r.gt for r in records)
        if task == "spatial":
            split_hit: Counter = Counter()
            for r in records:
                split_hit[r.gt] += r.correct
            report.per_split = {kw: split_hit[kw] / total for kw, total in split_total.items()}
    return report

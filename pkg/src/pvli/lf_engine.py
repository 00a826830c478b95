"""Labeling-function engine: pattern compilation, extraction, calibration,
precision thresholding, and cumulative coverage reporting.

A labeling function pairs a conjunction template with an enables/disables
class; matching captions yield (action, precondition) pairs labeled allow or
prevent. Per-function precision comes from annotated calibration samples and
drives the quality threshold.
"""

import dataclasses
import hashlib
import random
import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .normalize import Caption, _data_lines

PLACEHOLDERS = ("{A}", "{P}", "{NP}", "{E}")
_ACTION_PLACEHOLDERS = ("{A}", "{E}")
_PRECONDITION_PLACEHOLDERS = ("{P}", "{NP}")

LABEL_FOR_CLASS = {"enables": "allow", "disables": "prevent"}

_TRIM_CHARS = string.punctuation + string.whitespace

DETERMINERS = frozenset(
    "the a an this that these those its his her their my your our".split()
)


class LfTableError(ValueError):
    """Configuration error in a labeling-function table."""


@dataclass
class LabelingFunction:
    name: str
    label_class: str  # "enables" | "disables"
    template: str
    pos_check: bool
    precision: float | None
    min_sample_met: bool
    order: int  # table row index, used for deterministic tie-breaking
    pattern: re.Pattern = field(repr=False, compare=False, default=None)
    uses_event: bool = False
    uses_negative_precondition: bool = False

    @property
    def label(self) -> str:
        return LABEL_FOR_CLASS[self.label_class]


@dataclass(frozen=True)
class ExtractedInstance:
    id: str
    caption_id: str
    image_ref: str
    caption_source: str
    action_text: str
    precondition_text: str
    label: str  # "allow" | "prevent"
    lf_name: str
    lf_precision: float | None
    multi_match: bool = False

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "caption_id": self.caption_id,
            "image_ref": self.image_ref,
            "caption_source": self.caption_source,
            "action_text": self.action_text,
            "precondition_text": self.precondition_text,
            "label": self.label,
            "lf_name": self.lf_name,
            "lf_precision": self.lf_precision,
            "multi_match": self.multi_match,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ExtractedInstance":
        return cls(
            id=rec["id"],
            caption_id=rec["caption_id"],
            image_ref=rec["image_ref"],
            caption_source=rec.get("caption_source", ""),
            action_text=rec["action_text"],
            precondition_text=rec["precondition_text"],
            label=rec["label"],
            lf_name=rec["lf_name"],
            lf_precision=rec["lf_precision"],
            multi_match=rec.get("multi_match", False),
        )


def _compile_template(template: str, row_label: str) -> tuple[re.Pattern, bool, bool]:
    action_count = sum(template.count(p) for p in _ACTION_PLACEHOLDERS)
    precondition_count = sum(template.count(p) for p in _PRECONDITION_PLACEHOLDERS)
    if action_count != 1 or precondition_count != 1:
        raise LfTableError(
            f"row {row_label!r}: template must contain exactly one action "
            f"placeholder ({{A}} or {{E}}) and one precondition placeholder "
            f"({{P}} or {{NP}}), got {action_count} and {precondition_count}"
        )
    uses_event = "{E}" in template
    uses_np = "{NP}" in template
    # Placeholders become lazy named groups; everything else stays verbatim
    # regex, so guards like (?!of\b) survive as written. Full-string anchors
    # make laziness pick the leftmost workable split.
    pattern_src = template
    pattern_src = pattern_src.replace("{A}", "(?P<action>.+?)")
    pattern_src = pattern_src.replace("{E}", "(?P<action>.+?)")
    pattern_src = pattern_src.replace("{P}", "(?P<precondition>.+?)")
    pattern_src = pattern_src.replace("{NP}", "(?P<precondition>.+?)")
    try:
        pattern = re.compile("^" + pattern_src + "$")
    except re.error as exc:
        raise LfTableError(f"row {row_label!r}: template does not compile: {exc}") from exc
    return pattern, uses_event, uses_np


def _parse_precision_cell(cell: str, row_label: str) -> tuple[float | None, bool]:
    cell = cell.strip()
    if cell == "---":
        return None, False
    min_sample_met = True
    if cell.endswith("*"):
        min_sample_met = False
        cell = cell[:-1].strip()
    try:
        value = float(cell)
    except ValueError as exc:
        raise LfTableError(f"row {row_label!r}: bad precision cell {cell!r}") from exc
    if not 0.0 <= value <= 1.0:
        raise LfTableError(f"row {row_label!r}: precision {value} outside [0,1]")
    return value, min_sample_met


def parse_lf_row(line: str, order: int) -> LabelingFunction:
    # the template column comes last and may itself contain '|' alternations
    cells = [c.strip() for c in line.split("|", 3)]
    if len(cells) != 4:
        raise LfTableError(f"line {order + 1}: expected 4 '|'-separated columns, got {len(cells)}")
    label_class, name, precision_cell, template = cells
    if label_class not in LABEL_FOR_CLASS:
        raise LfTableError(f"row {name!r}: unknown label class {label_class!r}")
    pos_check = name.startswith("**") and name.endswith("**")
    if pos_check:
        name = name[2:-2].strip()
    precision, min_sample_met = _parse_precision_cell(precision_cell, name)
    pattern, uses_event, uses_np = _compile_template(template, name)
    return LabelingFunction(
        name=name,
        label_class=label_class,
        template=template,
        pos_check=pos_check,
        precision=precision,
        min_sample_met=min_sample_met,
        order=order,
        pattern=pattern,
        uses_event=uses_event,
        uses_negative_precondition=uses_np,
    )


def compile_lf_table(path: str | Path | None = None) -> list[LabelingFunction]:
    """Load and compile a labeling-function table; None loads the shipped default."""
    if path is None:
        text = resources.files("pvli.data").joinpath("lf_table.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    lfs = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        lfs.append(parse_lf_row(line, order=len(lfs)))
    names = [lf.name for lf in lfs]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise LfTableError(f"duplicate labeling-function names: {sorted(dupes)}")
    return lfs


def format_lf_row(lf: LabelingFunction) -> str:
    name = f"**{lf.name}**" if lf.pos_check else lf.name
    if lf.precision is None:
        precision = "---"
    else:
        precision = f"{lf.precision:.3f}" + ("" if lf.min_sample_met else "*")
    return f"{lf.label_class}|{name}|{precision}|{lf.template}"


def write_lf_table(path: str | Path, lfs: Sequence[LabelingFunction]) -> None:
    """Write a table that compile_lf_table round-trips to the same functions."""
    lines = [format_lf_row(lf) for lf in lfs]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class PosChecker(Protocol):
    def confirms(self, caption: Caption, lf: LabelingFunction,
                 conj_span: tuple[int, int]) -> bool:
        """True when the matched conjunction really joins two clauses."""
        ...


class HeuristicPosChecker:
    """Closed-class approximation of part-of-speech confirmation.

    The conjunction must not directly follow a determiner, and the clauses on
    both sides must each contain a verb from the shipped verb list.
    """

    def __init__(self, verbs: Iterable[str] | None = None):
        if verbs is None:
            verbs = _data_lines("verbs.txt")
        self.verbs = frozenset(v.lower() for v in verbs)

    def _has_verb(self, clause: str) -> bool:
        return any(tok in self.verbs for tok in clause.lower().split())

    def confirms(self, caption: Caption, lf: LabelingFunction,
                 conj_span: tuple[int, int]) -> bool:
        text = caption.text
        before = text[: conj_span[0]].split()
        if before and before[-1].strip(_TRIM_CHARS) in DETERMINERS:
            return False
        return self._has_verb(text[: conj_span[0]]) and self._has_verb(text[conj_span[1]:])


class SidecarPosChecker:
    """Reads precomputed confirmations keyed by (caption_id, lf_name),
    e.g. exported from a neural tagger."""

    def __init__(self, confirmed: dict[tuple[str, str], bool]):
        self.confirmed = confirmed

    def confirms(self, caption: Caption, lf: LabelingFunction,
                 conj_span: tuple[int, int]) -> bool:
        return self.confirmed.get((caption.id, lf.name), False)


def _trim_span(text: str, start: int, end: int) -> str:
    return text[start:end].strip(_TRIM_CHARS)


def _instance_id(caption_id: str, lf_name: str, action: str, precondition: str) -> str:
    digest = hashlib.sha1(
        "\x1f".join((caption_id, lf_name, action, precondition)).encode("utf-8")
    ).hexdigest()
    return f"ec-{digest[:12]}"


def extract(
    caption: Caption,
    lfs: Sequence[LabelingFunction],
    pos_checker: PosChecker | None = None,
    min_span_tokens: int = 2,
) -> list[ExtractedInstance]:
    """Apply every labeling function to one caption.

    All matching functions emit an instance; when more than one matches, the
    instances are tagged multi_match and `select_best` applies the
    tie-breaking rule downstream.
    """
    if pos_checker is None:
        pos_checker = HeuristicPosChecker()
    out = []
    for lf in lfs:
        m = lf.pattern.match(caption.text)
        if m is None:
            continue
        action = _trim_span(caption.text, *m.span("action"))
        precondition = _trim_span(caption.text, *m.span("precondition"))
        if len(action.split()) < min_span_tokens or len(precondition.split()) < min_span_tokens:
            continue
        if lf.pos_check:
            spans = sorted([m.span("action"), m.span("precondition")])
            conj_span = (spans[0][1], spans[1][0])
            if not pos_checker.confirms(caption, lf, conj_span):
                continue
        out.append(
            ExtractedInstance(
                id=_instance_id(caption.id, lf.name, action, precondition),
                caption_id=caption.id,
                image_ref=caption.image_ref,
                caption_source=caption.source,
                action_text=action,
                precondition_text=precondition,
                label=lf.label,
                lf_name=lf.name,
                lf_precision=lf.precision,
            )
        )
    if len(out) > 1:
        out = [dataclasses.replace(inst, multi_match=True) for inst in out]
    return out


def select_best(instances: Sequence[ExtractedInstance],
                lfs: Sequence[LabelingFunction]) -> list[ExtractedInstance]:
    """Keep one instance per caption: highest LF precision wins, ties broken
    by longer precondition capture, then table order."""
    order_of = {lf.name: lf.order for lf in lfs}

    def sort_key(inst: ExtractedInstance):
        precision = inst.lf_precision if inst.lf_precision is not None else -1.0
        return (-precision, -len(inst.precondition_text), order_of.get(inst.lf_name, len(order_of)))

    by_caption: dict[str, list[ExtractedInstance]] = {}
    caption_order: list[str] = []
    for inst in instances:
        if inst.caption_id not in by_caption:
            caption_order.append(inst.caption_id)
        by_caption.setdefault(inst.caption_id, []).append(inst)
    return [min(by_caption[cid], key=sort_key) for cid in caption_order]


def extract_corpus(
    captions: Iterable[Caption],
    lfs: Sequence[LabelingFunction],
    pos_checker: PosChecker | None = None,
) -> list[ExtractedInstance]:
    if pos_checker is None:
        pos_checker = HeuristicPosChecker()
    out = []
    for caption in captions:
        out.extend(extract(caption, lfs, pos_checker))
    return out


@dataclass(frozen=True)
class CalibrationResult:
    lf_name: str
    precision: float | None
    sample_size: int
    min_sample_met: bool

    def to_record(self) -> dict:
        return {
            "lf_name": self.lf_name,
            "precision": self.precision,
            "sample_size": self.sample_size,
            "min_sample_met": self.min_sample_met,
        }


def calibration_sample(
    lf: LabelingFunction,
    instances: Sequence[ExtractedInstance],
    n: int = 20,
    rng_seed: int = 0,
) -> list[ExtractedInstance]:
    """Uniform sample (without replacement) of this function's matches."""
    matches = [inst for inst in instances if inst.lf_name == lf.name]
    if len(matches) <= n:
        return list(matches)
    rng = random.Random(rng_seed)
    picked = rng.sample(range(len(matches)), n)
    return [matches[i] for i in sorted(picked)]


def ingest_calibration(
    lf_name: str,
    annotations: Sequence[dict],
    n: int = 20,
) -> CalibrationResult:
    """Precision from annotated samples: the mean of {0,1} relevance scores.

    Zero annotations leave the precision absent; fewer than `n` annotated
    matches clear the min_sample_met flag.
    """
    scores = []
    for ann in annotations:
        score = ann["score"]
        if score not in (0, 1):
            raise ValueError(f"calibration score must be 0 or 1, got {score!r}")
        scores.append(score)
    if not scores:
        return CalibrationResult(lf_name, None, 0, False)
    precision = sum(scores) / len(scores)
    return CalibrationResult(lf_name, precision, len(scores), len(scores) >= n)


def threshold_filter(
    instances: Sequence[ExtractedInstance],
    t: float,
    uncalibrated_whitelist: frozenset[str] | set[str] = frozenset(),
) -> list[ExtractedInstance]:
    """Retain instances whose labeling function has precision >= t.

    Instances from uncalibrated functions are dropped unless the function is
    whitelisted by name.
    """
    kept = []
    for inst in instances:
        if inst.lf_precision is None:
            if inst.lf_name in uncalibrated_whitelist:
                kept.append(inst)
        elif inst.lf_precision >= t:
            kept.append(inst)
    return kept


def cumulative_report(
    instances: Sequence[ExtractedInstance],
    thresholds: Sequence[float],
) -> list[dict]:
    """Fraction of instances retained (and fraction labeled allow among the
    retained) at each precision threshold."""
    total = len(instances)
    rows = []
    for t in thresholds:
        retained = [
            i for i in instances if i.lf_precision is not None and i.lf_precision >= t
        ]
        n_allow = sum(1 for i in retained if i.label == "allow")
        rows.append(
            {
                "threshold": t,
                "n_retained": len(retained),
                "fraction_retained": len(retained) / total if total else 0.0,
                "fraction_allow": (n_allow / len(retained)) if retained else None,
            }
        )
    return rows


def parse_threshold_range(spec: str) -> list[float]:
    """Parse "start:stop:step" into an inclusive list of thresholds."""
    try:
        start_s, stop_s, step_s = spec.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
    except ValueError as exc:
        raise ValueError(f"bad threshold range {spec!r}; expected start:stop:step") from exc
    if step <= 0:
        raise ValueError("threshold step must be positive")
    out = []
    i = 0
    while True:
        t = start + i * step
        if t > stop + 1e-9:
            break
        out.append(round(t, 10))
        i += 1
    return out

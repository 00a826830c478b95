"""Dataset assembly: merge grounded instances from the three strategies,
assign splits, report distributions, generate counterfactual variants, and
score prediction files."""

import hashlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .normalize import round_half_away

LABELS = ("allow", "prevent")
STRATEGIES = ("EC", "CQ", "IQ")
SPLITS = ("tuning", "noisy_test", "clean_test", "unassigned")

# EC instances are intrinsically grounded (action and precondition share a
# caption), so they win dedupe ties over retrieved groundings.
_STRATEGY_PRIORITY = {"EC": 0, "CQ": 1, "IQ": 2}


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class StatementPair:
    """Links a precondition statement to an action statement with a label.

    The pair bank is the label source for the two retrieval strategies:
    the precondition gets grounded to an image and the action becomes the
    hypothesis judged against it.
    """

    pair_id: str
    precondition_id: str
    action_id: str
    label: str
    source: str = ""

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"pair {self.pair_id!r}: label must be one of {LABELS}")

    def to_record(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "precondition_id": self.precondition_id,
            "action_id": self.action_id,
            "label": self.label,
            "source": self.source,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "StatementPair":
        return cls(rec["pair_id"], rec["precondition_id"], rec["action_id"],
                   rec["label"], rec.get("source", ""))


@dataclass(frozen=True)
class PvliInstance:
    id: str
    hypothesis_text: str
    premise_image_ref: str
    label: str
    rationale: str = ""
    provenance: Mapping = field(default_factory=dict)
    split: str = "unassigned"
    conflict: bool = False

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"instance {self.id!r}: label must be one of {LABELS}")
        if self.split not in SPLITS:
            raise ValueError(f"instance {self.id!r}: unknown split {self.split!r}")
        strategy = self.provenance.get("strategy")
        if strategy not in _STRATEGY_PRIORITY:
            raise ValueError(f"instance {self.id!r}: provenance.strategy must be one of {STRATEGIES}")

    @property
    def strategy(self) -> str:
        return self.provenance["strategy"]

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "hypothesis_text": self.hypothesis_text,
            "premise_image_ref": self.premise_image_ref,
            "label": self.label,
            "rationale": self.rationale,
            "provenance": dict(self.provenance),
            "split": self.split,
            "conflict": self.conflict,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PvliInstance":
        return cls(
            id=rec["id"],
            hypothesis_text=rec["hypothesis_text"],
            premise_image_ref=rec["premise_image_ref"],
            label=rec["label"],
            rationale=rec.get("rationale", ""),
            provenance=rec.get("provenance", {}),
            split=rec.get("split", "unassigned"),
            conflict=rec.get("conflict", False),
        )


def instance_id(hypothesis_text: str, premise_image_ref: str, label: str) -> str:
    """Content hash over the dedupe key, so identical triples from different
    strategies collide by construction."""
    digest = hashlib.sha1(
        "\x1f".join((hypothesis_text, premise_image_ref, label)).encode("utf-8")
    ).hexdigest()
    return f"pv-{digest[:12]}"


def _make(hypothesis: str, image_ref: str, label: str, rationale: str,
          provenance: dict) -> PvliInstance:
    return PvliInstance(
        id=instance_id(hypothesis, image_ref, label),
        hypothesis_text=hypothesis,
        premise_image_ref=image_ref,
        label=label,
        rationale=rationale,
        provenance=provenance,
    )


def from_extraction(inst) -> PvliInstance:
    """Caption-extracted instance: the action is the hypothesis, the caption's
    own image is the premise, and the precondition clause is the rationale."""
    return _make(
        inst.action_text,
        inst.image_ref,
        inst.label,
        rationale=inst.precondition_text,
        provenance={
            "strategy": "EC",
            "source": inst.caption_source,
            "lf_name": inst.lf_name,
            "lf_precision": inst.lf_precision,
            "origin_id": inst.id,
        },
    )


def from_caption_query(pair: StatementPair, precondition_text: str,
                       action_text: str, fusion, image_ref: str) -> PvliInstance:
    """Caption-retrieval instance: premise image comes from the fused
    nearest-caption choice for the pair's precondition."""
    return _make(
        action_text,
        image_ref,
        pair.label,
        rationale=precondition_text,
        provenance={
            "strategy": "CQ",
            "source": pair.source,
            "caption_id": fusion.chosen,
            "perplexity": fusion.perplexity,
            "model_agreement": fusion.model_agreement,
            "origin_id": pair.pair_id,
        },
    )


def from_image_query(pair: StatementPair, precondition_text: str,
                     action_text: str, result) -> PvliInstance:
    """Image-retrieval instance: premise is a web image found by querying the
    pair's precondition statement; that grounded statement is the rationale."""
    return _make(
        action_text,
        result.image_url,
        pair.label,
        rationale=precondition_text,
        provenance={
            "strategy": "IQ",
            "source": pair.source,
            "rank": result.rank,
            "site": result.site,
            "origin_id": pair.pair_id,
        },
    )


def merge_dedupe(streams: Iterable[Iterable[PvliInstance]]) -> tuple[list[PvliInstance], dict]:
    """Collapse exact (hypothesis, image, label) duplicates across strategies.

    The surviving record keeps the highest-priority provenance. Records that
    share (hypothesis, image) but disagree on label are all kept and flagged
    for audit.
    """
    kept: dict[str, PvliInstance] = {}
    order: list[str] = []
    n_input = 0
    for stream in streams:
        for inst in stream:
            n_input += 1
            key = inst.id
            current = kept.get(key)
            if current is None:
                kept[key] = inst
                order.append(key)
            elif _STRATEGY_PRIORITY[inst.strategy] < _STRATEGY_PRIORITY[current.strategy]:
                kept[key] = inst

    labels_by_pair: dict[tuple[str, str], set[str]] = defaultdict(set)
    for inst in kept.values():
        labels_by_pair[(inst.hypothesis_text, inst.premise_image_ref)].add(inst.label)

    merged = []
    n_conflict = 0
    for key in order:
        inst = kept[key]
        if len(labels_by_pair[(inst.hypothesis_text, inst.premise_image_ref)]) > 1:
            inst = replace(inst, conflict=True)
            n_conflict += 1
        merged.append(inst)

    report = {
        "input": n_input,
        "kept": len(merged),
        "duplicates_collapsed": n_input - len(merged),
        "conflicts": n_conflict,
        "per_strategy": dict(Counter(i.strategy for i in merged)),
    }
    return merged, report


def split_sample(
    instances: Sequence[PvliInstance],
    n_tuning: int = 16000,
    n_noisy_test: int = 6000,
    seed: int = 0,
) -> tuple[list[PvliInstance], dict]:
    """Assign disjoint uniform random tuning / noisy_test splits.

    Only records currently unassigned participate; existing assignments
    (notably clean_test) are never touched. Candidates are ordered by id
    before sampling, so the outcome depends on dataset content and seed
    but not input order.
    """
    if n_tuning < 0 or n_noisy_test < 0:
        raise ValueError("split sizes must be non-negative")
    eligible = sorted(
        (i for i, inst in enumerate(instances) if inst.split == "unassigned"),
        key=lambda i: instances[i].id,
    )
    need = n_tuning + n_noisy_test
    if need > len(eligible):
        raise ValueError(
            f"cannot draw {n_tuning}+{n_noisy_test}={need} records "
            f"from {len(eligible)} unassigned (dataset has {len(instances)})"
        )
    rng = np.random.default_rng(seed)
    picked = rng.permutation(len(eligible))[:need]
    assignment = {}
    for j, slot in enumerate(picked):
        assignment[eligible[slot]] = "tuning" if j < n_tuning else "noisy_test"

    out = [
        replace(inst, split=assignment[i]) if i in assignment else inst
        for i, inst in enumerate(instances)
    ]
    meta = {
        "seed": seed,
        "n_tuning": n_tuning,
        "n_noisy_test": n_noisy_test,
        "n_unassigned": len(eligible) - need,
        "sampling": "uniform without replacement over unassigned records",
    }
    return out, meta


def distribution_report(
    instances: Sequence[PvliInstance],
    source_sizes: Mapping[str, int] | None = None,
) -> dict:
    """Observed source shares vs shares expected from raw corpus sizes, plus
    the pattern-rule breakdown within each caption source.

    Sources absent from the sizes config get no ratio and a warning;
    configured sources with zero matches get ratio 0.
    """
    if not instances:
        raise ValueError("distribution_report requires a non-empty dataset")
    source_sizes = dict(source_sizes or {})
    total = len(instances)
    counts = Counter(inst.provenance.get("source", "") for inst in instances)
    sources = sorted(set(counts) | set(source_sizes))

    size_total = sum(source_sizes.values())
    warnings = []
    per_source = []
    for source in sources:
        count = counts.get(source, 0)
        observed_pct = 100.0 * count / total
        row = {"source": source, "count": count, "observed_pct": observed_pct,
               "expected_pct": None, "ratio": None}
        if source in source_sizes and size_total > 0:
            expected_pct = 100.0 * source_sizes[source] / size_total
            row["expected_pct"] = expected_pct
            row["ratio"] = observed_pct / expected_pct if expected_pct else None
        else:
            warnings.append(f"no size configured for source {source!r}; ratio omitted")
        per_source.append(row)

    lf_by_source: dict[str, list] = {}
    ec_groups: dict[str, Counter] = defaultdict(Counter)
    for inst in instances:
        if inst.strategy == "EC":
            ec_groups[inst.provenance.get("source", "")][inst.provenance.get("lf_name", "")] += 1
    for source in sorted(ec_groups):
        group = ec_groups[source]
        group_total = sum(group.values())
        lf_by_source[source] = [
            {"lf_name": name, "count": n, "pct_within_source": 100.0 * n / group_total}
            for name, n in sorted(group.items(), key=lambda kv: (-kv[1], kv[0]))
        ]
    return {
        "total": total,
        "per_source": per_source,
        "lf_by_source": lf_by_source,
        "warnings": warnings,
    }


@dataclass(frozen=True)
class CounterfactualVariant:
    base_id: str
    variant_kind: str  # text_token_mask | image_region_mask | text_blind | image_blind
    seed: int
    masked_text: str | None = None
    mask_grid: tuple[tuple[bool, ...], ...] | None = None

    def to_record(self) -> dict:
        rec = {"base_id": self.base_id, "variant_kind": self.variant_kind, "seed": self.seed}
        if self.masked_text is not None:
            rec["masked_text"] = self.masked_text
        if self.mask_grid is not None:
            rec["mask_grid"] = [[bool(c) for c in row] for row in self.mask_grid]
        return rec


VARIANT_KINDS = ("text_token_mask", "image_region_mask", "text_blind", "image_blind")
MASK_TOKEN = "[MASK]"
TEXT_MASK_FRACTION = 0.67
IMAGE_MASK_FRACTION = 0.5


def text_mask_count(n_tokens: int) -> int:
    return round_half_away(TEXT_MASK_FRACTION * n_tokens)


def grid_mask_count(rows: int, cols: int) -> int:
    return round_half_away(IMAGE_MASK_FRACTION * rows * cols)


def _variant_rng(seed: int, base_id: str, kind: str) -> np.random.Generator:
    # stable per (seed, instance, kind) regardless of generation order
    digest = hashlib.blake2b(f"{base_id}\x1f{kind}".encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "little")])


def make_counterfactuals(
    instance: PvliInstance,
    kinds: Sequence[str] = VARIANT_KINDS,
    seed: int = 0,
    grid_rows: int = 4,
    grid_cols: int = 4,
) -> tuple[list[CounterfactualVariant], list[dict]]:
    """Build masked variants of one instance; returns (variants, skips)."""
    for kind in kinds:
        if kind not in VARIANT_KINDS:
            raise ValueError(f"unknown variant kind {kind!r}")
    if grid_rows < 1 or grid_cols < 1:
        raise ValueError("grid must be at least 1x1")
    tokens = instance.hypothesis_text.split()
    variants: list[CounterfactualVariant] = []
    skips: list[dict] = []
    for kind in kinds:
        if kind in ("text_token_mask", "text_blind") and not tokens:
            skips.append({"id": instance.id, "variant_kind": kind, "reason": "empty_hypothesis"})
            continue
        if kind == "text_token_mask":
            rng = _variant_rng(seed, instance.id, kind)
            chosen = set(rng.choice(len(tokens), size=text_mask_count(len(tokens)),
                                    replace=False).tolist())
            masked = [MASK_TOKEN if i in chosen else tok for i, tok in enumerate(tokens)]
            variants.append(CounterfactualVariant(instance.id, kind, seed,
                                                  masked_text=" ".join(masked)))
        elif kind == "text_blind":
            variants.append(CounterfactualVariant(
                instance.id, kind, seed, masked_text=" ".join([MASK_TOKEN] * len(tokens))))
        elif kind == "image_region_mask":
            rng = _variant_rng(seed, instance.id, kind)
            chosen = set(rng.choice(grid_rows * grid_cols,
                                    size=grid_mask_count(grid_rows, grid_cols),
                                    replace=False).tolist())
            grid = tuple(
                tuple((r * grid_cols + c) in chosen for c in range(grid_cols))
                for r in range(grid_rows)
            )
            variants.append(CounterfactualVariant(instance.id, kind, seed, mask_grid=grid))
        else:  # image_blind
            grid = tuple(tuple(True for _ in range(grid_cols)) for _ in range(grid_rows))
            variants.append(CounterfactualVariant(instance.id, kind, seed, mask_grid=grid))
    return variants, skips


def apply_mask_to_buffer(width: int, height: int, channels: int, data: bytes,
                         mask_grid: Sequence[Sequence[bool]]) -> bytes:
    """Zero out pixels in masked lattice cells of a raw interleaved buffer.

    Cell (r, c) covers pixel rows [r*H/R, (r+1)*H/R) and the analogous
    column band, with integer boundaries.
    """
    expected = width * height * channels
    if len(data) != expected:
        raise ValueError(f"buffer length {len(data)} != {width}x{height}x{channels}")
    rows = len(mask_grid)
    cols = len(mask_grid[0]) if rows else 0
    if rows < 1 or cols < 1 or any(len(row) != cols for row in mask_grid):
        raise ValueError("mask_grid must be rectangular and non-empty")
    pixels = np.frombuffer(data, dtype=np.uint8).reshape(height, width, channels).copy()
    for r in range(rows):
        y0, y1 = r * height // rows, (r + 1) * height // rows
        for c in range(cols):
            if mask_grid[r][c]:
                x0, x1 = c * width // cols, (c + 1) * width // cols
                pixels[y0:y1, x0:x1, :] = 0
    return pixels.tobytes()


def score_predictions(
    gold: Sequence[PvliInstance],
    predictions: Mapping[str, str] | Sequence[tuple[str, str]],
    random_seed: int = 0,
) -> dict:
    """Accuracy, confusion counts, and reference baselines for a prediction
    file over one gold split.

    Predictions must cover every gold id exactly once. Both baselines are
    named explicitly: majority-class and a seeded uniform-random guesser.
    """
    if not gold:
        raise ScoringError("empty gold set")
    gold_by_id = {}
    for inst in gold:
        if inst.id in gold_by_id:
            raise ScoringError(f"duplicate gold id: {inst.id}")
        gold_by_id[inst.id] = inst.label

    pred_by_id: dict[str, str] = {}
    items = predictions.items() if isinstance(predictions, Mapping) else predictions
    duplicates = []
    for pid, label in items:
        if pid in pred_by_id:
            duplicates.append(pid)
        pred_by_id[pid] = label
    missing = sorted(set(gold_by_id) - set(pred_by_id))
    extra = sorted(set(pred_by_id) - set(gold_by_id))
    if duplicates or missing or extra:
        raise ScoringError(
            f"prediction file mismatch: missing={missing} extra={extra} duplicate={sorted(set(duplicates))}"
        )
    bad = sorted(pid for pid, lab in pred_by_id.items() if lab not in LABELS)
    if bad:
        raise ScoringError(f"predictions with invalid labels: {bad}")

    ids = sorted(gold_by_id)
    confusion = {g: {p: 0 for p in LABELS} for g in LABELS}
    correct = 0
    for pid in ids:
        g, p = gold_by_id[pid], pred_by_id[pid]
        confusion[g][p] += 1
        correct += g == p
    total = len(ids)
    class_counts = Counter(gold_by_id.values())
    majority = max(class_counts.values()) / total

    rng = np.random.default_rng(random_seed)
    guesses = rng.integers(0, len(LABELS), size=total)
    random_correct = sum(
        LABELS[guesses[i]] == gold_by_id[pid] for i, pid in enumerate(ids)
    )
    return {
        "total": total,
        "correct": correct,
        "accuracy": correct / total,
        "confusion": confusion,
        "gold_class_counts": dict(class_counts),
        "baselines": {
            "majority_class": majority,
            "uniform_random": {"seed": random_seed, "accuracy": random_correct / total},
        },
    }

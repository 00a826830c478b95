"""Deterministic text preprocessing for statements and captions.

Person identifiers are standardized to "the person", "another person",
"a third person", ... in first-occurrence order; captions are split into
single sentences; both streams can be filtered to token lengths within one
standard deviation of the mean.
"""

import math
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Protocol, Sequence

REPLACEMENT_PHRASES = ("the person", "another person")
_ORDINALS = (
    "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
    "tenth", "eleventh", "twelfth",
)

FIXED_IDENTIFIERS = ("alice", "bob", "personx", "persony", "personz")

_POSSESSIVE_RE = re.compile(r"\bthe person's\b", re.IGNORECASE)
_PERSON_TAG_RE = re.compile(r"<\s*PERSON\s*>", re.IGNORECASE)
_WS_RE = re.compile(r"\s+")


class SkipRecord(Exception):
    """Raised when a record must be rejected; `reason` is a stable code."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class Statement:
    id: str
    text: str
    kind: str  # "precondition" | "action"
    source: str
    token_len: int

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "kind": self.kind,
            "source": self.source,
            "token_len": self.token_len,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Statement":
        return cls(rec["id"], rec["text"], rec["kind"], rec["source"], rec["token_len"])


@dataclass(frozen=True)
class Caption:
    id: str
    text: str
    image_ref: str
    source: str

    @property
    def token_len(self) -> int:
        return len(self.text.split())

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "image_ref": self.image_ref,
            "source": self.source,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Caption":
        return cls(rec["id"], rec["text"], rec["image_ref"], rec["source"])


class PersonDetector(Protocol):
    def find_person_spans(self, text: str) -> list[tuple[int, int]]:
        """(start, end) character spans of person mentions in `text`."""
        ...


class FixedIdentifierDetector:
    """Matches the fixed placeholder names some statement banks use
    (Alice/Bob, PersonX/PersonY), case-insensitively."""

    _pattern = re.compile(
        r"\b(" + "|".join(FIXED_IDENTIFIERS) + r")\b", re.IGNORECASE
    )

    def find_person_spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in self._pattern.finditer(text)]


class GazetteerDetector:
    """Matches capitalized tokens found in a first-name gazetteer.

    Only capitalized surface forms match, so already-normalized (lowercased)
    text is left alone and normalization stays idempotent.
    """

    def __init__(self, names: Iterable[str] | None = None):
        if names is None:
            names = load_default_gazetteer()
        self.names = {n.strip().lower() for n in names if n.strip()}
        self._token_re = re.compile(r"\b[A-Z][a-z]+\b")

    def find_person_spans(self, text: str) -> list[tuple[int, int]]:
        spans = []
        for m in self._token_re.finditer(text):
            if m.group(0).lower() in self.names:
                spans.append(m.span())
        return spans


class CompositeDetector:
    def __init__(self, *detectors: PersonDetector):
        self.detectors = detectors

    def find_person_spans(self, text: str) -> list[tuple[int, int]]:
        spans: set[tuple[int, int]] = set()
        for det in self.detectors:
            spans.update(det.find_person_spans(text))
        return sorted(spans)


def default_detector() -> PersonDetector:
    return CompositeDetector(FixedIdentifierDetector(), GazetteerDetector())


def _data_text(name: str) -> str:
    return resources.files("pvli.data").joinpath(name).read_text(encoding="utf-8")


def _data_lines(name: str) -> list[str]:
    out = []
    for line in _data_text(name).splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


def load_default_gazetteer() -> list[str]:
    return _data_lines("first_names.txt")


def load_abbreviations() -> frozenset[str]:
    """Abbreviations (with trailing period) that never end a sentence."""
    return frozenset(a.lower() for a in _data_lines("abbreviations.txt"))


def replacement_phrase(i: int) -> str:
    """The phrase substituted for the i-th distinct person entity (0-based)."""
    if i < len(REPLACEMENT_PHRASES):
        return REPLACEMENT_PHRASES[i]
    j = i - len(REPLACEMENT_PHRASES)
    if j < len(_ORDINALS):
        return f"a {_ORDINALS[j]} person"
    return f"person {i + 1}"


def _replace_person_spans(text: str, spans: Sequence[tuple[int, int]]) -> str:
    """Replace person spans, assigning one phrase per distinct surface form
    in first-occurrence order. Identical lowercased spans share a phrase."""
    spans = sorted(set((int(s), int(e)) for s, e in spans))
    for s, e in spans:
        if not (0 <= s < e <= len(text)):
            raise ValueError(f"span ({s}, {e}) out of bounds for text of length {len(text)}")
    for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
        if s2 < e1:
            raise ValueError(f"overlapping person spans ({s1},{e1}) and ({s2},{e2})")
    entity_order: dict[str, int] = {}
    pieces = []
    cursor = 0
    for s, e in spans:
        key = text[s:e].lower()
        if key not in entity_order:
            entity_order[key] = len(entity_order)
        pieces.append(text[cursor:s])
        pieces.append(replacement_phrase(entity_order[key]))
        cursor = e
    pieces.append(text[cursor:])
    return "".join(pieces)


def normalize_statement_text(raw: str, person_spans: Sequence[tuple[int, int]]) -> str:
    text = _replace_person_spans(raw, person_spans)
    text = _POSSESSIVE_RE.sub("their", text)
    text = text.lower()
    text = _WS_RE.sub(" ", text).strip()
    return text


def normalize_statement(
    raw: str,
    source: str,
    person_spans: Sequence[tuple[int, int]],
    *,
    kind: str = "precondition",
    id: str = "",
) -> Statement:
    """Normalize one statement; raises SkipRecord when nothing is left."""
    if not raw:
        raise SkipRecord("empty_input", id)
    text = normalize_statement_text(raw, person_spans)
    if not text:
        raise SkipRecord("empty_after_normalization", id)
    return Statement(id=id, text=text, kind=kind, source=source, token_len=len(text.split()))


def _sentence_fragments(line: str, abbreviations: frozenset[str]) -> list[str]:
    """Split one newline-free line on sentence terminators (. ! ?) followed
    by whitespace and a letter, guarding abbreviations and single initials."""
    breaks = []
    for m in re.finditer(r"[.!?]+(?=\s+[^\W\d_])", line):
        run = m.group(0)
        if run == ".":
            prefix = line[: m.end()]
            word = prefix.rsplit(None, 1)[-1] if prefix.split() else prefix
            bare = word.lstrip("\"'([{")
            if bare.lower() in abbreviations:
                continue
            if len(bare) == 2 and bare[0].isalpha():  # single-letter initial
                continue
        breaks.append(m.end())
    out = []
    start = 0
    for b in breaks + [len(line)]:
        frag = line[start:b].strip()
        if frag:
            out.append(frag)
        start = b
    return out


def split_caption(raw: str, abbreviations: frozenset[str] | None = None) -> list[str]:
    """Split a raw caption into sentence fragments.

    Splits on newlines first, then on sentence terminators; "<PERSON>" tags
    become "the person"; empty fragments are dropped.
    """
    if abbreviations is None:
        abbreviations = load_abbreviations()
    text = _PERSON_TAG_RE.sub("the person", raw)
    fragments = []
    for line in text.split("\n"):
        line = line.strip()
        if line:
            fragments.extend(_sentence_fragments(line, abbreviations))
    return fragments


def build_captions(
    raw: str,
    image_ref: str,
    source: str,
    base_id: str,
    abbreviations: frozenset[str] | None = None,
) -> list[Caption]:
    """Split a raw caption and emit one lowercased Caption per sentence."""
    if not image_ref:
        raise SkipRecord("missing_image_ref", base_id)
    captions = []
    for i, frag in enumerate(split_caption(raw, abbreviations)):
        text = _WS_RE.sub(" ", frag.lower()).strip()
        if not text:
            continue
        suffix = f"-s{i}" if i > 0 else ""
        captions.append(Caption(id=f"{base_id}{suffix}", text=text, image_ref=image_ref, source=source))
    return captions


def round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero."""
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


@dataclass(frozen=True)
class LengthReport:
    mean: float
    stddev: float
    lower: int
    upper: int
    n_input: int
    n_retained: int
    tokenizer: str = "whitespace"

    def to_record(self) -> dict:
        return {
            "mean": self.mean,
            "stddev": self.stddev,
            "lower": self.lower,
            "upper": self.upper,
            "n_input": self.n_input,
            "n_retained": self.n_retained,
            "tokenizer": self.tokenizer,
        }


def length_filter(items: Sequence) -> tuple[list, LengthReport]:
    """Retain items whose token length is within one population standard
    deviation of the mean, with the interval endpoints rounded to the
    nearest integer (halves away from zero)."""
    if not items:
        raise ValueError("length_filter requires a non-empty list")
    lengths = [item.token_len for item in items]
    n = len(lengths)
    mean = sum(lengths) / n
    var = sum((x - mean) ** 2 for x in lengths) / n
    std = math.sqrt(var)
    lower = round_half_away(mean - std)
    upper = round_half_away(mean + std)
    retained = [item for item, ln in zip(items, lengths) if lower <= ln <= upper]
    report = LengthReport(mean=mean, stddev=std, lower=lower, upper=upper,
                          n_input=n, n_retained=len(retained))
    return retained, report

"""Human verification service: serves question units over HTTP, persists
votes to an append-only log, selects the clean test set by 2-of-3 majority,
and computes Fleiss' kappa over the vote panel.

All state is a pure fold over the vote log, so a restart after a crash at
any point replays to exactly the pre-crash state.
"""

import json
import os
import threading
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .assembly import PvliInstance
from .jsonl import dumps_record

CHOICES = ("true", "false", "not_sure")
REQUIRED_VOTES = 3

# an allow instance is confirmed by "true", a prevent instance by "false"
CORRECT_CHOICE = {"allow": "true", "prevent": "false"}


class VerificationError(Exception):
    pass


class UnknownUnitError(VerificationError):
    pass


class UnknownAnnotatorError(VerificationError):
    pass


class DuplicateVoteError(VerificationError):
    pass


class UnitCompleteError(VerificationError):
    pass


class VoteLogError(VerificationError):
    pass


@dataclass(frozen=True)
class QuestionUnit:
    unit_id: str
    prompt: str
    image_ref: str
    required_votes: int = REQUIRED_VOTES


@dataclass(frozen=True)
class Vote:
    unit_id: str
    annotator_id: str
    choice: str
    invalid_flag: bool = False
    timestamp: float = 0.0

    def __post_init__(self):
        if self.choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}, got {self.choice!r}")
        if not self.annotator_id:
            raise ValueError("annotator_id must be non-empty")

    def to_record(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "annotator_id": self.annotator_id,
            "choice": self.choice,
            "invalid_flag": self.invalid_flag,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Vote":
        return cls(rec["unit_id"], rec["annotator_id"], rec["choice"],
                   rec.get("invalid_flag", False), rec.get("timestamp", 0.0))


def build_prompt(hypothesis_text: str) -> str:
    return f"Is this true of the image? {hypothesis_text}"


def unit_from_instance(inst: PvliInstance) -> QuestionUnit:
    return QuestionUnit(unit_id=inst.id, prompt=build_prompt(inst.hypothesis_text),
                        image_ref=inst.premise_image_ref)


def vote_is_correct(vote: Vote, label: str) -> bool:
    """A vote confirms the weak label iff the unit was not flagged invalid and
    the choice matches the label's truth value. not_sure never confirms."""
    if vote.invalid_flag:
        return False
    return vote.choice == CORRECT_CHOICE[label]


def select_clean_test(
    instances: Sequence[PvliInstance], votes: Iterable[Vote]
) -> tuple[list[PvliInstance], dict]:
    """Promote instances confirmed by at least 2 of their 3 votes.

    Returns the full instance list with clean_test splits applied, plus a
    summary. Units with fewer than 3 votes are excluded and listed; units
    with no votes at all are simply not considered.
    """
    by_id = {inst.id: inst for inst in instances}
    votes_by_unit: dict[str, list[Vote]] = defaultdict(list)
    for vote in votes:
        if vote.unit_id not in by_id:
            raise UnknownUnitError(f"vote references unknown unit {vote.unit_id!r}")
        votes_by_unit[vote.unit_id].append(vote)

    selected: set[str] = set()
    incomplete: list[str] = []
    for unit_id in sorted(votes_by_unit):
        unit_votes = votes_by_unit[unit_id]
        if len(unit_votes) < REQUIRED_VOTES:
            incomplete.append(unit_id)
            continue
        label = by_id[unit_id].label
        n_correct = sum(vote_is_correct(v, label) for v in unit_votes)
        if n_correct >= 2:
            selected.add(unit_id)

    out = [
        replace(inst, split="clean_test") if inst.id in selected else inst
        for inst in instances
    ]
    allow_count = sum(1 for inst in out if inst.id in selected and inst.label == "allow")
    summary = {
        "clean_test_size": len(selected),
        "allow_count": allow_count,
        "prevent_count": len(selected) - allow_count,
        "evaluated": len(votes_by_unit) - len(incomplete),
        "incomplete": incomplete,
    }
    return out, summary


def fleiss_kappa(votes: Iterable[Vote]) -> float:
    """Fleiss' kappa over the vote panel with categories (true, false,
    not_sure); invalid-flagged votes count as not_sure.

    Every voted unit must have exactly 3 votes. When all votes fall in one
    category the chance agreement is 1 and kappa is defined as 1.0.
    """
    table: dict[str, Counter] = defaultdict(Counter)
    for vote in votes:
        choice = "not_sure" if vote.invalid_flag else vote.choice
        table[vote.unit_id][choice] += 1
    if not table:
        raise ValueError("fleiss_kappa requires at least one voted unit")
    bad = sorted(u for u, c in table.items() if sum(c.values()) != REQUIRED_VOTES)
    if bad:
        raise ValueError(f"units without exactly {REQUIRED_VOTES} votes: {bad}")

    n = REQUIRED_VOTES
    n_units = len(table)
    p_i_sum = 0.0
    category_totals = Counter()
    for counts in table.values():
        p_i_sum += (sum(c * c for c in counts.values()) - n) / (n * (n - 1))
        category_totals.update(counts)
    p_bar = p_i_sum / n_units
    p_e = sum((category_totals[c] / (n_units * n)) ** 2 for c in CHOICES)
    if p_e >= 1.0:
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


def _replay_log(path: Path) -> tuple[list[Vote], int]:
    """Parse the vote log, tolerating a torn final line from a crashed write.

    Returns (votes, byte offset of the end of the last intact record).
    """
    votes: list[Vote] = []
    good = 0
    if not path.exists():
        return votes, good
    with open(path, "rb") as fh:
        raw_lines = fh.readlines()
    for i, raw in enumerate(raw_lines):
        last = i == len(raw_lines) - 1
        if not raw.endswith(b"\n"):
            if last:
                break
            raise VoteLogError(f"{path}:{i + 1}: unterminated line mid-file")
        try:
            rec = json.loads(raw.decode("utf-8"))
            vote = Vote.from_record(rec)
        except (ValueError, KeyError) as exc:
            if last:
                break
            raise VoteLogError(f"{path}:{i + 1}: corrupt vote record: {exc}") from exc
        votes.append(vote)
        good += len(raw)
    return votes, good


def read_vote_log(path) -> list[Vote]:
    """Votes from a log file, ignoring a torn trailing write."""
    votes, _ = _replay_log(Path(path))
    return votes


class VoteStore:
    """Owns the verification state: question units, votes, and the durable
    append-only vote log.

    Every mutation is serialized under one lock and hits disk (write + fsync)
    before it is acknowledged or applied in memory.
    """

    def __init__(self, instances: Sequence[PvliInstance], log_path,
                 allowlist: Iterable[str] | None = None):
        self._lock = threading.Lock()
        self._instances: dict[str, PvliInstance] = {}
        self._order: list[str] = []
        for inst in instances:
            if inst.id in self._instances:
                raise ValueError(f"duplicate instance id {inst.id!r}")
            self._instances[inst.id] = inst
            self._order.append(inst.id)
        self.allowlist = frozenset(allowlist) if allowlist is not None else None
        self.log_path = Path(log_path)

        votes, good = _replay_log(self.log_path)
        if self.log_path.exists() and good < self.log_path.stat().st_size:
            with open(self.log_path, "r+b") as fh:
                fh.truncate(good)
        self._votes: dict[str, dict[str, Vote]] = defaultdict(dict)
        for vote in votes:
            self._apply(vote)
        self._log = open(self.log_path, "a", encoding="utf-8")

    def close(self) -> None:
        self._log.close()

    def _apply(self, vote: Vote) -> None:
        if vote.unit_id not in self._instances:
            raise UnknownUnitError(f"unknown unit {vote.unit_id!r}")
        unit_votes = self._votes[vote.unit_id]
        if vote.annotator_id in unit_votes:
            raise DuplicateVoteError(
                f"annotator {vote.annotator_id!r} already voted on {vote.unit_id!r}")
        if len(unit_votes) >= REQUIRED_VOTES:
            raise UnitCompleteError(f"unit {vote.unit_id!r} already has {REQUIRED_VOTES} votes")
        unit_votes[vote.annotator_id] = vote

    def _check_annotator(self, annotator_id: str) -> None:
        if not annotator_id:
            raise UnknownAnnotatorError("annotator id must be non-empty")
        if self.allowlist is not None and annotator_id not in self.allowlist:
            raise UnknownAnnotatorError(f"annotator {annotator_id!r} not registered")

    def record_vote(self, unit_id: str, annotator_id: str, choice: str,
                    invalid_flag: bool = False, timestamp: float | None = None) -> Vote:
        vote = Vote(unit_id=unit_id, annotator_id=annotator_id, choice=choice,
                    invalid_flag=invalid_flag,
                    timestamp=time.time() if timestamp is None else timestamp)
        with self._lock:
            self._check_annotator(annotator_id)
            # validate against current state before touching the log
            if vote.unit_id not in self._instances:
                raise UnknownUnitError(f"unknown unit {vote.unit_id!r}")
            unit_votes = self._votes[vote.unit_id]
            if vote.annotator_id in unit_votes:
                raise DuplicateVoteError(
                    f"annotator {annotator_id!r} already voted on {unit_id!r}")
            if len(unit_votes) >= REQUIRED_VOTES:
                raise UnitCompleteError(f"unit {unit_id!r} already has {REQUIRED_VOTES} votes")
            self._log.write(dumps_record(vote.to_record()) + "\n")
            self._log.flush()
            os.fsync(self._log.fileno())
            self._apply(vote)
        return vote

    def next_unit(self, annotator_id: str) -> QuestionUnit | None:
        """Open unit this annotator has not voted on, closest to completion
        first, then by unit id; None when the annotator is exhausted."""
        with self._lock:
            self._check_annotator(annotator_id)
            candidates = []
            for unit_id in self._order:
                unit_votes = self._votes.get(unit_id, {})
                if len(unit_votes) >= REQUIRED_VOTES or annotator_id in unit_votes:
                    continue
                candidates.append((-len(unit_votes), unit_id))
            if not candidates:
                return None
            _, unit_id = min(candidates)
            return unit_from_instance(self._instances[unit_id])

    def votes_for(self, unit_id: str) -> list[Vote]:
        with self._lock:
            if unit_id not in self._instances:
                raise UnknownUnitError(f"unknown unit {unit_id!r}")
            return list(self._votes.get(unit_id, {}).values())

    def all_votes(self) -> list[Vote]:
        with self._lock:
            return [v for unit in self._votes.values() for v in unit.values()]

    def progress(self) -> dict:
        with self._lock:
            complete = sum(
                1 for uid in self._order
                if len(self._votes.get(uid, {})) >= REQUIRED_VOTES
            )
            votes_total = sum(len(u) for u in self._votes.values())
            return {
                "units_total": len(self._order),
                "units_complete": complete,
                "units_open": len(self._order) - complete,
                "votes_total": votes_total,
                "votes_needed": len(self._order) * REQUIRED_VOTES - votes_total,
            }

    def clean_test(self) -> tuple[list[PvliInstance], dict]:
        instances = [self._instances[uid] for uid in self._order]
        return select_clean_test(instances, self.all_votes())


def create_app(store: VoteStore, static_dir=None):
    """FastAPI app exposing the annotation API and, optionally, the static
    review UI bundle at the root path."""
    from fastapi import FastAPI, Response
    from fastapi.responses import JSONResponse, PlainTextResponse

    app = FastAPI(title="pvli verification")

    @app.get("/api/next")
    def api_next(annotator: str = ""):
        try:
            unit = store.next_unit(annotator)
        except UnknownAnnotatorError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=403)
        if unit is None:
            return Response(status_code=204)
        return {
            "unit_id": unit.unit_id,
            "prompt": unit.prompt,
            "image_ref": unit.image_ref,
            "votes_recorded": len(store.votes_for(unit.unit_id)),
            "required_votes": unit.required_votes,
        }

    @app.post("/api/vote")
    async def api_vote(payload: dict):
        unit_id = payload.get("unit_id")
        annotator_id = payload.get("annotator_id")
        choice = payload.get("choice")
        invalid_flag = bool(payload.get("invalid_flag", False))
        if not unit_id or not annotator_id:
            return JSONResponse({"detail": "unit_id and annotator_id are required"},
                                status_code=400)
        if choice is None and invalid_flag:
            choice = "not_sure"  # checkbox alone is a valid submission
        if choice not in CHOICES:
            return JSONResponse({"detail": f"choice must be one of {list(CHOICES)}"},
                                status_code=400)
        try:
            store.record_vote(unit_id, annotator_id, choice, invalid_flag)
        except UnknownAnnotatorError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=403)
        except UnknownUnitError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=404)
        except (DuplicateVoteError, UnitCompleteError) as exc:
            return JSONResponse({"detail": str(exc)}, status_code=409)
        return {"status": "recorded",
                "votes_recorded": len(store.votes_for(unit_id))}

    @app.get("/api/progress")
    def api_progress():
        return store.progress()

    @app.get("/api/export/clean-test")
    def api_export():
        instances, summary = store.clean_test()
        lines = [dumps_record(inst.to_record())
                 for inst in instances if inst.split == "clean_test"]
        body = "\n".join(lines) + ("\n" if lines else "")
        return PlainTextResponse(body, media_type="application/x-ndjson",
                                 headers={"x-clean-test-size": str(summary["clean_test_size"]),
                                          "x-allow-count": str(summary["allow_count"])})

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app

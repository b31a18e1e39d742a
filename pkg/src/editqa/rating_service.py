"""Backend for the subjective study.

Serves cases to raters in a seeded per-rater order, enforces the timing
protocol (5-second minimum dwell per sample, a mandatory 5-minute break
after every 15 minutes of active rating), persists ratings append-only,
and exports the score rows consumed by the MOS pipeline.

All timing decisions use an injectable server-side clock; the
client-reported dwell time is stored but never trusted.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .subjective import DEFAULT_DIMS, SCORE_MAX, SCORE_MIN

MIN_DWELL_MS = 5_000
WORK_PERIOD_MS = 15 * 60_000
BREAK_MS = 5 * 60_000


class Clock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)


class ManualClock(Clock):
    """Deterministic clock for tests and simulations."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance(self, ms: int) -> None:
        self._now += ms


class ServiceError(Exception):
    status = 400


class UnknownSessionError(ServiceError):
    status = 404


class DuplicateSessionError(ServiceError):
    status = 409


class DuplicateRatingError(ServiceError):
    status = 409


class SessionDoneError(ServiceError):
    status = 409


class CaseMismatchError(ServiceError):
    status = 409


class InvalidScoreError(ServiceError):
    status = 422


class EarlySubmissionError(ServiceError):
    status = 429

    def __init__(self, retry_after_ms: int):
        self.retry_after_ms = retry_after_ms
        super().__init__(f"submitted before minimum dwell; retry in {retry_after_ms} ms")


@dataclass
class RaterSession:
    session_id: str
    rater_id: str
    order: list[str]
    cursor: int = 0
    active_ms: int = 0          # active rating time since the last break
    state: str = "rating"       # rating | on_break | done
    break_until_ms: int | None = None
    served_case_id: str | None = None
    served_at_ms: int | None = None
    breaks_taken: int = 0


@dataclass
class RatingRecord:
    rater_id: str
    case_id: str
    scores: dict[str, int]
    dwell_ms: int
    submitted_at: int


class RatingStore:
    """Append-only JSONL journal plus an in-memory (rater, case) index."""

    def __init__(self, journal_path: str | Path):
        self.path = Path(journal_path)
        self._lock = threading.Lock()
        self._index: set[tuple[str, str]] = set()
        self._records: list[dict] = []
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._records.append(rec)
                    self._index.add((rec["rater_id"], rec["case_id"]))

    def has(self, rater_id: str, case_id: str) -> bool:
        return (rater_id, case_id) in self._index

    def append(self, record: dict) -> None:
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._records.append(record)
            self._index.add((record["rater_id"], record["case_id"]))

    def records(self) -> list[dict]:
        return list(self._records)


@dataclass
class CasePayload:
    case_id: str
    source_url: str
    edited_url: str
    prompt: str
    dims: tuple[str, ...] = DEFAULT_DIMS
    score_min: int = SCORE_MIN
    score_max: int = SCORE_MAX


class RatingService:
    def __init__(
        self,
        cases: list[CasePayload],
        store: RatingStore,
        clock: Clock | None = None,
        seed: int = 0,
        dims: tuple[str, ...] = DEFAULT_DIMS,
        min_dwell_ms: int = MIN_DWELL_MS,
        work_period_ms: int = WORK_PERIOD_MS,
        break_ms: int = BREAK_MS,
    ):
        if not cases:
            raise ValueError("no cases to rate")
        self.cases = {c.case_id: c for c in cases}
        if len(self.cases) != len(cases):
            raise ValueError("duplicate case ids")
        self.store = store
        self.clock = clock or Clock()
        self.seed = seed
        self.dims = dims
        self.min_dwell_ms = min_dwell_ms
        self.work_period_ms = work_period_ms
        self.break_ms = break_ms
        self._raters: set[str] = set()
        self._sessions: dict[str, RaterSession] = {}
        self._by_rater: dict[str, str] = {}
        self._lock = threading.Lock()
        self._next_session_num = 1

    # -- raters and sessions -------------------------------------------

    def register_rater(self, rater_id: str) -> None:
        if not rater_id:
            raise ServiceError("empty rater_id")
        self._raters.add(rater_id)

    def create_session(self, rater_id: str, seed: int | None = None) -> RaterSession:
        """Every rater rates all cases, in a seeded per-rater order."""
        with self._lock:
            if rater_id not in self._raters:
                raise ServiceError(f"unregistered rater: {rater_id!r}")
            existing = self._by_rater.get(rater_id)
            if existing and self._sessions[existing].state != "done":
                raise DuplicateSessionError(f"open session exists for {rater_id!r}")
            order = sorted(self.cases)
            base_seed = seed if seed is not None else self.seed
            rng = random.Random(f"{base_seed}:{rater_id}")
            rng.shuffle(order)
            session = RaterSession(
                session_id=f"s{self._next_session_num:04d}",
                rater_id=rater_id,
                order=order,
            )
            self._next_session_num += 1
            self._sessions[session.session_id] = session
            self._by_rater[rater_id] = session.session_id
            return session

    def _session(self, session_id: str) -> RaterSession:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(f"no such session: {session_id!r}") from None

    # -- protocol --------------------------------------------------------

    def next_sample(self, session_id: str) -> dict:
        """The next case payload, or a break/done signal."""
        with self._lock:
            session = self._session(session_id)
            now = self.clock.now_ms()
            if session.state == "done":
                return {"kind": "done", "rated": session.cursor}
            if session.state == "on_break":
                if now < session.break_until_ms:
                    return {"kind": "break", "break_until_ms": session.break_until_ms}
                session.state = "rating"
                session.break_until_ms = None
                session.active_ms = 0
            if session.cursor >= len(session.order):
                session.state = "done"
                return {"kind": "done", "rated": session.cursor}
            if session.active_ms >= self.work_period_ms:
                session.state = "on_break"
                session.break_until_ms = now + self.break_ms
                session.breaks_taken += 1
                session.served_case_id = None
                session.served_at_ms = None
                return {"kind": "break", "break_until_ms": session.break_until_ms}
            case_id = session.order[session.cursor]
            session.served_case_id = case_id
            session.served_at_ms = now
            payload = self.cases[case_id]
            return {
                "kind": "case",
                "served_at_ms": now,
                "min_dwell_ms": self.min_dwell_ms,
                "progress": {"done": session.cursor, "total": len(session.order)},
                "case": {
                    "case_id": payload.case_id,
                    "source_url": payload.source_url,
                    "edited_url": payload.edited_url,
                    "prompt": payload.prompt,
                    "dims": list(payload.dims),
                    "score_min": payload.score_min,
                    "score_max": payload.score_max,
                },
            }

    def submit_rating(
        self, session_id: str, case_id: str, scores: dict[str, int],
        dwell_ms: int = 0,
    ) -> dict:
        with self._lock:
            session = self._session(session_id)
            now = self.clock.now_ms()
            if session.state == "done":
                raise SessionDoneError("session already complete")
            if session.served_case_id is None or case_id != session.served_case_id:
                raise CaseMismatchError(
                    f"case {case_id!r} is not the currently served case"
                )
            elapsed = now - session.served_at_ms
            if elapsed < self.min_dwell_ms:
                raise EarlySubmissionError(self.min_dwell_ms - elapsed)
            if set(scores) != set(self.dims):
                raise InvalidScoreError(
                    f"scores must cover exactly {sorted(self.dims)}"
                )
            for dim, value in scores.items():
                if not isinstance(value, int) or not SCORE_MIN <= value <= SCORE_MAX:
                    raise InvalidScoreError(
                        f"{dim}: score {value!r} not an integer in "
                        f"[{SCORE_MIN},{SCORE_MAX}]"
                    )
            if self.store.has(session.rater_id, case_id):
                raise DuplicateRatingError(
                    f"({session.rater_id}, {case_id}) already rated"
                )
            self.store.append(
                {
                    "rater_id": session.rater_id,
                    "case_id": case_id,
                    "scores": dict(sorted(scores.items())),
                    "dwell_ms": int(dwell_ms),       # client-reported, untrusted
                    "server_elapsed_ms": elapsed,
                    "submitted_at": now,
                }
            )
            session.cursor += 1
            session.active_ms += elapsed
            session.served_case_id = None
            session.served_at_ms = None
            if session.cursor >= len(session.order):
                session.state = "done"
            return {
                "ok": True,
                "progress": {"done": session.cursor, "total": len(session.order)},
            }

    # -- export -----------------------------------------------------------

    def export_rows(self) -> list[dict]:
        """Score rows in the MOS-pipeline import format, deterministically
        ordered by (rater_id, case_id, dim)."""
        rows = []
        for rec in self.store.records():
            for dim in sorted(rec["scores"]):
                rows.append(
                    {
                        "rater_id": rec["rater_id"],
                        "case_id": rec["case_id"],
                        "dim": dim,
                        "score": rec["scores"][dim],
                        "timestamp": rec["submitted_at"],
                    }
                )
        rows.sort(key=lambda r: (r["rater_id"], r["case_id"], r["dim"]))
        return rows

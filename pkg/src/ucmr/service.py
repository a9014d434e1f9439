"""Turn-based dialog sessions over HTTP with append-only persistence.

Every state change is appended to a per-session JSON Lines event log
before the response returns; replaying the logs through the (fully
deterministic) dialog engine reconstructs identical sessions after a
crash or restart. Sessions are independent; operations on one session
are serialized by a per-session lock.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .bundle import Bundle, load_bundle
from .dialog import DialogState, DialogTurn
from .errors import (
    InvalidState,
    NotAwaitingAnswer,
    SessionNotFound,
    UcmrError,
    UnknownCorpus,
)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Session:
    session_id: str
    corpus_ref: str
    state: DialogState
    transcript: list[dict] = field(default_factory=list)
    created_at: str = ""
    updated_at: str = ""
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "corpus_ref": self.corpus_ref,
            "transcript": self.transcript,
            "awaiting_answer": self.state.open_inquiry is not None,
            "terminal": self.state.terminal,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


class SessionStore:
    """In-memory sessions backed by per-session event logs."""

    def __init__(self, bundles: dict[str, Bundle], log_dir: str | Path):
        self.bundles = bundles
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self._store_lock = threading.Lock()
        self.replay()

    # -- persistence -------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.log_dir / f"{session_id}.jsonl"

    def _append_event(self, session_id: str, event: dict) -> None:
        with open(self._log_path(session_id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()

    def replay(self) -> None:
        """Rebuild every session by replaying its event log."""
        for path in sorted(self.log_dir.glob("*.jsonl")):
            events = [
                json.loads(line)
                for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
            if not events:
                continue
            head = events[0]
            if head.get("event") != "create":
                continue
            session = self._create_session(
                head["corpus_ref"],
                head["scenario"],
                head["question"],
                session_id=head["session_id"],
                at=head["at"],
                persist=False,
            )
            for event in events[1:]:
                if event.get("event") == "user_answer":
                    self._apply_answer(session, event["text"], event["at"], persist=False)
            self.sessions[session.session_id] = session

    # -- transitions --------------------------------------------------------

    def _bundle(self, corpus_ref: str) -> Bundle:
        if corpus_ref not in self.bundles:
            raise UnknownCorpus(f"no corpus bundle named {corpus_ref!r}")
        return self.bundles[corpus_ref]

    def _create_session(
        self,
        corpus_ref: str,
        scenario: str,
        question: str,
        session_id: Optional[str] = None,
        at: Optional[str] = None,
        persist: bool = True,
    ) -> Session:
        bundle = self._bundle(corpus_ref)
        session_id = session_id or str(uuid.uuid4())
        at = at or _now()
        if persist:
            self._append_event(
                session_id,
                {
                    "event": "create",
                    "session_id": session_id,
                    "corpus_ref": corpus_ref,
                    "scenario": scenario,
                    "question": question,
                    "at": at,
                },
            )
        state, turn = bundle.engine.start(scenario, question)
        session = Session(
            session_id=session_id,
            corpus_ref=corpus_ref,
            state=state,
            created_at=at,
            updated_at=at,
        )
        session.transcript.append(
            {
                "role": "user",
                "kind": "user_message",
                "text": f"{scenario} {question}".strip(),
            }
        )
        session.transcript.append(turn.to_json())
        return session

    def _apply_answer(
        self, session: Session, text: str, at: str, persist: bool = True
    ) -> DialogTurn:
        if session.state.terminal or session.state.open_inquiry is None:
            raise NotAwaitingAnswer(
                f"session {session.session_id} has no open inquiry"
            )
        if persist:
            self._append_event(
                session.session_id,
                {"event": "user_answer", "text": text, "at": at},
            )
        bundle = self._bundle(session.corpus_ref)
        state, turn = bundle.engine.user_answer(session.state, text)
        session.state = state
        session.transcript.append({"role": "user", "kind": "user_message", "text": text})
        session.transcript.append(turn.to_json())
        session.updated_at = at
        return turn

    # -- public API ----------------------------------------------------------

    def create(self, corpus_ref: str, scenario: str, question: str) -> Session:
        session = self._create_session(corpus_ref, scenario, question)
        with self._store_lock:
            self.sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._store_lock:
            if session_id not in self.sessions:
                raise SessionNotFound(f"no session {session_id}")
            return self.sessions[session_id]

    def answer(self, session_id: str, text: str) -> DialogTurn:
        session = self.get(session_id)
        with session.lock:
            return self._apply_answer(session, text, _now())


class CreateSessionBody(BaseModel):
    corpus_ref: str
    scenario: str
    question: str


class AnswerBody(BaseModel):
    text: str


_ERROR_STATUS = {
    SessionNotFound: 404,
    UnknownCorpus: 404,
    NotAwaitingAnswer: 409,
    InvalidState: 409,
}


def create_app(bundles: dict[str, Bundle], log_dir: str | Path) -> FastAPI:
    app = FastAPI(title="ucmr dialog service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(bundles, log_dir)
    app.state.store = store

    @app.exception_handler(UcmrError)
    async def ucmr_error_handler(request: Request, exc: UcmrError):
        status = _ERROR_STATUS.get(type(exc), 500)
        return JSONResponse(
            status_code=status,
            content={"code": type(exc).__name__, "message": str(exc)},
        )

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        session = store.create(body.corpus_ref, body.scenario, body.question)
        return {
            "session_id": session.session_id,
            "turn": session.transcript[-1],
        }

    @app.post("/sessions/{session_id}/answers")
    def post_answer(session_id: str, body: AnswerBody):
        turn = store.answer(session_id, body.text)
        return {"turn": turn.to_json()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return {"session": store.get(session_id).to_json()}

    return app


def load_corpus_dir(corpus_dir: str | Path) -> dict[str, Bundle]:
    """Load every bundle subdirectory of corpus_dir, keyed by its name."""
    corpus_dir = Path(corpus_dir)
    bundles = {}
    for sub in sorted(corpus_dir.iterdir()):
        if sub.is_dir() and (sub / "config.json").exists():
            bundles[sub.name] = load_bundle(sub)
    if not bundles:
        raise UnknownCorpus(f"no bundles found under {corpus_dir}")
    return bundles

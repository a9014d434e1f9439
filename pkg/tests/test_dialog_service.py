from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from ucmr.corpus import Sentence
from ucmr.dialog import DialogEngine
from ucmr.errors import InvalidState
from ucmr.question_gen import TemplateQuestionGenerator
from ucmr.service import create_app
from ucmr.spectral import Rule, Universe

SCENARIO = "My chicken has wart like lesions on the comb."
QUESTION = "What should I do about the flock?"
YES_REPLY = "Yes the fowl pox vaccine was given to every chicken."
NO_REPLY = "No the chickens were never vaccinated."


class StubPredictor:
    """Always predicts a fixed set; lets tests script multi-inquiry dialogs."""

    def __init__(self, fixed):
        self.fixed = set(fixed)

    def predict(self, history):
        return set(self.fixed)


def three_rule_engine():
    sentences = [
        Sentence(0, "Rule zero sentence."),
        Sentence(1, "Rule one sentence."),
        Sentence(2, "Rule two sentence."),
    ]
    universe = Universe(
        tuple(Rule(f"r{i}", (i,), np.zeros(4), 0) for i in range(3))
    )
    return DialogEngine(
        sentences,
        universe,
        [{0, 1, 2}],
        StubPredictor({0}),
        TemplateQuestionGenerator(),
    )


class TestDialogEngine:
    def test_toy_irrelevant(self, toy_bundle):
        state, turn = toy_bundle.engine.start(
            "My tractor engine leaks oil on the barn floor.", "Can I drive it to town?"
        )
        assert turn.answer_class == "irrelevant"
        assert state.terminal

    def test_toy_partial_then_yes(self, toy_bundle):
        state, turn = toy_bundle.engine.start(SCENARIO, QUESTION)
        assert turn.answer_class == "inquire"
        assert "vaccine" in turn.text
        state, turn = toy_bundle.engine.user_answer(state, YES_REPLY)
        assert turn.answer_class == "yes"
        assert state.terminal

    def test_toy_negated_then_no(self, toy_bundle):
        state, turn = toy_bundle.engine.start(SCENARIO, QUESTION)
        state, turn = toy_bundle.engine.user_answer(state, NO_REPLY)
        assert turn.answer_class == "no"

    def test_full_entailment_immediate_yes(self, toy_bundle):
        state, turn = toy_bundle.engine.start(
            "My chicken has wart like lesions on the comb. "
            "A fowl pox vaccine was given to every healthy chicken.",
            "Is my flock safe now?",
        )
        assert turn.answer_class == "yes"
        assert turn.kind == "answer"
        assert state.terminal

    def test_answer_without_inquiry_rejected(self, toy_bundle):
        state, turn = toy_bundle.engine.start(
            "My tractor engine leaks oil on the barn floor.", "Drive?"
        )
        with pytest.raises(InvalidState):
            toy_bundle.engine.user_answer(state, "whatever")

    def test_decision_snapshot_fields(self, toy_bundle):
        _, turn = toy_bundle.engine.start(SCENARIO, QUESTION)
        snap = turn.decision
        assert snap["verdict"] == "inquire"
        assert isinstance(snap["matched_subject"], int)
        assert snap["overlap"] >= 1
        assert snap["remaining_rule_ids"]
        assert snap["predicted"] == sorted(snap["predicted"])

    def test_multi_inquiry_remaining_strictly_shrinks(self):
        engine = three_rule_engine()
        state, turn = engine.start("A scenario.", "A question?")
        remaining_sizes = [len(turn.decision["remaining_rule_ids"])]
        inquiries = 0
        while not state.terminal and inquiries < 10:
            state, turn = engine.user_answer(state, "Yes it is.")
            remaining_sizes.append(len(turn.decision["remaining_rule_ids"]))
            inquiries += 1
        assert state.terminal
        assert inquiries == 2  # |subject| - |predicted| inquiries, then terminal
        assert remaining_sizes == sorted(remaining_sizes, reverse=True)
        assert all(
            a > b for a, b in zip(remaining_sizes, remaining_sizes[1:])
        )

    def test_terminates_within_subject_size(self):
        engine = three_rule_engine()
        engine.predictor = StubPredictor(set())
        # Zero overlap -> irrelevant immediately; with overlap the dialog
        # can take at most |subject| inquiries.
        state, turn = engine.start("S.", "Q?")
        assert turn.answer_class == "irrelevant"


@pytest.fixture()
def client(toy_bundle, tmp_path):
    app = create_app({"toy": toy_bundle}, tmp_path / "logs")
    return TestClient(app)


class TestService:
    def create(self, client, scenario=SCENARIO, question=QUESTION):
        resp = client.post(
            "/sessions",
            json={"corpus_ref": "toy", "scenario": scenario, "question": question},
        )
        assert resp.status_code == 201
        return resp.json()

    def test_create_inquire_answer_flow(self, client):
        created = self.create(client)
        assert created["turn"]["answer_class"] == "inquire"
        sid = created["session_id"]
        resp = client.post(f"/sessions/{sid}/answers", json={"text": YES_REPLY})
        assert resp.status_code == 200
        assert resp.json()["turn"]["answer_class"] == "yes"

    def test_irrelevant_first_turn(self, client):
        created = self.create(
            client, scenario="My tractor engine leaks oil on the barn floor.",
            question="Can I drive it?"
        )
        assert created["turn"]["answer_class"] == "irrelevant"
        assert created["turn"]["kind"] == "answer"

    def test_negated_answer_no(self, client):
        created = self.create(client)
        sid = created["session_id"]
        resp = client.post(f"/sessions/{sid}/answers", json={"text": NO_REPLY})
        assert resp.json()["turn"]["answer_class"] == "no"

    def test_not_awaiting_answer_409(self, client):
        created = self.create(client)
        sid = created["session_id"]
        client.post(f"/sessions/{sid}/answers", json={"text": YES_REPLY})
        resp = client.post(f"/sessions/{sid}/answers", json={"text": "again"})
        assert resp.status_code == 409
        assert resp.json()["code"] == "NotAwaitingAnswer"

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/missing").status_code == 404
        resp = client.post("/sessions/missing/answers", json={"text": "x"})
        assert resp.status_code == 404

    def test_unknown_corpus_404(self, client):
        resp = client.post(
            "/sessions",
            json={"corpus_ref": "nope", "scenario": "s", "question": "q"},
        )
        assert resp.status_code == 404
        assert resp.json()["code"] == "UnknownCorpus"

    def test_validation_422(self, client):
        resp = client.post("/sessions", json={"corpus_ref": "toy"})
        assert resp.status_code == 422

    def test_get_session_round_trip(self, client):
        created = self.create(client)
        sid = created["session_id"]
        client.post(f"/sessions/{sid}/answers", json={"text": YES_REPLY})
        session = client.get(f"/sessions/{sid}").json()["session"]
        kinds = [(t["role"], t["kind"]) for t in session["transcript"]]
        assert kinds == [
            ("user", "user_message"),
            ("system", "inquiry"),
            ("user", "user_message"),
            ("system", "answer"),
        ]
        assert session["terminal"] is True

    def test_no_two_consecutive_system_inquiries(self, client):
        created = self.create(client)
        sid = created["session_id"]
        client.post(f"/sessions/{sid}/answers", json={"text": YES_REPLY})
        transcript = client.get(f"/sessions/{sid}").json()["session"]["transcript"]
        for a, b in zip(transcript, transcript[1:]):
            assert not (
                a["role"] == "system"
                and b["role"] == "system"
                and a["kind"] == "inquiry"
            )

    def test_crash_restart_replay_identical(self, toy_bundle, tmp_path):
        logs = tmp_path / "logs"
        app = create_app({"toy": toy_bundle}, logs)
        client = TestClient(app)
        created = self.create(client)
        sid = created["session_id"]
        client.post(f"/sessions/{sid}/answers", json={"text": YES_REPLY})
        before = client.get(f"/sessions/{sid}").json()["session"]
        # simulate crash: brand-new app over the same log directory
        app2 = create_app({"toy": toy_bundle}, logs)
        after = TestClient(app2).get(f"/sessions/{sid}").json()["session"]
        assert json.dumps(before, sort_keys=True) == json.dumps(after, sort_keys=True)

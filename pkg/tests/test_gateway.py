import json

import pytest
from fastapi.testclient import TestClient

from keyhole.calculus import CalculusParams, CapacityModel
from keyhole.data import FilterSpec
from keyhole.gateway import (
    Gateway,
    GatewayConfig,
    GatewayError,
    make_message,
)
from keyhole.server import create_app
from keyhole.session import (
    Card,
    CorruptionError,
    StateDelta,
    read_provenance,
    replay,
    SessionState,
)

SALES_CSV = (
    "region,product,revenue,churned,signup\n"
    "EU,widget,100,false,2024-01-05\n"
    "EU,widget,200,false,2024-01-20\n"
    "US,gadget,150,true,2024-02-02\n"
    "US,widget,,false,2024-02-14\n"
    "APAC,gadget,90,true,2024-03-01\n"
    "EU,gadget,120,false,2024-03-15\n"
    "US,widget,300,false,2024-04-01\n"
    "APAC,widget,80,true,2024-04-18\n"
    "EU,widget,210,false,2024-05-06\n"
    "EU,gadget,500,false,2024-05-21\n"
)


def fixed_clock():
    import itertools

    counter = itertools.count(1)
    return lambda: float(next(counter))


@pytest.fixture
def gateway(sales):
    gw = Gateway(GatewayConfig(), clock=fixed_clock())
    gw.create_session("s1", sales)
    return gw


def utter(gateway, text, session="s1"):
    return gateway.handle_message(
        make_message("Utterance", session, 0, {"text": text})
    )


class TestUtterances:
    def test_filter_applies_and_pushes_state_view(self, gateway):
        out = utter(gateway, "filter region = EU")
        kinds = [m["kind"] for m in out]
        assert kinds == ["Ack", "StateView"]
        view = out[1]["payload"]
        labels = [t["label"] for t in view["rail_tags"]]
        assert any("region" in l and "EU" in l for l in labels)
        state = gateway.get_session("s1").session.state
        assert state.active_filters == (FilterSpec(column="region", op="eq", values=("EU",)),)

    def test_exactly_one_state_view_per_mutation(self, gateway):
        for text in ("filter region = EU", "show revenue by product", "remove filter region"):
            out = utter(gateway, text)
            assert sum(1 for m in out if m["kind"] == "StateView") == 1

    def test_fuzzy_column_inferred_tier_applies(self, gateway):
        out = utter(gateway, "filter regoin = EU")
        assert out[0]["payload"]["tier"] == "Inferred"
        assert out[0]["payload"]["confidence"] == pytest.approx(1 / (1 + 1 / 6))
        assert out[-1]["kind"] == "StateView"

    def test_low_confidence_no_mutation(self, gateway):
        before = gateway.get_session("s1").session.state.state_hash
        n_records = len(gateway.get_session("s1").session.log)
        # "r" is distance 5 from "region": confidence 1/(1+5/6) ~ 0.545.
        out = utter(gateway, "filter r = EU")
        assert len(out) == 1
        payload = out[0]["payload"]
        assert out[0]["kind"] in ("Ack", "Error")
        if out[0]["kind"] == "Ack":
            assert payload["status"] == "needs_confirmation"
        after = gateway.get_session("s1").session.state.state_hash
        assert after == before
        assert len(gateway.get_session("s1").session.log) == n_records

    def test_unparseable_yields_error(self, gateway):
        out = utter(gateway, "zorble the frobnicator")
        assert out[0]["kind"] == "Error"

    def test_analyze_builds_workspace(self, gateway):
        out = utter(gateway, "analyze churned")
        view = out[-1]["payload"]
        assert out[-1]["kind"] == "StateView"
        assert 1 <= len(view["cards"]) <= 4
        state = gateway.get_session("s1").session.state
        assert len(state.active_filters) <= 3

    def test_summarize_answers_without_mutation(self, gateway):
        utter(gateway, "show revenue by region")
        n_records = len(gateway.get_session("s1").session.log)
        out = utter(gateway, "summarize this view")
        assert out[0]["payload"]["status"] == "answered"
        assert "summary" in out[0]["payload"]
        assert len(gateway.get_session("s1").session.log) == n_records

    def test_remove_filter_restores_hash(self, gateway):
        before = gateway.get_session("s1").session.state.state_hash
        utter(gateway, "filter region = EU")
        out = utter(gateway, "remove filter region")
        assert out[-1]["payload"]["state_hash"] == before

    def test_chat_origin_recorded(self, gateway):
        utter(gateway, "filter region = EU")
        record = gateway.get_session("s1").session.log[-1]
        assert record.delta.origin == "chat"
        assert record.delta.utterance == "filter region = EU"

    def test_wrong_version_rejected(self, gateway):
        msg = make_message("Utterance", "s1", 0, {"text": "filter region = EU"})
        msg["version"] = "v0"
        out = gateway.handle_message(msg)
        assert out[0]["kind"] == "Error"
        assert "version" in out[0]["payload"]["error"]

    def test_unknown_session(self, gateway):
        out = utter(gateway, "filter region = EU", session="nope")
        assert out[0]["kind"] == "Error"


class TestDirectDeltas:
    def test_move_card_keeps_overload(self, gateway):
        utter(gateway, "show revenue by region")
        card_id = gateway.get_session("s1").session.state.cards[0].id
        before = gateway.get_session("s1").telemetry[-1].o
        out = gateway.handle_delta(
            "s1", StateDelta(action="MoveCard", payload={"id": card_id, "position": [10.0, 10.0]})
        )
        assert out[0]["kind"] == "StateView"
        assert gateway.get_session("s1").telemetry[-1].o == before

    def test_set_zoom_emits_card_view(self, gateway):
        utter(gateway, "show revenue by region")
        card_id = gateway.get_session("s1").session.state.cards[0].id
        out = gateway.handle_delta(
            "s1", StateDelta(action="SetZoom", payload={"id": card_id, "level": 0})
        )
        kinds = [m["kind"] for m in out]
        assert kinds == ["StateView", "CardView"]
        zoom = out[1]["payload"]["zoom"]
        assert zoom["level"] == 0
        assert "sentence" in zoom

    def test_chat_origin_rejected(self, gateway):
        with pytest.raises(GatewayError):
            gateway.handle_delta(
                "s1", StateDelta(action="SetCohort", payload={"name": "x"}, origin="chat", confidence=0.9)
            )

    def test_rail_remove_via_delta(self, gateway):
        utter(gateway, "filter region = EU")
        out = gateway.handle_delta(
            "s1", StateDelta(action="RemoveFilter", payload={"column": "region"})
        )
        assert out[0]["payload"]["rail_tags"] == []


class TestSelectionQuestions:
    def test_common_feature_report(self, gateway, sales):
        eu_rows = [i for i in range(sales.row_count) if sales.columns["region"][i] == "EU"]
        out = gateway.handle_selection_question("s1", eu_rows, "what do these have in common")
        features = out[0]["payload"]["features"]
        assert features[0]["column"] == "region"
        assert features[0]["score"] == pytest.approx(1.0)

    def test_all_rows_empty_report(self, gateway, sales):
        out = gateway.handle_selection_question("s1", list(range(sales.row_count)), "common?")
        payload = out[0]["payload"]
        assert payload["features"] == []
        assert payload["note"]

    def test_stale_hash_flagged(self, gateway):
        stale_hash = gateway.get_session("s1").session.state.state_hash
        utter(gateway, "filter region = EU")
        out = gateway.handle_selection_question("s1", [0, 1], "common?", state_hash=stale_hash)
        assert out[0]["payload"]["stale"] is True

    def test_current_hash_not_flagged(self, gateway):
        current = gateway.get_session("s1").session.state.state_hash
        out = gateway.handle_selection_question("s1", [0, 1], "common?", state_hash=current)
        assert out[0]["payload"]["stale"] is False

    def test_empty_selection_rejected(self, gateway):
        with pytest.raises(GatewayError):
            gateway.handle_selection_question("s1", [], "common?")


class TestTelemetry:
    def test_fresh_session_single_zero_report(self, gateway):
        series = gateway.get_telemetry("s1")["payload"]["series"]
        assert len(series) == 1
        assert series[0]["o"] == 0
        assert series[0]["m"] == 0

    def test_length_tracks_provenance_plus_one(self, gateway):
        utter(gateway, "filter region = EU")
        utter(gateway, "show revenue by region")
        utter(gateway, "filter product = widget")
        gs = gateway.get_session("s1")
        series = gateway.get_telemetry("s1")["payload"]["series"]
        assert len(series) == len(gs.session.log) + 1

    def test_chat_mode_reports_table_scenario_overload(self, sales):
        config = GatewayConfig(view_mode="chat_only")
        gw = Gateway(config, clock=fixed_clock())
        gw.create_session("s1", sales)
        # Build m=8 interactively: 4 filters, 3 charts, 1 hypothesis, cohort.
        for col, val in (("region", "EU"), ("product", "widget")):
            utter(gw, f"filter {col} = {val}")
        gw.handle_delta("s1", StateDelta(action="AddFilter", payload={
            "filter": FilterSpec(column="churned", op="eq", values=(False,)).to_dict()}))
        gw.handle_delta("s1", StateDelta(action="AddFilter", payload={
            "filter": FilterSpec(column="revenue", op="range", lo=0, hi=250).to_dict()}))
        for i in range(3):
            gw.handle_delta("s1", StateDelta(action="AddCard", payload={
                "card": Card(id=f"c{i}", kind="chart", position=(float(5 * i), 0.0)).to_dict()}))
        gw.handle_delta("s1", StateDelta(action="AddCard", payload={
            "card": Card(id="hyp", kind="hypothesis", position=(0.0, 5.0)).to_dict()}))
        gw.handle_delta("s1", StateDelta(action="SetCohort", payload={"name": "trial"}))
        latest = gw.get_session("s1").telemetry[-1]
        assert (latest.m, latest.v, latest.o) == (8, 1, 3)

    def test_rail_mode_zero_overload_same_scenario(self, sales):
        for mode, expected_o in (("rail", 0), ("canvas", 0)):
            gw = Gateway(GatewayConfig(view_mode=mode), clock=fixed_clock())
            gw.create_session("s1", sales)
            utter(gw, "filter region = EU")
            utter(gw, "filter product = widget")
            gw.handle_delta("s1", StateDelta(action="SetCohort", payload={"name": "trial"}))
            assert gw.get_session("s1").telemetry[-1].o == expected_o


class TestPersistence:
    def test_empty_round_trip(self, gateway):
        before = gateway.get_session("s1").session.state.state_hash
        text = gateway.snapshot("s1")
        gw2 = Gateway(GatewayConfig(), clock=fixed_clock())
        gs = gw2.load("s2", text)
        restored = gs.session.state
        # Hash covers the full state including session_id carried in the file.
        assert restored.state_hash == before

    def test_round_trip_after_100_deltas(self, gateway):
        gs = gateway.get_session("s1")
        for i in range(100):
            gateway.handle_delta(
                "s1", StateDelta(action="SetCohort", payload={"name": f"c{i}"})
            )
        text = gateway.snapshot("s1")
        gw2 = Gateway(GatewayConfig(), clock=fixed_clock())
        restored = gw2.load("s2", text).session.state
        assert restored.state_hash == gs.session.state.state_hash

    def test_truncated_snapshot(self, gateway):
        utter(gateway, "filter region = EU")
        text = gateway.snapshot("s1")
        with pytest.raises(CorruptionError):
            gw2 = Gateway(GatewayConfig())
            gw2.load("s2", text[: len(text) // 2])

    def test_load_resets_telemetry_invariant(self, gateway):
        utter(gateway, "filter region = EU")
        text = gateway.snapshot("s1")
        gw2 = Gateway(GatewayConfig(), clock=fixed_clock())
        gs = gw2.load("s2", text)
        assert len(gs.telemetry) == len(gs.session.log) + 1

    def test_provenance_replayable(self, gateway, sales):
        utter(gateway, "filter region = EU")
        utter(gateway, "show revenue by product")
        text = gateway.provenance("s1")
        log = read_provenance(text)
        rebuilt = replay(log, SessionState(session_id="s1"), sales)
        assert rebuilt == gateway.get_session("s1").session.state


class TestPush:
    def test_views_fanned_out(self, gateway):
        seen = []
        gateway.push_listeners.append(seen.append)
        utter(gateway, "filter region = EU")
        assert [m["kind"] for m in seen] == ["StateView"]

    def test_sessions_independent(self, gateway, sales):
        gateway.create_session("s2", sales)
        utter(gateway, "filter region = EU", session="s1")
        assert gateway.get_session("s2").session.state.active_filters == ()
        assert len(gateway.get_session("s2").session.log) == 0


class TestConfig:
    def test_from_dict_round_trip(self):
        config = GatewayConfig.from_dict(
            {
                "calculus": {"alpha": 0.5, "lambda": 0.7, "gg_threshold": 2.0},
                "capacity": {"base_capacity": 5.0, "expertise": 1.0},
                "view_mode": "canvas",
            }
        )
        assert config.params.alpha == 0.5
        assert config.params.lambda_ == 0.7
        assert config.params.gg_threshold == 2.0
        assert config.capacity.effective() == 6.0
        assert config.view_mode == "canvas"

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"view_mode": "chat_only"}))
        config = GatewayConfig.load(str(path))
        assert config.view_mode == "chat_only"


class TestHttpServer:
    @pytest.fixture
    def client(self):
        app = create_app(GatewayConfig())
        return TestClient(app)

    def test_health(self, client):
        resp = client.get("/v1/health")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"

    def test_session_flow(self, client):
        resp = client.post("/v1/sessions", json={"session_id": "web", "csv": SALES_CSV})
        assert resp.status_code == 200

        resp = client.post(
            "/v1/message",
            json=make_message("Utterance", "web", 0, {"text": "filter region = EU"}),
        )
        assert resp.status_code == 200
        kinds = [m["kind"] for m in resp.json()["messages"]]
        assert kinds == ["Ack", "StateView"]

        resp = client.get("/v1/sessions/web/snapshot")
        assert resp.status_code == 200
        assert resp.text.startswith("keyhole-snapshot v1\n")

    def test_duplicate_session_rejected(self, client):
        client.post("/v1/sessions", json={"session_id": "web"})
        resp = client.post("/v1/sessions", json={"session_id": "web"})
        assert resp.status_code == 409

    def test_snapshot_unknown_session(self, client):
        resp = client.get("/v1/sessions/ghost/snapshot")
        assert resp.status_code == 404

    def test_websocket_push(self, client):
        client.post("/v1/sessions", json={"session_id": "web", "csv": SALES_CSV})
        with client.websocket_connect("/v1/push/web") as ws:
            client.post(
                "/v1/message",
                json=make_message("Utterance", "web", 0, {"text": "filter region = EU"}),
            )
            msg = ws.receive_json()
            assert msg["kind"] == "StateView"
            assert msg["session_id"] == "web"

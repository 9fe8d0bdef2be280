"""HTTP API tests: decoding rules, canonical bodies, guided session flow.

Every endpoint is exercised through the in-process test client against the
shared corpus model, and responses are cross-checked against direct library
calls on the same pixels.
"""

import base64
import io as stdio
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

import synthimg
from piqflow.datamodel import CATEGORIES
from piqflow.feedback import REGION_PHRASES, build_report
from piqflow.maps import all_maps
from piqflow.model import MODEL_VERSION, predict
from piqflow.service import create_app


def encode(img, fmt="PNG"):
    buf = stdio.BytesIO()
    Image.fromarray(img).save(buf, format=fmt)
    return buf.getvalue()


def canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@pytest.fixture(scope="module")
def service_photo():
    return synthimg.base_photo(4242)


@pytest.fixture(scope="module")
def png(service_photo):
    return encode(service_photo)


@pytest.fixture(scope="module")
def client(corpus_model):
    return TestClient(create_app(corpus_model))


class TestHealth:
    def test_reports_model_identity(self, client, corpus_model):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok",
                               "model_version": MODEL_VERSION,
                               "feature_config": corpus_model.feature_config}

    def test_body_is_canonical_json(self, client):
        resp = client.get("/health")
        assert resp.text == canonical(resp.json())


class TestPredictEndpoint:
    def test_matches_library_prediction(self, client, corpus_model,
                                        service_photo, png):
        resp = client.post("/predict", content=png)
        assert resp.status_code == 200
        obj = resp.json()
        quality, dist = predict(corpus_model, service_photo)
        assert obj["quality"] == quality
        assert obj["distortions"] == {c: float(d)
                                      for c, d in zip(CATEGORIES, dist)}
        assert obj["bucket"] in ("Bad", "Poor", "Fair", "Good", "Excellent")
        assert resp.text == canonical(obj)

    def test_jpeg_is_accepted(self, client, service_photo):
        resp = client.post("/predict", content=encode(service_photo, "JPEG"))
        assert resp.status_code == 200
        assert 0.0 <= resp.json()["quality"] <= 100.0

    def test_tile_parameter_adds_grids(self, client, corpus_model,
                                       service_photo, png):
        resp = client.post("/predict?tile=32", content=png)
        assert resp.status_code == 200
        grid = resp.json()["grid"]
        qmap, dmaps = all_maps(corpus_model, service_photo, 32)
        assert grid["N"] == 32
        assert grid["quality"] == qmap.grid.tolist()
        assert set(grid["distortions"]) == set(CATEGORIES)
        assert grid["distortions"]["blurry"] == dmaps["blurry"].grid.tolist()

    def test_tile_larger_than_image_is_400(self, client, png):
        resp = client.post("/predict?tile=4096", content=png)
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_empty_body_is_422(self, client):
        resp = client.post("/predict", content=b"")
        assert resp.status_code == 422

    def test_foreign_format_is_422(self, client):
        resp = client.post("/predict", content=b"GIF89a" + b"\x00" * 64)
        assert resp.status_code == 422
        assert "PNG" in resp.json()["error"]

    def test_corrupt_png_is_422(self, client):
        blob = b"\x89PNG\r\n\x1a\n" + b"\x00" * 32
        resp = client.post("/predict", content=blob)
        assert resp.status_code == 422

    def test_oversize_body_is_413(self, corpus_model, png):
        tiny = TestClient(create_app(corpus_model, max_image_bytes=100))
        resp = tiny.post("/predict", content=png)
        assert resp.status_code == 413


class TestFeedbackEndpoint:
    def test_report_matches_library(self, client, corpus_model,
                                    service_photo, png):
        resp = client.post("/feedback", content=png)
        assert resp.status_code == 200
        obj = resp.json()
        quality, dist = predict(corpus_model, service_photo)
        expected = build_report(quality, dist).to_json_obj()
        assert obj["messages"] == expected["messages"]
        assert obj["bucket"] == expected["bucket"]
        assert obj["localized"] == []

    def test_localized_query_fills_regions(self, client, service_photo):
        blurred = encode(synthimg.blur_image(service_photo, 6.0))
        resp = client.post("/feedback?localized=true", content=blurred)
        assert resp.status_code == 200
        for entry in resp.json()["localized"]:
            assert entry["category"] in CATEGORIES
            assert entry["region"] in REGION_PHRASES


class TestSessions:
    def create(self, client):
        resp = client.post("/sessions")
        assert resp.status_code == 200
        return resp.json()["session_id"]

    def event(self, client, sid, event, image=None):
        body = {"event": event}
        if image is not None:
            body["image"] = base64.b64encode(image).decode()
        return client.post(f"/sessions/{sid}/events", json=body)

    def test_new_session_awaits_capture(self, client):
        sid = self.create(client)
        resp = client.get(f"/sessions/{sid}")
        assert resp.json() == {"state": "AwaitCapture", "attempts": 0,
                               "last_quality": None}

    def test_full_walk_capture_to_saved(self, client, corpus_model,
                                        service_photo, png):
        sid = self.create(client)

        resp = self.event(client, sid, "capture", image=png)
        assert resp.status_code == 200
        out = resp.json()
        quality, _ = predict(corpus_model, service_photo)
        assert out["state"] == "QualityShown"
        assert out["quality"] == quality
        assert out["message"] == f"Picture quality is {out['bucket']}."

        # server-side state mirrors the event outcome
        got = client.get(f"/sessions/{sid}").json()
        assert got["state"] == "QualityShown"
        assert got["last_quality"] == quality

        resp = self.event(client, sid, "request_distortion_feedback")
        assert resp.status_code == 200
        report = resp.json()["report"]
        assert set(report) == {"bucket", "quality", "ranked", "messages",
                               "localized"}
        for entry in report["localized"]:
            assert entry["region"] in REGION_PHRASES

        resp = self.event(client, sid, "save")
        assert resp.json() == {"state": "Saved", "message": "Photo saved."}
        assert client.get(f"/sessions/{sid}").json()["state"] == "Saved"

    def test_retake_increments_attempts(self, client, png):
        sid = self.create(client)
        self.event(client, sid, "capture", image=png)
        resp = self.event(client, sid, "retake")
        assert resp.json() == {"state": "AwaitCapture", "attempts": 1}
        got = client.get(f"/sessions/{sid}").json()
        assert got["attempts"] == 1
        assert got["last_quality"] is None

    def test_illegal_event_leaves_state_alone(self, client, png):
        sid = self.create(client)
        resp = self.event(client, sid, "save")
        assert resp.status_code == 400
        assert "not allowed" in resp.json()["error"]
        assert client.get(f"/sessions/{sid}").json()["state"] == "AwaitCapture"

    def test_capture_without_image_is_400(self, client):
        sid = self.create(client)
        resp = self.event(client, sid, "capture")
        assert resp.status_code == 400
        assert "image" in resp.json()["error"]

    def test_unknown_event_is_400(self, client):
        sid = self.create(client)
        resp = self.event(client, sid, "zoom")
        assert resp.status_code == 400

    def test_missing_event_field_is_400(self, client):
        sid = self.create(client)
        resp = client.post(f"/sessions/{sid}/events", json={"action": "save"})
        assert resp.status_code == 400

    def test_malformed_json_body_is_400(self, client):
        sid = self.create(client)
        resp = client.post(f"/sessions/{sid}/events", content=b"{nope")
        assert resp.status_code == 400

    def test_invalid_base64_image_is_422(self, client):
        sid = self.create(client)
        resp = client.post(f"/sessions/{sid}/events",
                           json={"event": "capture", "image": "@@not-b64@@"})
        assert resp.status_code == 422

    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/deadbeef").status_code == 404
        resp = client.post("/sessions/deadbeef/events",
                           json={"event": "save"})
        assert resp.status_code == 404

    def test_sessions_are_isolated(self, client, png):
        a, b = self.create(client), self.create(client)
        self.event(client, a, "capture", image=png)
        assert client.get(f"/sessions/{a}").json()["state"] == "QualityShown"
        assert client.get(f"/sessions/{b}").json()["state"] == "AwaitCapture"

    def test_ttl_evicts_idle_sessions(self, corpus_model):
        short = TestClient(create_app(corpus_model, session_ttl_s=0.05))
        sid = short.post("/sessions").json()["session_id"]
        assert short.get(f"/sessions/{sid}").status_code == 200
        time.sleep(0.12)
        assert short.get(f"/sessions/{sid}").status_code == 404


class TestSelectFrame:
    def test_sharpest_frame_wins(self, client, corpus_model, service_photo):
        frames = [synthimg.blur_image(service_photo, 6.0), service_photo,
                  synthimg.blur_image(service_photo, 2.0)]
        files = [("frames", (f"f{i}.png", encode(f), "image/png"))
                 for i, f in enumerate(frames)]
        resp = client.post("/select-frame", files=files)
        assert resp.status_code == 200
        obj = resp.json()
        assert obj["index"] == 1
        assert obj["quality"] == predict(corpus_model, service_photo)[0]
        assert obj["bucket"] in ("Bad", "Poor", "Fair", "Good", "Excellent")

    def test_undecodable_frame_is_422(self, client, service_photo):
        files = [("frames", ("f0.png", encode(service_photo), "image/png")),
                 ("frames", ("f1.png", b"junk", "image/png"))]
        resp = client.post("/select-frame", files=files)
        assert resp.status_code == 422

    def test_no_frames_is_rejected(self, client):
        resp = client.post("/select-frame")
        assert resp.status_code in (400, 422)

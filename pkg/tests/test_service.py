import base64
import concurrent.futures

import httpx
import numpy as np
import pytest

from sigsym.audio_io import AudioBuffer, decode_wav, encode_wav
from sigsym.inference import latent_projection, synthesize
from sigsym.service import ModelService
from sigsym.symbols import LabelTriplet

from test_training import ToyDataset, tiny_model


@pytest.fixture(scope="module")
def model():
    return tiny_model(seed=2)


@pytest.fixture(scope="module")
def running(model):
    ds = ToyDataset(n_train=24, n_val=8)
    projection = latent_projection(ds, model)
    with ModelService(model, port=0, projection=projection) as service:
        with httpx.Client(base_url=service.url, timeout=30.0) as client:
            yield client


def test_model_info(running, model):
    r = running.get("/model/info")
    assert r.status_code == 200
    info = r.json()
    assert info["latent_dim"] == model.latent_dim
    assert info["input_dim"] == model.input_dim
    assert info["n_sources"] == 1
    assert info["has_projection"] is True
    assert "POST /morph" in info["endpoints"]
    assert r.headers["access-control-allow-origin"] == "*"


def test_cors_preflight(running):
    r = running.options("/synthesize")
    assert r.status_code == 204
    assert r.headers["access-control-allow-origin"] == "*"
    assert "POST" in r.headers["access-control-allow-methods"]


def test_decode_at_origin_returns_simplex(running, model):
    z = [0.0] * model.latent_dim
    r = running.post("/decode/signal", json={"z": z})
    assert r.status_code == 200
    assert len(r.json()["magnitudes"]) == model.input_dim
    r2 = running.post("/decode/symbol", json={"z": z})
    families = r2.json()["families"]
    assert [len(f) for f in families] == [12, 2, 3]
    for fam in families:
        assert sum(fam) == pytest.approx(1.0, abs=1e-5)
        assert all(p >= 0 for p in fam)
    assert len(r2.json()["triplets"]) == 1


def test_encode_roundtrip_shapes(running, model):
    x = np.random.default_rng(0).uniform(0, 1, model.input_dim).tolist()
    r = running.post("/encode/signal", json={"magnitudes": x})
    body = r.json()
    assert len(body["mean"]) == model.latent_dim
    assert len(body["log_var"]) == model.latent_dim
    r2 = running.post("/encode/symbol", json={"triplets": [[3, 1, 2]]})
    assert len(r2.json()["mean"]) == model.latent_dim


def test_encode_symbol_sampling_is_seeded(running):
    a = running.post("/encode/symbol?sample=7", json={"triplets": [[3, 1, 2]]}).json()
    b = running.post("/encode/symbol?sample=7", json={"triplets": [[3, 1, 2]]}).json()
    c = running.post("/encode/symbol?sample=8", json={"triplets": [[3, 1, 2]]}).json()
    assert a["z_sample"] == b["z_sample"]
    assert a["z_sample"] != c["z_sample"]
    assert a["mean"] == c["mean"]


def test_synthesize_returns_playable_wav(running, model):
    r = running.post("/synthesize", json={"triplets": [[4, 1, 1]], "duration": 0.25})
    body = r.json()
    buf = decode_wav(base64.b64decode(body["wav_base64"]))
    sr = model.fb_spec.sample_rate
    assert body["sample_rate"] == sr
    assert buf.sample_rate == sr
    assert len(buf.samples) == int(round(0.25 * sr))
    assert len(body["frame"]) == model.input_dim
    again = running.post("/synthesize", json={"triplets": [[4, 1, 1]], "duration": 0.25})
    assert again.json() == body


def test_transcribe_endpoint_roundtrip(running, model):
    audio = synthesize([LabelTriplet(2, 1, 1)], 0.3, model)
    payload = {"wav_base64": base64.b64encode(encode_wav(audio)).decode()}
    r = running.post("/transcribe", json=payload)
    body = r.json()
    assert body["silent"] is False
    assert len(body["frames"]) > 0
    assert len(body["frames"][0]) == 1          # one source
    assert len(body["frames"][0][0]) == 3       # a triplet


def test_transcribe_silence_flag(running, model):
    sr = model.fb_spec.sample_rate
    silence = AudioBuffer(np.zeros(sr // 4, dtype=np.float32), sr)
    payload = {"wav_base64": base64.b64encode(encode_wav(silence)).decode()}
    body = running.post("/transcribe", json=payload).json()
    assert body["silent"] is True
    assert body["frames"] == []


def test_morph_endpoints_match_synthesize_frames(running):
    r = running.post("/morph", json={"a": [[0, 0, 0]], "b": [[7, 1, 2]], "steps": 2})
    body = r.json()
    assert len(body["frames"]) == 2
    start = running.post("/synthesize", json={"triplets": [[0, 0, 0]], "duration": 0.1}).json()
    end = running.post("/synthesize", json={"triplets": [[7, 1, 2]], "duration": 0.1}).json()
    assert body["frames"][0] == start["frame"]
    assert body["frames"][1] == end["frame"]


def test_trajectory_endpoint(running, model):
    points = np.zeros((3, model.latent_dim)).tolist()
    body = running.post("/trajectory", json={"points": points}).json()
    assert len(body["frames"]) == 3
    assert body["frames"][0] == body["frames"][1]


def test_latent_projection_endpoint(running):
    body = running.get("/latent/projection").json()
    assert len(body["coords"]) == 32
    assert len(body["basis"]) == 2
    assert len(body["labels"]) == 32
    assert body["explained"][0] >= body["explained"][1]


def test_service_without_projection_404s(model):
    with ModelService(model, port=0) as service:
        with httpx.Client(base_url=service.url, timeout=10.0) as client:
            assert client.get("/latent/projection").status_code == 404


def test_malformed_and_unknown_requests(running, model):
    r = running.post("/decode/signal", content=b"{not json",
                     headers={"Content-Type": "application/json"})
    assert r.status_code == 400
    assert "error" in r.json()
    r2 = running.post("/decode/signal", json={"wrong_key": 1})
    assert r2.status_code == 400
    r3 = running.post("/no/such/path", json={})
    assert r3.status_code == 404
    r4 = running.get("/nothing")
    assert r4.status_code == 404
    # out-of-vocab labels surface as a 400, not a crash
    r5 = running.post("/synthesize", json={"triplets": [[0, 7, 0]], "duration": 0.1})
    assert r5.status_code == 400


def test_concurrent_decodes_match_sequential(running, model):
    z = np.linspace(-1, 1, model.latent_dim).tolist()
    expected = running.post("/decode/signal", json={"z": z}).json()

    def call(_):
        return running.post("/decode/signal", json={"z": z}).json()

    with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(call, range(16)))
    for body in results:
        assert body == expected

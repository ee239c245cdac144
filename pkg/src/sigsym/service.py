"""Threaded HTTP front end for a loaded model.

JSON in, JSON out; audio travels as base64-encoded WAV. The model is
immutable, every handler works on request-local state only, and responses
are pure functions of (checkpoint, request body, query), so concurrent
calls match sequential ones. Cross-origin headers are always set so a
browser UI served from another port can talk to the service directly.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
from dataclasses import asdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from .audio_io import decode_wav, encode_wav, resample
from .errors import SigsymError
from .inference import (LatentPath, Transcription, morph, synthesize,
                        trajectory, transcribe)
from .symbols import LabelTriplet, decode_labels

log = logging.getLogger(__name__)

SERVICE_VERSION = 1


def _wav_b64(buf) -> str:
    return base64.b64encode(encode_wav(buf)).decode("ascii")


def _triplets(raw):
    return [LabelTriplet(int(p), int(o), int(d)) for p, o, d in raw]


def _sample_seed(query):
    values = query.get("sample")
    return int(values[0]) if values else None


class _Handler(BaseHTTPRequestHandler):
    """One request handler; the model rides on the class object."""

    model = None
    projection = None
    protocol_version = "HTTP/1.1"

    # -- plumbing ----------------------------------------------------------

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _reply(self, code, payload):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _error(self, code, message):
        self._reply(code, {"error": message})

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- routing -----------------------------------------------------------

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/model/info":
            self._reply(200, self._model_info())
        elif url.path == "/latent/projection":
            if self.projection is None:
                self._error(404, "no projection loaded on this service")
            else:
                self._reply(200, self.projection.to_dict())
        else:
            self._error(404, f"unknown path {url.path}")

    def do_POST(self):
        url = urlparse(self.path)
        query = parse_qs(url.query)
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError) as exc:
            self._error(400, f"malformed request body: {exc}")
            return
        routes = {
            "/encode/signal": self._encode_signal,
            "/encode/symbol": self._encode_symbol,
            "/decode/signal": self._decode_signal,
            "/decode/symbol": self._decode_symbol,
            "/transcribe": self._transcribe,
            "/synthesize": self._synthesize,
            "/morph": self._morph,
            "/trajectory": self._trajectory,
        }
        handler = routes.get(url.path)
        if handler is None:
            self._error(404, f"unknown path {url.path}")
            return
        try:
            self._reply(200, handler(body, query))
        except (KeyError, TypeError, ValueError) as exc:
            self._error(400, f"bad request: {exc!r}")
        except SigsymError as exc:
            self._error(400, str(exc))
        except Exception as exc:   # pragma: no cover - defensive
            log.exception("internal error serving %s", url.path)
            self._error(500, f"internal error: {exc!r}")

    # -- endpoint bodies -----------------------------------------------------

    def _model_info(self):
        model = self.model
        return {
            "service": "sigsym",
            "version": SERVICE_VERSION,
            "latent_dim": model.latent_dim,
            "input_dim": model.input_dim,
            "architecture": model.architecture(),
            "vocab": model.vocab.to_dict(),
            "families": ["pitch", "octave", "dynamics"],
            "family_sizes": list(model.vocab.family_sizes),
            "n_sources": model.vocab.n_sources,
            "filterbank": asdict(model.fb_spec),
            "sample_rate": model.fb_spec.sample_rate,
            "has_projection": self.projection is not None,
            "endpoints": {
                "GET /model/info": "this document",
                "GET /latent/projection": "2-D latent map of the dataset",
                "POST /encode/signal": "{magnitudes} -> {mean, log_var}",
                "POST /encode/symbol": "{triplets} -> {mean, log_var}",
                "POST /decode/signal": "{z} -> {magnitudes, log_var}",
                "POST /decode/symbol": "{z} -> {families, triplets, confidences}",
                "POST /transcribe": "{wav_base64} -> transcription",
                "POST /synthesize": "{triplets, duration} -> {wav_base64, frame}",
                "POST /morph": "{a, b, steps} -> {frames, latents, wav_base64}",
                "POST /trajectory": "{points} -> {frames, wav_base64}",
            },
        }

    def _encode_signal(self, body, query):
        x = np.asarray(body["magnitudes"], dtype=np.float32)
        q = self.model.encode_signal(x)
        out = {"mean": q.mean_array().tolist(),
               "log_var": np.asarray(q.log_var.data).tolist()}
        seed = _sample_seed(query)
        if seed is not None:
            out["z_sample"] = np.asarray(q.sample(np.random.default_rng(seed)).data).tolist()
        return out

    def _encode_symbol(self, body, query):
        from .symbols import encode_labels
        code = encode_labels(_triplets(body["triplets"]), self.model.vocab)
        q = self.model.encode_symbol(code)
        out = {"mean": q.mean_array().tolist(),
               "log_var": np.asarray(q.log_var.data).tolist()}
        seed = _sample_seed(query)
        if seed is not None:
            out["z_sample"] = np.asarray(q.sample(np.random.default_rng(seed)).data).tolist()
        return out

    def _decode_signal(self, body, query):
        z = np.asarray(body["z"], dtype=np.float32)
        dist = self.model.signal_vae.decode(_tensor(z))
        return {"magnitudes": np.asarray(dist.mean.data).tolist(),
                "log_var": np.asarray(dist.log_var.data).tolist()}

    def _decode_symbol(self, body, query):
        z = np.asarray(body["z"], dtype=np.float32)
        probs = self.model.decode_symbol_probs(z)
        if z.ndim == 1:
            trips, confs = decode_labels(probs, self.model.vocab)
            return {"families": [p.tolist() for p in probs],
                    "triplets": [list(t) for t in trips],
                    "confidences": [float(c) for source in confs for c in source]}
        return {"families": [p.tolist() for p in probs]}

    def _transcribe(self, body, query):
        raw = base64.b64decode(body["wav_base64"])
        buf = decode_wav(raw)
        target = self.model.fb_spec.sample_rate
        if buf.sample_rate != target:
            buf = resample(buf, target)
        result: Transcription = transcribe(buf, self.model)
        return result.to_dict()

    def _synthesize(self, body, query):
        trips = _triplets(body["triplets"])
        duration = float(body.get("duration", 1.0))
        audio = synthesize(trips, duration, self.model, sample_seed=_sample_seed(query))
        from .inference import label_latent
        z = label_latent(trips, self.model, sample_seed=_sample_seed(query))
        frame = self.model.decode_signal(z)
        return {"wav_base64": _wav_b64(audio),
                "sample_rate": audio.sample_rate,
                "frame": np.asarray(frame).tolist(),
                "z": np.asarray(z).tolist()}

    def _morph(self, body, query):
        result = morph(_triplets(body["a"]), _triplets(body["b"]),
                       int(body.get("steps", 9)), self.model)
        return {"frames": result.frames.tolist(),
                "latents": result.latents.tolist(),
                "wav_base64": _wav_b64(result.audio),
                "sample_rate": result.audio.sample_rate}

    def _trajectory(self, body, query):
        audio, frames = trajectory(LatentPath(np.asarray(body["points"], dtype=np.float32)),
                                   self.model)
        return {"wav_base64": _wav_b64(audio),
                "sample_rate": audio.sample_rate,
                "frames": frames.tolist()}


def _tensor(arr):
    from . import tensor as T
    return T.Tensor(np.asarray(arr, dtype=np.float32))


class ModelService:
    """Owns the HTTP server; use as a context manager in tests."""

    def __init__(self, model, host="127.0.0.1", port=8000, projection=None):
        handler = type("BoundHandler", (_Handler,),
                       {"model": model, "projection": projection})
        self.server = ThreadingHTTPServer((host, port), handler)
        self.host, self.port = self.server.server_address[:2]
        self._thread = None

    @property
    def url(self):
        return f"http://{self.host}:{self.port}"

    def start(self):
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        log.info("serving on %s", self.url)
        self.server.serve_forever()

    def shutdown(self):
        self.server.shutdown()
        self.server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()
        return False


def serve(model, host="127.0.0.1", port=8000, projection=None) -> ModelService:
    """Construct and start a service; raises if the port is taken."""
    return ModelService(model, host, port, projection=projection).start()

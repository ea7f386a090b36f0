"""JSON-over-HTTP adapters for external LLM, detector and denoiser services."""
from __future__ import annotations

import base64
import json
import os
import urllib.error
import urllib.request

import numpy as np

from glyphforge.errors import BackendUnavailable, MalformedResponse
from glyphforge.imaging import decode_png_bytes, png_bytes

DEFAULT_TIMEOUT = 60.0


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"data": base64.b64encode(a.tobytes()).decode("ascii"), "shape": list(a.shape), "dtype": "<f8"}


def decode_array(obj: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(obj["data"])
        arr = np.frombuffer(raw, dtype=np.dtype(obj.get("dtype", "<f8")))
        return arr.reshape(obj["shape"]).astype(np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"bad array payload: {exc}") from None


def post_json(url: str, payload: dict, timeout: float = DEFAULT_TIMEOUT, api_key: str | None = None):
    body = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(url, data=body, method="POST", headers={"Content-Type": "application/json"})
    if api_key:
        req.add_header("Authorization", f"Bearer {api_key}")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            text = resp.read().decode("utf-8")
    except (urllib.error.URLError, OSError, TimeoutError) as exc:
        raise BackendUnavailable(f"{url}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _env_url(var: str, url: str | None) -> str:
    url = url or os.environ.get(var)
    if not url:
        raise BackendUnavailable(f"{var} is not set")
    return url.rstrip("/")


class HTTPLLM:
    """request {system_text, user_text} -> raw string (or {"text": ...})."""

    source = "llm"

    def __init__(self, url: str | None = None, api_key: str | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.url = _env_url("GLYPHFORGE_LLM_URL", url)
        self.api_key = api_key if api_key is not None else os.environ.get("GLYPHFORGE_LLM_KEY")
        self.timeout = timeout
        self.backend_id = f"http-llm:{self.url}"

    def complete(self, system_text: str, user_text: str) -> str:
        out = post_json(self.url, {"system_text": system_text, "user_text": user_text}, self.timeout, self.api_key)
        if isinstance(out, dict):
            out = out.get("text", json.dumps(out))
        return out if isinstance(out, str) else json.dumps(out)


class HTTPDetector:
    """request {image: PNG base64, text, box_threshold} -> [{box, score, phrase}]."""

    def __init__(self, url: str | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.url = _env_url("GLYPHFORGE_DETECTOR_URL", url)
        self.timeout = timeout
        self.backend_id = f"http-detector:{self.url}"

    def detect(self, image, prompt: str, box_threshold: float = 0.0):
        from glyphforge.region import DetectionBox

        pixels = image.pixels if hasattr(image, "pixels") else image
        payload = {
            "image": base64.b64encode(png_bytes(pixels)).decode("ascii"),
            "text": prompt,
            "box_threshold": box_threshold,
        }
        out = post_json(self.url, payload, self.timeout)
        if not isinstance(out, list):
            raise MalformedResponse("detector response must be a JSON list")
        return [DetectionBox.from_json(item) for item in out]


class HTTPDenoiser:
    """Remote denoiser exposing /encode, /decode and /predict_noise.

    Hooks travel as configuration in the request; the server applies key
    substitution and returns captures, which are replayed into local handles.
    """

    supports_hooks = True

    def __init__(self, url: str | None = None, timeout: float = DEFAULT_TIMEOUT, schedule=None, latent_factor: int = 8, channels: int = 4):
        from glyphforge.backends.base import HookRegistry
        from glyphforge.sampler import make_schedule

        self.url = _env_url("GLYPHFORGE_DENOISER_URL", url)
        self.timeout = timeout
        self.schedule = schedule or make_schedule()
        self.latent_factor = latent_factor
        self.channels = channels
        self.hooks = HookRegistry()
        self.backend_id = f"http-denoiser:{self.url}"

    def latent_shape(self, image_hw):
        return (image_hw[0] // self.latent_factor, image_hw[1] // self.latent_factor, self.channels)

    def encode(self, image):
        out = post_json(self.url + "/encode", {"image": encode_array(image)}, self.timeout)
        return decode_array(out["latent"])

    def decode(self, latent):
        out = post_json(self.url + "/decode", {"latent": encode_array(latent)}, self.timeout)
        return decode_array(out["image"])

    def _hook_config(self):
        handles = self.hooks.enabled()
        layers = set()
        for h in handles:
            layers |= h.layers or set()
        cfg = {"capture": any(h.capture for h in handles), "key_mix": None, "layers": sorted(layers) or None}
        for h in handles:
            if h.substitution is not None:
                mix = h.substitution
                cfg["key_mix"] = {
                    "alpha": mix.alpha,
                    "subject_keys": [
                        {lid: encode_array(cap.k) for lid, cap in src.items()} for src in mix.sources
                    ],
                    "assignment": None if mix.assignment is None else mix.assignment.tolist(),
                }
        return cfg, handles

    def predict_noise(self, x_t, t, prompt, control=None, control_scale=None):
        from glyphforge.attention import AttentionCapture

        cfg, handles = self._hook_config()
        payload = {
            "latent": encode_array(x_t),
            "t": int(t),
            "prompt": prompt,
            "control": None if control is None else base64.b64encode(png_bytes(control.image)).decode("ascii"),
            "control_kind": None if control is None else control.kind.value,
            "CS": None if control is None else float(control.conditioning_scale if control_scale is None else control_scale),
            "hooks": cfg,
        }
        out = post_json(self.url + "/predict_noise", payload, self.timeout)
        if not isinstance(out, dict) or "eps" not in out:
            raise MalformedResponse("denoiser response lacks 'eps'")
        for item in out.get("captures") or []:
            cap = AttentionCapture(
                item["layer_id"], int(t), decode_array(item["q"]), decode_array(item["k"]),
                decode_array(item["raw_scores"]), int(item["head_count"]), int(item["d_dim"]),
                tuple(item["grid_hw"]),
            )
            for h in handles:
                if h.capture and h.applies(cap.layer_id):
                    h.record(cap)
        return decode_array(out["eps"])


def decode_control_png(b64: str) -> np.ndarray:
    return decode_png_bytes(base64.b64decode(b64))


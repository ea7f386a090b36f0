from glyphforge.backends.base import DenoiserBackend, DetectorBackend, HookHandle, KeyMix, LLMBackend, install_hooks
from glyphforge.backends.detectors import ComponentDetector, FixtureDetector
from glyphforge.backends.llm import FixtureLLM
from glyphforge.backends.remote import HTTPDenoiser, HTTPDetector, HTTPLLM
from glyphforge.backends.toy import AnalyticGaussianBackend, IdentityCodec, MicroAttentionBackend

__all__ = [
    "AnalyticGaussianBackend",
    "ComponentDetector",
    "DenoiserBackend",
    "DetectorBackend",
    "FixtureDetector",
    "FixtureLLM",
    "HTTPDenoiser",
    "HTTPDetector",
    "HTTPLLM",
    "HookHandle",
    "IdentityCodec",
    "KeyMix",
    "LLMBackend",
    "MicroAttentionBackend",
    "install_hooks",
]

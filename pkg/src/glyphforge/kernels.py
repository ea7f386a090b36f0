"""Kernel dispatch: the compiled extension when it imports, numpy otherwise.

Set ``GLYPHFORGE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from glyphforge import _pykernels as python_impl

compiled_impl = None
if os.environ.get("GLYPHFORGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from glyphforge import _ckernels as compiled_impl
    except ImportError:  # extension not built
        compiled_impl = None

_impl = compiled_impl if compiled_impl is not None else python_impl

BACKEND = _impl.NAME
label_components = _impl.label_components
fused_step = _impl.fused_step
blur_separable = _impl.blur_separable
attention_received = _impl.attention_received

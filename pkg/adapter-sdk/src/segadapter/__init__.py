"""Server-side SDK for the interactive segmentation evaluation protocol.

Wrap a model in :class:`AdapterHooks`, call :func:`serve_adapter`, and the
harness can drive it like any other application. The SDK also mirrors the
three preprocessing utilities adapters typically need, cross-checked against
the golden vectors shipped with the harness.
"""

__version__ = "0.1.0"

from .preprocess import clip_normalize, point_to_relative, remap_index
from .server import AdapterHooks, serve_adapter

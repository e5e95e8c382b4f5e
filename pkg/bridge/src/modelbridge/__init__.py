"""Serve pretrained image classifiers as wire-protocol gradient oracles.

The bridge owns everything model-side: weight loading, normalization,
and backpropagation to the input pixels. Clients only ever see the
newline-JSON protocol, so any attack tooling that speaks it can drive
these models without importing torch.
"""

from .oracle import CLASSES, MODEL_BUILDERS, TorchOracle
from .protocol import BridgeServer, decode_floats, encode_floats, serve_connection

__all__ = [
    "CLASSES",
    "MODEL_BUILDERS",
    "TorchOracle",
    "BridgeServer",
    "decode_floats",
    "encode_floats",
    "serve_connection",
]

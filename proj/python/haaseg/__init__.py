"""Hybrid axial-attention segmentation.

Configuration arguments accept a dict (or JSON text) in the same layout as the
CLI config files; omitted fields take their defaults.
"""

import json

import numpy as np

from . import _haaseg
from ._haaseg import (
    ConfigError,
    ContractError,
    IncompatibleCheckpoint,
    ParseError,
    ShapeError,
    bce,
    decode_pgm,
    encode_pgm,
    encodings,
    evaluate,
    mac_count,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "IncompatibleCheckpoint",
    "Network",
    "ParseError",
    "ShapeError",
    "ablate",
    "bce",
    "decode_pgm",
    "default_config",
    "encode_pgm",
    "encodings",
    "evaluate",
    "generate_dataset",
    "gradcheck",
    "mac_count",
]


def _text(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return json.dumps(config)


def default_config(config=None):
    """Fully resolved configuration as a dict."""
    return json.loads(_haaseg.resolve_config(_text(config)))


def generate_dataset(config=None):
    """Synthetic samples as (ids, images, masks); arrays are [N, 1, S, S]."""
    rows = _haaseg.generate_dataset(_text(config))
    ids = [r[0] for r in rows]
    return ids, np.stack([r[1] for r in rows]), np.stack([r[2] for r in rows])


def gradcheck(config=None):
    return _haaseg.gradcheck(_text(config))


def ablate(config=None, threads=0):
    return json.loads(_haaseg.ablate(_text(config), threads))


class Network:
    def __init__(self, config=None):
        self._net = _haaseg.Network(_text(config))

    def __call__(self, image):
        return self._net.forward(image)

    def fit(self, images, masks):
        return self._net.fit(list(images), list(masks))

    def evaluate(self, images, masks):
        return self._net.evaluate(list(images), list(masks))

    def state_bytes(self):
        return self._net.checkpoint()

    def load_state_bytes(self, data):
        self._net.load(data)

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.state_bytes())

    def load(self, path):
        with open(path, "rb") as f:
            self.load_state_bytes(f.read())

    @property
    def param_count(self):
        return self._net.param_count

    @property
    def macs(self):
        return self._net.macs

    @property
    def config(self):
        return json.loads(self._net.config)

"""Photonic crystal double-heterostructure cavities: bands, FDTD ringdowns, Q extraction."""

import json as _json

from ._core import (
    ConfigError,
    LatticeSpec,
    NumericalError,
    Profile,
    bragg_cavity,
    bulk_bands,
    effective_slab_index,
    fabry_perot_q,
    harmonic_inversion,
    index_at,
    rasterize_2d,
    selftest,
    simulate,
    transfer_matrix,
)
from ._core import config_json as _config_json

__version__ = "0.1.0"


def load_config(text):
    """Validate a YAML/JSON config and return every setting as a dict."""
    return _json.loads(_config_json(text))


__all__ = [
    "ConfigError",
    "LatticeSpec",
    "NumericalError",
    "Profile",
    "bragg_cavity",
    "bulk_bands",
    "effective_slab_index",
    "fabry_perot_q",
    "harmonic_inversion",
    "index_at",
    "load_config",
    "rasterize_2d",
    "selftest",
    "simulate",
    "transfer_matrix",
]

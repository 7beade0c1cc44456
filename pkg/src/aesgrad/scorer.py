"""Aesthetic score prediction: a linear head over visual embeddings.

The evaluation instrument for the quantitative harness. A synthetic
factory produces scorers aligned with a given aesthetic embedding so that
desk-scale experiments reward the targeted aesthetic, mirroring how a
scorer trained on highly-rated images rewards images like them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aesthetics import AestheticEmbedding
from .errors import ConfigError, FormatError, ShapeMismatchError
from .formats import AESC_MAGIC, read_container, write_container
from .tensor import Tensor


@dataclass(frozen=True)
class ScorerWeights:
    w: np.ndarray
    b: float
    name: str = "scorer"

    @property
    def expected_dim(self) -> int:
        return self.w.shape[0]


def score(v: np.ndarray | Tensor, s: ScorerWeights) -> float:
    vec = np.asarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64)
    if vec.shape != (s.expected_dim,):
        raise ShapeMismatchError(
            f"embedding shape {vec.shape} vs scorer dim {s.expected_dim}")
    return float(np.dot(np.asarray(s.w, dtype=np.float64), vec) + s.b)


def make_aligned_scorer(e: AestheticEmbedding, gain: float, b: float = 0.0,
                        name: str = "aligned") -> ScorerWeights:
    """w = gain * e, so scores move with agreement to the aesthetic."""
    if gain == 0.0:
        raise ConfigError("aligned scorer gain must be nonzero")
    w = (np.asarray(e.vector, dtype=np.float32) * np.float32(gain))
    return ScorerWeights(w=w, b=float(b), name=name)


def save_scorer(s: ScorerWeights, path: str | Path) -> None:
    write_container(path, AESC_MAGIC, s.w,
                    {"name": s.name, "expected_dim": s.expected_dim, "bias": s.b})


def load_scorer(path: str | Path, expected_dim: int | None = None) -> ScorerWeights:
    payload, metadata = read_container(path, AESC_MAGIC)
    for key in ("name", "expected_dim", "bias"):
        if key not in metadata:
            raise FormatError(f"scorer metadata is missing {key!r}")
    if int(metadata["expected_dim"]) != payload.shape[0]:
        raise FormatError(
            f"scorer metadata dim {metadata['expected_dim']} disagrees with payload "
            f"length {payload.shape[0]}")
    if expected_dim is not None and payload.shape[0] != expected_dim:
        raise ShapeMismatchError(
            f"scorer dim {payload.shape[0]} vs required dim {expected_dim}")
    return ScorerWeights(w=payload, b=float(metadata["bias"]), name=str(metadata["name"]))

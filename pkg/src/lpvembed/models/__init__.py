"""Bundled example models and the test corpus."""

from __future__ import annotations

from pathlib import Path

from ..modelfile import ModelDocument, load_model_file
from ..synthetic import corpus_models

BUNDLED = ("unbalanced_disk", "tanh_example")


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise KeyError(f"no bundled model '{name}'; available: {', '.join(BUNDLED)}")
    return Path(__file__).parent / f"{name}.nlss"


def load_bundled(name: str) -> ModelDocument:
    return load_model_file(str(bundled_path(name)))


def corpus() -> list[ModelDocument]:
    """Every corpus member: the bundled examples plus three fixed synthetics."""
    docs = [load_bundled(n) for n in BUNDLED]
    docs += [ModelDocument(m, None, None, path="") for m in corpus_models()]
    return docs

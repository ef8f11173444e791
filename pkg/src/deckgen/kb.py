"""Dual knowledge bases with embedding-backed top-k cosine retrieval.

Two entry kinds exist: ``shape_type`` (element vocabulary fed whole to the
description stage) and ``operation_function`` (API syntax entries retrieved
per query). Entries live in line-delimited JSON files; an index is a
write-once collection of unit-norm vectors scanned exactly, which is plenty
at the dozens-to-hundreds scale these bases have.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
import requests

KINDS = ("shape_type", "operation_function")


class KbError(Exception):
    pass


@dataclass(frozen=True)
class KbEntry:
    id: str
    kind: str
    name: str
    body: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KbError(f"unknown entry kind {self.kind!r}")
        if not self.name:
            raise KbError(f"entry {self.id!r} has an empty name")

    @property
    def embed_text(self) -> str:
        return f"{self.name}\n{self.body}"


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class MockEmbeddingProvider:
    """Deterministic local embedder: tokens hashed into a fixed-size vector.

    Useful for offline tests and air-gapped runs; identical text always maps
    to the identical unit vector.
    """

    def __init__(self, dimension: int = 64, seed: int = 0):
        if dimension < 2:
            raise ValueError("dimension must be >= 2")
        self.dimension = dimension
        self.seed = seed

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in re.findall(r"[a-z0-9_]+", text.lower()):
            digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
            idx = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0
            return vec
        return vec / norm


class HttpEmbeddingProvider:
    """Remote embedder: POST {model, input} to an endpoint, expect {embedding}."""

    def __init__(
        self,
        endpoint: str,
        dimension: int,
        model: str = "",
        api_key_env: str = "",
        timeout: float = 30.0,
    ):
        self.endpoint = endpoint
        self.dimension = dimension
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise KbError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        resp = requests.post(
            self.endpoint,
            json={"model": self.model, "input": text},
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        vec = np.asarray(resp.json()["embedding"], dtype=np.float64)
        if vec.shape != (self.dimension,):
            raise KbError(
                f"provider returned dimension {vec.shape}, expected ({self.dimension},)"
            )
        return vec


def load_kb(path: str | Path) -> list[KbEntry]:
    """Parse a line-delimited JSON knowledge base file; ids must be unique."""
    entries: list[KbEntry] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                entry = KbEntry(
                    id=str(raw["id"]),
                    kind=str(raw["kind"]),
                    name=str(raw["name"]),
                    body=str(raw["body"]),
                )
            except (json.JSONDecodeError, KeyError, KbError) as exc:
                raise KbError(f"{path}:{lineno}: malformed entry: {exc}") from exc
            if entry.id in seen:
                raise KbError(f"{path}:{lineno}: duplicate entry id {entry.id!r}")
            seen.add(entry.id)
            entries.append(entry)
    return entries


def all_entries(entries: list[KbEntry], kind: str = "shape_type") -> list[KbEntry]:
    """All entries of one kind in stable id-ascending order."""
    return sorted((e for e in entries if e.kind == kind), key=lambda e: e.id)


class VectorIndex:
    """Immutable unit-norm vector index over one entry kind."""

    def __init__(self, dimension: int, kind: str, entries: list[KbEntry], vectors: np.ndarray):
        if vectors.shape != (len(entries), dimension):
            raise KbError(
                f"vector block {vectors.shape} does not match "
                f"{len(entries)} entries of dimension {dimension}"
            )
        norms = np.linalg.norm(vectors, axis=1) if len(entries) else np.array([])
        if len(entries) and not np.allclose(norms, 1.0, atol=1e-6):
            raise KbError("index vectors must be unit-norm")
        self.dimension = dimension
        self.kind = kind
        self._entries = tuple(entries)
        self._vectors = vectors.copy()
        self._vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[KbEntry, ...]:
        return self._entries

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def save(self, path: str | Path) -> None:
        payload = {
            "dimension": self.dimension,
            "kind": self.kind,
            "entries": [
                {
                    "id": e.id,
                    "kind": e.kind,
                    "name": e.name,
                    "body": e.body,
                    "vector": v.tolist(),
                }
                for e, v in zip(self._entries, self._vectors)
            ],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [
            KbEntry(id=e["id"], kind=e["kind"], name=e["name"], body=e["body"])
            for e in payload["entries"]
        ]
        vectors = np.array(
            [e["vector"] for e in payload["entries"]], dtype=np.float64
        ).reshape(len(entries), payload["dimension"])
        return cls(payload["dimension"], payload["kind"], entries, vectors)


def build_index(
    entries: list[KbEntry], provider: EmbeddingProvider, kind: str
) -> VectorIndex:
    """Embed name+body of every entry of ``kind`` and normalize to unit length."""
    selected = all_entries(entries, kind)
    vectors = np.zeros((len(selected), provider.dimension), dtype=np.float64)
    for row, entry in enumerate(selected):
        try:
            vec = np.asarray(provider.embed(entry.embed_text), dtype=np.float64)
        except Exception as exc:
            raise KbError(f"embedding failed for entry {entry.id!r}: {exc}") from exc
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise KbError(f"entry {entry.id!r} embedded to the zero vector")
        vectors[row] = vec / norm
    return VectorIndex(provider.dimension, kind, selected, vectors)


def retrieve_top_k(
    index: VectorIndex, query: str, k: int, provider: EmbeddingProvider
) -> list[tuple[KbEntry, float]]:
    """Top-k entries by cosine score, ties broken by ascending entry id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        return []
    q = np.asarray(provider.embed(query), dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm > 0:
        q = q / norm
    # Row-wise dots, not a matmul: the ranking must be bit-identical to an
    # exhaustive per-entry scan, and BLAS accumulation order is not.
    scored = [(entry, float(vec @ q)) for entry, vec in zip(index.entries, index.vectors)]
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return scored[:k]

"""Retrieval over expectation documents: chunking, hashed embeddings, cosine top-k."""

from __future__ import annotations

import base64
import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

from rubiscot.errors import (
    DimensionMismatch,
    EmptyStore,
    InvalidChunkParams,
    ZeroVector,
)
from rubiscot.model import SectionKind
from rubiscot.prompts import split_front_matter

DEFAULT_CHUNK_SIZE = 800
DEFAULT_OVERLAP = 200
DEFAULT_K = 4


class ExpectationKind(str, Enum):
    EXPECTATION = "EXPECTATION"
    GUIDELINE = "GUIDELINE"
    RUBRIC_SOURCE = "RUBRIC_SOURCE"


@dataclass(frozen=True)
class ExpectationDocument:
    doc_id: str
    kind: ExpectationKind
    target_section: SectionKind | None
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"expectation document {self.doc_id!r} is empty")


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    chunk_index: int
    text: str
    char_range: tuple[int, int]


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    score: float


def chunk_document(doc: ExpectationDocument, chunk_size: int, overlap: int) -> list[Chunk]:
    """Split into fixed windows advancing by ``chunk_size - overlap``."""
    if not 0 <= overlap < chunk_size:
        raise InvalidChunkParams(f"need 0 <= overlap < chunk_size, got {overlap=} {chunk_size=}")
    n = len(doc.text)
    step = chunk_size - overlap
    chunks = []
    start = 0
    while True:
        end = min(start + chunk_size, n)
        chunks.append(Chunk(doc.doc_id, len(chunks), doc.text[start:end], (start, end)))
        if end >= n:
            return chunks
        start += step


def reassemble(chunks: list[Chunk], overlap: int) -> str:
    if not chunks:
        return ""
    return chunks[0].text + "".join(c.text[overlap:] for c in chunks[1:])


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine of an all-zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


_TOKEN = re.compile(r"[a-z0-9]+")


class HashingEmbedder:
    """Hashed unigram counts, L2-normalized. Offline and deterministic."""

    def __init__(self, dimension: int = 256) -> None:
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for token in _TOKEN.findall(text.lower()):
            vec[self._bucket(token)] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm else vec


class RagStore:
    """In-memory chunk index. Build once, then query read-only."""

    def __init__(
        self,
        embedder: Embedder | None = None,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        overlap: int = DEFAULT_OVERLAP,
    ) -> None:
        if not 0 <= overlap < chunk_size:
            raise InvalidChunkParams(f"need 0 <= overlap < chunk_size, got {overlap=} {chunk_size=}")
        self.embedder = embedder or HashingEmbedder()
        self.chunk_size = chunk_size
        self.overlap = overlap
        self.documents: dict[str, ExpectationDocument] = {}
        self.chunks: list[Chunk] = []
        self._vectors: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.chunks)

    def add(self, doc: ExpectationDocument) -> None:
        if doc.doc_id in self.documents:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        self.documents[doc.doc_id] = doc
        for chunk in chunk_document(doc, self.chunk_size, self.overlap):
            self.chunks.append(chunk)
            self._vectors.append(self.embedder.embed(chunk.text))

    def retrieve(
        self, query: str, k: int = DEFAULT_K, target_section: SectionKind | None = None
    ) -> list[ScoredChunk]:
        """Top-k chunks by cosine score, ties broken by (doc_id, chunk_index).

        With ``target_section`` set, only chunks of documents aimed at that
        section or at no section are candidates. Chunks without any
        embeddable token are skipped.
        """
        if not self.chunks:
            raise EmptyStore("no expectation documents loaded")
        if k < 1:
            raise ValueError("k must be >= 1")
        qvec = self.embedder.embed(query)
        scored = []
        for chunk, vec in zip(self.chunks, self._vectors):
            target = self.documents[chunk.doc_id].target_section
            if target_section is not None and target not in (None, target_section):
                continue
            if not np.any(vec):
                continue
            scored.append(ScoredChunk(chunk, cosine(qvec, vec)))
        scored.sort(key=lambda s: (-s.score, s.chunk.doc_id, s.chunk.chunk_index))
        return scored[:k]

    # -- persistence -------------------------------------------------------

    def to_index(self) -> list[dict]:
        out = []
        for doc in self.documents.values():
            idx = [i for i, c in enumerate(self.chunks) if c.doc_id == doc.doc_id]
            out.append(
                {
                    "doc_id": doc.doc_id,
                    "kind": doc.kind.value,
                    "target_section": doc.target_section.value if doc.target_section else None,
                    "chunks": [
                        {"index": self.chunks[i].chunk_index, "text": self.chunks[i].text}
                        for i in idx
                    ],
                    "vectors": [
                        base64.b64encode(self._vectors[i].astype("<f8").tobytes()).decode("ascii")
                        for i in idx
                    ],
                }
            )
        return out

    def save(self, path: str | Path) -> None:
        payload = {
            "chunk_size": self.chunk_size,
            "overlap": self.overlap,
            "dimension": self.embedder.dimension,
            "documents": self.to_index(),
        }
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, embedder: Embedder | None = None) -> RagStore:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        store = cls(embedder, payload["chunk_size"], payload["overlap"])
        if store.embedder.dimension != payload["dimension"]:
            raise DimensionMismatch("index was built with a different embedding dimension")
        for entry in payload["documents"]:
            texts = [c["text"] for c in sorted(entry["chunks"], key=lambda c: c["index"])]
            text = texts[0] + "".join(t[store.overlap :] for t in texts[1:])
            doc = ExpectationDocument(
                entry["doc_id"],
                ExpectationKind(entry["kind"]),
                SectionKind(entry["target_section"]) if entry["target_section"] else None,
                text,
            )
            store.documents[doc.doc_id] = doc
            for c, (t, b64) in enumerate(zip(texts, entry["vectors"])):
                start = c * (store.chunk_size - store.overlap)
                store.chunks.append(Chunk(doc.doc_id, c, t, (start, start + len(t))))
                store._vectors.append(np.frombuffer(base64.b64decode(b64), dtype="<f8").copy())
        return store


def load_expectation_dir(directory: str | Path) -> list[ExpectationDocument]:
    """Read ``*.md`` / ``*.txt`` files; optional front matter sets kind and target_section."""
    docs = []
    for path in sorted(Path(directory).iterdir()):
        if path.suffix.lower() not in {".md", ".txt"} or not path.is_file():
            continue
        meta, body = split_front_matter(path.read_text(encoding="utf-8"))
        target = meta.get("target_section")
        docs.append(
            ExpectationDocument(
                doc_id=meta.get("doc_id", path.stem),
                kind=ExpectationKind(meta.get("kind", "EXPECTATION").upper()),
                target_section=SectionKind(target.upper()) if target else None,
                text=body,
            )
        )
    return docs


def build_store(directory: str | Path, **kwargs) -> RagStore:
    store = RagStore(**kwargs)
    for doc in load_expectation_dir(directory):
        store.add(doc)
    return store


def format_context(chunks: list[ScoredChunk]) -> str:
    if not chunks:
        return "(no expectation documents retrieved)"
    return "\n\n".join(
        f"[{s.chunk.doc_id}#{s.chunk.chunk_index}]\n{s.chunk.text.strip()}" for s in chunks
    )


__all__ = [
    "Chunk",
    "ExpectationDocument",
    "ExpectationKind",
    "HashingEmbedder",
    "RagStore",
    "ScoredChunk",
    "build_store",
    "chunk_document",
    "cosine",
    "format_context",
    "load_expectation_dir",
]

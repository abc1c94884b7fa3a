"""
Retrieving expectation excerpts
===============================

Hashed bag-of-words vectors, cosine ranking, and a section filter.
"""

from __future__ import annotations

import numpy as np
from _paths import FIXTURES

from rubiscot.model import SectionKind
from rubiscot.rag import HashingEmbedder, build_store, cosine

emb = HashingEmbedder(256)
a = emb.embed("research questions follow from objectives")
b = emb.embed("objectives motivate the research questions")
print("norm", np.linalg.norm(a), "cosine", round(cosine(a, b), 4))

store = build_store(FIXTURES / "expectations", chunk_size=200, overlap=50)
print(len(store), "chunks from", len(store.documents), "documents")

for hit in store.retrieve("justify the research design and discuss validity threats", k=3):
    print(f"{hit.score:.3f}  {hit.chunk.doc_id}#{hit.chunk.chunk_index}  {hit.chunk.text[:60]!r}")

# restricting to one chapter keeps documents that target it or nothing at all
for hit in store.retrieve("expectations", k=5, target_section=SectionKind.CONCLUSION):
    print(hit.chunk.doc_id)

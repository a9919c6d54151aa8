"""Sparse node-similarity index combining semantic embeddings with
positional compatibility.

Pair score: cosine of the two skill embeddings, attenuated by
``exp(-epsilon * |depth_i - depth_j|)`` over normalized depths, so skills at
similar protocol stages transfer more than skills at different stages. Only
pairs at or above a threshold are cached.

Embeddings come from a pluggable provider. The default provider needs no
model: it hashes lowercased word tokens into 384 signed dimensions and
L2-normalizes, which keeps identical texts identical and unrelated texts
near-orthogonal. Precomputed vectors can be loaded from a JSON file instead.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np

from .graph import SkillGraph

EMBEDDING_DIM = 384
DEFAULT_EPSILON = 2.0
DEFAULT_THRESHOLD = 0.60


class SimilarityError(ValueError):
    pass


class EmbeddingProvider(Protocol):
    def vectors_for(self, graph: SkillGraph) -> dict[str, np.ndarray]: ...


class HashingEmbedder:
    """Deterministic signed feature hashing of word tokens."""

    def __init__(self, dim: int = EMBEDDING_DIM):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise SimilarityError("cannot embed empty text")
        vec = np.zeros(self.dim)
        for token in text.lower().split():
            digest = hashlib.md5(token.encode("utf-8")).digest()
            h = int.from_bytes(digest[:8], "little")
            idx = h % self.dim
            sign = 1.0 if (h >> 32) & 1 else -1.0
            vec[idx] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise SimilarityError(f"text hashed to a zero vector: {text!r}")
        return vec / norm

    def vectors_for(self, graph: SkillGraph) -> dict[str, np.ndarray]:
        return {nid: self.embed(graph.nodes[nid].text) for nid in graph.assessable_ids}


class FileEmbedder:
    """Precomputed vectors keyed by node id, loaded from a JSON map."""

    def __init__(self, path: str | Path):
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        self.vectors: dict[str, np.ndarray] = {}
        for nid, vals in raw.items():
            vec = np.asarray(vals, dtype=float)
            if vec.shape != (EMBEDDING_DIM,):
                raise SimilarityError(
                    f"embedding for {nid!r} has shape {vec.shape}, "
                    f"expected ({EMBEDDING_DIM},)"
                )
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > 1e-6:
                if norm == 0.0:
                    raise SimilarityError(f"zero embedding for {nid!r}")
                vec = vec / norm
            self.vectors[nid] = vec

    def vectors_for(self, graph: SkillGraph) -> dict[str, np.ndarray]:
        missing = [nid for nid in graph.assessable_ids if nid not in self.vectors]
        if missing:
            raise SimilarityError(f"missing embeddings for nodes {missing[:5]!r}...")
        return {nid: self.vectors[nid] for nid in graph.assessable_ids}


def embed_node(text: str) -> np.ndarray:
    """Default-provider embedding of one skill description."""
    return HashingEmbedder().embed(text)


def pair_similarity(e_i: np.ndarray, e_j: np.ndarray, d_i: float, d_j: float,
                    epsilon: float) -> float:
    """Cosine similarity attenuated by the normalized-depth gap."""
    cos = float(np.dot(e_i, e_j))
    return cos * float(np.exp(-epsilon * abs(d_i - d_j)))


@dataclass
class SimilarityIndex:
    """Symmetric sparse map of node pairs scoring at or above the threshold."""

    epsilon: float
    threshold: float
    pairs: dict[tuple[str, str], float] = field(default_factory=dict)
    _adjacency: dict[str, list[tuple[str, float]]] = field(default_factory=dict)

    def insert(self, a: str, b: str, phi: float) -> None:
        if a == b:
            raise SimilarityError("self-pairs are not stored")
        key = (a, b) if a < b else (b, a)
        self.pairs[key] = phi
        self._adjacency.setdefault(a, []).append((b, phi))
        self._adjacency.setdefault(b, []).append((a, phi))

    def finalize(self) -> None:
        for nid, entries in self._adjacency.items():
            entries.sort(key=lambda t: (-t[1], t[0]))

    def neighbors(self, node_id: str) -> list[tuple[str, float]]:
        """All cached partners of a node, best first, id-ascending on ties."""
        return list(self._adjacency.get(node_id, []))

    def phi(self, a: str, b: str) -> float | None:
        key = (a, b) if a < b else (b, a)
        return self.pairs.get(key)

    def __len__(self) -> int:
        return len(self.pairs)

    def export_csv(self, path: str | Path) -> None:
        lines = ["src,dst,phi"]
        for (a, bb), phi in sorted(self.pairs.items()):
            lines.append(f"{a},{bb},{phi:.6f}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_index(
    graph: SkillGraph,
    embeddings: Mapping[str, np.ndarray],
    epsilon: float = DEFAULT_EPSILON,
    threshold: float = DEFAULT_THRESHOLD,
) -> SimilarityIndex:
    """Precompute all assessable-node pairs scoring at or above the threshold.

    Brute-force over all pairs; at the scale this engine targets (order of a
    thousand nodes) a dense pass is cheap and exact.
    """
    ids = list(graph.assessable_ids)
    missing = [nid for nid in ids if nid not in embeddings]
    if missing:
        raise SimilarityError(f"missing embedding for node {missing[0]!r}")
    if not ids:
        return SimilarityIndex(epsilon=epsilon, threshold=threshold)

    mat = np.stack([np.asarray(embeddings[nid], dtype=float) for nid in ids])
    depths = np.array([graph.normalized_depth(nid) for nid in ids])
    cos = mat @ mat.T
    gap = np.abs(depths[:, None] - depths[None, :])
    phi = cos * np.exp(-epsilon * gap)

    index = SimilarityIndex(epsilon=epsilon, threshold=threshold)
    iu, ju = np.triu_indices(len(ids), k=1)
    keep = phi[iu, ju] >= threshold
    for i, j, score in zip(iu[keep], ju[keep], phi[iu, ju][keep]):
        index.insert(ids[int(i)], ids[int(j)], float(score))
    index.finalize()
    return index


def neighbors(index: SimilarityIndex, node_id: str) -> list[tuple[str, float]]:
    return index.neighbors(node_id)


class IndexArrays:
    """Array-backed neighbor lists bound to a graph's assessable-node order,
    for fast vectorized propagation."""

    def __init__(self, index: SimilarityIndex, graph: SkillGraph):
        n = len(graph.assessable_ids)
        idx_lists: list[list[int]] = [[] for _ in range(n)]
        phi_lists: list[list[float]] = [[] for _ in range(n)]
        for nid in graph.assessable_ids:
            i = graph.node_index[nid]
            for other, phi in index.neighbors(nid):
                j = graph.node_index.get(other)
                if j is not None:
                    idx_lists[i].append(j)
                    phi_lists[i].append(phi)
        self.nbr_idx = [np.array(v, dtype=np.int64) for v in idx_lists]
        self.nbr_phi = [np.array(v, dtype=float) for v in phi_lists]

    def has_neighbors(self, i: int) -> bool:
        return self.nbr_idx[i].size > 0

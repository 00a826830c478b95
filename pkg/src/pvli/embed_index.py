"""Exact nearest-neighbor search over ingested embedding vectors.

Vectors arrive precomputed, one file per encoder space; queries return the
k closest captions under the space's metric. A deterministic feature-hashing
embedder is bundled for tests and offline demos.
"""

import base64
import hashlib
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import topk_smallest

METRICS = ("cosine-distance", "negative-dot")


class VectorLoadError(ValueError):
    """Malformed vector file or vector record."""


@dataclass(frozen=True)
class EncoderSpace:
    model_id: str
    dim: int
    metric: str  # "cosine-distance" | "negative-dot"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; expected one of {METRICS}")


@dataclass(frozen=True)
class Ranking:
    query_id: str
    model_id: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        ids = [cid for cid, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"ranking for {self.query_id!r} has duplicate caption ids")
        for (id_a, d_a), (id_b, d_b) in zip(self.entries, self.entries[1:]):
            if d_b < d_a or (d_b == d_a and id_b < id_a):
                raise ValueError(
                    f"ranking for {self.query_id!r} not ordered by (distance, id) "
                    f"at {id_a!r} -> {id_b!r}"
                )

    @property
    def ids(self) -> list[str]:
        return [cid for cid, _ in self.entries]

    def distance_of(self, caption_id: str) -> float | None:
        for cid, d in self.entries:
            if cid == caption_id:
                return d
        return None

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id,
            "model_id": self.model_id,
            "entries": [[cid, d] for cid, d in self.entries],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Ranking":
        return cls(rec["query_id"], rec["model_id"],
                   tuple((cid, float(d)) for cid, d in rec["entries"]))


def encode_vector(vec: np.ndarray) -> str:
    return base64.b64encode(np.asarray(vec, dtype="<f4").tobytes()).decode("ascii")


def decode_vector(b64: str, dim: int, record_id: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64.encode("ascii"), validate=True)
    except Exception as exc:
        raise VectorLoadError(f"record {record_id!r}: bad base64 payload: {exc}") from exc
    if len(raw) != 4 * dim:
        raise VectorLoadError(
            f"record {record_id!r}: expected {dim} float32 components, got {len(raw) // 4}"
        )
    vec = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(vec)):
        raise VectorLoadError(f"record {record_id!r}: non-finite component")
    return vec


def write_vector_file(path, space: EncoderSpace, items: list[tuple[str, np.ndarray]]) -> None:
    """Header line `model_id<TAB>dim<TAB>metric`, then `id<TAB>base64` rows
    of little-endian float32 components."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{space.model_id}\t{space.dim}\t{space.metric}\n")
        for vec_id, vec in items:
            fh.write(f"{vec_id}\t{encode_vector(vec)}\n")


def read_vector_file(path) -> tuple[EncoderSpace, list[tuple[str, np.ndarray]]]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        parts = header.split("\t")
        if len(parts) != 3:
            raise VectorLoadError(f"{path}: header must be model_id<TAB>dim<TAB>metric")
        model_id, dim_s, metric = parts
        try:
            dim = int(dim_s)
        except ValueError as exc:
            raise VectorLoadError(f"{path}: bad dim {dim_s!r}") from exc
        try:
            space = EncoderSpace(model_id, dim, metric)
        except ValueError as exc:
            raise VectorLoadError(f"{path}: {exc}") from exc
        items = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise VectorLoadError(f"{path}:{lineno}: expected id<TAB>base64")
            vec_id, b64 = line.split("\t", 1)
            items.append((vec_id, decode_vector(b64, dim, vec_id)))
    return space, items


class VectorIndex:
    """Immutable exact-search index over one encoder space.

    Rows are stored sorted by id so that equal distances rank by ascending
    caption id. Cosine spaces hold unit-normalized copies.
    """

    def __init__(self, space: EncoderSpace, items: list[tuple[str, np.ndarray]]):
        self.space = space
        seen = set()
        for vec_id, vec in items:
            if vec_id in seen:
                raise VectorLoadError(f"duplicate vector id {vec_id!r}")
            seen.add(vec_id)
            if vec.shape != (space.dim,):
                raise VectorLoadError(
                    f"record {vec_id!r}: dimension {vec.shape} does not match space dim {space.dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise VectorLoadError(f"record {vec_id!r}: non-finite component")
        ordered = sorted(items, key=lambda kv: kv[0])
        self.ids: tuple[str, ...] = tuple(vec_id for vec_id, _ in ordered)
        if ordered:
            matrix = np.stack([vec for _, vec in ordered]).astype(np.float64)
        else:
            matrix = np.zeros((0, space.dim), dtype=np.float64)
        if space.metric == "cosine-distance":
            matrix = _unit_rows(matrix)
        matrix.setflags(write=False)
        self.matrix = matrix

    def __len__(self) -> int:
        return len(self.ids)

    def query(self, vec: np.ndarray, k: int = 50, query_id: str = "") -> Ranking:
        """Exact top-k under the space metric; smaller distance is closer.

        Cosine distance is 1 - cos(q, v); negative-dot is -<q, v>. Ties break
        by ascending caption id. Returns every item when k exceeds the index.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.space.dim,):
            raise ValueError(
                f"query dimension {vec.shape} does not match space dim {self.space.dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise ValueError("query vector has non-finite components")
        if len(self.ids) == 0:
            return Ranking(query_id, self.space.model_id, ())
        if self.space.metric == "cosine-distance":
            dists = 1.0 - self.matrix @ _unit(vec)
        else:
            dists = -(self.matrix @ vec)
        idx, d = topk_smallest(dists, k)
        entries = tuple((self.ids[i], float(dv)) for i, dv in zip(idx, d))
        return Ranking(query_id, self.space.model_id, entries)


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return vec
    return vec / norm


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


def build_space(path) -> VectorIndex:
    """Load a vector file into an immutable index."""
    space, items = read_vector_file(path)
    return VectorIndex(space, items)


class HashingEmbedder:
    """Deterministic feature-hashing sentence embedder.

    Hashes character n-grams (and word unigrams) of the lowercased text into
    `dim` signed buckets and l2-normalizes. Stands in for neural encoders in
    tests and offline demos; real embeddings are ingested from vector files.
    """

    def __init__(self, dim: int = 256, ngram: int = 3, metric: str = "cosine-distance"):
        if dim < 1:
            raise ValueError("dim must be positive")
        if ngram < 1:
            raise ValueError("ngram must be positive")
        self.dim = dim
        self.ngram = ngram
        self.space = EncoderSpace(model_id=f"hash{ngram}g-{dim}", dim=dim, metric=metric)

    @classmethod
    def from_model_id(cls, model_id: str, metric: str = "cosine-distance") -> "HashingEmbedder":
        m = re.match(r"hash(\d+)g-(\d+)$", model_id)
        if m is None:
            raise ValueError(f"not a hashing-embedder model id: {model_id!r}")
        return cls(dim=int(m.group(2)), ngram=int(m.group(1)), metric=metric)

    def _features(self, text: str):
        text = " ".join(text.lower().split())
        yield from text.split(" ")
        padded = f" {text} "
        for i in range(max(0, len(padded) - self.ngram + 1)):
            yield padded[i : i + self.ngram]

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for feat in self._features(text):
            digest = hashlib.blake2b(feat.encode("utf-8"), digest_size=8).digest()
            h = int.from_bytes(digest, "little")
            sign = 1.0 if h & 1 == 0 else -1.0
            vec[(h >> 1) % self.dim] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        # round-trip through float32 so a live embedding equals the same
        # vector read back from a vector file
        return vec.astype(np.float32).astype(np.float64)

    def write_vector_file(self, path, items: list[tuple[str, str]]) -> None:
        """Embed (id, text) pairs and write them as a vector file."""
        write_vector_file(path, self.space, [(i, self.embed(t)) for i, t in items])

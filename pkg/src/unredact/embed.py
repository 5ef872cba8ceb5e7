"""Sentence embeddings: hashed n-gram baseline, cosine scoring and pair fine-tuning.

The baseline embedder hashes character 3-5-grams and word 1-2-grams of a
redacted sentence into ``DIM`` signed buckets (64-bit FNV-1a; bucket is the
hash modulo ``DIM``, sign is bit 63) and L2-normalizes the result. Every
asterisk run is collapsed to a single ``*`` first, so the length of a
redaction never reaches the features.

Fine-tuning learns a linear map ``P`` so that ``(cos(P a, P b) + 1) / 2``
approaches the pair target under squared error.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .nnet import Adam

DIM = 768
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
CHAR_NGRAMS = (3, 4, 5)
WORD_NGRAMS = (1, 2)
EMBEDDING_MAGIC = b"RBEMB1"
PROJECTION_MAGIC = b"RBPRJ1"

_MASK_RUN = re.compile(r"\*+")


class DegenerateVector(ValueError):
    pass


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 18)
def _bucket(gram: str, dim: int) -> tuple[int, float]:
    h = fnv1a_64(gram.encode("utf-8"))
    return h % dim, (-1.0 if h >> 63 else 1.0)


def ngrams(sentence: str) -> list[str]:
    """The hashed features of a sentence, in a fixed order."""
    text = _MASK_RUN.sub("*", sentence.lower())
    feats = []
    padded = f" {text} "
    for n in CHAR_NGRAMS:
        feats.extend(padded[i : i + n] for i in range(len(padded) - n + 1))
    words = text.split()
    for n in WORD_NGRAMS:
        feats.extend(" ".join(words[i : i + n]) for i in range(len(words) - n + 1))
    return feats if text.strip() else []


def embed_base(sentence: str, dim: int = DIM) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    for gram in ngrams(sentence):
        bucket, sign = _bucket(gram, dim)
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def embed_base_many(sentences: Iterable[str], dim: int = DIM) -> np.ndarray:
    rows = [embed_base(s, dim) for s in sentences]
    return np.array(rows, dtype=np.float64).reshape(len(rows), dim)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.sqrt(np.dot(a, a))
    nb = np.sqrt(np.dot(b, b))
    if na == 0 or nb == 0:
        raise DegenerateVector("cosine similarity of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def normalize_score(c: float) -> float:
    """Map a cosine in [-1, 1] to [0, 1]."""
    if not -1.0 - 1e-12 <= c <= 1.0 + 1e-12:
        raise ValueError(f"cosine {c} outside [-1, 1]")
    return min(1.0, max(0.0, (c + 1.0) / 2.0))


@dataclass
class Projection:
    matrix: np.ndarray
    trained: bool = False

    @classmethod
    def identity(cls, dim: int = DIM) -> "Projection":
        return cls(np.eye(dim), trained=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Project row vectors: each row ``x`` becomes ``P x``."""
        return np.asarray(X) @ self.matrix.T

    def save(self, fh: BinaryIO) -> None:
        fh.write(PROJECTION_MAGIC)
        fh.write(struct.pack("<IB", self.dim, int(self.trained)))
        fh.write(np.ascontiguousarray(self.matrix, dtype="<f4").tobytes())

    @classmethod
    def load(cls, fh: BinaryIO) -> "Projection":
        if fh.read(len(PROJECTION_MAGIC)) != PROJECTION_MAGIC:
            raise ValueError("not a projection file")
        dim, trained = struct.unpack("<IB", fh.read(5))
        raw = fh.read(dim * dim * 4)
        if len(raw) != dim * dim * 4:
            raise ValueError("truncated projection file")
        mat = np.frombuffer(raw, dtype="<f4").reshape(dim, dim).astype(np.float64)
        return cls(mat, bool(trained))


def embed(sentence: str, projection: Projection | None = None) -> np.ndarray:
    base = embed_base(sentence, projection.dim if projection is not None else DIM)
    return base if projection is None else projection.apply(base)


def embed_many(sentences: Iterable[str], projection: Projection | None = None) -> np.ndarray:
    base = embed_base_many(sentences, projection.dim if projection is not None else DIM)
    return base if projection is None else projection.apply(base)


# ------------------------------------------------------------------ fine-tuning


def pair_loss_and_grad(P: np.ndarray, A: np.ndarray, B: np.ndarray, targets: np.ndarray):
    """Mean squared error of normalized cosine scores and its gradient w.r.t. ``P``.

    Rows of ``A``/``B`` are the base embeddings of each pair. Rows whose
    projection vanishes contribute neither loss nor gradient.
    """
    U = A @ P.T
    V = B @ P.T
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    ok = (nu > 0) & (nv > 0)
    nu = np.where(ok, nu, 1.0)
    nv = np.where(ok, nv, 1.0)
    dot = np.einsum("ij,ij->i", U, V)
    c = dot / (nu * nv)
    score = (c + 1.0) / 2.0
    resid = np.where(ok, score - targets, 0.0)
    n = max(int(ok.sum()), 1)
    loss = float(np.sum(resid**2) / n)
    # dL/dc = 2 * resid * 0.5 / n
    dc = resid / n
    dU = dc[:, None] * (V / (nu * nv)[:, None] - c[:, None] * U / (nu**2)[:, None])
    dV = dc[:, None] * (U / (nu * nv)[:, None] - c[:, None] * V / (nv**2)[:, None])
    grad = dU.T @ A + dV.T @ B
    return loss, grad


def pair_scores(P: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    U = A @ P.T
    V = B @ P.T
    denom = np.linalg.norm(U, axis=1) * np.linalg.norm(V, axis=1)
    c = np.einsum("ij,ij->i", U, V) / np.where(denom > 0, denom, 1.0)
    return (c + 1.0) / 2.0


@dataclass
class FinetuneHistory:
    losses: list[float]


def finetune(
    A: np.ndarray,
    B: np.ndarray,
    targets: Sequence[float],
    epochs: int = 10,
    lr: float = 1e-3,
    seed: int = 0,
    batch_size: int = 100,
    history: FinetuneHistory | None = None,
) -> Projection:
    """Train a projection from identity on embedded pairs with Adam.

    ``A[i]`` and ``B[i]`` are the base embeddings of pair ``i`` and
    ``targets[i]`` its normalized-score target.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if len(A) == 0 or len(A) != len(B) or len(A) != len(t):
        raise ValueError("finetune needs a non-empty, aligned set of pairs")
    dim = A.shape[1]
    P = np.eye(dim)
    if epochs <= 0:
        return Projection(P, trained=False)
    opt = Adam([P], lr=lr)
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(epochs):
        order = rng.permutation(len(A))
        total = 0.0
        for lo in range(0, len(order), batch_size):
            idx = order[lo : lo + batch_size]
            loss, grad = pair_loss_and_grad(P, A[idx], B[idx], t[idx])
            opt.step([grad])
            total += loss * len(idx)
        if history is not None:
            history.losses.append(total / len(order))
    return Projection(P, trained=True)


# ------------------------------------------------------------------ embedding files


def write_embeddings(fh: BinaryIO, items: Sequence[tuple[str, np.ndarray]], dim: int = DIM) -> None:
    fh.write(EMBEDDING_MAGIC)
    fh.write(struct.pack("<II", dim, len(items)))
    for sid, vec in items:
        vec = np.asarray(vec)
        if vec.shape != (dim,):
            raise ValueError(f"embedding {sid!r} has shape {vec.shape}, expected ({dim},)")
        raw = sid.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def import_embeddings(fh: BinaryIO, dim: int = DIM) -> dict[str, np.ndarray]:
    """Read an embedding file into ``{sample_id: vector}``.

    An empty file yields an empty map.
    """
    head = fh.read(len(EMBEDDING_MAGIC))
    if not head:
        return {}
    if head != EMBEDDING_MAGIC:
        raise ValueError("not an embedding file")
    file_dim, count = struct.unpack("<II", fh.read(8))
    if file_dim != dim:
        raise ValueError(f"embedding dimension {file_dim} does not match expected {dim}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", fh.read(2))
        sid = fh.read(n).decode("utf-8")
        raw = fh.read(dim * 4)
        if len(raw) != dim * 4:
            raise ValueError("truncated embedding file")
        if sid in out:
            raise ValueError(f"duplicate embedding id {sid!r}")
        out[sid] = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return out

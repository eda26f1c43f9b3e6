"""Trainable character-trigram averaging encoder.

A text is broken into boundary-marked trigrams of "^text$", each trigram is
hashed into one of B buckets, and the embedding is the mean of the bucket rows
of a dense (B x D) table. Encoding is a pure function of (table, seed, text),
so concept-name vectors can be precomputed and cached.

Checkpoint format, little-endian:

    magic "CLNK1" | B u64 | D u64 | hash seed u64 | B*D float64 row-major
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import ValidationError

CHECKPOINT_MAGIC = b"CLNK1"
DEFAULT_DIM = 64
DEFAULT_BUCKETS = 1 << 16
_NGRAM = 3


class NGramEncoder:
    def __init__(self, table: np.ndarray, hash_seed: int):
        if table.ndim != 2:
            raise ValueError("table must be 2-dimensional")
        self.table = np.ascontiguousarray(table, dtype=np.float64)
        self.hash_seed = int(hash_seed)
        self._hash_key = self.hash_seed.to_bytes(8, "little")
        # trigram -> bucket memo; depends only on the seed, never on the table
        self._bucket_cache: dict[str, int] = {}
        self._feature_cache: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    @classmethod
    def create(cls, dim: int = DEFAULT_DIM, buckets: int = DEFAULT_BUCKETS, seed: int = 0) -> "NGramEncoder":
        rng = np.random.default_rng(seed)
        table = rng.uniform(-0.05, 0.05, size=(buckets, dim))
        return cls(table, hash_seed=seed)

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    @property
    def buckets(self) -> int:
        return self.table.shape[0]

    # -- featurization -------------------------------------------------------

    def _bucket(self, trigram: str) -> int:
        idx = self._bucket_cache.get(trigram)
        if idx is None:
            digest = hashlib.blake2b(
                trigram.encode("utf-8"), digest_size=8, key=self._hash_key
            ).digest()
            idx = int.from_bytes(digest, "little") % self.buckets
            self._bucket_cache[trigram] = idx
        return idx

    def featurize(self, text: str) -> np.ndarray:
        """Bucket indices of the boundary-marked trigrams, in order, duplicates kept."""
        if not text:
            raise ValueError("cannot featurize empty text")
        marked = f"^{text}$"
        return np.array(
            [self._bucket(marked[i : i + _NGRAM]) for i in range(len(marked) - _NGRAM + 1)],
            dtype=np.int64,
        )

    def _features(self, text: str):
        """(occupied buckets, multiplicity weights m_b/t, raw indices), memoized."""
        cached = self._feature_cache.get(text)
        if cached is None:
            idx = self.featurize(text)
            uniq, counts = np.unique(idx, return_counts=True)
            weights = counts / len(idx)
            cached = (uniq, weights, idx)
            self._feature_cache[text] = cached
        return cached

    # -- encoding ------------------------------------------------------------

    def encode(self, text: str) -> np.ndarray:
        """Mean of the trigram bucket rows; a (D,) float64 vector."""
        uniq, weights, _ = self._features(text)
        return weights @ self.table[uniq]

    def encode_batch(self, texts) -> np.ndarray:
        """(n, D) matrix, elementwise equal to encoding each text in a loop."""
        rows = []
        for i, text in enumerate(texts):
            if not text:
                raise ValueError(f"empty text at index {i}")
            rows.append(self.encode(text))
        if not rows:
            return np.empty((0, self.dim), dtype=np.float64)
        return np.stack(rows)

    def grad_wrt_table(self, text: str, upstream: np.ndarray) -> dict[int, np.ndarray]:
        """Sparse gradient of encode(text) @ upstream w.r.t. the table.

        For a bucket hit by m_b of the t trigrams, grad[b] = (m_b / t) * upstream.
        """
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (self.dim,):
            raise ValueError(f"upstream must have shape ({self.dim},)")
        uniq, weights, _ = self._features(text)
        return {int(b): w * upstream for b, w in zip(uniq, weights)}

    def apply_sparse_grads(self, indices: np.ndarray, rows: np.ndarray, lr: float) -> None:
        """table[indices] -= lr * rows, summing duplicate indices deterministically."""
        if lr == 0.0 or len(indices) == 0:
            return
        order = np.argsort(indices, kind="stable")
        sorted_idx = indices[order]
        sorted_rows = rows[order]
        starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
        summed = np.add.reduceat(sorted_rows, starts, axis=0)
        self.table[sorted_idx[starts]] -= lr * summed

    # -- persistence ---------------------------------------------------------

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(self._header_bytes())
        h.update(self._table_bytes())
        return h.hexdigest()

    def _header_bytes(self) -> bytes:
        return CHECKPOINT_MAGIC + struct.pack("<QQQ", self.buckets, self.dim, self.hash_seed)

    def _table_bytes(self) -> bytes:
        return self.table.astype("<f8", copy=False).tobytes()

    def save(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(self._header_bytes())
            f.write(self._table_bytes())

    @classmethod
    def load(cls, path: str) -> "NGramEncoder":
        with open(path, "rb") as f:
            blob = f.read()
        header_len = len(CHECKPOINT_MAGIC) + 24
        if len(blob) < header_len or not blob.startswith(CHECKPOINT_MAGIC):
            raise ValidationError(f"{path}: not a checkpoint file")
        buckets, dim, seed = struct.unpack_from("<QQQ", blob, len(CHECKPOINT_MAGIC))
        expected = header_len + buckets * dim * 8
        if len(blob) != expected:
            raise ValidationError(
                f"{path}: truncated checkpoint ({len(blob)} bytes, expected {expected})"
            )
        table = np.frombuffer(blob, dtype="<f8", offset=header_len).reshape(buckets, dim)
        return cls(table.copy(), hash_seed=seed)

"""Flat exact nearest-neighbor index over precomputed concept-name embeddings.

All name vectors are computed once and cached in an (N x D) block; queries do
an exact scan. The scan runs in two stages: a fast coarse pass using the
expanded form of the distance (one matrix-vector product), then an exact
re-scoring of the handful of candidate rows through metric.distance, so that
reported distances match the scalar distance function bit for bit and tie
handling is deterministic.

Index file format, little-endian:

    magic "CIDX1" | N u64 | D u64 | distance-kind byte | encoder fingerprint
    (16 bytes) | N*D float64 row-major | names block (UTF-8 "cui<TAB>surface"
    lines, one per row)
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import MentionRecord
from .encoder import NGramEncoder
from .errors import FingerprintMismatch, ValidationError
from .metric import DistanceKind, distance
from .terminology import ConceptName, Terminology

INDEX_MAGIC = b"CIDX1"
_KIND_BYTES = {DistanceKind.EUCLIDEAN: 0, DistanceKind.COSINE: 1}
_BYTE_KINDS = {v: k for k, v in _KIND_BYTES.items()}

# absolute slack (relative to the coarse-score scale) when collecting
# candidate rows; generous versus the ~1e-13 rounding gap between the coarse
# and exact formulas
_COARSE_SLACK = 1e-9


@dataclass
class LinkResult:
    """Ranked CUI candidates for one mention component.

    `ranked` holds (cui, best distance over that CUI's names), ascending by
    (distance, cui). `trace` carries the underlying name hits as
    (name, distance, rank) for diagnostics.
    """

    ranked: list[tuple[str, float]]
    trace: list[tuple[ConceptName, float, int]] = field(default_factory=list)

    @property
    def nearest(self) -> tuple[str, float]:
        return self.ranked[0]


class VectorIndex:
    def __init__(
        self,
        matrix: np.ndarray,
        names: tuple[ConceptName, ...],
        kind: DistanceKind,
        fingerprint: str,
    ):
        if matrix.ndim != 2 or matrix.shape[0] != len(names):
            raise ValueError("matrix rows must match the name list")
        if not np.isfinite(matrix).all():
            raise ValidationError("index matrix contains non-finite values")
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        self.names = tuple(names)
        self.kind = DistanceKind(kind)
        self.fingerprint = fingerprint
        self._row_sq = np.einsum("ij,ij->i", self.matrix, self.matrix)
        self._row_sq_max = float(self._row_sq.max()) if len(self._row_sq) else 0.0
        self._row_norm = np.sqrt(self._row_sq)
        if self.kind == DistanceKind.COSINE and not (self._row_norm > 0).all():
            bad = int(np.flatnonzero(self._row_norm == 0)[0])
            raise ValidationError(
                f"row {bad} ({self.names[bad].surface!r}) has zero norm; "
                "cosine index requires non-zero vectors"
            )

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    # -- retrieval -----------------------------------------------------------

    def _coarse_from_prod(self, prod: np.ndarray, query: np.ndarray) -> np.ndarray:
        """Turn a row/query inner-product vector into coarse scores, in place."""
        if self.kind == DistanceKind.EUCLIDEAN:
            prod *= -2.0
            prod += self._row_sq
            prod += query @ query
            np.maximum(prod, 0.0, out=prod)
            return prod
        q_norm = float(np.sqrt(query @ query))
        if q_norm == 0.0:
            raise ValueError("cosine distance is undefined for a zero query")
        prod /= self._row_norm
        prod *= -1.0 / q_norm
        prod += 1.0
        return prod

    def _coarse_scores(self, query: np.ndarray) -> np.ndarray:
        return self._coarse_from_prod(self.matrix @ query, query)

    def _refine(self, coarse: np.ndarray, query: np.ndarray, k: int) -> list[tuple[int, float]]:
        n = len(coarse)
        k = min(k, n)
        if k < n:
            kth = np.partition(coarse, k - 1)[k - 1]
        else:
            kth = coarse.max()
        if self.kind == DistanceKind.EUCLIDEAN:
            scale = self._row_sq_max + float(query @ query) + 1.0
        else:
            scale = 4.0
        cand = np.flatnonzero(coarse <= kth + _COARSE_SLACK * scale)
        exact = self._exact_distances(cand, query)
        order = np.lexsort((cand, exact))[:k]
        return [(int(cand[i]), float(exact[i])) for i in order]

    def _exact_distances(self, rows: np.ndarray, query: np.ndarray) -> np.ndarray:
        """Per-candidate distances, bit-identical to metric.distance on each row."""
        block = self.matrix[rows]
        if self.kind == DistanceKind.EUCLIDEAN:
            diff = block - query
            return np.sqrt((diff * diff).sum(axis=1))
        dots = (block * query).sum(axis=1)
        norms = np.sqrt((block * block).sum(axis=1))
        q_norm = float(np.sqrt((query * query).sum()))
        return np.clip(1.0 - dots / (norms * q_norm), 0.0, 2.0)

    def knn(self, query: np.ndarray, k: int) -> list[tuple[int, float]]:
        """The k nearest rows as (row index, distance), ascending.

        Ties break on (distance, row index); k larger than the index returns
        every row.
        """
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise ValueError(f"query must have shape ({self.dim},)")
        if k < 1:
            raise ValueError("k must be >= 1")
        return self._refine(self._coarse_scores(query), query, k)

    def knn_batch(self, queries: np.ndarray, k: int, chunk: int = 128) -> list[list[tuple[int, float]]]:
        """knn for each row of an (n, D) query block; results match knn exactly."""
        queries = np.asarray(queries, dtype=np.float64)
        if queries.ndim != 2 or queries.shape[1] != self.dim:
            raise ValueError(f"queries must have shape (n, {self.dim})")
        if k < 1:
            raise ValueError("k must be >= 1")
        out: list[list[tuple[int, float]]] = []
        for start in range(0, queries.shape[0], chunk):
            block = queries[start : start + chunk]
            prods = block @ self.matrix.T  # (chunk, N), rows contiguous
            for j in range(block.shape[0]):
                q = block[j]
                out.append(self._refine(self._coarse_from_prod(prods[j], q), q, k))
        return out

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        header = INDEX_MAGIC + struct.pack("<QQ", len(self), self.dim)
        header += bytes([_KIND_BYTES[self.kind]])
        header += bytes.fromhex(self.fingerprint)
        names_blob = "".join(f"{n.cui}\t{n.surface}\n" for n in self.names).encode("utf-8")
        with open(path, "wb") as f:
            f.write(header)
            f.write(self.matrix.astype("<f8", copy=False).tobytes())
            f.write(names_blob)

    @classmethod
    def load(cls, path: str) -> "VectorIndex":
        with open(path, "rb") as f:
            blob = f.read()
        header_len = len(INDEX_MAGIC) + 16 + 1 + 16
        if len(blob) < header_len or not blob.startswith(INDEX_MAGIC):
            raise ValidationError(f"{path}: not an index file")
        n, dim = struct.unpack_from("<QQ", blob, len(INDEX_MAGIC))
        kind_byte = blob[len(INDEX_MAGIC) + 16]
        if kind_byte not in _BYTE_KINDS:
            raise ValidationError(f"{path}: unknown distance kind byte {kind_byte}")
        fingerprint = blob[len(INDEX_MAGIC) + 17 : header_len].hex()
        matrix_end = header_len + n * dim * 8
        if len(blob) < matrix_end:
            raise ValidationError(f"{path}: truncated matrix block")
        matrix = np.frombuffer(blob, dtype="<f8", offset=header_len, count=n * dim)
        lines = blob[matrix_end:].decode("utf-8").splitlines()
        if len(lines) != n:
            raise ValidationError(f"{path}: names block has {len(lines)} rows, expected {n}")
        names = []
        for line in lines:
            cui, _, surface = line.partition("\t")
            if not cui or not surface:
                raise ValidationError(f"{path}: malformed name row {line!r}")
            names.append(ConceptName(surface=surface, cui=cui))
        return cls(matrix.reshape(n, dim).copy(), tuple(names), _BYTE_KINDS[kind_byte], fingerprint)


def build_index(t: Terminology, enc: NGramEncoder, kind: DistanceKind) -> VectorIndex:
    """Encode every terminology name into an immutable flat index."""
    surfaces = [n.surface for n in t.names]
    try:
        matrix = enc.encode_batch(surfaces)
    except ValueError as exc:
        raise ValidationError(f"encoder failed over terminology names: {exc}") from exc
    return VectorIndex(matrix, t.names, kind, enc.fingerprint())


def _check_fingerprint(ix: VectorIndex, enc: NGramEncoder, allow_mismatch: bool) -> None:
    if ix.fingerprint == enc.fingerprint():
        return
    if allow_mismatch:
        warnings.warn("index fingerprint does not match the encoder; results may be stale")
        return
    raise FingerprintMismatch(
        "index was built with a different encoder "
        f"(index {ix.fingerprint[:12]}..., encoder {enc.fingerprint()[:12]}...)"
    )


def _collapse_to_cuis(ix: VectorIndex, coarse: np.ndarray, query: np.ndarray, k: int) -> LinkResult:
    """Collapse the name ranking to a CUI ranking keeping each CUI's best distance."""
    n = len(ix)
    m = min(n, max(4 * k, k + 16))
    while True:
        hits = ix._refine(coarse, query, m)
        best: dict[str, float] = {}
        trace = []
        for rank, (row, dist) in enumerate(hits, start=1):
            name = ix.names[row]
            trace.append((name, dist, rank))
            if name.cui not in best:
                best[name.cui] = dist
        if len(best) >= k or m >= n:
            break
        m = min(n, m * 2)
    ranked = sorted(((dist, cui) for cui, dist in best.items()))[:k]
    return LinkResult(ranked=[(cui, dist) for dist, cui in ranked], trace=trace)


def link(
    ix: VectorIndex,
    enc: NGramEncoder,
    mention: MentionRecord,
    k: int,
    allow_mismatch: bool = False,
) -> list[LinkResult]:
    """Rank CUIs for every component of a mention; one LinkResult per component."""
    _check_fingerprint(ix, enc, allow_mismatch)
    if not mention.components:
        raise ValueError(f"mention {mention.source_id!r} has no components")
    results = []
    for comp in mention.components:
        if not comp:
            raise ValueError(f"mention {mention.source_id!r} has an empty component")
        query = enc.encode(comp)
        results.append(_collapse_to_cuis(ix, ix._coarse_scores(query), query, k))
    return results


def link_batch(
    ix: VectorIndex,
    enc: NGramEncoder,
    mentions: list[MentionRecord],
    k: int,
    allow_mismatch: bool = False,
    chunk: int = 128,
) -> list[list[LinkResult]]:
    """link() over many mentions, batching the coarse pass through one GEMM."""
    _check_fingerprint(ix, enc, allow_mismatch)
    comps: list[str] = []
    spans: list[tuple[int, int]] = []
    for mention in mentions:
        if not mention.components:
            raise ValueError(f"mention {mention.source_id!r} has no components")
        start = len(comps)
        comps.extend(mention.components)
        spans.append((start, len(comps)))
    if not comps:
        return []

    queries = enc.encode_batch(comps)
    flat: list[LinkResult] = []
    for start in range(0, queries.shape[0], chunk):
        block = queries[start : start + chunk]
        prods = block @ ix.matrix.T  # (chunk, N), rows contiguous
        for j in range(block.shape[0]):
            q = block[j]
            flat.append(_collapse_to_cuis(ix, ix._coarse_from_prod(prods[j], q), q, k))
    return [flat[a:b] for a, b in spans]

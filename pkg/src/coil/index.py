"""Contextualized inverted index: build, persist, load, summarize.

Every stored token occurrence lands in exactly one row of exactly one
per-token vector block, ordered by (document ordinal, position) so the
scatter targets are nondecreasing and query-time scoring can reduce each
block with a single segmented max.  Document-level vectors are stacked
into one matrix addressed by ordinal.

On-disk layout (all integers little-endian; see README for the byte-level
description):

* ``meta.json``   config, vocabulary, doc table, per-list directory,
                  corpus checksum, per-file FNV-1a checksums
* ``postings.bin``  for each token id in ascending order: int32 doc
                  ordinals then float32 occurrence vectors
* ``cls.bin``     float32 matrix, one row per document ordinal
                  (absent when n_c = 0)
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import CoilConfig, EncodedDocument, FormatError, ValidationError, validate_config
from .encoding import fnv1a64

INDEX_FORMAT = "coil-index"
INDEX_VERSION = 1

META_FILE = "meta.json"
POSTINGS_FILE = "postings.bin"
CLS_FILE = "cls.bin"


class ChecksumError(FormatError):
    """Stored checksum does not match the file contents."""


@dataclass
class InvertedList:
    """All stored occurrences of one token id.

    ``vectors`` holds one row per occurrence (the transpose of the
    n_t-by-N stacked form), parallel to ``doc_refs``; rows appear in
    (document ordinal, position) order, so ``doc_refs`` is nondecreasing.
    """

    token_id: int
    vectors: np.ndarray  # (n_occurrences, n_t) float32
    doc_refs: np.ndarray  # (n_occurrences,) int32, nondecreasing
    _seg_starts: np.ndarray | None = field(default=None, repr=False)
    _seg_ordinals: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.doc_refs)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Start offsets and document ordinals of the per-document row runs."""
        if self._seg_starts is None:
            refs = self.doc_refs
            if len(refs) == 0:
                starts = np.empty(0, dtype=np.int64)
            else:
                starts = np.flatnonzero(np.diff(refs, prepend=refs[0] - 1))
            self._seg_starts = starts
            self._seg_ordinals = refs[starts]
        return self._seg_starts, self._seg_ordinals


@dataclass
class CoilIndex:
    config: CoilConfig
    lists: dict[int, InvertedList]
    cls_matrix: np.ndarray | None  # (num_docs, n_c) float32, row per ordinal
    doc_table: list[str]  # ordinal -> doc_id
    vocab: dict[str, int]
    corpus_checksum: int
    encoder_meta: dict | None = None  # provenance needed to encode text queries
    _doc_id_array: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_docs(self) -> int:
        return len(self.doc_table)

    def doc_id_array(self) -> np.ndarray:
        if self._doc_id_array is None:
            self._doc_id_array = np.asarray(self.doc_table, dtype=str)
        return self._doc_id_array


@dataclass
class IndexStats:
    num_docs: int
    num_lists: int
    total_postings: int
    bytes_on_disk: int
    list_size_histogram: dict[int, int]  # occurrences-per-list -> number of lists


def _doc_checksum(state: int, doc: EncodedDocument) -> int:
    state = fnv1a64(doc.doc_id.encode("utf-8"), state)
    state = fnv1a64(np.ascontiguousarray(doc.token_ids, dtype=np.int32).tobytes(), state)
    state = fnv1a64(np.ascontiguousarray(doc.token_vecs, dtype=np.float32).tobytes(), state)
    if doc.cls_vec is not None:
        state = fnv1a64(np.ascontiguousarray(doc.cls_vec, dtype=np.float32).tobytes(), state)
    return state


def build_index(
    docs: Iterable[EncodedDocument],
    config: CoilConfig,
    vocab: dict[str, int] | None = None,
    encoder_meta: dict | None = None,
) -> CoilIndex:
    """Group every encoded token occurrence into its token's list.

    Documents keep their input order as ordinals; a document with no
    tokens still occupies an ordinal (and a CLS row when n_c >= 1).
    """
    validate_config(config)
    n_t, n_c = config.n_t, config.n_c
    doc_table: list[str] = []
    seen_ids: set[str] = set()
    per_token_vecs: dict[int, list[np.ndarray]] = {}
    per_token_refs: dict[int, list[int]] = {}
    cls_rows: list[np.ndarray] = []
    checksum = fnv1a64(b"coil-corpus")

    for ordinal, doc in enumerate(docs):
        if doc.doc_id in seen_ids:
            raise ValidationError(f"duplicate doc id {doc.doc_id!r}")
        seen_ids.add(doc.doc_id)
        if doc.token_vecs.shape[1:] != (n_t,):
            raise ValidationError(
                f"document {doc.doc_id!r}: token vectors have dimension "
                f"{doc.token_vecs.shape[1:]}, index expects {n_t}"
            )
        if n_c >= 1:
            if doc.cls_vec is None or doc.cls_vec.shape != (n_c,):
                raise ValidationError(
                    f"document {doc.doc_id!r}: cls vector missing or not {n_c}-dimensional"
                )
            cls_rows.append(np.ascontiguousarray(doc.cls_vec, dtype=np.float32))
        doc_table.append(doc.doc_id)
        checksum = _doc_checksum(checksum, doc)
        vecs = np.ascontiguousarray(doc.token_vecs, dtype=np.float32)
        for pos, tid in enumerate(doc.token_ids):
            tid = int(tid)
            per_token_vecs.setdefault(tid, []).append(vecs[pos])
            per_token_refs.setdefault(tid, []).append(ordinal)

    lists: dict[int, InvertedList] = {}
    for tid in sorted(per_token_vecs):
        stacked = np.vstack(per_token_vecs[tid]) if n_t else np.empty(
            (len(per_token_refs[tid]), 0), dtype=np.float32
        )
        lists[tid] = InvertedList(
            token_id=tid,
            vectors=stacked,
            doc_refs=np.asarray(per_token_refs[tid], dtype=np.int32),
        )

    cls_matrix = None
    if n_c >= 1:
        cls_matrix = (
            np.vstack(cls_rows) if cls_rows else np.empty((0, n_c), dtype=np.float32)
        )
    return CoilIndex(
        config=config,
        lists=lists,
        cls_matrix=cls_matrix,
        doc_table=doc_table,
        vocab=dict(vocab) if vocab else {},
        corpus_checksum=checksum,
        encoder_meta=encoder_meta,
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_index(index: CoilIndex, dir_path: str | Path) -> None:
    """Write meta.json, postings.bin and (when n_c >= 1) cls.bin."""
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    n_t = index.config.n_t

    postings_chunks: list[bytes] = []
    directory: list[list[int]] = []
    for tid in sorted(index.lists):
        lst = index.lists[tid]
        directory.append([tid, len(lst)])
        postings_chunks.append(np.ascontiguousarray(lst.doc_refs, dtype=np.int32).tobytes())
        postings_chunks.append(
            np.ascontiguousarray(lst.vectors, dtype=np.float32).tobytes()
        )
    postings_blob = b"".join(postings_chunks)
    (out / POSTINGS_FILE).write_bytes(postings_blob)
    checksums = {POSTINGS_FILE: f"{fnv1a64(postings_blob):016x}"}

    if index.cls_matrix is not None:
        cls_blob = np.ascontiguousarray(index.cls_matrix, dtype=np.float32).tobytes()
        (out / CLS_FILE).write_bytes(cls_blob)
        checksums[CLS_FILE] = f"{fnv1a64(cls_blob):016x}"

    cfg = index.config
    meta = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "config": {
            "n_lm": cfg.n_lm,
            "n_t": cfg.n_t,
            "n_c": cfg.n_c,
            "max_doc_tokens": cfg.max_doc_tokens,
            "cls_layer_norm": cfg.cls_layer_norm,
            "mode": cfg.mode,
        },
        "num_docs": index.num_docs,
        "doc_table": index.doc_table,
        "vocab": index.vocab,
        "lists": directory,
        "corpus_checksum": f"{index.corpus_checksum:016x}",
        "checksums": checksums,
        "encoder_meta": index.encoder_meta,
    }
    with open(out / META_FILE, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def _read_checked(path: Path, expected_hex: str) -> bytes:
    blob = path.read_bytes()
    actual = f"{fnv1a64(blob):016x}"
    if actual != expected_hex:
        raise ChecksumError(
            f"{path}: checksum mismatch (stored {expected_hex}, computed {actual})"
        )
    return blob


def load_index(dir_path: str | Path) -> CoilIndex:
    """Load a saved index; matrices compare bitwise-equal to the saved ones."""
    root = Path(dir_path)
    try:
        with open(root / META_FILE, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{root / META_FILE}: invalid JSON: {exc}") from exc
    if meta.get("format") != INDEX_FORMAT:
        raise FormatError(f"{root / META_FILE}: not a {INDEX_FORMAT} directory")
    if meta.get("version") != INDEX_VERSION:
        raise FormatError(
            f"{root / META_FILE}: unsupported version {meta.get('version')!r}"
        )
    cfg = CoilConfig(**meta["config"])
    validate_config(cfg)
    n_t, n_c = cfg.n_t, cfg.n_c
    doc_table = list(meta["doc_table"])
    if meta.get("num_docs") != len(doc_table):
        raise FormatError(f"{root / META_FILE}: num_docs disagrees with doc_table")

    row_bytes = 4 + 4 * n_t  # int32 ref + float32 vector per occurrence
    directory = [(int(t), int(n)) for t, n in meta["lists"]]
    expected_size = sum(n * row_bytes for _, n in directory)
    postings_path = root / POSTINGS_FILE
    blob = postings_path.read_bytes()
    if len(blob) != expected_size:
        raise FormatError(
            f"{postings_path}: size {len(blob)} does not match meta "
            f"(expected {expected_size} for n_t={n_t}; truncated file or wrong n_t)"
        )
    stored = meta["checksums"].get(POSTINGS_FILE)
    actual = f"{fnv1a64(blob):016x}"
    if stored != actual:
        raise ChecksumError(
            f"{postings_path}: checksum mismatch (stored {stored}, computed {actual})"
        )

    lists: dict[int, InvertedList] = {}
    offset = 0
    for tid, n_occ in directory:
        refs = np.frombuffer(blob, dtype="<i4", count=n_occ, offset=offset)
        offset += 4 * n_occ
        vecs = np.frombuffer(blob, dtype="<f4", count=n_occ * n_t, offset=offset)
        offset += 4 * n_occ * n_t
        if np.any(refs < 0) or np.any(refs >= len(doc_table)):
            raise FormatError(f"{postings_path}: doc ordinal out of range in list {tid}")
        lists[tid] = InvertedList(tid, vecs.reshape(n_occ, n_t), refs)

    cls_matrix = None
    if n_c >= 1:
        cls_path = root / CLS_FILE
        cls_blob = _read_checked(cls_path, meta["checksums"].get(CLS_FILE, ""))
        if len(cls_blob) != 4 * n_c * len(doc_table):
            raise FormatError(
                f"{cls_path}: size {len(cls_blob)} does not match "
                f"{len(doc_table)} docs x n_c={n_c}"
            )
        cls_matrix = np.frombuffer(cls_blob, dtype="<f4").reshape(len(doc_table), n_c)

    return CoilIndex(
        config=cfg,
        lists=lists,
        cls_matrix=cls_matrix,
        doc_table=doc_table,
        vocab={str(k): int(v) for k, v in meta["vocab"].items()},
        corpus_checksum=int(meta["corpus_checksum"], 16),
        encoder_meta=meta.get("encoder_meta"),
    )


def index_stats(index: CoilIndex) -> IndexStats:
    """Pure summary; bytes_on_disk is the exact size the binary files occupy."""
    total = sum(len(lst) for lst in index.lists.values())
    histogram: dict[int, int] = {}
    for lst in index.lists.values():
        histogram[len(lst)] = histogram.get(len(lst), 0) + 1
    row_bytes = 4 + 4 * index.config.n_t
    disk = total * row_bytes
    if index.cls_matrix is not None:
        disk += 4 * index.config.n_c * index.num_docs
    return IndexStats(
        num_docs=index.num_docs,
        num_lists=len(index.lists),
        total_postings=total,
        bytes_on_disk=disk,
        list_size_histogram=histogram,
    )

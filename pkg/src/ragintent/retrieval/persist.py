"""Binary index files.

Layout (all integers little-endian)::

    magic      8 bytes  b"RGINTIDX"
    version    u16
    kind       u8       1 dense, 2 sparse, 3 maxsim
    reserved   u8
    n_pairs    u32
    dim        u32      0 for sparse
    meta       u32 length + UTF-8 JSON (fingerprint, params, tokenizer, catalog)
    pairs      n_pairs x (i64 id, str query, str vertical, str intent); str = u32 length + UTF-8
    dense:     float32[n_pairs * dim]
    maxsim:    int64[n_pairs + 1] offsets, then float32[n_tokens * dim]
    sha256     32 bytes over everything above

Sparse postings are rebuilt on load; they are a pure function of the pairs.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import IndexFormatError
from ..taxonomy import IntentCatalog, parse_intent_path
from ..textproc import TokenizerConfig
from .dense import DenseIndex
from .maxsim import MaxSimIndex
from .sparse import BM25Params, SparseIndex
from .types import ExemplarPair

MAGIC = b"RGINTIDX"
VERSION = 1
_KINDS = {"dense": 1, "sparse": 2, "maxsim": 3}
_KIND_NAMES = {v: k for k, v in _KINDS.items()}
_HEADER = struct.Struct("<8sHBBII")


def _wstr(buf: io.BytesIO, s: str) -> None:
    b = s.encode("utf-8")
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


def _rstr(view: memoryview, pos: int) -> tuple[str, int]:
    (n,) = struct.unpack_from("<I", view, pos)
    pos += 4
    if pos + n > len(view):
        raise IndexFormatError("truncated string in index file")
    return bytes(view[pos : pos + n]).decode("utf-8"), pos + n


def index_bytes(index) -> bytes:
    kind = index.kind
    meta: dict = {"catalog": index.catalog.to_dict() if index.catalog is not None else None}
    dim = 0
    if kind in ("dense", "maxsim"):
        meta["fingerprint"] = index.fingerprint
        dim = index.dim
    else:
        meta["tokenizer"] = index.tokenizer.as_dict()
        meta["bm25"] = {"k1": index.params.k1, "b": index.params.b}
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, _KINDS[kind], 0, len(index.pairs), dim))
    _wstr(buf, json.dumps(meta, sort_keys=True, ensure_ascii=False))
    for p in index.pairs:
        rec = p.to_record()
        buf.write(struct.pack("<q", p.id))
        _wstr(buf, rec["query"])
        _wstr(buf, rec["vertical"])
        _wstr(buf, rec["intent"])
    if kind == "dense":
        buf.write(index.matrix.astype("<f4").tobytes(order="C"))
    elif kind == "maxsim":
        buf.write(index.offsets.astype("<i8").tobytes())
        buf.write(index.tokens.astype("<f4").tobytes(order="C"))
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def save_index(index, path: str | os.PathLike) -> None:
    data = index_bytes(index)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def load_index(path: str | os.PathLike):
    return index_from_bytes(Path(path).read_bytes())


def index_from_bytes(data: bytes):
    if len(data) < _HEADER.size + 32 or data[:8] != MAGIC:
        raise IndexFormatError("not an index file (bad magic bytes)")
    magic, version, kind_code, _, n_pairs, dim = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise IndexFormatError(f"unsupported index format version {version} (expected {VERSION})")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise IndexFormatError("index checksum mismatch")
    kind = _KIND_NAMES.get(kind_code)
    if kind is None:
        raise IndexFormatError(f"unknown index kind code {kind_code}")
    view = memoryview(body)
    pos = _HEADER.size
    meta_text, pos = _rstr(view, pos)
    meta = json.loads(meta_text)
    catalog = IntentCatalog.from_dict(meta["catalog"]) if meta.get("catalog") else None
    pairs = []
    for _ in range(n_pairs):
        (pid,) = struct.unpack_from("<q", view, pos)
        pos += 8
        query, pos = _rstr(view, pos)
        vertical, pos = _rstr(view, pos)
        intent, pos = _rstr(view, pos)
        pairs.append(ExemplarPair(pid, query, parse_intent_path(intent, vertical)))
    if kind == "dense":
        n = n_pairs * dim
        matrix = np.frombuffer(body, dtype="<f4", count=n, offset=pos).reshape(n_pairs, dim)
        return DenseIndex(pairs, matrix.astype(np.float32), meta["fingerprint"], catalog)
    if kind == "maxsim":
        offsets = np.frombuffer(body, dtype="<i8", count=n_pairs + 1, offset=pos).astype(np.int64)
        pos += 8 * (n_pairs + 1)
        n_tok = int(offsets[-1])
        tokens = np.frombuffer(body, dtype="<f4", count=n_tok * dim, offset=pos).reshape(n_tok, dim)
        return MaxSimIndex(pairs, tokens.astype(np.float32), offsets, meta["fingerprint"], catalog)
    tok = TokenizerConfig(**meta["tokenizer"])
    return SparseIndex(pairs, catalog, tok, BM25Params(**meta["bm25"]))

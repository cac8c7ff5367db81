"""Exemplar line files: one JSON object ``{id, query, vertical, intent}`` per line."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..errors import CatalogError, IntentPathError
from ..taxonomy import IntentCatalog, parse_intent_path
from .types import ExemplarPair

_FIELDS = {"id", "query", "vertical", "intent"}


@dataclass
class LineError:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


class CorpusError(CatalogError):
    def __init__(self, errors: list[LineError]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors[:10]))


def parse_record(rec: dict, catalog: IntentCatalog | None, extra_ok: Iterable[str] = ()) -> ExemplarPair:
    if not isinstance(rec, dict):
        raise ValueError("record is not a JSON object")
    missing = _FIELDS - set(rec)
    if missing:
        raise ValueError(f"missing field(s) {sorted(missing)}")
    unknown = set(rec) - _FIELDS - set(extra_ok)
    if unknown:
        raise ValueError(f"unknown field(s) {sorted(unknown)}")
    if not isinstance(rec["id"], int) or isinstance(rec["id"], bool):
        raise ValueError("id must be an integer")
    if catalog is not None:
        intent = catalog.parse(rec["intent"], rec["vertical"])
    else:
        intent = parse_intent_path(rec["intent"], rec["vertical"])
    return ExemplarPair(rec["id"], rec["query"], intent)


def read_exemplars(path: str | Path, catalog: IntentCatalog | None = None,
                   extra_ok: Iterable[str] = ("split",)) -> list[ExemplarPair]:
    """Read and validate every line; raise :class:`CorpusError` listing bad lines."""
    pairs, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                pairs.append(parse_record(json.loads(line), catalog, extra_ok))
            except (ValueError, KeyError, TypeError, CatalogError, IntentPathError) as exc:
                errors.append(LineError(lineno, str(exc)))
    if errors:
        raise CorpusError(errors)
    return pairs


def write_exemplars(path: str | Path, pairs: Iterable[ExemplarPair], extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            rec = p.to_record()
            if extra:
                rec.update(extra)
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def append_exemplar(path: str | Path, pair: ExemplarPair) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(pair.to_record(), ensure_ascii=False) + "\n")
        fh.flush()

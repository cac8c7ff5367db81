from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import CatalogError
from ..taxonomy import IntentCatalog, IntentPath, render_intent_path
from ..textproc import normalize


@dataclass(frozen=True)
class ExemplarPair:
    id: int
    query: str
    intent: IntentPath

    def __post_init__(self):
        if not normalize(self.query):
            raise ValueError(f"exemplar {self.id}: query is empty after normalization")

    @property
    def vertical_id(self) -> str:
        return self.intent.vertical_id

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "query": self.query,
            "vertical": self.intent.vertical_id,
            "intent": render_intent_path(self.intent),
        }


@dataclass(frozen=True)
class CandidateSet:
    """Ranked retrieval result with its deduplicated intents."""

    entries: tuple[tuple[ExemplarPair, float], ...]
    k_requested: int
    unique_intents: tuple[IntentPath, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: dict[IntentPath, None] = {}
        for pair, _ in self.entries:
            seen.setdefault(pair.intent, None)
        object.__setattr__(self, "unique_intents", tuple(seen))

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    @property
    def scores(self) -> list[float]:
        return [s for _, s in self.entries]

    @property
    def ids(self) -> list[int]:
        return [p.id for p, _ in self.entries]

    def top_intent(self) -> IntentPath:
        return self.entries[0][0].intent

    def filter_min_score(self, floor: float) -> "CandidateSet":
        return CandidateSet(tuple(e for e in self.entries if e[1] >= floor), self.k_requested)

    def truncate(self, k: int) -> "CandidateSet":
        return CandidateSet(self.entries[:k], k)


EMPTY = CandidateSet((), 0)


def validate_pairs(pairs: Iterable[ExemplarPair], catalog: IntentCatalog | None) -> None:
    """Raise :class:`CatalogError` naming every pair whose intent is unknown."""
    if catalog is None:
        return
    bad = []
    for p in pairs:
        try:
            catalog.check(p.intent)
        except CatalogError as exc:
            bad.append(f"pair {p.id}: {exc}")
    if bad:
        raise CatalogError("; ".join(bad[:20]) + (f" (+{len(bad) - 20} more)" if len(bad) > 20 else ""))


def sort_pairs(pairs: Sequence[ExemplarPair]) -> tuple[ExemplarPair, ...]:
    ordered = tuple(sorted(pairs, key=lambda p: p.id))
    for a, b in zip(ordered, ordered[1:]):
        if a.id == b.id:
            raise ValueError(f"duplicate exemplar id {a.id}")
    return ordered


class PairTable:
    """Pairs ordered by id plus lookup helpers shared by every index kind."""

    kind = "base"

    def __init__(self, pairs: Sequence[ExemplarPair], catalog: IntentCatalog | None):
        self.pairs: tuple[ExemplarPair, ...] = tuple(pairs)
        self.ids = np.fromiter((p.id for p in self.pairs), dtype=np.int64, count=len(self.pairs))
        self.catalog = catalog
        self._vertical_masks: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.pairs)

    def with_catalog(self, catalog: IntentCatalog | None):
        """Shallow copy validated against ``catalog``; arrays are shared read-only."""
        other = copy.copy(self)
        other.catalog = catalog
        other._vertical_masks = {}
        return other

    def row_of(self, pair_id: int) -> int | None:
        i = int(np.searchsorted(self.ids, pair_id))
        return i if i < len(self.ids) and self.ids[i] == pair_id else None

    def vertical_mask(self, vertical_id: str | None) -> np.ndarray | None:
        if vertical_id is None:
            return None
        m = self._vertical_masks.get(vertical_id)
        if m is None:
            m = np.fromiter((p.vertical_id == vertical_id for p in self.pairs), dtype=np.uint8, count=len(self.pairs))
            self._vertical_masks[vertical_id] = m
        return m

    def _candidates(self, rows: np.ndarray, scores: np.ndarray, k: int) -> CandidateSet:
        return CandidateSet(tuple((self.pairs[r], float(scores[r])) for r in rows), k)

    def _splice(self, pair: ExemplarPair) -> tuple[tuple[ExemplarPair, ...], int, bool]:
        """New pair tuple with ``pair`` placed by id; returns (pairs, row, replaced)."""
        row = self.row_of(pair.id)
        if row is not None:
            return self.pairs[:row] + (pair,) + self.pairs[row + 1 :], row, True
        pos = int(np.searchsorted(self.ids, pair.id))
        return self.pairs[:pos] + (pair,) + self.pairs[pos:], pos, False

    def _merge(self, new: Sequence[ExemplarPair]) -> tuple[tuple[ExemplarPair, ...], list[tuple[bool, int]]]:
        """Pairs after upserting ``new`` in order, with each row's source.

        A source is ``(False, old_row)`` or ``(True, position in new)``; a later
        duplicate id in ``new`` wins, as it would with one-by-one upserts.
        """
        by_id: dict[int, tuple[ExemplarPair, bool, int]] = {
            p.id: (p, False, r) for r, p in enumerate(self.pairs)
        }
        for j, p in enumerate(new):
            by_id[p.id] = (p, True, j)
        order = sorted(by_id)
        return tuple(by_id[i][0] for i in order), [by_id[i][1:] for i in order]

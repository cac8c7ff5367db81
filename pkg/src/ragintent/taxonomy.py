"""Verticals, hierarchical intent paths and the intent catalog."""

from __future__ import annotations

import json
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import CatalogError, IntentPathError

SEPARATOR = " > "
DEFAULT_BRANCHING_LIMIT = 50


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


@dataclass(frozen=True)
class Vertical:
    id: str
    display_name: str
    level_names: tuple[str, ...]

    def __post_init__(self):
        if not self.level_names:
            raise CatalogError(f"vertical {self.id!r} has no levels")
        object.__setattr__(self, "level_names", tuple(self.level_names))

    @property
    def depth(self) -> int:
        return len(self.level_names)


@dataclass(frozen=True, order=True)
class IntentPath:
    """Labels ordered coarse to fine inside one vertical."""

    vertical_id: str
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(_nfc(x) for x in self.labels))
        if not self.labels:
            raise IntentPathError("intent path needs at least one label")
        for label in self.labels:
            if not label or label != label.strip() or ">" in label:
                raise IntentPathError(f"bad label {label!r}")

    @property
    def depth(self) -> int:
        return len(self.labels)

    def __str__(self) -> str:
        return render_intent_path(self)


def parse_intent_path(
    s: str, vertical_id: str, verticals: Mapping[str, Vertical] | None = None
) -> IntentPath:
    """Parse ``"Order Issue > Track Order"`` into an :class:`IntentPath`.

    When ``verticals`` is given, the vertical must exist and the depth must
    fit its level count.
    """
    if verticals is not None and vertical_id not in verticals:
        raise IntentPathError(f"unknown vertical {vertical_id!r}")
    # Split on the bare '>' so that sloppy spacing still parses; segments are trimmed.
    labels = [seg.strip() for seg in s.split(">")]
    if any(not seg for seg in labels):
        raise IntentPathError(f"empty segment in intent path {s!r}")
    if verticals is not None and len(labels) > verticals[vertical_id].depth:
        raise IntentPathError(
            f"path {s!r} has depth {len(labels)} but vertical {vertical_id!r} "
            f"has {verticals[vertical_id].depth} levels"
        )
    return IntentPath(vertical_id, tuple(labels))


def render_intent_path(p: IntentPath) -> str:
    return SEPARATOR.join(p.labels)


def path_prefix(p: IntentPath, depth: int) -> IntentPath:
    if not 1 <= depth <= len(p.labels):
        raise IntentPathError(f"prefix depth {depth} outside 1..{len(p.labels)}")
    return IntentPath(p.vertical_id, p.labels[:depth])


@dataclass(frozen=True)
class Violation:
    rule: str
    node: str
    message: str

    def as_dict(self) -> dict:
        return {"rule": self.rule, "node": self.node, "message": self.message}


@dataclass(frozen=True)
class IntentCatalog:
    """Immutable set of full intent paths grouped by vertical."""

    verticals: Mapping[str, Vertical]
    intents: frozenset[IntentPath]
    branching_limit: int = DEFAULT_BRANCHING_LIMIT
    _children: Mapping[IntentPath | tuple, tuple[IntentPath, ...]] = field(
        default=None, repr=False, compare=False
    )
    _prefixes: frozenset[IntentPath] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "verticals", dict(self.verticals))
        object.__setattr__(self, "intents", frozenset(self.intents))
        children: dict = defaultdict(set)
        prefixes = set()
        for p in self.intents:
            for d in range(1, p.depth + 1):
                node = path_prefix(p, d)
                prefixes.add(node)
                parent = ("root", p.vertical_id) if d == 1 else path_prefix(p, d - 1)
                children[parent].add(node)
        object.__setattr__(
            self, "_children", {k: tuple(sorted(v)) for k, v in children.items()}
        )
        object.__setattr__(self, "_prefixes", frozenset(prefixes))

    @classmethod
    def empty(cls) -> "IntentCatalog":
        return cls({}, frozenset())

    def children(self, node: IntentPath | None, vertical_id: str | None = None) -> tuple[IntentPath, ...]:
        """Direct children of ``node``; ``node=None`` means the vertical's root."""
        key = ("root", vertical_id) if node is None else node
        return self._children.get(key, ())

    def child_counts(self) -> dict[str, int]:
        """Per-node child count, keyed by ``vertical:path`` (root as ``vertical:``)."""
        out = {}
        for key, kids in self._children.items():
            if isinstance(key, tuple) and key and key[0] == "root":
                out[f"{key[1]}:"] = len(kids)
            else:
                out[f"{key.vertical_id}:{render_intent_path(key)}"] = len(kids)
        return out

    def is_known(self, p: IntentPath) -> bool:
        """True when ``p`` is a catalog path or a prefix of one."""
        return p in self._prefixes

    def is_leaf(self, p: IntentPath) -> bool:
        return p in self.intents

    def check(self, p: IntentPath) -> None:
        """Raise :class:`CatalogError` unless ``p`` is a known catalog node."""
        if p.vertical_id not in self.verticals:
            raise CatalogError(f"unknown vertical {p.vertical_id!r}")
        if not self.is_known(p):
            raise CatalogError(
                f"intent {render_intent_path(p)!r} is not in the catalog for vertical {p.vertical_id!r}"
            )

    def parse(self, s: str, vertical_id: str) -> IntentPath:
        """Parse and validate against this catalog in one step."""
        try:
            p = parse_intent_path(s, vertical_id, self.verticals)
        except IntentPathError as exc:
            raise CatalogError(str(exc)) from exc
        self.check(p)
        return p

    def with_intent(self, p: IntentPath) -> "IntentCatalog":
        """Catalog extended by the full path ``p``; raises if ``p`` would break an invariant."""
        if p in self.intents:
            return self
        v = self.verticals.get(p.vertical_id)
        if v is None:
            raise CatalogError(f"unknown vertical {p.vertical_id!r}")
        if p.depth != v.depth:
            raise CatalogError(f"intent {render_intent_path(p)!r} has depth {p.depth}, "
                               f"vertical {p.vertical_id!r} needs {v.depth}")
        if self.is_known(p):
            raise CatalogError(f"intent {render_intent_path(p)!r} is an inner node of the catalog")
        for d in range(1, p.depth + 1):
            node = path_prefix(p, d)
            if self.is_known(node):
                continue
            parent = path_prefix(p, d - 1) if d > 1 else None
            if len(self.children(parent, p.vertical_id)) >= self.branching_limit:
                raise CatalogError(f"adding {render_intent_path(node)!r} exceeds branching limit "
                                   f"{self.branching_limit}")
            break
        return IntentCatalog(self.verticals, self.intents | {p}, self.branching_limit)

    def paths(self, vertical_id: str | None = None) -> list[IntentPath]:
        return sorted(p for p in self.intents if vertical_id is None or p.vertical_id == vertical_id)

    # ---- serialization ----

    def to_dict(self) -> dict:
        return {
            "verticals": [
                {"id": v.id, "display_name": v.display_name, "level_names": list(v.level_names)}
                for v in sorted(self.verticals.values(), key=lambda v: v.id)
            ],
            "intents": [
                {"vertical": p.vertical_id, "path": render_intent_path(p)} for p in self.paths()
            ],
            "branching_limit": self.branching_limit,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "IntentCatalog":
        _reject_unknown(doc, {"verticals", "intents", "branching_limit"}, "catalog")
        verticals = {}
        for v in doc.get("verticals", []):
            _reject_unknown(v, {"id", "display_name", "level_names"}, "vertical")
            if v["id"] in verticals:
                raise CatalogError(f"duplicate vertical id {v['id']!r}")
            verticals[v["id"]] = Vertical(
                v["id"], v.get("display_name", v["id"]), tuple(v["level_names"])
            )
        intents = set()
        for i, rec in enumerate(doc.get("intents", [])):
            _reject_unknown(rec, {"vertical", "path"}, f"intent #{i}")
            # Orphan verticals are kept so validate_catalog can report them.
            try:
                intents.add(parse_intent_path(rec["path"], rec["vertical"]))
            except IntentPathError as exc:
                raise CatalogError(f"intent #{i}: {exc}") from exc
        return cls(verticals, frozenset(intents), doc.get("branching_limit", DEFAULT_BRANCHING_LIMIT))

    @classmethod
    def from_json(cls, text: str) -> "IntentCatalog":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "IntentCatalog":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")


def _reject_unknown(obj: dict, allowed: set[str], what: str) -> None:
    if not isinstance(obj, dict):
        raise CatalogError(f"{what}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise CatalogError(f"{what}: unknown field(s) {sorted(extra)}")


def validate_catalog(c: IntentCatalog, branching_limit: int | None = None) -> list[Violation]:
    """Return every invariant violation; an empty list means the catalog is clean.

    Branching-factor overruns are reported like any other violation; callers
    decide whether to treat them as warnings.
    """
    limit = c.branching_limit if branching_limit is None else branching_limit
    out: list[Violation] = []
    for p in sorted(c.intents):
        v = c.verticals.get(p.vertical_id)
        node = f"{p.vertical_id}:{render_intent_path(p)}"
        if v is None:
            out.append(Violation("unknown-vertical", node, f"vertical {p.vertical_id!r} is not defined"))
        elif p.depth > v.depth:
            out.append(Violation("depth", node, f"depth {p.depth} exceeds {v.depth} levels"))
    for node, count in sorted(c.child_counts().items()):
        if count > limit:
            out.append(Violation("branching-factor", node, f"{count} children exceeds limit {limit}"))
    return out


def catalog_from_paths(verticals: Iterable[Vertical], paths: Iterable[IntentPath]) -> IntentCatalog:
    return IntentCatalog({v.id: v for v in verticals}, frozenset(paths))

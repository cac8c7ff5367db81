"""Seeded synthetic intent corpora with a two-vertical, asymmetric taxonomy.

Each taxonomy node owns a few keyword pseudo-words; a query for an intent
path mentions one keyword per level wrapped in generic filler. Noise
replaces keywords with a sibling's keyword (confusable) or a random
keyword from elsewhere in the vertical.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterator

from ..retrieval.types import ExemplarPair
from ..taxonomy import IntentCatalog, IntentPath, Vertical, path_prefix

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "dr", "gl", "kr", "pl", "st", "tr", "sk", "sn", "vl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou", "ei"]
_CODAS = ["", "", "n", "r", "l", "k", "m", "x", "st"]

_FILLER_INDEX = [
    ("help", "please"), ("hi", ""), ("problem", "thanks"), ("question", ""), ("hello", "today"),
    ("issue", ""), ("need", "asap"), ("trouble", ""), ("", "please"), ("", ""),
]
# Disjoint from the index fillers: the paraphrase variant shares no surface tokens.
_FILLER_TEST = [
    ("yo", "cheers"), ("stuck", ""), ("urgent", "ty"), ("query", ""), ("", "pls"), ("", ""),
]
_INDEX_SUFFIXES = ["ing", "er"]
_TEST_SUFFIXES = ["ed", "s"]


@dataclass(frozen=True)
class VerticalSpec:
    id: str
    display_name: str
    branching: tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.branching)


DEFAULT_VERTICALS = (
    VerticalSpec("3p", "Third-party retail", (3, 4, 6)),      # 72 full paths
    VerticalSpec("1p", "First-party devices", (4, 5, 6, 7)),  # 840 full paths
)


@dataclass(frozen=True)
class CorpusSpec:
    verticals: tuple[VerticalSpec, ...] = DEFAULT_VERTICALS
    keywords_per_node: int = 1
    index_per_intent: int = 10
    test_per_intent: int = 1
    noise_rate: float = 0.3
    seed: int = 0
    paraphrase: bool = False
    fillers: bool = True  # False: queries are keywords only, one template per intent

    def __post_init__(self):
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must be in [0, 1)")
        if self.keywords_per_node < 1 or self.index_per_intent < 1 or self.test_per_intent < 0:
            raise ValueError("corpus spec counts must be positive")
        for v in self.verticals:
            if not v.branching or any(b < 1 for b in v.branching):
                raise ValueError(f"bad branching for vertical {v.id}")


@dataclass(frozen=True)
class LabeledExample:
    query: str
    gold: IntentPath
    split: str  # "index" or "test"
    id: int

    @property
    def vertical_id(self) -> str:
        return self.gold.vertical_id

    def to_pair(self) -> ExemplarPair:
        return ExemplarPair(self.id, self.query, self.gold)

    def to_record(self) -> dict:
        rec = self.to_pair().to_record()
        rec["split"] = self.split
        return rec


@dataclass
class SyntheticCorpus:
    spec: CorpusSpec
    catalog: IntentCatalog
    examples: list[LabeledExample]
    keywords: dict[IntentPath, tuple[str, ...]] = field(repr=False)

    @property
    def index_examples(self) -> list[LabeledExample]:
        return [e for e in self.examples if e.split == "index"]

    @property
    def test_examples(self) -> list[LabeledExample]:
        return [e for e in self.examples if e.split == "test"]

    def index_pairs(self, vertical: str | None = None) -> list[ExemplarPair]:
        return [e.to_pair() for e in self.index_examples if vertical is None or e.vertical_id == vertical]

    def test_set(self, vertical: str | None = None) -> list[LabeledExample]:
        return [e for e in self.test_examples if vertical is None or e.vertical_id == vertical]


class _WordMint:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def word(self) -> str:
        while True:
            n = self.rng.choice((2, 2, 3))
            w = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) for _ in range(n))
            w += self.rng.choice(_CODAS)
            if w not in self.used and len(w) >= 4:
                self.used.add(w)
                return w


def _walk(vspec: VerticalSpec) -> Iterator[tuple[int, ...]]:
    def rec(prefix: tuple[int, ...]):
        if len(prefix) == vspec.depth:
            yield prefix
            return
        for i in range(vspec.branching[len(prefix)]):
            yield from rec(prefix + (i,))
    yield from rec(())


def generate_synthetic_corpus(spec: CorpusSpec = CorpusSpec()) -> SyntheticCorpus:
    """Deterministic catalog and labeled examples for ``spec.seed``."""
    rng = random.Random(spec.seed)
    mint = _WordMint(rng)
    verticals, intents = [], []
    labels: dict[tuple, str] = {}
    keywords: dict[IntentPath, tuple[str, ...]] = {}
    for vs in spec.verticals:
        verticals.append(Vertical(vs.id, vs.display_name, tuple(f"level {i + 1}" for i in range(vs.depth))))
        for leaf in _walk(vs):
            names = []
            for d in range(1, vs.depth + 1):
                key = (vs.id,) + leaf[:d]
                if key not in labels:
                    labels[key] = " ".join(mint.word().capitalize() for _ in range(rng.choice((1, 2))))
                names.append(labels[key])
            path = IntentPath(vs.id, tuple(names))
            intents.append(path)
            for d in range(1, vs.depth + 1):
                node = path_prefix(path, d)
                if node not in keywords:
                    keywords[node] = tuple(mint.word() for _ in range(spec.keywords_per_node))
    catalog = IntentCatalog({v.id: v for v in verticals}, frozenset(intents))

    siblings: dict[IntentPath, list[IntentPath]] = {}
    for node in keywords:
        parent = path_prefix(node, node.depth - 1) if node.depth > 1 else None
        siblings[node] = [c for c in catalog.children(parent, node.vertical_id) if c != node]
    by_vertical_nodes = {v.id: [n for n in keywords if n.vertical_id == v.id] for v in verticals}

    def keyword_for(node: IntentPath) -> str:
        if spec.noise_rate and rng.random() < spec.noise_rate:
            if siblings[node] and rng.random() < 0.5:
                return rng.choice(keywords[rng.choice(siblings[node])])
            return rng.choice(keywords[rng.choice(by_vertical_nodes[node.vertical_id])])
        return rng.choice(keywords[node])

    def make_query(path: IntentPath, split: str) -> str:
        test_side = spec.paraphrase and split == "test"
        fillers = _FILLER_TEST if test_side else _FILLER_INDEX
        suffixes = _TEST_SUFFIXES if test_side else _INDEX_SUFFIXES
        opener, closer = rng.choice(fillers) if spec.fillers else ("", "")
        words = []
        for d in range(1, path.depth + 1):
            kw = keyword_for(path_prefix(path, d))
            words.append(kw + rng.choice(suffixes) if spec.paraphrase else kw)
        return " ".join(x for x in (opener, " ".join(words), closer) if x)

    examples: list[LabeledExample] = []
    next_id = 0
    for path in sorted(intents):
        for split, n in (("index", spec.index_per_intent), ("test", spec.test_per_intent)):
            for _ in range(n):
                examples.append(LabeledExample(make_query(path, split), path, split, next_id))
                next_id += 1
    return SyntheticCorpus(spec, catalog, examples, keywords)

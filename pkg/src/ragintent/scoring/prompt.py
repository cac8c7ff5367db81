from __future__ import annotations

from dataclasses import asdict, dataclass

from ..retrieval.types import CandidateSet
from ..taxonomy import render_intent_path


def _one_line(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt layout: instruction, retrieved exemplars, candidate list, then the query.

    The final line is left open after the intent marker so the candidate
    intent is scored as its continuation.
    """

    instruction: str = "Classify the customer query into exactly one of the candidate intents."
    exemplar_header: str = "Examples:"
    query_marker: str = "Query:"
    intent_marker: str = "Intent:"
    candidates_header: str = "Candidate intents:"
    candidate_bullet: str = "-"

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_TEMPLATE = PromptTemplate()


def render_prompt(template: PromptTemplate, query: str, candidates: CandidateSet, intents=None) -> str:
    """Render the prompt; ``intents`` overrides the candidate list (defaults to the unique intents)."""
    if not candidates.entries:
        raise ValueError("cannot render a prompt without retrieved exemplars")
    t = template
    lines = [t.instruction, "", t.exemplar_header]
    for pair, _ in candidates.entries:
        lines.append(f"{t.query_marker} {_one_line(pair.query)}")
        lines.append(f"{t.intent_marker} {render_intent_path(pair.intent)}")
    lines += ["", t.candidates_header]
    lines += [f"{t.candidate_bullet} {render_intent_path(u)}" for u in (candidates.unique_intents if intents is None else intents)]
    lines += ["", f"{t.query_marker} {_one_line(query)}", t.intent_marker]
    return "\n".join(lines)


def continuation_text(intent_text: str) -> str:
    """Text appended after the prompt when scoring a candidate."""
    return " " + intent_text


def parse_prompt(prompt: str, template: PromptTemplate = DEFAULT_TEMPLATE) -> dict:
    """Recover exemplars, candidates and the query from a rendered prompt."""
    lines = prompt.split("\n")
    qm, im = template.query_marker, template.intent_marker
    exemplars: list[tuple[str, str]] = []
    candidates: list[str] = []
    query = None
    section = None
    pending = None
    for line in lines:
        if line == template.exemplar_header:
            section = "examples"
            continue
        if line == template.candidates_header:
            section = "candidates"
            continue
        if line.startswith(qm + " ") or line == qm:
            pending = line[len(qm):].strip()
            continue
        if line == im and pending is not None:
            query = pending
            pending = None
            continue
        if line.startswith(im + " ") and pending is not None:
            exemplars.append((pending, line[len(im):].strip()))
            pending = None
            continue
        if section == "candidates" and line.startswith(template.candidate_bullet + " "):
            candidates.append(line[len(template.candidate_bullet) + 1:])
    return {"exemplars": exemplars, "candidates": candidates, "query": query}

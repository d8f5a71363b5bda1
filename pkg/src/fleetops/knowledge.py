"""Per-agent document store for robot manuals: chunking, lexical
retrieval, and spec-sheet extraction.

Each agent owns a private knowledge base; retrieval for one agent never
sees another agent's documents, mirroring the one-to-one chat rule. The
default ranker is deterministic tf-idf over lowercased alphanumeric
tokens; an embedding backend can be slotted in behind the same interface.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import BinaryDocument, EmptyDocument, EmptyKnowledgeBase

CHUNK_CHAR_CAP = 1200

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class DocumentChunk:
    doc_id: str
    index: int
    text: str

    def tokens(self) -> list[str]:
        return tokenize(self.text)


def chunk_document(text: str) -> list[str]:
    """Split on blank lines, subdividing any paragraph over the char cap
    at the last whitespace before the boundary."""
    paragraphs = [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]
    chunks: list[str] = []
    for para in paragraphs:
        while len(para) > CHUNK_CHAR_CAP:
            cut = para.rfind(" ", 0, CHUNK_CHAR_CAP + 1)
            if cut <= 0:
                cut = CHUNK_CHAR_CAP
            chunks.append(para[:cut].rstrip())
            para = para[cut:].lstrip()
        chunks.append(para)
    return chunks


# -- spec sheets ---------------------------------------------------------

@dataclass(frozen=True)
class Quantity:
    value: float
    unit: str

    def to_json(self) -> dict:
        return {"value": self.value, "unit": self.unit}


@dataclass
class RobotSpecSheet:
    """Labeled values pulled from a manual; absent fields stay None."""

    height_m: Optional[Quantity] = None
    width_m: Optional[Quantity] = None
    max_speed: Optional[Quantity] = None
    torque: Optional[Quantity] = None
    battery_capacity: Optional[Quantity] = None
    source_doc: str = ""

    def to_json(self) -> dict:
        return {
            name: (q.to_json() if q else None)
            for name, q in (
                ("height_m", self.height_m),
                ("width_m", self.width_m),
                ("max_speed", self.max_speed),
                ("torque", self.torque),
                ("battery_capacity", self.battery_capacity),
            )
        } | {"source_doc": self.source_doc}


_FIELD_SYNONYMS = {
    "height_m": ("height",),
    "width_m": ("width",),
    "max_speed": ("max speed", "maximum speed", "top speed", "speed"),
    "torque": ("max torque", "maximum torque", "torque"),
    "battery_capacity": ("battery capacity", "battery"),
}

_SPEC_LINE_RE = re.compile(
    r"^\s*(?P<label>[A-Za-z][A-Za-z ]*?)\s*[:=]\s*(?P<value>\d+(?:\.\d+)?)\s*(?P<unit>[^\s].*?)?\s*$"
)


def _normalize(field_name: str, value: float, unit: str) -> Optional[Quantity]:
    unit = (unit or "").strip().lower().replace("·", "").replace("-", "").replace(" ", "")
    if field_name in ("height_m", "width_m"):
        factor = {"m": 1.0, "meters": 1.0, "metres": 1.0, "cm": 0.01, "mm": 0.001, "": 1.0}
        if unit not in factor:
            return None
        return Quantity(value * factor[unit], "m")
    if field_name == "max_speed":
        # grid convention: one cell is a meter, one tick is a second
        if unit in ("m/s", "ms", "mps", "meterspersecond", ""):
            return Quantity(value, "cells/tick")
        if unit in ("km/h", "kmh", "kph"):
            return Quantity(round(value / 3.6, 6), "cells/tick")
        if unit in ("cells/tick", "cellspertick"):
            return Quantity(value, "cells/tick")
        return None
    if field_name == "torque":
        if unit in ("nm", "n·m", "newtonmeters", ""):
            return Quantity(value, "N·m")
        if unit in ("kgfcm", "kgcm"):
            return Quantity(round(value * 0.0980665, 6), "N·m")
        return None
    if field_name == "battery_capacity":
        # energy units are mAh-equivalent
        if unit in ("mah", "units", ""):
            return Quantity(value, "energy_units")
        if unit in ("ah",):
            return Quantity(value * 1000, "energy_units")
        if unit in ("wh",):
            return Quantity(value, "Wh")
        return None
    return None


def extract_spec(doc: str, source_doc: str = "") -> RobotSpecSheet:
    """Scan labeled 'Field: value unit' lines; first occurrence per field
    wins. Pure and total: unparseable text simply leaves fields absent."""
    sheet = RobotSpecSheet(source_doc=source_doc)
    for line in doc.splitlines():
        match = _SPEC_LINE_RE.match(line)
        if not match:
            continue
        label = match.group("label").strip().lower()
        for field_name, synonyms in _FIELD_SYNONYMS.items():
            if label not in synonyms or getattr(sheet, field_name) is not None:
                continue
            quantity = _normalize(
                field_name, float(match.group("value")), match.group("unit") or ""
            )
            if quantity is not None:
                setattr(sheet, field_name, quantity)
            break
    return sheet


# -- the store -----------------------------------------------------------

@dataclass
class Document:
    doc_id: str
    name: str
    version: int
    text: str
    chunks: list[DocumentChunk] = field(default_factory=list)


class KnowledgeBase:
    """All agents' private document stores, keyed by agent name."""

    def __init__(self) -> None:
        self._stores: dict[str, dict[str, Document]] = {}

    def ingest_manual(self, agent: str, doc: str, name: str) -> tuple[str, int]:
        """Chunk and index a manual under the agent's store.

        Re-ingesting the same name replaces the prior version in place
        (same doc id, version incremented).
        """
        if "\x00" in doc:
            raise BinaryDocument(f"manual {name!r} is not plain text")
        if not doc.strip():
            raise EmptyDocument(f"manual {name!r} is empty")
        store = self._stores.setdefault(agent, {})
        doc_id = f"{agent}:{name}"
        version = store[name].version + 1 if name in store else 1
        chunks = [
            DocumentChunk(doc_id=doc_id, index=i, text=text)
            for i, text in enumerate(chunk_document(doc))
        ]
        store[name] = Document(doc_id, name, version, doc, chunks)
        return doc_id, len(chunks)

    def document(self, agent: str, name: str) -> Optional[Document]:
        return self._stores.get(agent, {}).get(name)

    def agents(self) -> list[str]:
        return sorted(self._stores)

    def _chunks(self, agent: str) -> list[DocumentChunk]:
        store = self._stores.get(agent)
        if not store:
            raise EmptyKnowledgeBase(f"no documents ingested for {agent!r}")
        out: list[DocumentChunk] = []
        for name in sorted(store, key=lambda n: store[n].doc_id):
            out.extend(store[name].chunks)
        return out

    def retrieve(self, agent: str, query: str, k: int) -> list[DocumentChunk]:
        """Top-k chunks by tf-idf overlap with the query.

        Score is the sum over query token occurrences of
        tf(token, chunk) * ln(1 + N/df(token)); zero-score chunks are
        filtered and ties break by (doc id, chunk index) ascending.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        chunks = self._chunks(agent)
        n = len(chunks)
        token_counts = []
        for chunk in chunks:
            counts: dict[str, int] = {}
            for token in chunk.tokens():
                counts[token] = counts.get(token, 0) + 1
            token_counts.append(counts)
        df: dict[str, int] = {}
        for counts in token_counts:
            for token in counts:
                df[token] = df.get(token, 0) + 1
        scored = []
        for chunk, counts in zip(chunks, token_counts):
            score = 0.0
            for token in tokenize(query):
                tf = counts.get(token, 0)
                if tf:
                    score += tf * math.log(1 + n / df[token])
            if score > 0:
                scored.append((chunk, score))
        scored.sort(key=lambda cs: (-cs[1], cs[0].doc_id, cs[0].index))
        return [chunk for chunk, _ in scored[:k]]

    def spec_sheet(self, agent: str, name: str) -> RobotSpecSheet:
        doc = self.document(agent, name)
        if doc is None:
            raise EmptyKnowledgeBase(f"{agent!r} has no manual {name!r}")
        return extract_spec(doc.text, source_doc=doc.doc_id)

    # -- checkpointing ------------------------------------------------

    def to_json(self) -> dict:
        return {
            agent: {
                name: {"version": d.version, "text": d.text}
                for name, d in sorted(store.items())
            }
            for agent, store in sorted(self._stores.items())
        }

    @staticmethod
    def from_json(data: dict) -> "KnowledgeBase":
        kb = KnowledgeBase()
        for agent, store in data.items():
            for name, entry in store.items():
                kb.ingest_manual(agent, entry["text"], name)
                kb._stores[agent][name].version = entry["version"]
        return kb

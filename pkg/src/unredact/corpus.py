"""Annotated corpus ingestion and the entity label taxonomy.

Spans are half-open ``[start, end)`` intervals counted in Unicode code
points. Sources that store an inclusive end set ``end_inclusive`` on the
annotation and are converted on ingest.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence


class EntityLabel(enum.IntEnum):
    DATETIME = 0
    ORG = 1
    PERSON = 2
    DEM = 3
    LOC = 4
    MISC = 5
    QUANTITY = 6
    CODE = 7


N_LABELS = len(EntityLabel)

_LABEL_ALIASES = {
    "datetime": EntityLabel.DATETIME,
    "org": EntityLabel.ORG,
    "organization": EntityLabel.ORG,
    "organisation": EntityLabel.ORG,
    "person": EntityLabel.PERSON,
    "dem": EntityLabel.DEM,
    "demographic": EntityLabel.DEM,
    "loc": EntityLabel.LOC,
    "location": EntityLabel.LOC,
    "misc": EntityLabel.MISC,
    "miscellaneous": EntityLabel.MISC,
    "quantity": EntityLabel.QUANTITY,
    "code": EntityLabel.CODE,
}


class CorpusError(ValueError):
    """Base class for corpus ingestion failures."""


class UnknownLabel(CorpusError):
    def __init__(self, label: str):
        super().__init__(f"unknown entity label: {label!r}")
        self.label = label


class CorpusParseError(CorpusError):
    def __init__(self, msg: str, position: int):
        super().__init__(f"{msg} (byte {position})")
        self.position = position


class CorpusValidationError(CorpusError):
    def __init__(self, doc_id: str, index: int | None, msg: str):
        where = f"document {doc_id!r}"
        if index is not None:
            where += f", annotation {index}"
        super().__init__(f"{where}: {msg}")
        self.doc_id = doc_id
        self.index = index


def parse_label(s: str) -> EntityLabel:
    """Case-insensitive lookup of a label name or its short form."""
    try:
        return _LABEL_ALIASES[s.strip().lower()]
    except (KeyError, AttributeError):
        raise UnknownLabel(s) from None


@dataclass(frozen=True, order=True)
class Annotation:
    start: int
    end: int
    label: EntityLabel
    identifier: str = "quasi"

    def __post_init__(self):
        if self.identifier not in ("direct", "quasi"):
            raise ValueError(f"identifier must be 'direct' or 'quasi', got {self.identifier!r}")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class AnnotatedDocument:
    id: str
    text: str
    annotations: tuple[Annotation, ...] = ()
    revised: bool = False
    target: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "revised": self.revised,
            "target": self.target,
            "annotations": [
                {"start": a.start, "end": a.end, "label": a.label.name, "identifier": a.identifier}
                for a in self.annotations
            ],
        }


@dataclass(frozen=True)
class RedactedSample:
    """One sentence with exactly one span replaced by asterisks."""

    sentence: str
    start: int
    end: int
    label: EntityLabel
    source_doc: str = ""
    redacted_sentence: str = field(init=False)

    def __post_init__(self):
        if not 0 <= self.start < self.end <= len(self.sentence):
            raise ValueError(f"span [{self.start}, {self.end}) outside sentence of length {len(self.sentence)}")
        redacted = self.sentence[: self.start] + "*" * (self.end - self.start) + self.sentence[self.end :]
        object.__setattr__(self, "redacted_sentence", redacted)

    @property
    def span(self) -> tuple[int, int]:
        return self.start, self.end

    def to_json(self, sample_id: str | None = None) -> dict[str, Any]:
        out = {
            "doc": self.source_doc,
            "sentence": self.sentence,
            "redacted": self.redacted_sentence,
            "start": self.start,
            "len": self.end - self.start,
            "label": self.label.name,
        }
        if sample_id is not None:
            out["id"] = sample_id
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "RedactedSample":
        start = int(obj["start"])
        sample = cls(
            sentence=obj["sentence"],
            start=start,
            end=start + int(obj["len"]),
            label=parse_label(obj["label"]),
            source_doc=obj.get("doc", ""),
        )
        if "redacted" in obj and obj["redacted"] != sample.redacted_sentence:
            raise ValueError("redacted field does not match sentence and span")
        return sample


def _document_from_obj(obj: Any, position: int) -> AnnotatedDocument:
    if not isinstance(obj, dict):
        raise CorpusValidationError(f"#{position}", None, "document entry is not an object")
    doc_id = str(obj.get("id", f"#{position}"))
    text = obj.get("text")
    if not isinstance(text, str):
        raise CorpusValidationError(doc_id, None, "missing or non-string 'text'")
    anns = []
    for i, raw in enumerate(obj.get("annotations", [])):
        try:
            start, end = int(raw["start"]), int(raw["end"])
            if raw.get("end_inclusive", False):
                end += 1
            label = parse_label(raw["label"])
            ident = raw.get("identifier", "quasi")
            ann = Annotation(start, end, label, ident)
        except UnknownLabel as exc:
            raise CorpusValidationError(doc_id, i, str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusValidationError(doc_id, i, f"malformed annotation: {exc}") from exc
        if not 0 <= start < end <= len(text):
            raise CorpusValidationError(
                doc_id, i, f"span [{start}, {end}) out of range for text of length {len(text)}"
            )
        anns.append(ann)
    # identical duplicates are merged, first occurrence wins the order
    merged = tuple(dict.fromkeys(anns))
    return AnnotatedDocument(
        id=doc_id,
        text=text,
        annotations=merged,
        revised=bool(obj.get("revised", False)),
        target=str(obj.get("target", "")),
    )


def parse_corpus(
    payload: bytes | str,
    adapter: Callable[[Any], Any] | None = None,
) -> list[AnnotatedDocument]:
    """Parse a JSON array of documents.

    ``adapter`` may rewrite each raw document object into the native schema
    before validation, which is how foreign corpus layouts are plugged in.
    """
    if isinstance(payload, bytes):
        try:
            text = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusParseError("payload is not valid UTF-8", exc.start) from exc
    else:
        text = payload
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        # json reports a character offset; convert to bytes
        position = len(text[: exc.pos].encode("utf-8"))
        raise CorpusParseError(f"malformed JSON: {exc.msg}", position) from exc
    if not isinstance(data, list):
        raise CorpusParseError("top-level JSON value must be an array", 0)
    if adapter is not None:
        data = [adapter(obj) for obj in data]
    return [_document_from_obj(obj, i) for i, obj in enumerate(data)]


def serialize_corpus(docs: Iterable[AnnotatedDocument]) -> bytes:
    return json.dumps([d.to_json() for d in docs], ensure_ascii=False).encode("utf-8")


def corpus_stats(items: Sequence[AnnotatedDocument] | Sequence[RedactedSample]) -> dict[str, int]:
    """Per-label counts over documents' annotations or over samples."""
    counts: Counter = Counter()
    for item in items:
        if isinstance(item, AnnotatedDocument):
            counts.update(a.label for a in item.annotations)
        else:
            counts[item.label] += 1
    return {label.name: counts.get(label, 0) for label in EntityLabel}

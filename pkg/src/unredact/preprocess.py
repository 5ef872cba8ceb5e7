"""Length-preserving normalization, sentence splitting and redaction.

Every transformation here keeps code-point offsets stable, so annotation
spans computed on the raw document stay valid on the normalized text.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .corpus import AnnotatedDocument, Annotation, RedactedSample

logger = logging.getLogger(__name__)

_ABBREV_DOT = re.compile(r"\b(nos?)\.", re.IGNORECASE)
_NEWLINE_RUN = re.compile(r"\n+")
_SENT_END = re.compile(r"[.?!]+(?=\s+[A-Z0-9*])")
# tokens that end in '.' without closing a sentence
_NO_SPLIT = frozenset({"no_", "nos_", "v", "art", "para", "e.g", "i.e", "mr", "mrs", "ms", "dr", "cf"})


class StraddlingAnnotation(ValueError):
    def __init__(self, doc_id: str, indices: Sequence[int]):
        super().__init__(f"document {doc_id!r}: annotations {list(indices)} cross a sentence boundary")
        self.doc_id = doc_id
        self.indices = list(indices)


@dataclass(frozen=True)
class SentenceSpan:
    doc_id: str
    start: int
    end: int
    text: str

    @property
    def span(self) -> tuple[int, int]:
        return self.start, self.end


def _is_title(line: str) -> bool:
    letters = [c for c in line if c.isalpha()]
    if len(letters) < 2:
        return False
    return sum(c.isupper() for c in letters) >= 0.8 * len(letters)


def normalize_text(text: str) -> str:
    """Replace newlines and mask abbreviation dots without changing length.

    A newline run after an all-caps title line becomes ``'.'`` followed by
    spaces; every other newline becomes a space; the dot of ``no.``/``nos.``
    becomes ``'_'``.
    """
    chars = list(text)
    line_start = 0
    for m in _NEWLINE_RUN.finditer(text):
        if _is_title(text[line_start : m.start()]):
            chars[m.start()] = "."
            chars[m.start() + 1 : m.end()] = " " * (m.end() - m.start() - 1)
        else:
            chars[m.start() : m.end()] = " " * (m.end() - m.start())
        line_start = m.end()
    out = "".join(chars)
    out = _ABBREV_DOT.sub(lambda m: m.group(1) + "_", out)
    assert len(out) == len(text)
    return out


def _ends_with_abbreviation(text: str, dot: int) -> bool:
    j = dot
    while j > 0 and not text[j - 1].isspace():
        j -= 1
    token = text[j:dot]
    if len(token) == 1 and token.isupper():
        return True
    return token.lower() in _NO_SPLIT


def split_sentences(text: str, doc_id: str = "") -> list[SentenceSpan]:
    """Rule-based, offset-exact splitter.

    Splits after terminal punctuation followed by whitespace and an
    uppercase letter, digit or asterisk. Leading and trailing whitespace of
    each sentence falls into the gaps between sentences.
    """
    cuts = [
        m.end()
        for m in _SENT_END.finditer(text)
        if not (text[m.start()] == "." and _ends_with_abbreviation(text, m.start()))
    ]
    spans = []
    begin = 0
    for cut in cuts + [len(text)]:
        seg = text[begin:cut]
        stripped = seg.strip()
        if stripped:
            s = begin + (len(seg) - len(seg.lstrip()))
            e = s + len(stripped)
            spans.append(SentenceSpan(doc_id, s, e, text[s:e]))
        begin = cut
    return spans


def localize(
    doc: AnnotatedDocument,
    sentences: Sequence[SentenceSpan],
    on_straddle: str = "raise",
) -> list[tuple[SentenceSpan, Annotation]]:
    """Map document-level annotations to sentence-relative ones.

    With ``on_straddle="skip"`` annotations crossing a sentence boundary
    are logged and dropped instead of raising.
    """
    out = []
    bad = []
    starts = [s.start for s in sentences]
    for idx, ann in enumerate(doc.annotations):
        # bisect for the last sentence starting at or before the annotation
        lo, hi = 0, len(starts)
        while lo < hi:
            mid = (lo + hi) // 2
            if starts[mid] <= ann.start:
                lo = mid + 1
            else:
                hi = mid
        sent = sentences[lo - 1] if lo else None
        if sent is None or ann.end > sent.end:
            bad.append(idx)
            continue
        rel = Annotation(ann.start - sent.start, ann.end - sent.start, ann.label, ann.identifier)
        out.append((sent, rel))
    if bad:
        if on_straddle == "raise":
            raise StraddlingAnnotation(doc.id, bad)
        logger.warning("document %r: skipping annotations %s that cross sentence boundaries", doc.id, bad)
    return out


def materialize(sentence: SentenceSpan, anns: Iterable[Annotation]) -> list[RedactedSample]:
    """One sample per annotation, each with only its own span asterisked."""
    return [
        RedactedSample(sentence.text, a.start, a.end, a.label, source_doc=sentence.doc_id)
        for a in anns
    ]


def document_samples(doc: AnnotatedDocument, on_straddle: str = "skip") -> list[RedactedSample]:
    text = normalize_text(doc.text)
    sentences = split_sentences(text, doc.id)
    samples = []
    for sent, ann in localize(doc, sentences, on_straddle=on_straddle):
        samples.extend(materialize(sent, [ann]))
    return samples


def corpus_samples(docs: Iterable[AnnotatedDocument], on_straddle: str = "skip") -> list[RedactedSample]:
    out: list[RedactedSample] = []
    for doc in docs:
        out.extend(document_samples(doc, on_straddle))
    return out


def sample_ids(samples: Sequence[RedactedSample]) -> list[str]:
    """Stable ids ``<doc>/<n>``, ``n`` counting samples within a document."""
    seen: dict[str, int] = {}
    ids = []
    for s in samples:
        n = seen.get(s.source_doc, 0)
        seen[s.source_doc] = n + 1
        ids.append(f"{s.source_doc}/{n}")
    return ids


def write_samples(samples: Sequence[RedactedSample], fh) -> None:
    for sid, s in zip(sample_ids(samples), samples):
        fh.write(json.dumps(s.to_json(sid), ensure_ascii=False) + "\n")


def read_samples(fh) -> Iterator[RedactedSample]:
    for lineno, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            yield RedactedSample.from_json(json.loads(line))
        except (ValueError, KeyError) as exc:
            raise ValueError(f"samples line {lineno}: {exc}") from exc

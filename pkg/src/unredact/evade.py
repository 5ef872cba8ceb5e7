"""Homoglyph substitution that hides text from the embedder but not from readers."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

# a, e, i, o -> Cyrillic; n -> Armenian
DEFAULT_PAIRS = (
    (0x0061, 0x0430),
    (0x0065, 0x0435),
    (0x0069, 0x0456),
    (0x006E, 0x0578),
    (0x006F, 0x043E),
)

_CODEPOINT = re.compile(r"^U\+([0-9A-Fa-f]{4,6})$")


class MalformedMap(ValueError):
    pass


@dataclass(frozen=True)
class HomoglyphMap:
    pairs: tuple[tuple[int, int], ...] = DEFAULT_PAIRS

    def __post_init__(self):
        keys = [a for a, _ in self.pairs]
        values = [b for _, b in self.pairs]
        if len(set(keys)) != len(keys) or len(set(values)) != len(values):
            raise MalformedMap("homoglyph map must be injective")
        if set(keys) & set(values):
            raise MalformedMap("a code point cannot be both a source and a substitute")
        for a, b in self.pairs:
            if not (0 <= a < 0x80 and chr(a).islower()):
                raise MalformedMap(f"source U+{a:04X} is not an ASCII lowercase letter")
            if b < 0x80:
                raise MalformedMap(f"substitute U+{b:04X} is ASCII")

    @property
    def forward(self) -> dict[int, int]:
        return dict(self.pairs)

    @property
    def inverse(self) -> dict[int, int]:
        return {b: a for a, b in self.pairs}

    @classmethod
    def empty(cls) -> "HomoglyphMap":
        return cls(())

    @classmethod
    def from_json(cls, data: str | bytes | Sequence[dict[str, Any]]) -> "HomoglyphMap":
        """Build from ``[{"from": "U+0061", "to": "U+0430"}, ...]``."""
        if isinstance(data, (str, bytes)):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise MalformedMap(f"map is not valid JSON: {exc}") from exc
        if not isinstance(data, list):
            raise MalformedMap("map must be a JSON array")
        pairs = []
        for i, entry in enumerate(data):
            try:
                a = _parse_codepoint(entry["from"])
                b = _parse_codepoint(entry["to"])
            except (KeyError, TypeError) as exc:
                raise MalformedMap(f"entry {i}: expected 'from' and 'to' code points") from exc
            pairs.append((a, b))
        return cls(tuple(pairs))

    def to_json(self) -> list[dict[str, str]]:
        return [{"from": f"U+{a:04X}", "to": f"U+{b:04X}"} for a, b in self.pairs]


def _parse_codepoint(s: str) -> int:
    m = _CODEPOINT.match(s.strip()) if isinstance(s, str) else None
    if not m:
        raise MalformedMap(f"bad code point {s!r}; expected U+XXXX")
    return int(m.group(1), 16)


DEFAULT_MAP = HomoglyphMap()


def harden(text: str, hmap: HomoglyphMap = DEFAULT_MAP) -> str:
    """Swap each mapped ASCII letter for its look-alike."""
    return text.translate(hmap.forward)


def fold(text: str, hmap: HomoglyphMap = DEFAULT_MAP) -> str:
    """Undo :func:`harden`: map look-alikes back to ASCII."""
    return text.translate(hmap.inverse)


def detect(text: str, hmap: HomoglyphMap = DEFAULT_MAP) -> list[tuple[int, str, str]]:
    """(position, ASCII original, look-alike) for every substituted character."""
    inverse = hmap.inverse
    return [(i, chr(inverse[ord(c)]), c) for i, c in enumerate(text) if ord(c) in inverse]


def harden_all(texts: Iterable[str], hmap: HomoglyphMap = DEFAULT_MAP) -> list[str]:
    table = hmap.forward
    return [t.translate(table) for t in texts]

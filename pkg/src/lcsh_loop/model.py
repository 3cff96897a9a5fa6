"""Domain types and string machinery for subject headings.

Heading strings follow the standard LCSH display convention: a main
heading optionally followed by subdivisions, delimited by "--"
(e.g. "China--History--20th century").  Similarity scoring blends a
character-level edit-distance ratio with token-set overlap so that both
inflection variants ("Cookery" vs "Cooking") and reorderings
("World Wide Web" vs "Web, World Wide") score high.

Everything here is a pure function over immutable values; safe for
unrestricted concurrent use.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from enum import Enum

SUBDIVISION_DELIMITER = "--"


class HeadingError(ValueError):
    """Base class for heading parse failures."""


class EmptyHeading(HeadingError):
    """Raised when a heading string is empty or whitespace-only."""


class EmptyComponent(HeadingError):
    """Raised when a delimited segment is empty (e.g. "China----History")."""


class ComponentKind(Enum):
    MAIN = "Main"
    SUBDIVISION = "Subdivision"


class SubdivisionKind(Enum):
    """Optional finer classification of a subdivision.

    Not derivable from the string alone; stays UNKNOWN unless an
    authority record supplies it.
    """

    UNKNOWN = "Unknown"
    TOPICAL = "Topical"
    GEOGRAPHIC = "Geographic"
    CHRONOLOGICAL = "Chronological"
    FORM = "Form"


@dataclass(frozen=True)
class Component:
    """One segment of a heading: the main heading or a subdivision."""

    text: str
    kind: ComponentKind
    subdivision_kind: SubdivisionKind = SubdivisionKind.UNKNOWN


@dataclass(frozen=True)
class HeadingString:
    """A heading as written plus its parsed components.

    Invariants: components is non-empty, exactly the first component has
    kind MAIN, component texts carry no delimiter and no surrounding
    whitespace.
    """

    raw: str
    components: tuple[Component, ...]


@dataclass(frozen=True)
class CandidateTerm:
    """One suggested subject string with provenance.

    ``round`` 0 is the initial suggestion; >= 1 are refinement rounds.
    """

    text: str
    round: int = 0
    rationale: str | None = None


@dataclass(frozen=True)
class SimilarityScore:
    """Equal-weight blend of character-level and token-level similarity."""

    value: float
    char_component: float
    token_component: float


def _strip_marks(s: str) -> str:
    decomposed = unicodedata.normalize("NFD", s)
    return "".join(c for c in decomposed if not unicodedata.combining(c))


def normalize_label(s: str) -> str:
    """Normalize a label for matching: case, diacritics, whitespace.

    Lowercases, strips combining marks after canonical decomposition,
    collapses interior whitespace runs to single spaces, and trims.
    Idempotent; empty input yields empty output.
    """
    # Lowercasing can itself introduce combining marks (e.g. U+0130),
    # so marks are stripped on both sides of the case fold.
    s = _strip_marks(s)
    s = s.lower()
    s = _strip_marks(s)
    return " ".join(s.split())


def parse_heading(s: str) -> HeadingString:
    """Parse an LCSH display-form heading into components.

    Segments are delimited by "--"; each is trimmed and has interior
    whitespace runs collapsed. The first component is the main heading,
    the rest are subdivisions.

    Raises EmptyHeading for empty/whitespace input and EmptyComponent
    when any delimited segment is empty.
    """
    if not s or not s.strip():
        raise EmptyHeading("heading is empty or whitespace-only")
    texts = []
    for segment in s.split(SUBDIVISION_DELIMITER):
        text = " ".join(segment.split())
        if not text:
            raise EmptyComponent(f"empty component in heading: {s!r}")
        texts.append(text)
    components = tuple(
        Component(text, ComponentKind.MAIN if i == 0 else ComponentKind.SUBDIVISION)
        for i, text in enumerate(texts)
    )
    return HeadingString(raw=s, components=components)


def serialize_heading(h: HeadingString) -> str:
    """Join components back into display form; inverse of parse_heading."""
    return SUBDIVISION_DELIMITER.join(c.text for c in h.components)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,  # delete from a
                    current[j - 1] + 1,  # insert into a
                    previous[j - 1] + (ca != cb),  # substitute
                )
            )
        previous = current
    return previous[-1]


def _trim_punctuation(token: str) -> str:
    start, end = 0, len(token)
    while start < end and not token[start].isalnum():
        start += 1
    while end > start and not token[end - 1].isalnum():
        end -= 1
    return token[start:end]


def _token_set(normalized: str) -> frozenset[str]:
    # Tokens are whitespace-delimited with surrounding punctuation
    # trimmed, so "Web," and "Web" compare equal.
    tokens = set()
    for raw in normalized.split():
        token = _trim_punctuation(raw)
        if token:
            tokens.add(token)
    return frozenset(tokens)


def similarity(a: str, b: str) -> SimilarityScore:
    """Score two labels in [0, 1]; symmetric in its arguments.

    char_component is 1 - editdistance/max-length over normalized
    forms; token_component is the Jaccard index of their token sets.
    Both are defined as 1.0 when the compared values are empty, keeping
    the function total.
    """
    na, nb = normalize_label(a), normalize_label(b)
    longest = max(len(na), len(nb))
    char_component = 1.0 if longest == 0 else 1.0 - edit_distance(na, nb) / longest
    ta, tb = _token_set(na), _token_set(nb)
    union = ta | tb
    token_component = 1.0 if not union else len(ta & tb) / len(union)
    return SimilarityScore(
        value=0.5 * char_component + 0.5 * token_component,
        char_component=char_component,
        token_component=token_component,
    )


def rank_matches(
    candidate: str, labels: list[tuple[str, str]]
) -> list[tuple[str, str, SimilarityScore]]:
    """Order (label, id) pairs by similarity to the candidate.

    Returns (id, label, score) tuples sorted by value descending, ties
    broken by ascending label then ascending id. Every input pair
    appears exactly once.
    """
    scored = [(ident, label, similarity(candidate, label)) for label, ident in labels]
    scored.sort(key=lambda item: (-item[2].value, item[1], item[0]))
    return scored

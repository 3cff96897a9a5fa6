"""The iterative refinement session: suggest, validate, refine, finalize.

A session runs at most ``max_rounds`` rounds. Round 0 takes the
suggester's initial candidates and validates each against the LOC
service (exact label resolution first, suggest-search fallback). If
anything failed to resolve and rounds remain, structured feedback goes
back to the suggester and the refined candidates are validated the
same way. Finalization substitutes authorized forms for variants,
deduplicates by URI, enforces the controlled-heading cap, and routes
unresolvable candidates to an uncontrolled-keyword list for MARC 653
style use.

One session is a sequential state machine; many sessions may run
concurrently sharing one LocClient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

from .loc import LocClient, LocLookupError
from .model import CandidateTerm, SimilarityScore, normalize_label, rank_matches, similarity

logger = logging.getLogger(__name__)

# Suggesters may over-produce; anything past this cap is dropped before
# validation to keep lookups polite.
MAX_CANDIDATES_PER_ROUND = 10


class SessionError(Exception):
    """Base class for session-level failures."""


class SuggesterError(SessionError):
    """The suggester failed (including after its own retries)."""


class EmptySuggestion(SessionError):
    """The suggester produced zero usable candidates in round 0."""


class InvalidBib(SessionError, ValueError):
    """The bibliographic input violates its invariants."""


class Status(Enum):
    EXACT_AUTHORIZED = "ExactAuthorized"
    VARIANT_MATCH = "VariantMatch"
    PARTIAL_MATCH = "PartialMatch"
    DEPRECATED = "Deprecated"
    NOT_FOUND = "NotFound"


RESOLVED_STATUSES = (Status.EXACT_AUTHORIZED, Status.VARIANT_MATCH)


@dataclass(frozen=True)
class BibDescription:
    """Bibliographic input supplied by a user or a batch record."""

    title: str
    contributors: tuple[str, ...] = ()
    summary: str | None = None
    table_of_contents: str | None = None
    language_of_work: str | None = None
    notes: str | None = None


@dataclass(frozen=True)
class MatchCandidate:
    """A candidate authority match: URI, authorized label, and score."""

    uri: str
    label: str
    score: SimilarityScore


@dataclass(frozen=True)
class ValidationOutcome:
    candidate: CandidateTerm
    status: Status
    matches: tuple[MatchCandidate, ...] = ()
    resolved_uri: str | None = None
    authorized_label: str | None = None
    error: str | None = None


@dataclass(frozen=True)
class FeedbackEntry:
    candidate_text: str
    status: Status
    authorized_label: str | None
    uri: str | None
    alternatives: tuple[tuple[str, float, str], ...] = ()  # (label, score, uri)
    hierarchy: tuple[tuple[str, str], ...] = ()  # (relation, label)


@dataclass(frozen=True)
class FeedbackContext:
    round: int
    entries: tuple[FeedbackEntry, ...]


@dataclass(frozen=True)
class ControlledHeading:
    heading: str  # always the authorized form
    uri: str
    justification: str


@dataclass(frozen=True)
class RecommendationSet:
    controlled: tuple[ControlledHeading, ...]
    uncontrolled: tuple[str, ...]
    rounds_used: int
    audit: tuple[tuple[ValidationOutcome, ...], ...]


@dataclass(frozen=True)
class SessionConfig:
    max_rounds: int = 2
    partial_threshold: float = 0.55
    accept_threshold: float = 0.999  # exact after normalization
    max_controlled: int = 4
    max_uncontrolled: int = 5
    degradable_lookups: bool = False

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        for name in ("partial_threshold", "accept_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not self.partial_threshold < self.accept_threshold:
            raise ValueError("partial_threshold must be below accept_threshold")


def validate_candidates(
    terms: list[CandidateTerm], client: LocClient, cfg: SessionConfig
) -> list[ValidationOutcome]:
    """Validate candidates against LOC, one outcome per unique term.

    Terms are deduplicated by normalized text before lookup; the first
    occurrence keeps its place in the output order. Lookup failures
    either propagate or, with degradable_lookups, demote the term to
    NotFound with the error noted on the outcome.
    """
    outcomes: list[ValidationOutcome] = []
    seen: set[str] = set()
    for term in terms:
        key = normalize_label(term.text)
        if not key or key in seen:
            continue
        seen.add(key)
        outcomes.append(_validate_one(term, client, cfg))
    return outcomes


def _validate_one(term: CandidateTerm, client: LocClient, cfg: SessionConfig) -> ValidationOutcome:
    text = term.text.strip()
    try:
        resolved = client.resolve_label(text)
    except LocLookupError as exc:
        return _degrade(term, exc, cfg)

    if resolved is not None:
        uri, authorized = resolved
        deprecated = False
        try:
            record = client.fetch_authority(uri)
            authorized = record.authorized_label
            deprecated = record.deprecated
        except LocLookupError as exc:
            if not cfg.degradable_lookups:
                raise
            logger.warning("authority fetch degraded for %s: %s", uri, exc)
        score = similarity(text, authorized)
        if deprecated:
            status = Status.DEPRECATED
        elif normalize_label(text) == normalize_label(authorized):
            status = Status.EXACT_AUTHORIZED
        else:
            status = Status.VARIANT_MATCH
        return ValidationOutcome(
            candidate=term,
            status=status,
            matches=(MatchCandidate(uri=uri, label=authorized, score=score),),
            resolved_uri=uri,
            authorized_label=authorized,
        )

    try:
        hits = client.suggest(text)
    except LocLookupError as exc:
        return _degrade(term, exc, cfg)
    pairs: list[tuple[str, str]] = []
    seen_pairs: set[tuple[str, str]] = set()
    for hit in hits:
        pair = (hit.authorized_label, hit.uri)
        if pair not in seen_pairs:
            seen_pairs.add(pair)
            pairs.append(pair)
    ranked = rank_matches(text, pairs)
    matches = tuple(MatchCandidate(uri=i, label=l, score=s) for i, l, s in ranked)
    best = matches[0].score.value if matches else 0.0
    status = Status.PARTIAL_MATCH if best >= cfg.partial_threshold else Status.NOT_FOUND
    return ValidationOutcome(candidate=term, status=status, matches=matches)


def _degrade(term: CandidateTerm, exc: LocLookupError, cfg: SessionConfig) -> ValidationOutcome:
    if not cfg.degradable_lookups:
        raise exc
    logger.warning("lookup degraded for %r: %s", term.text, exc)
    return ValidationOutcome(candidate=term, status=Status.NOT_FOUND, error=str(exc))


def build_feedback(
    outcomes: list[ValidationOutcome], round_number: int, client: LocClient | None = None
) -> FeedbackContext:
    """Summarize one round's outcomes for the suggester's next attempt.

    Exact outcomes carry status only. Everything else gets up to three
    top alternatives with scores and, when an authority can be fetched,
    up to three broader/narrower/related labels of the best match.
    Missing authority detail degrades to fewer hierarchy labels.
    """
    if not outcomes:
        raise ValueError("outcomes must be non-empty")
    entries = []
    for outcome in outcomes:
        if outcome.status is Status.EXACT_AUTHORIZED:
            entries.append(
                FeedbackEntry(
                    candidate_text=outcome.candidate.text,
                    status=outcome.status,
                    authorized_label=outcome.authorized_label,
                    uri=outcome.resolved_uri,
                )
            )
            continue
        alternatives = tuple(
            (m.label, m.score.value, m.uri) for m in outcome.matches[:3]
        )
        hierarchy: tuple[tuple[str, str], ...] = ()
        best_uri = outcome.resolved_uri or (outcome.matches[0].uri if outcome.matches else None)
        if client is not None and best_uri:
            try:
                record = client.fetch_authority(best_uri)
                labels = (
                    [("broader", label) for _, label in record.broader]
                    + [("narrower", label) for _, label in record.narrower]
                    + [("related", label) for _, label in record.related]
                )
                hierarchy = tuple((rel, label) for rel, label in labels if label)[:3]
            except LocLookupError as exc:
                logger.debug("hierarchy fetch skipped for %s: %s", best_uri, exc)
        entries.append(
            FeedbackEntry(
                candidate_text=outcome.candidate.text,
                status=outcome.status,
                authorized_label=outcome.authorized_label,
                uri=outcome.resolved_uri,
                alternatives=alternatives,
                hierarchy=hierarchy,
            )
        )
    return FeedbackContext(round=round_number, entries=tuple(entries))


def _controlled_target(
    outcome: ValidationOutcome, cfg: SessionConfig
) -> tuple[str, str, float] | None:
    """(uri, authorized heading, score) when the outcome earns a controlled entry."""
    if outcome.status in RESOLVED_STATUSES and outcome.resolved_uri:
        return (
            outcome.resolved_uri,
            outcome.authorized_label or "",
            outcome.matches[0].score.value if outcome.matches else 1.0,
        )
    # A suggest hit equal to the candidate after normalization is as
    # good as an exact resolution even when the label endpoint missed
    # (diacritic spellings, mostly).
    if outcome.status is Status.PARTIAL_MATCH and outcome.matches:
        best = outcome.matches[0]
        if best.score.value >= cfg.accept_threshold:
            return (best.uri, best.label, best.score.value)
    return None


def _justification(outcome: ValidationOutcome) -> str:
    text = outcome.candidate.text
    if outcome.status is Status.EXACT_AUTHORIZED:
        base = f'Exact authorized heading for candidate "{text}".'
    elif outcome.status is Status.VARIANT_MATCH:
        base = f'Authorized form substituted for variant candidate "{text}".'
    else:
        base = f'Authorized heading matching candidate "{text}" after normalization.'
    if outcome.candidate.rationale:
        base += f" Suggester rationale: {outcome.candidate.rationale}"
    return base


def finalize(
    rounds: list[list[ValidationOutcome]], cfg: SessionConfig
) -> RecommendationSet:
    """Collapse all rounds into the final recommendation set.

    Controlled entries are the authorized forms of resolved outcomes,
    deduplicated by URI with the latest round winning, ordered by round
    (refinements are better-informed) then score then label, and capped
    at max_controlled. Candidates that never resolved become normalized
    uncontrolled keywords, capped at max_uncontrolled.
    """
    if not rounds:
        raise ValueError("at least one round of outcomes is required")

    selected: dict[str, dict] = {}
    controlled_source_texts: set[str] = set()
    for round_number, outcomes in enumerate(rounds):
        for outcome in outcomes:
            target = _controlled_target(outcome, cfg)
            if target is None:
                continue
            uri, heading, score = target
            # later rounds overwrite earlier claims on the same URI
            selected[uri] = {
                "round": round_number,
                "score": score,
                "heading": heading,
                "justification": _justification(outcome),
            }
            controlled_source_texts.add(normalize_label(outcome.candidate.text))

    ordered = sorted(
        selected.items(),
        key=lambda kv: (-kv[1]["round"], -kv[1]["score"], kv[1]["heading"]),
    )
    controlled = tuple(
        ControlledHeading(heading=entry["heading"], uri=uri, justification=entry["justification"])
        for uri, entry in ordered[: cfg.max_controlled]
    )
    controlled_heading_norms = {normalize_label(c.heading) for c in controlled}

    uncontrolled: list[str] = []
    for outcomes in rounds:
        for outcome in outcomes:
            if _controlled_target(outcome, cfg) is not None:
                continue
            if outcome.status not in (Status.NOT_FOUND, Status.PARTIAL_MATCH, Status.DEPRECATED):
                continue
            text = normalize_label(outcome.candidate.text)
            if (
                not text
                or text in uncontrolled
                or text in controlled_source_texts
                or text in controlled_heading_norms
            ):
                continue
            uncontrolled.append(text)
    uncontrolled = uncontrolled[: cfg.max_uncontrolled]

    return RecommendationSet(
        controlled=controlled,
        uncontrolled=tuple(uncontrolled),
        rounds_used=len(rounds),
        audit=tuple(tuple(outcomes) for outcomes in rounds),
    )


def _clean_candidates(raw, round_number: int) -> list[CandidateTerm]:
    terms: list[CandidateTerm] = []
    for item in raw or []:
        text = item.text.strip()
        if not text:
            continue
        terms.append(replace(item, text=text, round=round_number))
    if len(terms) > MAX_CANDIDATES_PER_ROUND:
        logger.warning(
            "suggester returned %d candidates; keeping the first %d",
            len(terms),
            MAX_CANDIDATES_PER_ROUND,
        )
        terms = terms[:MAX_CANDIDATES_PER_ROUND]
    return terms


def check_bib(bib: BibDescription) -> None:
    if not bib.title or not bib.title.strip():
        raise InvalidBib("bib title must be non-empty")


def run_session(
    bib: BibDescription,
    suggester,
    client: LocClient,
    cfg: SessionConfig | None = None,
) -> RecommendationSet:
    """Run the full loop for one work and return its recommendations.

    Deterministic given a deterministic suggester and a Replay-mode
    client. Performs exactly one suggester call when round 0 fully
    resolves.
    """
    cfg = cfg or SessionConfig()
    check_bib(bib)

    try:
        initial = suggester.suggest_initial(bib)
    except Exception as exc:
        raise SuggesterError(f"initial suggestion failed: {exc}") from exc
    terms = _clean_candidates(initial, 0)
    if not terms:
        raise EmptySuggestion("suggester returned zero candidates in round 0")

    rounds: list[list[ValidationOutcome]] = [validate_candidates(terms, client, cfg)]
    while len(rounds) < cfg.max_rounds and not _all_resolved(rounds[-1], cfg):
        feedback = build_feedback(rounds[-1], round_number=len(rounds) - 1, client=client)
        try:
            refined = suggester.refine(bib, feedback)
        except Exception as exc:
            raise SuggesterError(f"refinement failed: {exc}") from exc
        terms = _clean_candidates(refined, len(rounds))
        if not terms:
            break
        rounds.append(validate_candidates(terms, client, cfg))
    return finalize(rounds, cfg)


def _all_resolved(outcomes: list[ValidationOutcome], cfg: SessionConfig) -> bool:
    # anything that will earn a controlled entry needs no refinement
    return all(_controlled_target(outcome, cfg) is not None for outcome in outcomes)


# -- serialization helpers (API, CLI, and MCP share these shapes) -----------


def format_score(value: float) -> str:
    # fixed-precision decimal string keeps response bodies byte-stable
    return f"{value:.6f}"


def outcome_to_dict(outcome: ValidationOutcome) -> dict:
    return {
        "term": outcome.candidate.text,
        "round": outcome.candidate.round,
        "status": outcome.status.value,
        "authorized_label": outcome.authorized_label,
        "uri": outcome.resolved_uri,
        "alternatives": [
            {"label": m.label, "uri": m.uri, "score": format_score(m.score.value)}
            for m in outcome.matches
        ],
        "error": outcome.error,
    }


def recommendation_to_dict(rec: RecommendationSet) -> dict:
    return {
        "controlled": [
            {
                "heading": c.heading,
                "uri": c.uri,
                "link": c.uri,
                "justification": c.justification,
            }
            for c in rec.controlled
        ],
        "uncontrolled": list(rec.uncontrolled),
        "rounds_used": rec.rounds_used,
        "audit": [
            [outcome_to_dict(outcome) for outcome in round_outcomes]
            for round_outcomes in rec.audit
        ],
    }

"""Pluggable candidate suggesters for the refinement loop.

A suggester provides two entry points: ``suggest_initial(bib)`` for
round 0 and ``refine(bib, feedback)`` for later rounds. Both return
CandidateTerm lists; round numbers are stamped by the session, not the
suggester. The scripted mock keeps pipeline tests hermetic; the HTTP
adapter speaks the common chat-completion wire shape so any hosted LLM
endpoint can back the loop.

Prompt templates here are original to this project. Output is required
as a structured JSON array and requested at temperature 0: free prose
invites exactly the hallucinated headings the validation loop exists
to catch, and sampling noise makes sessions non-reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Protocol

import httpx

from .model import CandidateTerm, normalize_label
from .pipeline import BibDescription, FeedbackContext, Status

logger = logging.getLogger(__name__)

MAX_SUGGESTIONS = 10

ENV_LLM_BASE_URL = "LCSH_LLM_BASE_URL"
ENV_LLM_API_KEY = "LCSH_LLM_API_KEY"
ENV_LLM_MODEL = "LCSH_LLM_MODEL"


class UnscriptedInput(Exception):
    """The mock suggester was asked about a title its script lacks."""


class EndpointError(Exception):
    """The chat-completion endpoint failed or answered unusably."""


class AuthError(EndpointError):
    """The endpoint rejected our credentials."""


class MalformedLlmOutput(EndpointError):
    """No parseable candidate array, even after the re-ask."""


class Suggester(Protocol):
    def suggest_initial(self, bib: BibDescription) -> list[CandidateTerm]: ...

    def refine(self, bib: BibDescription, feedback: FeedbackContext) -> list[CandidateTerm]: ...


def _coerce_candidates(items) -> list[CandidateTerm]:
    terms = []
    for item in items:
        if isinstance(item, CandidateTerm):
            terms.append(item)
        elif isinstance(item, str):
            terms.append(CandidateTerm(text=item))
        elif isinstance(item, dict):
            terms.append(CandidateTerm(text=item["term"], rationale=item.get("rationale")))
        else:
            text, rationale = item
            terms.append(CandidateTerm(text=text, rationale=rationale))
    return terms


class MockSuggester:
    """Deterministic scripted suggester for hermetic tests and demos.

    The script maps normalized titles to per-round candidate lists:
    entry 0 answers suggest_initial, entries 1..n answer successive
    refine calls (the last entry repeats if refinement continues).
    """

    def __init__(self, script: dict[str, list[list]]):
        self._script = {normalize_label(title): rounds for title, rounds in script.items()}
        self._refine_calls: dict[str, int] = {}

    def _rounds(self, bib: BibDescription) -> list[list]:
        key = normalize_label(bib.title)
        if key not in self._script:
            raise UnscriptedInput(f"no script for title {bib.title!r}")
        return self._script[key]

    def suggest_initial(self, bib: BibDescription) -> list[CandidateTerm]:
        rounds = self._rounds(bib)
        if not rounds:
            return []
        return _coerce_candidates(rounds[0])

    def refine(self, bib: BibDescription, feedback: FeedbackContext) -> list[CandidateTerm]:
        rounds = self._rounds(bib)
        if len(rounds) < 2:
            raise UnscriptedInput(f"no refinement round scripted for title {bib.title!r}")
        key = normalize_label(bib.title)
        call = self._refine_calls.get(key, 0) + 1
        self._refine_calls[key] = call
        return _coerce_candidates(rounds[min(call, len(rounds) - 1)])


class FeedbackKeyedMockSuggester(MockSuggester):
    """Mock variant whose refinements key on feedback status counts.

    Script values for refinement are keyed by a signature string like
    "notfound=2" built from the feedback, letting tests prove the
    feedback actually reaches the suggester.
    """

    def __init__(self, initial: dict[str, list], by_signature: dict[str, list]):
        super().__init__({title: [cands] for title, cands in initial.items()})
        self._by_signature = by_signature

    @staticmethod
    def signature(feedback: FeedbackContext) -> str:
        counts: dict[str, int] = {}
        for entry in feedback.entries:
            key = entry.status.value.lower()
            counts[key] = counts.get(key, 0) + 1
        return ",".join(f"{k}={v}" for k, v in sorted(counts.items()))

    def refine(self, bib: BibDescription, feedback: FeedbackContext) -> list[CandidateTerm]:
        signature = self.signature(feedback)
        if signature not in self._by_signature:
            raise UnscriptedInput(f"no refinement scripted for feedback {signature!r}")
        return _coerce_candidates(self._by_signature[signature])


DEFAULT_INITIAL_TEMPLATE = """\
You are helping a cataloger assign Library of Congress Subject Headings.

Work to catalog:
  Title: {title}
  Contributors: {contributors}
  Summary: {summary}
  Table of contents: {toc}

Propose three to five candidate LCSH headings that together cover the
main subjects of this work. Prefer established headings. Use "--" to
join a heading with its subdivisions."""

DEFAULT_REFINE_TEMPLATE = """\
Your earlier candidate headings for "{title}" were checked against the
Library of Congress authority service. Per-candidate results:

{feedback}

Revise the list. Keep confirmed headings, replace unauthorized or
deprecated ones using the authorized forms, alternatives, and the
broader/narrower/related terms shown above, and drop anything that
cannot be matched to an authorized heading."""

DEFAULT_FORMAT_INSTRUCTION = (
    'Respond with a JSON array only, no surrounding prose: '
    '[{"term": "<heading>", "rationale": "<one sentence>"}, ...]'
)

REASK_REMINDER = (
    "Your previous reply could not be parsed. "
    "Reply again with ONLY the JSON array of {term, rationale} objects."
)

_PLACEHOLDER = re.compile(r"\{[a-z_]+\}")


@dataclass(frozen=True)
class PromptTemplates:
    initial_template: str = DEFAULT_INITIAL_TEMPLATE
    refine_template: str = DEFAULT_REFINE_TEMPLATE
    format_instruction: str = DEFAULT_FORMAT_INSTRUCTION

    def render_initial(self, bib: BibDescription) -> str:
        body = self.initial_template.format(
            title=bib.title,
            contributors=", ".join(bib.contributors) or "(not given)",
            summary=bib.summary or "(not given)",
            toc=bib.table_of_contents or "(not given)",
        )
        return body + "\n\n" + self.format_instruction

    def render_refine(self, bib: BibDescription, feedback: FeedbackContext) -> str:
        body = self.refine_template.format(
            title=bib.title, feedback=render_feedback(feedback)
        )
        return body + "\n\n" + self.format_instruction

    def residual_placeholders(self, rendered: str) -> list[str]:
        return _PLACEHOLDER.findall(rendered)


def render_feedback(feedback: FeedbackContext) -> str:
    """Render validation feedback as a compact deterministic block.

    One line per candidate with status, authorized form, and URI, plus
    up to three alternative lines and three hierarchy lines each.
    """
    lines: list[str] = []
    for entry in feedback.entries:
        line = f'- "{entry.candidate_text}" (round {feedback.round}): {entry.status.value}'
        if entry.authorized_label:
            line += f'; authorized form "{entry.authorized_label}"'
        if entry.uri:
            line += f" <{entry.uri}>"
        lines.append(line)
        if entry.status is Status.EXACT_AUTHORIZED:
            continue
        for label, score, uri in entry.alternatives[:3]:
            lines.append(f'    alternative: "{label}" (score {score:.2f}) <{uri}>')
        for relation, label in entry.hierarchy[:3]:
            lines.append(f'    {relation}: "{label}"')
    return "\n".join(lines)


@dataclass
class LlmEndpointConfig:
    base_url: str
    api_key: str = ""
    model_name: str = "gpt-4o-mini"
    temperature: float = 0.0
    max_retries: int = 2
    timeout: float = 60.0

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        self.base_url = self.base_url.rstrip("/")

    @classmethod
    def from_env(cls, **overrides) -> LlmEndpointConfig:
        kwargs = {
            "base_url": os.environ.get(ENV_LLM_BASE_URL, ""),
            "api_key": os.environ.get(ENV_LLM_API_KEY, ""),
        }
        if os.environ.get(ENV_LLM_MODEL):
            kwargs["model_name"] = os.environ[ENV_LLM_MODEL]
        kwargs.update(overrides)
        return cls(**kwargs)


def strip_code_fences(text: str) -> str:
    text = text.strip()
    if not text.startswith("```"):
        return text
    lines = text.splitlines()
    if lines and lines[0].startswith("```"):
        lines = lines[1:]
    while lines and lines[-1].strip() in ("```", ""):
        lines = lines[:-1]
    return "\n".join(lines).strip()


def parse_candidate_array(content: str) -> list[CandidateTerm]:
    """Parse an LLM reply into candidates; raises MalformedLlmOutput."""
    body = strip_code_fences(content)
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedLlmOutput(f"reply is not JSON: {exc}") from exc
    if isinstance(data, dict) and isinstance(data.get("terms"), list):
        data = data["terms"]
    if not isinstance(data, list):
        raise MalformedLlmOutput("reply is not a JSON array")
    terms: list[CandidateTerm] = []
    for item in data:
        if isinstance(item, str):
            text, rationale = item, None
        elif isinstance(item, dict) and isinstance(item.get("term"), str):
            text, rationale = item["term"], item.get("rationale")
        else:
            continue
        text = text.strip()
        if text:
            terms.append(CandidateTerm(text=text, rationale=rationale))
    if not terms:
        raise MalformedLlmOutput("reply contained no usable terms")
    if len(terms) > MAX_SUGGESTIONS:
        logger.warning("LLM returned %d terms; truncating to %d", len(terms), MAX_SUGGESTIONS)
        terms = terms[:MAX_SUGGESTIONS]
    return terms


class HttpChatSuggester:
    """Adapter for chat-completion endpoints (OpenAI-compatible shape).

    Posts the rendered prompt, expects a structured array back, and
    re-asks exactly once with a format reminder before failing with
    MalformedLlmOutput.
    """

    SYSTEM_PROMPT = (
        "You are a precise cataloging assistant. Only ever reply with the "
        "requested JSON array."
    )

    def __init__(
        self,
        cfg: LlmEndpointConfig,
        templates: PromptTemplates | None = None,
        transport: httpx.BaseTransport | None = None,
        sleeper=time.sleep,
    ):
        self.cfg = cfg
        self.templates = templates or PromptTemplates()
        self._sleep = sleeper
        headers = {}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        self._http = httpx.Client(transport=transport, timeout=cfg.timeout, headers=headers)

    def close(self) -> None:
        self._http.close()

    def suggest_initial(self, bib: BibDescription) -> list[CandidateTerm]:
        return self._ask(self.templates.render_initial(bib))

    def refine(self, bib: BibDescription, feedback: FeedbackContext) -> list[CandidateTerm]:
        return self._ask(self.templates.render_refine(bib, feedback))

    def _ask(self, prompt: str) -> list[CandidateTerm]:
        messages = [
            {"role": "system", "content": self.SYSTEM_PROMPT},
            {"role": "user", "content": prompt},
        ]
        content = self._complete(messages)
        try:
            return parse_candidate_array(content)
        except MalformedLlmOutput:
            logger.warning("unparseable LLM reply; re-asking once with a format reminder")
        messages = messages + [
            {"role": "assistant", "content": content},
            {"role": "user", "content": REASK_REMINDER},
        ]
        return parse_candidate_array(self._complete(messages))

    def _complete(self, messages: list[dict]) -> str:
        payload = {
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": messages,
        }
        url = self.cfg.base_url + "/chat/completions"
        last_error: EndpointError | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                response = self._http.post(url, json=payload)
            except httpx.HTTPError as exc:
                last_error = EndpointError(f"POST {url}: {exc}")
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials ({response.status_code})")
            if response.status_code == 429 or response.status_code >= 500:
                last_error = EndpointError(f"endpoint status {response.status_code}")
                continue
            if response.status_code != 200:
                raise EndpointError(f"endpoint status {response.status_code}")
            try:
                data = response.json()
                content = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise EndpointError(f"unexpected completion shape: {exc}") from exc
            if not isinstance(content, str):
                raise EndpointError("completion content is not text")
            return content
        assert last_error is not None
        raise last_error

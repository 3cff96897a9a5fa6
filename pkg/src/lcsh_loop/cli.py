"""Operator entry points: batch validation/recommendation, fixture
recording, and launchers for the API and MCP servers.

Batch input is line-oriented JSON (one record per line) so large
backlogs stream. Output order always equals input order, and batch
lookups are non-degradable: a dead LOC service shows up as loud
per-record errors and a nonzero exit, never as silent NotFound rows.

Exit codes: 0 all records processed, 1 any processing error, 2 usage.
"""

from __future__ import annotations

import csv
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .loc import LocClient, LocLookupError, LookupConfig, Mode
from .model import CandidateTerm
from .pipeline import (
    BibDescription,
    InvalidBib,
    SessionConfig,
    SessionError,
    recommendation_to_dict,
    outcome_to_dict,
    run_session,
    validate_candidates,
)
from .suggesters import HttpChatSuggester, LlmEndpointConfig, MockSuggester

CSV_COLUMNS = [
    "id",
    "line",
    "term",
    "status",
    "authorized_label",
    "uri",
    "best_label",
    "best_score",
    "error",
]


def _loc_options(fn):
    fn = click.option("--base-url", default=None, help="LOC service base URL.")(fn)
    fn = click.option(
        "--mode",
        type=click.Choice([m.value for m in Mode]),
        default=None,
        help="Lookup mode (default from LCSH_LOC_MODE, else live).",
    )(fn)
    fn = click.option(
        "--fixtures",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="Fixture store directory for replay/record modes.",
    )(fn)
    fn = click.option(
        "--cache-dir",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="On-disk response cache directory.",
    )(fn)
    return fn


def _build_client(base_url, mode, fixtures, cache_dir) -> LocClient:
    overrides = {}
    if base_url:
        overrides["base_url"] = base_url
    if mode:
        overrides["mode"] = Mode(mode)
    if fixtures:
        overrides["fixture_dir"] = fixtures
    if cache_dir:
        overrides["cache_dir"] = cache_dir
    return LocClient(LookupConfig.from_env(**overrides))


def _read_jsonl(path: Path):
    """Yield (line_number, record_or_None, error_or_None) per input line."""
    with open(path, encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
                if not isinstance(record, dict):
                    raise ValueError("record is not an object")
                yield number, record, None
            except ValueError as exc:
                yield number, None, f"line {number}: {exc}"


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False) + "\n"


class _Tally:
    def __init__(self):
        self.records = 0
        self.errors = 0
        self.statuses = {
            "exact": 0,
            "variant": 0,
            "partial": 0,
            "not_found": 0,
            "deprecated": 0,
        }
        self._names = {
            "ExactAuthorized": "exact",
            "VariantMatch": "variant",
            "PartialMatch": "partial",
            "NotFound": "not_found",
            "Deprecated": "deprecated",
        }

    def count(self, status_value: str) -> None:
        self.statuses[self._names[status_value]] += 1

    def report(self, duration: float) -> dict:
        return {
            "records": self.records,
            **self.statuses,
            "errors": self.errors,
            "duration_seconds": round(duration, 3),
        }


def _write_report(report_path, report: dict) -> None:
    if report_path:
        Path(report_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    click.echo(f"summary: {json.dumps(report)}", err=True)


@click.group()
def main():
    """Validate LLM-suggested LCSH terms against the LOC Linked Data Service."""


@main.command("validate")
@click.option("--in", "in_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
@click.option("--workers", default=4, show_default=True, type=click.IntRange(1, 32))
@click.option("--report", "report_path", type=click.Path(path_type=Path), default=None)
@_loc_options
def validate_cmd(in_path, out_path, fmt, workers, report_path, base_url, mode, fixtures, cache_dir):
    """Validate pre-existing terms from a JSONL file of {id, terms} records."""
    client = _build_client(base_url, mode, fixtures, cache_dir)
    session_cfg = SessionConfig(degradable_lookups=False)
    tally = _Tally()
    started = time.monotonic()

    try:
        lines = list(_read_jsonl(in_path))
    except OSError as exc:
        click.echo(f"cannot read {in_path}: {exc}", err=True)
        sys.exit(1)

    def process(item):
        number, record, error = item
        if error is not None:
            return [{"line": number, "error": error}]
        record_id = str(record.get("id", ""))
        terms = record.get("terms")
        if not isinstance(terms, list) or not terms:
            return [{"id": record_id, "line": number, "error": "record has no terms list"}]
        rows = []
        for term in terms:
            term = str(term)
            try:
                [outcome] = validate_candidates(
                    [CandidateTerm(text=term)], client, session_cfg
                )
                row = {"id": record_id, "line": number, **outcome_to_dict(outcome)}
                del row["round"]
            except (LocLookupError, ValueError) as exc:
                row = {"id": record_id, "line": number, "term": term, "error": str(exc)}
            rows.append(row)
        return rows

    with ThreadPoolExecutor(max_workers=workers) as pool:
        per_record_rows = list(pool.map(process, lines))

    had_errors = False
    for rows in per_record_rows:
        tally.records += 1
        for row in rows:
            if row.get("error"):
                had_errors = True
                tally.errors += 1
            elif row.get("status"):
                tally.count(row["status"])

    try:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            if fmt == "json":
                for rows in per_record_rows:
                    for row in rows:
                        fh.write(_dump_line(row))
            else:
                writer = csv.writer(fh)
                writer.writerow(CSV_COLUMNS)
                for rows in per_record_rows:
                    for row in rows:
                        writer.writerow(_csv_row(row))
    except OSError as exc:
        click.echo(f"cannot write {out_path}: {exc}", err=True)
        sys.exit(1)

    _write_report(report_path, tally.report(time.monotonic() - started))
    sys.exit(1 if had_errors else 0)


def _csv_row(row: dict) -> list[str]:
    best_label, best_score = "", ""
    alternatives = row.get("alternatives") or []
    if alternatives:
        best_label = alternatives[0]["label"]
        best_score = alternatives[0]["score"]
    return [
        str(row.get("id", "")),
        str(row.get("line", "")),
        row.get("term", ""),
        row.get("status", ""),
        row.get("authorized_label") or "",
        row.get("uri") or "",
        best_label,
        best_score,
        row.get("error") or "",
    ]


@main.command("recommend")
@click.option("--in", "in_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--suggester", "suggester_kind", required=True, type=click.Choice(["mock", "http"]))
@click.option("--script", "script_path", type=click.Path(path_type=Path), default=None,
              help="Mock suggester script file (required with --suggester mock).")
@click.option("--max-rounds", default=2, show_default=True, type=click.IntRange(1, 10))
@click.option("--workers", default=4, show_default=True, type=click.IntRange(1, 32))
@click.option("--report", "report_path", type=click.Path(path_type=Path), default=None)
@_loc_options
def recommend_cmd(
    in_path,
    out_path,
    suggester_kind,
    script_path,
    max_rounds,
    workers,
    report_path,
    base_url,
    mode,
    fixtures,
    cache_dir,
):
    """Run the full suggest/validate/refine loop over a JSONL record file."""
    if suggester_kind == "mock":
        if script_path is None:
            raise click.UsageError("--suggester mock requires --script")
        try:
            script = json.loads(Path(script_path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            click.echo(f"cannot load script {script_path}: {exc}", err=True)
            sys.exit(1)
        suggester_factory = lambda: MockSuggester(script)  # noqa: E731
    else:
        shared = HttpChatSuggester(LlmEndpointConfig.from_env())
        suggester_factory = lambda: shared  # noqa: E731

    client = _build_client(base_url, mode, fixtures, cache_dir)
    session_cfg = SessionConfig(max_rounds=max_rounds, degradable_lookups=False)
    tally = _Tally()
    started = time.monotonic()

    try:
        lines = list(_read_jsonl(in_path))
    except OSError as exc:
        click.echo(f"cannot read {in_path}: {exc}", err=True)
        sys.exit(1)

    def process(item):
        number, record, error = item
        if error is not None:
            return {"line": number, "error": error}
        record_id = str(record.get("id", ""))
        try:
            bib = BibDescription(
                title=str(record.get("title", "")),
                contributors=tuple(record.get("contributors", ())),
                summary=record.get("summary"),
                table_of_contents=record.get("table_of_contents"),
                language_of_work=record.get("language_of_work"),
                notes=record.get("notes"),
            )
            rec = run_session(bib, suggester_factory(), client, session_cfg)
            return {"id": record_id, "recommendation": recommendation_to_dict(rec)}
        except InvalidBib as exc:
            return {"id": record_id, "line": number, "error": f"invalid bib: {exc}"}
        except (SessionError, LocLookupError) as exc:
            return {"id": record_id, "line": number, "error": str(exc)}

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(process, lines))

    had_errors = False
    for result in results:
        tally.records += 1
        if result.get("error"):
            had_errors = True
            tally.errors += 1
            continue
        for round_outcomes in result["recommendation"]["audit"]:
            for outcome in round_outcomes:
                tally.count(outcome["status"])

    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            for result in results:
                fh.write(_dump_line(result))
    except OSError as exc:
        click.echo(f"cannot write {out_path}: {exc}", err=True)
        sys.exit(1)

    _write_report(report_path, tally.report(time.monotonic() - started))
    sys.exit(1 if had_errors else 0)


@main.command("record-fixtures")
@click.option("--queries", "queries_path", required=True, type=click.Path(path_type=Path))
@_loc_options
def record_fixtures_cmd(queries_path, base_url, mode, fixtures, cache_dir):
    """Record live LOC exchanges for every query (one per line) into the store."""
    if fixtures is None:
        raise click.UsageError("record-fixtures requires --fixtures")
    overrides = {"mode": Mode.RECORD, "fixture_dir": fixtures}
    if base_url:
        overrides["base_url"] = base_url
    if cache_dir:
        overrides["cache_dir"] = cache_dir
    client = LocClient(LookupConfig.from_env(**overrides))

    try:
        queries = [q.strip() for q in Path(queries_path).read_text(encoding="utf-8").splitlines()]
    except OSError as exc:
        click.echo(f"cannot read {queries_path}: {exc}", err=True)
        sys.exit(1)

    failures = 0
    for query in queries:
        if not query:
            continue
        try:
            uris = []
            hits = client.suggest(query)
            uris.extend(hit.uri for hit in hits)
            resolved = client.resolve_label(query)
            if resolved:
                uris.append(resolved[0])
            for uri in dict.fromkeys(uris):
                client.fetch_authority(uri)
            click.echo(f"recorded {query!r}: {len(hits)} hits")
        except LocLookupError as exc:
            failures += 1
            click.echo(f"failed {query!r}: {exc}", err=True)
    sys.exit(1 if failures else 0)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8745, show_default=True, type=int)
@click.option("--profile", type=click.Choice(["test", "live"]), default="test", show_default=True)
def serve_cmd(host, port, profile):
    """Run the HTTP API (blocking)."""
    from .api import serve

    serve(host=host, port=port, profile=profile)


@main.command("mcp")
def mcp_cmd():
    """Run the MCP stdio server (blocking)."""
    from .mcp import main as mcp_main

    mcp_main()


if __name__ == "__main__":
    main()

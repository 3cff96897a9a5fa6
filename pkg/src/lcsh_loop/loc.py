"""Client for the Library of Congress Linked Data Service.

Three lookups: suggest-style search (``suggest2``), exact known-label
resolution (the ``label/`` endpoint, which answers with identifying
``X-Uri``/``X-PrefLabel`` headers on a redirect), and full authority
retrieval (the ``.json`` MADS/RDF serialization of an authority URI).

Every exchange flows through one pipeline: a TTL cache in front of a
backend that is either real HTTP (Live), real HTTP plus fixture capture
(Record), or fixture playback with zero network use (Replay). Fixture
files are canonical JSON keyed by a content hash of the request, so a
store recorded once replays byte-identically forever. Requests are
stored site-relative, which lets a store recorded against id.loc.gov
replay against a local test server and vice versa.

The client is safe to share across threads: the cache, the per-key
locks, and the rate limiter are internally synchronized.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import httpx

logger = logging.getLogger(__name__)

CANONICAL_HOST = "id.loc.gov"
DEFAULT_BASE_URL = "https://id.loc.gov"
SUGGEST_PATH = "/authorities/subjects/suggest2"
LABEL_PATH_PREFIX = "/authorities/subjects/label/"

MADS = "http://www.loc.gov/mads/rdf/v1#"
SKOS = "http://www.w3.org/2004/02/skos/core#"

# Response headers worth keeping in fixtures and cache entries.
KEPT_HEADERS = ("content-type", "location", "x-uri", "x-preflabel", "x-preflabel-encoded")

ENV_BASE_URL = "LCSH_LOC_BASE_URL"
ENV_MODE = "LCSH_LOC_MODE"
ENV_FIXTURE_DIR = "LCSH_LOC_FIXTURE_DIR"
ENV_CACHE_DIR = "LCSH_LOC_CACHE_DIR"
ENV_MIN_INTERVAL = "LCSH_LOC_MIN_INTERVAL"


class LocLookupError(Exception):
    """Base class for all lookup failures raised by this module."""


class EmptyQuery(LocLookupError):
    pass


class ForeignUri(LocLookupError):
    pass


class NetworkError(LocLookupError):
    pass


class ServiceError(LocLookupError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"service returned status {status}" + (f": {detail}" if detail else ""))
        self.status = status


class MalformedResponse(LocLookupError):
    pass


class ReplayMiss(LocLookupError):
    pass


class Mode(Enum):
    LIVE = "live"
    REPLAY = "replay"
    RECORD = "record"


class MatchKind(Enum):
    AUTHORIZED_LABEL = "AuthorizedLabel"
    VARIANT_LABEL = "VariantLabel"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class SuggestHit:
    label: str
    uri: str
    authorized_label: str
    match_kind: MatchKind


@dataclass(frozen=True)
class AuthorityRecord:
    uri: str
    authorized_label: str
    variant_labels: tuple[str, ...]
    broader: tuple[tuple[str, str], ...]
    narrower: tuple[tuple[str, str], ...]
    related: tuple[tuple[str, str], ...]
    deprecated: bool


@dataclass
class LookupConfig:
    base_url: str = DEFAULT_BASE_URL
    page_size: int = 10
    timeout: float = 10.0
    min_request_interval: float = 0.25
    cache_ttl: float = 24 * 3600.0
    mode: Mode = Mode.LIVE
    fixture_dir: Path | None = None
    cache_dir: Path | None = None
    max_retries: int = 2
    retry_backoff: float = 0.5

    def __post_init__(self):
        if not 1 <= self.page_size <= 50:
            raise ValueError("page_size must be in [1, 50]")
        self.base_url = self.base_url.rstrip("/")

    @classmethod
    def from_env(cls, **overrides) -> LookupConfig:
        """Build a config honoring the LCSH_LOC_* environment overrides."""
        kwargs: dict = {}
        if os.environ.get(ENV_BASE_URL):
            kwargs["base_url"] = os.environ[ENV_BASE_URL]
        if os.environ.get(ENV_MODE):
            kwargs["mode"] = Mode(os.environ[ENV_MODE].lower())
        if os.environ.get(ENV_FIXTURE_DIR):
            kwargs["fixture_dir"] = Path(os.environ[ENV_FIXTURE_DIR])
        if os.environ.get(ENV_CACHE_DIR):
            kwargs["cache_dir"] = Path(os.environ[ENV_CACHE_DIR])
        if os.environ.get(ENV_MIN_INTERVAL):
            kwargs["min_request_interval"] = float(os.environ[ENV_MIN_INTERVAL])
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass(frozen=True)
class RequestKey:
    """Identity of one exchange: method plus site-relative URL and query."""

    method: str
    url: str
    query: tuple[tuple[str, str], ...] = ()

    @classmethod
    def make(cls, method: str, path: str, query: dict[str, str] | None = None) -> RequestKey:
        pairs = tuple(sorted((str(k), str(v)) for k, v in (query or {}).items()))
        return cls(method=method.upper(), url=path, query=pairs)

    def digest(self) -> str:
        doc = {"method": self.method, "url": self.url, "query": [list(p) for p in self.query]}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class StoredResponse:
    status: int
    headers: tuple[tuple[str, str], ...]
    body: str

    def header(self, name: str) -> str | None:
        name = name.lower()
        for key, value in self.headers:
            if key == name:
                return value
        return None


def _canonical_dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class FixtureStore:
    """One directory, one canonical-JSON file per recorded exchange."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)

    def path_for(self, key: RequestKey) -> Path:
        return self.directory / f"{key.digest()}.json"

    def record(self, key: RequestKey, response: StoredResponse, recorded_at: float | None = None) -> Path:
        doc = {
            "request": {
                "method": key.method,
                "url": key.url,
                "query": {k: v for k, v in key.query},
            },
            "response": {
                "status": response.status,
                "headers": {k: v for k, v in response.headers},
                "body": response.body,
            },
            "recorded_at": recorded_at if recorded_at is not None else time.time(),
        }
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path_for(key)
        path.write_text(_canonical_dump(doc), encoding="utf-8")
        return path

    def lookup(self, key: RequestKey) -> StoredResponse | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        doc = json.loads(path.read_text(encoding="utf-8"))
        resp = doc["response"]
        headers = tuple(sorted((k.lower(), v) for k, v in resp.get("headers", {}).items()))
        return StoredResponse(status=resp["status"], headers=headers, body=resp["body"])

    def rewrite(self) -> None:
        """Re-serialize every fixture; a no-op byte-wise by construction."""
        for path in sorted(self.directory.glob("*.json")):
            doc = json.loads(path.read_text(encoding="utf-8"))
            path.write_text(_canonical_dump(doc), encoding="utf-8")

    def __len__(self) -> int:
        return len(list(self.directory.glob("*.json"))) if self.directory.exists() else 0


class ResponseCache:
    """TTL cache over stored responses; disk-backed when given a directory."""

    def __init__(self, ttl: float, directory: Path | None = None, clock=time.time):
        self.ttl = ttl
        self.directory = Path(directory) if directory else None
        self._clock = clock
        self._memory: dict[str, tuple[float, StoredResponse]] = {}
        self._lock = threading.Lock()

    def get(self, key: RequestKey) -> StoredResponse | None:
        digest = key.digest()
        now = self._clock()
        with self._lock:
            entry = self._memory.get(digest)
        if entry is not None:
            stamp, response = entry
            if now - stamp < self.ttl:
                return response
        if self.directory is not None:
            path = self.directory / f"{digest}.json"
            if path.exists():
                doc = json.loads(path.read_text(encoding="utf-8"))
                if now - doc["recorded_at"] < self.ttl:
                    resp = doc["response"]
                    headers = tuple(sorted((k.lower(), v) for k, v in resp.get("headers", {}).items()))
                    return StoredResponse(resp["status"], headers, resp["body"])
        return None

    def put(self, key: RequestKey, response: StoredResponse) -> None:
        now = self._clock()
        with self._lock:
            self._memory[key.digest()] = (now, response)
        if self.directory is not None:
            FixtureStore(self.directory).record(key, response, recorded_at=now)


class RateLimiter:
    """Enforces a minimum interval between consecutive request starts."""

    def __init__(self, interval: float, clock=time.monotonic, sleeper=time.sleep):
        self.interval = interval
        self._clock = clock
        self._sleep = sleeper
        self._next_start = float("-inf")
        self._lock = threading.Lock()

    def wait(self) -> float:
        with self._lock:
            now = self._clock()
            start = max(now, self._next_start)
            if start > now:
                self._sleep(start - now)
            self._next_start = start + self.interval
            return start


def _within_loc_base(uri: str, base_url: str) -> bool:
    parsed = urllib.parse.urlsplit(uri)
    base = urllib.parse.urlsplit(base_url)
    if parsed.scheme not in ("http", "https"):
        return False
    # Canonical authority URIs use http://id.loc.gov regardless of the
    # scheme the service is reached over, so the check ignores scheme.
    if parsed.netloc not in (CANONICAL_HOST, base.netloc):
        return False
    return parsed.path.startswith("/authorities/")


def _same_authority_uri(a: str, b: str) -> bool:
    pa, pb = urllib.parse.urlsplit(a), urllib.parse.urlsplit(b)
    return pa.path == pb.path and pa.path != ""


class LocClient:
    """Suggest, resolve, and fetch against the LOC Linked Data Service.

    ``transport`` is handed to the underlying httpx client; tests inject
    a mock or fail-on-use transport there. ``clock``/``sleeper``/
    ``wall_clock`` are injectable for rate-limit and TTL tests.
    """

    def __init__(
        self,
        cfg: LookupConfig | None = None,
        transport: httpx.BaseTransport | None = None,
        clock=time.monotonic,
        sleeper=time.sleep,
        wall_clock=time.time,
    ):
        self.cfg = cfg or LookupConfig()
        if self.cfg.mode in (Mode.REPLAY, Mode.RECORD) and self.cfg.fixture_dir is None:
            raise ValueError(f"{self.cfg.mode.value} mode requires fixture_dir")
        self._fixtures = FixtureStore(self.cfg.fixture_dir) if self.cfg.fixture_dir else None
        self._cache = ResponseCache(self.cfg.cache_ttl, self.cfg.cache_dir, clock=wall_clock)
        self._limiter = RateLimiter(self.cfg.min_request_interval, clock=clock, sleeper=sleeper)
        self._sleeper = sleeper
        self._http = httpx.Client(
            transport=transport,
            timeout=self.cfg.timeout,
            follow_redirects=False,
            headers={"Accept": "application/json"},
        )
        self.transport_requests = 0  # real HTTP requests issued
        self.backend_requests = 0  # cache misses served by HTTP or fixtures
        self._key_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> LocClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- public operations -------------------------------------------------

    def suggest(self, query: str) -> list[SuggestHit]:
        """Search the suggest2 endpoint; at most page_size hits, in service order."""
        if not query or not query.strip():
            raise EmptyQuery("suggest query is empty")
        response = self._exchange(
            "GET", SUGGEST_PATH, {"q": query, "count": str(self.cfg.page_size)}
        )
        if response.status != 200:
            raise ServiceError(response.status)
        return self._parse_suggest(response.body)

    def resolve_label(self, label: str) -> tuple[str, str] | None:
        """Resolve an exact heading label to (uri, authorized_label).

        A redirect carrying the service's identifying headers means
        found; a 404 is a definitive not-found. Follows at most one
        redirect hop when the identifying headers are not on the first
        response.
        """
        if not label or not label.strip():
            raise EmptyQuery("label is empty")
        path = LABEL_PATH_PREFIX + urllib.parse.quote(label, safe="")
        response = self._exchange("GET", path, None)
        resolved = self._identify(response)
        if resolved:
            return resolved
        location = response.header("location")
        if 300 <= response.status < 400 and location:
            follow = urllib.parse.urlsplit(location)
            hop = self._exchange("GET", follow.path, dict(urllib.parse.parse_qsl(follow.query)))
            resolved = self._identify(hop)
            if resolved:
                return resolved
            if hop.status == 404:
                return None
            raise ServiceError(hop.status, "redirect target lacks identifying headers")
        if response.status == 404:
            return None
        raise ServiceError(response.status, "label endpoint gave no identifying headers")

    def fetch_authority(self, uri: str) -> AuthorityRecord:
        """Fetch and parse the MADS/RDF JSON serialization of an authority."""
        if not _within_loc_base(uri, self.cfg.base_url):
            raise ForeignUri(f"uri outside the configured LOC base: {uri}")
        path = urllib.parse.urlsplit(uri).path + ".json"
        response = self._exchange("GET", path, None)
        if response.status != 200:
            raise ServiceError(response.status)
        return self._parse_authority(response.body, uri)

    # -- exchange pipeline -------------------------------------------------

    def _exchange(self, method: str, path: str, query: dict[str, str] | None) -> StoredResponse:
        key = RequestKey.make(method, path, query)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        with self._key_lock(key):
            cached = self._cache.get(key)
            if cached is not None:
                return cached
            response = self._backend(key)
            self._cache.put(key, response)
            return response

    def _key_lock(self, key: RequestKey) -> threading.Lock:
        digest = key.digest()
        with self._locks_guard:
            lock = self._key_locks.get(digest)
            if lock is None:
                lock = self._key_locks[digest] = threading.Lock()
            return lock

    def _backend(self, key: RequestKey) -> StoredResponse:
        self.backend_requests += 1
        if self.cfg.mode is Mode.REPLAY:
            stored = self._fixtures.lookup(key)
            if stored is None:
                raise ReplayMiss(f"no fixture for {key.method} {key.url} {dict(key.query)}")
            return stored
        response = self._request(key)
        if self.cfg.mode is Mode.RECORD:
            self._fixtures.record(key, response)
        return response

    def _request(self, key: RequestKey) -> StoredResponse:
        url = self.cfg.base_url + key.url
        params = dict(key.query) or None
        last_error: LocLookupError | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._sleeper(self.cfg.retry_backoff * 2 ** (attempt - 1))
            self._limiter.wait()
            self.transport_requests += 1
            try:
                raw = self._http.request(key.method, url, params=params)
            except httpx.HTTPError as exc:
                last_error = NetworkError(f"{key.method} {url}: {exc}")
                continue
            if raw.status_code == 429 or raw.status_code >= 500:
                last_error = ServiceError(raw.status_code)
                continue
            headers = tuple(
                sorted(
                    (name, raw.headers[name])
                    for name in KEPT_HEADERS
                    if name in raw.headers
                )
            )
            return StoredResponse(status=raw.status_code, headers=headers, body=raw.text)
        assert last_error is not None
        raise last_error

    # -- response parsing --------------------------------------------------

    @staticmethod
    def _identify(response: StoredResponse) -> tuple[str, str] | None:
        uri = response.header("x-uri")
        if not uri:
            return None
        encoded = response.header("x-preflabel-encoded")
        if encoded:
            label = urllib.parse.unquote(encoded)
        else:
            label = response.header("x-preflabel") or ""
        if not label:
            return None
        return uri, label

    def _parse_suggest(self, body: str) -> list[SuggestHit]:
        try:
            data = json.loads(body)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"suggest body is not JSON: {exc}") from exc
        if not isinstance(data, dict) or not isinstance(data.get("hits"), list):
            raise MalformedResponse("suggest body lacks a hits array")
        hits: list[SuggestHit] = []
        for raw in data["hits"]:
            if not isinstance(raw, dict):
                continue
            uri = raw.get("uri")
            if not isinstance(uri, str) or not _within_loc_base(uri, self.cfg.base_url):
                continue
            a_label = raw.get("aLabel") or ""
            v_label = raw.get("vLabel") or ""
            label = raw.get("suggestLabel") or a_label or v_label
            if not label:
                continue
            if v_label:
                kind = MatchKind.VARIANT_LABEL
            elif a_label:
                kind = MatchKind.AUTHORIZED_LABEL
            else:
                kind = MatchKind.UNKNOWN
            hits.append(
                SuggestHit(
                    label=label,
                    uri=uri,
                    authorized_label=a_label or label,
                    match_kind=kind,
                )
            )
            if len(hits) >= self.cfg.page_size:
                break
        return hits

    def _parse_authority(self, body: str, uri: str) -> AuthorityRecord:
        try:
            nodes = json.loads(body)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"authority body is not JSON: {exc}") from exc
        if isinstance(nodes, dict):
            nodes = nodes.get("@graph", [])
        if not isinstance(nodes, list):
            raise MalformedResponse("authority body is neither a node list nor a graph")

        index: dict[str, dict] = {}
        for node in nodes:
            if isinstance(node, dict) and isinstance(node.get("@id"), str):
                index[node["@id"]] = node
        main = None
        for node_id, node in index.items():
            if _same_authority_uri(node_id, uri):
                main = node
                break
        if main is None:
            raise MalformedResponse(f"no node for {uri} in authority document")

        authorized = self._first_value(main, MADS + "authoritativeLabel") or self._first_value(
            main, SKOS + "prefLabel"
        )
        if not authorized:
            raise MalformedResponse(f"authority {uri} has no authoritative label")

        variants: list[str] = []
        for value in self._values(main, SKOS + "altLabel"):
            if value not in variants:
                variants.append(value)
        for ref in self._refs(main, MADS + "hasVariant"):
            variant_node = index.get(ref)
            if variant_node:
                for value in self._values(variant_node, MADS + "variantLabel"):
                    if value not in variants:
                        variants.append(value)

        types = main.get("@type", [])
        if isinstance(types, str):
            types = [types]
        deprecated = MADS + "DeprecatedAuthority" in types

        def linked(*predicates: str) -> tuple[tuple[str, str], ...]:
            out: list[tuple[str, str]] = []
            seen: set[str] = set()
            for predicate in predicates:
                for ref in self._refs(main, predicate):
                    if ref in seen:
                        continue
                    seen.add(ref)
                    ref_node = index.get(ref, {})
                    label = self._first_value(ref_node, MADS + "authoritativeLabel") or self._first_value(
                        ref_node, SKOS + "prefLabel"
                    )
                    out.append((ref, label or ""))
            return tuple(out)

        return AuthorityRecord(
            uri=uri,
            authorized_label=authorized,
            variant_labels=tuple(variants),
            broader=linked(MADS + "hasBroaderAuthority"),
            narrower=linked(MADS + "hasNarrowerAuthority"),
            related=linked(MADS + "hasReciprocalAuthority", MADS + "hasRelatedAuthority"),
            deprecated=deprecated,
        )

    @staticmethod
    def _values(node: dict, predicate: str) -> list[str]:
        out = []
        for entry in node.get(predicate, []):
            if isinstance(entry, dict) and isinstance(entry.get("@value"), str):
                out.append(entry["@value"])
            elif isinstance(entry, str):
                out.append(entry)
        return out

    @classmethod
    def _first_value(cls, node: dict, predicate: str) -> str | None:
        values = cls._values(node, predicate)
        return values[0] if values else None

    @staticmethod
    def _refs(node: dict, predicate: str) -> list[str]:
        out = []
        for entry in node.get(predicate, []):
            if isinstance(entry, dict) and isinstance(entry.get("@id"), str):
                out.append(entry["@id"])
            elif isinstance(entry, str):
                out.append(entry)
        return out

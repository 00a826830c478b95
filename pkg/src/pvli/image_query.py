"""Web-image grounding: query construction, provider abstraction with an
offline fixture implementation, and source-site statistics.

Live providers sit behind a tiny adapter boundary with retry and rate
limiting; CI and tests always use the fixture provider.
"""

import logging
import re
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence
from urllib.parse import urlsplit

from .jsonl import read_jsonl

log = logging.getLogger(__name__)

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class ImageResult:
    statement_id: str
    rank: int  # 1-based
    image_url: str
    site: str
    source: str = ""  # statement's source-dataset tag, for grouping

    def to_record(self) -> dict:
        return {
            "statement_id": self.statement_id,
            "rank": self.rank,
            "image_url": self.image_url,
            "site": self.site,
            "source": self.source,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ImageResult":
        return cls(rec["statement_id"], rec["rank"], rec["image_url"],
                   rec["site"], rec.get("source", ""))


def build_query(statement_text: str) -> str:
    """Search query for a statement: commas removed, whitespace re-collapsed."""
    return _WS_RE.sub(" ", statement_text.replace(",", " ")).strip()


def parse_site(url: str) -> str | None:
    """Host component of an http(s) url, or None when malformed."""
    try:
        parts = urlsplit(url)
    except ValueError:
        return None
    if parts.scheme not in ("http", "https") or not parts.netloc:
        return None
    return parts.hostname


class SearchProvider(Protocol):
    def fetch(self, query: str, n: int) -> list[str]:
        """Up to n image urls in provider order. May raise ProviderError."""
        ...


class ProviderError(RuntimeError):
    """Transient provider/transport failure; triggers retry."""


class FixtureProvider:
    """Deterministic provider backed by a query -> urls map.

    File format: one JSON object per line with fields `query` and `urls`.
    """

    def __init__(self, mapping: dict[str, list[str]]):
        self.mapping = mapping

    @classmethod
    def from_file(cls, path) -> "FixtureProvider":
        mapping = {}
        for rec in read_jsonl(path):
            mapping[rec["query"]] = list(rec["urls"])
        return cls(mapping)

    def fetch(self, query: str, n: int) -> list[str]:
        return list(self.mapping.get(query, []))[:n]


class HttpProvider:
    """Minimal live adapter: GET {base_url}?q=<query>&n=<n>, expecting a JSON
    array of url strings. Engine-specific clients subclass and override
    `fetch` or `_parse`."""

    def __init__(self, base_url: str, timeout: float = 10.0, session=None):
        import requests

        self.base_url = base_url
        self.timeout = timeout
        self.session = session or requests.Session()

    def _parse(self, payload) -> list[str]:
        if not isinstance(payload, list):
            raise ProviderError(f"expected JSON array of urls, got {type(payload).__name__}")
        return [str(u) for u in payload]

    def fetch(self, query: str, n: int) -> list[str]:
        import requests

        try:
            resp = self.session.get(
                self.base_url, params={"q": query, "n": n}, timeout=self.timeout
            )
            resp.raise_for_status()
            return self._parse(resp.json())[:n]
        except (requests.RequestException, ValueError) as exc:
            raise ProviderError(str(exc)) from exc


class TokenBucket:
    """Token-bucket rate limiter; default politeness is 1 query/second."""

    def __init__(self, rate: float = 1.0, capacity: float = 1.0,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate <= 0 or capacity <= 0:
            raise ValueError("rate and capacity must be positive")
        self.rate = rate
        self.capacity = capacity
        self.tokens = capacity
        self.clock = clock
        self.sleep = sleep
        self._last = clock()

    def _refill(self) -> None:
        now = self.clock()
        self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
        self._last = now

    def acquire(self) -> None:
        self._refill()
        if self.tokens < 1.0:
            self.sleep((1.0 - self.tokens) / self.rate)
            self._refill()
            self.tokens = max(self.tokens, 1.0)  # guard against clock skew
        self.tokens -= 1.0


def search(
    provider: SearchProvider,
    query: str,
    n: int = 10,
    statement_id: str = "",
    source: str = "",
    blocklist: frozenset[str] | set[str] = frozenset(),
    retries: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
    rate_limiter: TokenBucket | None = None,
) -> list[ImageResult]:
    """Fetch up to n results for one query.

    Transport failures retry with exponential backoff (`retries` attempts
    total) and then raise; malformed urls and blocklisted sites are dropped.
    Ranks are assigned 1..m over the surviving results in provider order.
    """
    if rate_limiter is not None:
        rate_limiter.acquire()
    last_exc: Exception | None = None
    for attempt in range(retries):
        try:
            urls = provider.fetch(query, n)
            break
        except ProviderError as exc:
            last_exc = exc
            if attempt + 1 < retries:
                sleep(backoff * (2**attempt))
    else:
        raise ProviderError(f"query {query!r} failed after {retries} attempts: {last_exc}")
    results = []
    for url in urls[:n]:
        site = parse_site(url)
        if site is None:
            log.warning("dropping malformed url %r for statement %r", url, statement_id)
            continue
        if site in blocklist:
            continue
        results.append(
            ImageResult(statement_id=statement_id, rank=len(results) + 1,
                        image_url=url, site=site, source=source)
        )
    return results


@dataclass(frozen=True)
class SiteStats:
    per_group: dict[str, list[tuple[str, int]]]  # group -> [(site, distinct images)]
    unique_sites: int
    unique_images: int
    examples: int

    def to_record(self) -> dict:
        return {
            "per_group": {g: [[s, c] for s, c in rows] for g, rows in self.per_group.items()},
            "unique_sites": self.unique_sites,
            "unique_images": self.unique_images,
            "examples": self.examples,
        }


def site_stats(results: Sequence[ImageResult], top_m: int = 10) -> SiteStats:
    """Distinct-image counts per site, grouped by source dataset.

    Returns the top `top_m` sites per group (count descending, site name
    ascending on ties) plus corpus-wide totals.
    """
    if not results:
        raise ValueError("site_stats requires non-empty results")
    images_by_group_site: dict[str, dict[str, set[str]]] = defaultdict(lambda: defaultdict(set))
    for r in results:
        images_by_group_site[r.source][r.site].add(r.image_url)
    per_group = {}
    for group, sites in images_by_group_site.items():
        rows = sorted(
            ((site, len(urls)) for site, urls in sites.items()),
            key=lambda row: (-row[1], row[0]),
        )
        per_group[group] = rows[:top_m]
    return SiteStats(
        per_group=per_group,
        unique_sites=len({r.site for r in results}),
        unique_images=len({r.image_url for r in results}),
        examples=len(results),
    )


def run_image_queries(
    statements: Iterable,
    provider: SearchProvider,
    n: int = 10,
    excluded_sources: frozenset[str] | set[str] = frozenset(),
    blocklist: frozenset[str] | set[str] = frozenset(),
    rate_limiter: TokenBucket | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[list[ImageResult], list[dict]]:
    """Search every statement; returns (results, skip records).

    Statements from excluded (abstract-concept) sources are never issued;
    empty queries and exhausted retries are skipped with a reason.
    """
    results: list[ImageResult] = []
    skips: list[dict] = []
    for stmt in statements:
        if stmt.source in excluded_sources:
            skips.append({"id": stmt.id, "reason": "excluded_source", "source": stmt.source})
            continue
        query = build_query(stmt.text)
        if not query:
            skips.append({"id": stmt.id, "reason": "empty_query"})
            continue
        try:
            results.extend(
                search(provider, query, n=n, statement_id=stmt.id, source=stmt.source,
                       blocklist=blocklist, sleep=sleep, rate_limiter=rate_limiter)
            )
        except ProviderError as exc:
            log.warning("skipping statement %r: %s", stmt.id, exc)
            skips.append({"id": stmt.id, "reason": "provider_failure", "detail": str(exc)})
    return results, skips

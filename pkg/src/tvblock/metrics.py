"""Evaluation metrics over datasets, blocklists, classifications, exposures.

Block rates are computed over distinct domains, not flows. All functions
are pure batch computations over immutable inputs; the CLI layer turns
their row lists into CSV and JSON reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import psl
from .blocklists import BlockList, MatchMode, blocked_by, is_blocked, union_lists
from .party import (
    ClassificationContext,
    PartyLabel,
    classify_esld,
    esld_of,
    tokenize,
)
from .pii import KIND_ORDER, ExposureRecord, PiiKind
from .traffic import Dataset

DEFAULT_KEYWORDS = ("ad", "ads", "adtag", "track", "tracking", "analytics")
DEFAULT_MAX_BUCKET = 8


class EmptyDomainSet(ValueError):
    pass


class NoAppAttribution(ValueError):
    pass


class CyclicParentChain(ValueError):
    pass


def block_rate(
    domains: Iterable[str], blocklist: BlockList, mode: MatchMode = "exact"
) -> float:
    """Percentage of distinct domains the list blocks (0..100)."""
    domain_set = set(domains)
    if not domain_set:
        raise EmptyDomainSet("block_rate over an empty domain set")
    hits = sum(1 for d in domain_set if is_blocked(d, blocklist, mode))
    return 100.0 * hits / len(domain_set)


def dataset_eslds(dataset: Dataset, rules: psl.SuffixRules) -> set[str]:
    """Distinct registrable domains across a dataset's destinations."""
    found = set()
    for fqdn in dataset.domain_fqdns():
        domain = esld_of(fqdn, rules)
        if domain is not None:
            found.add(domain)
    return found


def app_penetration(esld_value: str, dataset: Dataset, rules: psl.SuffixRules) -> float:
    """Percentage of the dataset's apps that contact the given eSLD."""
    apps = dataset.app_ids()
    if not apps:
        raise NoAppAttribution("dataset has no app attribution")
    contacting = {
        app
        for fqdn, app in _attributed_contacts(dataset)
        if esld_of(fqdn, rules) == esld_value
    }
    return 100.0 * len(contacting) / len(apps)


def _attributed_contacts(dataset: Dataset):
    for rec in dataset.records:
        if rec.app_id is not None:
            yield rec.fqdn, rec.app_id
    for tx in dataset.transactions:
        yield tx.fqdn, tx.app_id


def fqdn_app_counts(dataset: Dataset) -> dict[str, int]:
    """Distinct attributed apps per domain-name destination.

    Destinations seen only in unattributed traffic (and IP literals) do not
    appear; app-level metrics exclude them.
    """
    per_fqdn: dict[str, set[str]] = {}
    domain_names = dataset.domain_fqdns()
    for fqdn, app in _attributed_contacts(dataset):
        if fqdn in domain_names:
            per_fqdn.setdefault(fqdn, set()).add(app)
    return {fqdn: len(apps) for fqdn, apps in per_fqdn.items()}


@dataclass(frozen=True)
class CurveRow:
    bucket: str
    domain_count: int
    rate: float


def popularity_block_curve(
    dataset: Dataset,
    lists: Sequence[BlockList],
    max_bucket: int = DEFAULT_MAX_BUCKET,
    mode: MatchMode = "exact",
) -> list[CurveRow]:
    """Block rate of the union of lists per app-popularity bucket.

    Bucket k holds domains contacted by exactly k apps for k < max_bucket;
    the terminal "max_bucket+" bucket holds the rest. Empty buckets are
    omitted rather than reported as 0%.
    """
    if max_bucket < 1:
        raise ValueError("max_bucket must be >= 1")
    union = union_lists(lists)
    buckets: dict[str, set[str]] = {}
    for fqdn, count in fqdn_app_counts(dataset).items():
        key = str(count) if count < max_bucket else f"{max_bucket}+"
        buckets.setdefault(key, set()).add(fqdn)
    rows = []
    for key in [str(k) for k in range(1, max_bucket)] + [f"{max_bucket}+"]:
        members = buckets.get(key)
        if not members:
            continue
        rows.append(CurveRow(key, len(members), block_rate(members, union, mode)))
    return rows


@dataclass(frozen=True)
class PenetrationRow:
    esld: str
    app_count: int
    percent: float
    party: PartyLabel


def penetration_table(
    dataset: Dataset, rules: psl.SuffixRules, ctx: ClassificationContext
) -> list[PenetrationRow]:
    """App penetration and aggregate party for every eSLD in the dataset."""
    apps = dataset.app_ids()
    if not apps:
        raise NoAppAttribution("dataset has no app attribution")
    per_esld: dict[str, set[str]] = {}
    for fqdn, app in _attributed_contacts(dataset):
        domain = esld_of(fqdn, rules)
        if domain is not None:
            per_esld.setdefault(domain, set()).add(app)
    rows = [
        PenetrationRow(
            esld=domain,
            app_count=len(contacting),
            percent=100.0 * len(contacting) / len(apps),
            party=classify_esld(domain, ctx),
        )
        for domain, contacting in per_esld.items()
    ]
    rows.sort(key=lambda r: (-r.app_count, r.esld))
    return rows


# -- common-app overlap ------------------------------------------------


def normalize_app_name(name: str, stop_tokens) -> str:
    """Fuzzy-match key for an app name: lowercase alphanumeric tokens with
    platform/storefront noise stripped, joined back together."""
    return "".join(tokenize(name, stop_tokens))


@dataclass(frozen=True)
class AppOverlap:
    app_a: str
    app_b: str
    developer: str
    only_a: frozenset[str]
    only_b: frozenset[str]
    both: frozenset[str]


@dataclass(frozen=True)
class OverlapReport:
    apps: tuple[AppOverlap, ...]
    total_only_a: int
    total_only_b: int
    total_both: int

    @property
    def common_app_count(self) -> int:
        return len(self.apps)


def common_app_overlap(
    dataset_a: Dataset, dataset_b: Dataset, stop_tokens=None
) -> OverlapReport:
    """Match apps present in both datasets and partition their destinations.

    Apps match on normalized-name equality plus at least one shared
    developer token (names drift across stores; developers validate the
    match). Global totals partition the union of all matched apps'
    destinations into A-only / B-only / both.
    """
    from .party import DEFAULT_STOP_TOKENS

    stops = stop_tokens if stop_tokens is not None else DEFAULT_STOP_TOKENS

    def app_index(dataset: Dataset) -> dict[str, tuple[str, Optional[str], set[str]]]:
        index: dict[str, tuple[str, Optional[str], set[str]]] = {}
        fqdns_per_app: dict[str, set[str]] = {}
        developer: dict[str, Optional[str]] = {}
        for rec in dataset.records:
            if rec.app_id is None:
                continue
            fqdns_per_app.setdefault(rec.app_id, set()).add(rec.fqdn)
            developer.setdefault(rec.app_id, rec.developer)
        for tx in dataset.transactions:
            fqdns_per_app.setdefault(tx.app_id, set()).add(tx.fqdn)
            developer.setdefault(tx.app_id, tx.developer)
        for app_id, fqdns in fqdns_per_app.items():
            key = normalize_app_name(app_id, stops)
            if key:
                index.setdefault(key, (app_id, developer.get(app_id), fqdns))
        return index

    def dev_tokens(dev: Optional[str]) -> set[str]:
        return {t for t in tokenize(dev or "", stops) if len(t) >= 3}

    index_a = app_index(dataset_a)
    index_b = app_index(dataset_b)
    matches = []
    union_a: set[str] = set()
    union_b: set[str] = set()
    for key in sorted(index_a.keys() & index_b.keys()):
        app_a, dev_a, fqdns_a = index_a[key]
        app_b, dev_b, fqdns_b = index_b[key]
        shared_dev = dev_tokens(dev_a) & dev_tokens(dev_b)
        if not shared_dev:
            continue
        matches.append(
            AppOverlap(
                app_a=app_a,
                app_b=app_b,
                developer=dev_a or dev_b or "",
                only_a=frozenset(fqdns_a - fqdns_b),
                only_b=frozenset(fqdns_b - fqdns_a),
                both=frozenset(fqdns_a & fqdns_b),
            )
        )
        union_a |= fqdns_a
        union_b |= fqdns_b
    return OverlapReport(
        apps=tuple(matches),
        total_only_a=len(union_a - union_b),
        total_only_b=len(union_b - union_a),
        total_both=len(union_a & union_b),
    )


# -- PII table ---------------------------------------------------------


@dataclass(frozen=True)
class PiiTableRow:
    platform: str
    kind: PiiKind
    cells: tuple[tuple[int, Optional[float]], ...]
    """(count, percent_blocked) for first, third, platform, total.

    percent_blocked is None when the cell has no exposures."""


PII_PARTY_COLUMNS = (PartyLabel.FIRST_PARTY, PartyLabel.THIRD_PARTY, PartyLabel.PLATFORM)


def pii_block_table(
    exposures: Sequence[ExposureRecord], platform: str
) -> list[PiiTableRow]:
    """Exposure counts and percent-blocked per kind and destination party.

    The total column covers every exposure of the kind, including those
    whose party stayed undetermined, so party cells need not sum to it.
    """
    rows = []
    for kind in KIND_ORDER:
        of_kind = [e for e in exposures if e.pii_kind is kind]
        cells = []
        for party in PII_PARTY_COLUMNS:
            members = [e for e in of_kind if e.party is party]
            cells.append(_pii_cell(members))
        cells.append(_pii_cell(of_kind))
        rows.append(PiiTableRow(platform=platform, kind=kind, cells=tuple(cells)))
    return rows


def _pii_cell(members: Sequence[ExposureRecord]) -> tuple[int, Optional[float]]:
    if not members:
        return 0, None
    blocked = sum(1 for e in members if e.blocked)
    return len(members), 100.0 * blocked / len(members)


# -- keyword false-negative search ---------------------------------------


@dataclass(frozen=True)
class FnCandidate:
    fqdn: str
    matched_keyword: str
    blocked_by: frozenset[str]


def keyword_fn_candidates(
    domains: Iterable[str],
    lists: Sequence[BlockList],
    keywords: Sequence[str] = DEFAULT_KEYWORDS,
    mode: MatchMode = "exact",
) -> list[FnCandidate]:
    """Obvious ATS names that no list, or only some lists, block.

    A domain is a candidate when one of its dot/hyphen-delimited label
    tokens equals a keyword (token equality, not substring) and fewer than
    all lists block it. Rows are sorted by name.
    """
    if not keywords:
        raise ValueError("keywords must be non-empty")
    keyword_set = set(keywords)
    rows = []
    for fqdn in sorted(set(domains)):
        tokens = [t for part in fqdn.split(".") for t in part.split("-")]
        matched = next((t for t in tokens if t in keyword_set), None)
        if matched is None:
            continue
        verdict = blocked_by(fqdn, lists, mode)
        if len(verdict.blocked_by) < len(lists):
            rows.append(FnCandidate(fqdn, matched, verdict.blocked_by))
    return rows


# -- organization resolution ---------------------------------------------


@dataclass(frozen=True)
class OrgMap:
    esld_to_org: dict[str, str] = field(default_factory=dict)
    org_parent: dict[str, str] = field(default_factory=dict)


def load_org_map(esld_lines: Iterable[str] | str, parent_lines: Iterable[str] | str) -> OrgMap:
    """Load the two JSONL org files and verify parent chains are acyclic.

    esld file lines: {"esld": ..., "org": ...}
    parent file lines: {"org": ..., "parent": ...}
    """
    esld_to_org = {}
    for obj in _jsonl_objects(esld_lines):
        esld_to_org[str(obj["esld"]).lower()] = str(obj["org"])
    org_parent = {}
    for obj in _jsonl_objects(parent_lines):
        org_parent[str(obj["org"])] = str(obj["parent"])
    for start in org_parent:
        seen = {start}
        node = start
        while node in org_parent:
            node = org_parent[node]
            if node in seen:
                raise CyclicParentChain(f"cycle through {node!r}")
            seen.add(node)
    return OrgMap(esld_to_org=esld_to_org, org_parent=org_parent)


def _jsonl_objects(source: Iterable[str] | str):
    lines = source.splitlines() if isinstance(source, str) else source
    for line in lines:
        line = line.strip()
        if line:
            yield json.loads(line)


def resolve_org(esld_value: str, org_map: OrgMap) -> str:
    """Ultimate parent organization of an eSLD; Unknown(<esld>) if unmapped."""
    org = org_map.esld_to_org.get(esld_value.lower())
    if org is None:
        return f"Unknown({esld_value})"
    while org in org_map.org_parent:
        org = org_map.org_parent[org]
    return org


# -- ATS labeling ---------------------------------------------------------


def load_ats_labels(source: Iterable[str] | str) -> dict[str, frozenset[str]]:
    """JSONL label file: {"fqdn": ..., "labels": ["ads", "tracking", ...]}."""
    labels = {}
    for obj in _jsonl_objects(source):
        labels[str(obj["fqdn"]).lower()] = frozenset(
            str(v).lower() for v in obj.get("labels", [])
        )
    return labels


ATS_LABEL_VALUES = frozenset({"ads", "tracking"})


def ats_label(
    fqdn: str,
    labels: dict[str, frozenset[str]],
    lists: Sequence[BlockList],
    mode: MatchMode = "exact",
) -> bool:
    """True when external labels mark the name ads/tracking or any list blocks it."""
    if labels.get(fqdn, frozenset()) & ATS_LABEL_VALUES:
        return True
    return bool(lists) and blocked_by(fqdn, lists, mode).blocked

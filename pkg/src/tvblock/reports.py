"""CSV and JSON report emission.

Every CSV starts with one `# generated_at=...` comment line (the only
nondeterministic byte in any report), then an RFC 4180 header row and data
rows. Percentages render to 0 decimal places in CSVs, mirroring the usual
table style; report.json keeps full precision.
"""

from __future__ import annotations

import csv
import datetime
import json
from typing import Optional, Sequence

from .metrics import (
    AppOverlap,
    CurveRow,
    FnCandidate,
    OverlapReport,
    PenetrationRow,
    PiiTableRow,
)

EMPTY_PERCENT = "—"  # rendered for cells with no members


def _now_iso() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


def fmt_pct(value: Optional[float]) -> str:
    return EMPTY_PERCENT if value is None else f"{value:.0f}"


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence], generated_at: Optional[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# generated_at={generated_at or _now_iso()}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_block_rates(
    path: str,
    rows: Sequence[dict],
    generated_at: Optional[str] = None,
    flow_weighted: bool = False,
) -> None:
    """rows: platform, list, fqdn_count, esld_count, rate_exact, rate_suffix
    (+ flow_rate_exact / flow_rate_suffix when flow weighting is enabled)."""
    header = ["platform", "list", "fqdn_count", "esld_count", "rate_exact", "rate_suffix"]
    if flow_weighted:
        header += ["flow_rate_exact", "flow_rate_suffix"]
    out = []
    for row in rows:
        cells = [
            row["platform"],
            row["list"],
            row["fqdn_count"],
            row["esld_count"],
            fmt_pct(row["rate_exact"]),
            fmt_pct(row["rate_suffix"]),
        ]
        if flow_weighted:
            cells += [fmt_pct(row["flow_rate_exact"]), fmt_pct(row["flow_rate_suffix"])]
        out.append(cells)
    _write_csv(path, header, out, generated_at)


def write_penetration(
    path: str,
    rows: Sequence[tuple[str, PenetrationRow]],
    generated_at: Optional[str] = None,
) -> None:
    header = ["platform", "esld", "app_count", "percent", "party"]
    out = [
        [platform, r.esld, r.app_count, fmt_pct(r.percent), r.party.value]
        for platform, r in rows
    ]
    _write_csv(path, header, out, generated_at)


def write_popularity_curve(
    path: str,
    rows: Sequence[tuple[str, CurveRow]],
    generated_at: Optional[str] = None,
) -> None:
    header = ["platform", "bucket", "domain_count", "rate"]
    out = [
        [platform, r.bucket, r.domain_count, fmt_pct(r.rate)] for platform, r in rows
    ]
    _write_csv(path, header, out, generated_at)


def write_pii_table(
    path: str, rows: Sequence[PiiTableRow], generated_at: Optional[str] = None
) -> None:
    header = [
        "platform",
        "pii_kind",
        "first_party_count",
        "first_party_pct_blocked",
        "third_party_count",
        "third_party_pct_blocked",
        "platform_party_count",
        "platform_party_pct_blocked",
        "total_count",
        "total_pct_blocked",
    ]
    out = []
    for row in rows:
        cells: list = [row.platform, row.kind.value]
        for count, pct in row.cells:
            cells.append(count)
            cells.append(fmt_pct(pct))
        out.append(cells)
    _write_csv(path, header, out, generated_at)


def write_fn_candidates(
    path: str,
    rows: Sequence[tuple[str, FnCandidate]],
    generated_at: Optional[str] = None,
) -> None:
    header = ["platform", "fqdn", "matched_keyword", "blocked_by"]
    out = [
        [platform, r.fqdn, r.matched_keyword, ";".join(sorted(r.blocked_by))]
        for platform, r in rows
    ]
    _write_csv(path, header, out, generated_at)


def write_overlap(
    path: str, report: OverlapReport, generated_at: Optional[str] = None
) -> None:
    header = ["app_a", "app_b", "developer", "only_a", "only_b", "both"]
    out: list[list] = [
        [o.app_a, o.app_b, o.developer, len(o.only_a), len(o.only_b), len(o.both)]
        for o in sorted(report.apps, key=lambda o: o.app_a.lower())
    ]
    out.append(
        ["TOTAL", "", "", report.total_only_a, report.total_only_b, report.total_both]
    )
    _write_csv(path, header, out, generated_at)


def write_classifications(
    path: str,
    rows: Sequence[tuple[str, str, str, str, str]],
    generated_at: Optional[str] = None,
) -> None:
    """rows: (platform, app_id, developer, esld, party)."""
    header = ["platform", "app_id", "developer", "esld", "party"]
    _write_csv(path, header, rows, generated_at)


def overlap_to_json(report: OverlapReport) -> dict:
    def app_obj(o: AppOverlap) -> dict:
        return {
            "app_a": o.app_a,
            "app_b": o.app_b,
            "developer": o.developer,
            "only_a": len(o.only_a),
            "only_b": len(o.only_b),
            "both": len(o.both),
        }

    return {
        "common_app_count": report.common_app_count,
        "apps": [app_obj(o) for o in sorted(report.apps, key=lambda o: o.app_a.lower())],
        "totals": {
            "only_a": report.total_only_a,
            "only_b": report.total_only_b,
            "both": report.total_both,
        },
    }


def write_report_json(path: str, document: dict, generated_at: Optional[str] = None) -> None:
    document = {"generated_at": generated_at or _now_iso(), **document}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2)
        fh.write("\n")

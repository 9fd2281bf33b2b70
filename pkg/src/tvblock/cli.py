"""Command-line entry point wiring ingestion, scanning, evaluation, serving.

Subcommands: ingest | evaluate | scan-pii | classify | serve | version.
Exit codes: 0 success, 1 partial (output produced with warnings), 2
configuration or input error. Flags override config-file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import time
from typing import Optional, Sequence

from . import __version__, dnswire, metrics, pii, psl, reports, sinkhole
from .blocklists import BlockList, build_list
from .config import GlobalConfig, load_config, load_lists_manifest
from .party import (
    DEFAULT_STOP_TOKENS,
    build_context,
    classify,
    load_platform_processes,
)
from .traffic import (
    Dataset,
    LogParseError,
    Platform,
    dataset_summary,
    parse_flow_log,
    parse_http_log,
)

log = logging.getLogger("tvblock")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

PLATFORM_CHOICES = ["roku", "firetv", "apple", "samsung", "chromecast", "vizio", "lg", "sony"]


class CliError(Exception):
    """Configuration or input problem; maps to exit code 2."""


# -- bundle I/O ----------------------------------------------------------


def write_bundle(out_dir: str, dataset: Dataset) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "flows.jsonl"), "w", encoding="utf-8") as fh:
        for rec in dataset.records:
            fh.write(json.dumps(rec.to_json(), separators=(",", ":")) + "\n")
    with open(os.path.join(out_dir, "http.jsonl"), "w", encoding="utf-8") as fh:
        for tx in dataset.transactions:
            fh.write(json.dumps(tx.to_json(), separators=(",", ":")) + "\n")
    summary = dataset_summary(dataset)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary.to_json(), fh, indent=2)
        fh.write("\n")
    meta = {
        "label": dataset.label,
        "platform": dataset.platform.name if dataset.platform else None,
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_bundle(bundle_dir: str) -> Dataset:
    meta_path = os.path.join(bundle_dir, "meta.json")
    flows_path = os.path.join(bundle_dir, "flows.jsonl")
    if not os.path.isdir(bundle_dir) or not os.path.exists(flows_path):
        raise CliError(f"not a dataset bundle: {bundle_dir}")
    label = os.path.basename(os.path.normpath(bundle_dir))
    platform = None
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        label = meta.get("label", label)
        if meta.get("platform"):
            platform = Platform.parse(meta["platform"])
    with open(flows_path, encoding="utf-8") as fh:
        records = parse_flow_log(fh).records
    transactions = []
    http_path = os.path.join(bundle_dir, "http.jsonl")
    if os.path.exists(http_path):
        with open(http_path, encoding="utf-8") as fh:
            try:
                transactions = parse_http_log(fh).transactions
            except LogParseError:
                transactions = []
    return Dataset(
        label=label, records=records, transactions=transactions, platform=platform
    )


def load_bundle_exposures(bundle_dir: str) -> Optional[list[pii.ExposureRecord]]:
    path = os.path.join(bundle_dir, "exposures.jsonl")
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as fh:
        return [pii.ExposureRecord.from_json(json.loads(line)) for line in fh if line.strip()]


# -- shared option handling ------------------------------------------------


def _load_global_config(args) -> GlobalConfig:
    if getattr(args, "config", None):
        try:
            cfg = load_config(args.config)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load config {args.config}: {exc}") from exc
    else:
        cfg = GlobalConfig()
    if getattr(args, "psl", None):
        cfg.psl_path = args.psl
    if getattr(args, "lists", None):
        try:
            cfg.lists = load_lists_manifest(args.lists)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load lists manifest {args.lists}: {exc}") from exc
    if getattr(args, "mode", None):
        cfg.match_mode = args.mode
    if getattr(args, "max_bucket", None):
        cfg.max_bucket = args.max_bucket
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    if getattr(args, "listen", None):
        cfg.sinkhole.listen_address = args.listen
    if getattr(args, "upstream", None):
        cfg.sinkhole.upstream_resolver = args.upstream
    if getattr(args, "blocking", None):
        cfg.sinkhole.blocking_mode = args.blocking
    if getattr(args, "query_log", None):
        cfg.sinkhole.query_log_path = args.query_log
    if getattr(args, "stats", None):
        cfg.sinkhole.stats_address = args.stats
    return cfg


def _load_rules(cfg: GlobalConfig) -> psl.SuffixRules:
    if not cfg.psl_path:
        raise CliError("a PSL file is required (--psl or config psl_path)")
    try:
        return psl.load_psl_file(cfg.psl_path, include_private=not cfg.psl_icann_only)
    except OSError as exc:
        raise CliError(f"cannot read PSL file {cfg.psl_path}: {exc}") from exc
    except psl.EmptyRuleSet as exc:
        raise CliError(str(exc)) from exc


def _build_lists(cfg: GlobalConfig) -> list[BlockList]:
    if not cfg.lists:
        raise CliError("no blocklists configured (--lists or config lists)")
    built = []
    for name, paths in cfg.lists.items():
        try:
            built.append(build_list(name, paths))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot build list {name}: {exc}") from exc
    return built


def _stop_tokens(cfg: GlobalConfig):
    if cfg.stop_tokens is None:
        return DEFAULT_STOP_TOKENS
    return frozenset(t.lower() for t in cfg.stop_tokens)


def _build_ctx(dataset: Dataset, rules, cfg: GlobalConfig):
    markers = None
    if dataset.platform and dataset.platform.name in cfg.platform_markers:
        markers = cfg.platform_markers[dataset.platform.name]
    processes: Sequence[str] = ()
    if cfg.platform_processes_path:
        try:
            with open(cfg.platform_processes_path, encoding="utf-8") as fh:
                processes = load_platform_processes(fh)
        except OSError as exc:
            raise CliError(f"cannot read platform process file: {exc}") from exc
    return build_context(
        dataset,
        rules,
        platform_markers=markers,
        platform_processes=processes,
        stop_tokens=_stop_tokens(cfg),
    )


# -- ingest ---------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = _load_global_config(args)
    for path in [args.flows, args.http]:
        if path and not os.path.exists(path):
            print(f"error: input file not found: {path}", file=sys.stderr)
            return EXIT_CONFIG

    warnings = 0
    try:
        with open(args.flows, encoding="utf-8") as fh:
            flows = parse_flow_log(fh)
    except LogParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for err in flows.errors:
        print(f"warning: flows line {err.line_no}: {err.reason}", file=sys.stderr)
    warnings += len(flows.errors)

    transactions = []
    if args.http:
        with open(args.http, encoding="utf-8") as fh:
            try:
                parsed = parse_http_log(fh)
            except LogParseError as exc:
                parsed = None
                for err in exc.errors:
                    print(
                        f"warning: http line {err.line_no}: {err.reason}",
                        file=sys.stderr,
                    )
                warnings += len(exc.errors)
            if parsed is not None:
                transactions = parsed.transactions
                for err in parsed.errors:
                    print(
                        f"warning: http line {err.line_no}: {err.reason}",
                        file=sys.stderr,
                    )
                warnings += len(parsed.errors)

    platform = Platform.parse(args.platform) if args.platform else None
    label = args.label or os.path.basename(os.path.normpath(cfg.output_dir))
    dataset = Dataset(
        label=label, records=flows.records, transactions=transactions, platform=platform
    )
    write_bundle(cfg.output_dir, dataset)
    summary = dataset_summary(dataset)
    print(json.dumps({"label": label, **summary.to_json()}, indent=2))
    return EXIT_PARTIAL if warnings else EXIT_OK


# -- evaluate ---------------------------------------------------------------


def _block_rate_rows(dataset: Dataset, lists, rules, cfg: GlobalConfig) -> list[dict]:
    platform = dataset.platform.name if dataset.platform else dataset.label
    fqdns = dataset.domain_fqdns()
    eslds = metrics.dataset_eslds(dataset, rules)
    rows = []
    for bl in lists:
        row = {
            "platform": platform,
            "list": bl.name,
            "fqdn_count": len(fqdns),
            "esld_count": len(eslds),
            "rate_exact": metrics.block_rate(fqdns, bl, "exact") if fqdns else None,
            "rate_suffix": metrics.block_rate(fqdns, bl, "suffix") if fqdns else None,
        }
        if cfg.flow_weighted:
            row["flow_rate_exact"] = _flow_rate(dataset, bl, "exact")
            row["flow_rate_suffix"] = _flow_rate(dataset, bl, "suffix")
        rows.append(row)
    return rows


def _flow_rate(dataset: Dataset, bl: BlockList, mode) -> Optional[float]:
    from .blocklists import is_blocked

    flows = [r for r in dataset.records if not r.is_ip]
    if not flows:
        return None
    hits = sum(1 for r in flows if is_blocked(r.fqdn, bl, mode))
    return 100.0 * hits / len(flows)


def cmd_evaluate(args) -> int:
    cfg = _load_global_config(args)
    try:
        lists = _build_lists(cfg)
        rules = _load_rules(cfg)
        bundles = [load_bundle(path) for path in args.bundle]
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    os.makedirs(cfg.output_dir, exist_ok=True)
    failures = []
    notes = [
        "records without app attribution are excluded from app-level metrics",
        "block rates are over distinct domain names; IP-literal destinations are excluded",
    ]

    block_rows: list[dict] = []
    pen_rows: list[tuple[str, metrics.PenetrationRow]] = []
    curve_rows: list[tuple[str, metrics.CurveRow]] = []
    pii_rows: list[metrics.PiiTableRow] = []
    fn_rows: list[tuple[str, metrics.FnCandidate]] = []

    for bundle_dir, dataset in zip(args.bundle, bundles):
        platform = dataset.platform.name if dataset.platform else dataset.label
        ctx = _build_ctx(dataset, rules, cfg)
        try:
            block_rows.extend(_block_rate_rows(dataset, lists, rules, cfg))
        except Exception as exc:
            failures.append(f"block_rates[{dataset.label}]: {exc}")
        try:
            pen_rows.extend(
                (platform, row) for row in metrics.penetration_table(dataset, rules, ctx)
            )
        except metrics.NoAppAttribution:
            notes.append(f"penetration omitted for {dataset.label}: no app attribution")
        except Exception as exc:
            failures.append(f"penetration[{dataset.label}]: {exc}")
        try:
            curve_rows.extend(
                (platform, row)
                for row in metrics.popularity_block_curve(
                    dataset, lists, cfg.max_bucket, cfg.match_mode
                )
            )
        except Exception as exc:
            failures.append(f"popularity_curve[{dataset.label}]: {exc}")
        try:
            exposures = load_bundle_exposures(bundle_dir)
            pii_rows.extend(metrics.pii_block_table(exposures or [], platform))
            if exposures is None:
                notes.append(
                    f"no exposures.jsonl in {dataset.label}; run scan-pii for PII rows"
                )
        except Exception as exc:
            failures.append(f"pii_table[{dataset.label}]: {exc}")
        try:
            keywords = tuple(cfg.keywords) if cfg.keywords else metrics.DEFAULT_KEYWORDS
            fn_rows.extend(
                (platform, row)
                for row in metrics.keyword_fn_candidates(
                    dataset.domain_fqdns(), lists, keywords, cfg.match_mode
                )
            )
        except Exception as exc:
            failures.append(f"fn_candidates[{dataset.label}]: {exc}")

    organizations = None
    if cfg.org_esld_path and cfg.org_parent_path:
        try:
            with open(cfg.org_esld_path, encoding="utf-8") as ef, open(
                cfg.org_parent_path, encoding="utf-8"
            ) as pf:
                org_map = metrics.load_org_map(ef, pf)
            eslds = sorted({r.esld for _, r in pen_rows})
            organizations = {e: metrics.resolve_org(e, org_map) for e in eslds}
        except (OSError, ValueError) as exc:
            failures.append(f"organizations: {exc}")

    ats_labeled = None
    if cfg.ats_labels_path:
        try:
            with open(cfg.ats_labels_path, encoding="utf-8") as fh:
                labels = metrics.load_ats_labels(fh)
            ats_labeled = sorted(
                fqdn
                for dataset in bundles
                for fqdn in dataset.domain_fqdns()
                if metrics.ats_label(fqdn, labels, lists, cfg.match_mode)
            )
        except (OSError, ValueError) as exc:
            failures.append(f"ats_labels: {exc}")

    overlap = None
    if len(bundles) == 2:
        try:
            overlap = metrics.common_app_overlap(
                bundles[0], bundles[1], _stop_tokens(cfg)
            )
        except Exception as exc:
            failures.append(f"overlap: {exc}")
    else:
        notes.append("overlap.csv omitted: needs exactly two bundles")

    out = cfg.output_dir
    reports.write_block_rates(
        os.path.join(out, "block_rates.csv"), block_rows, flow_weighted=cfg.flow_weighted
    )
    reports.write_penetration(os.path.join(out, "penetration.csv"), pen_rows)
    reports.write_popularity_curve(os.path.join(out, "popularity_curve.csv"), curve_rows)
    reports.write_pii_table(os.path.join(out, "pii_table.csv"), pii_rows)
    reports.write_fn_candidates(os.path.join(out, "fn_candidates.csv"), fn_rows)
    if overlap is not None:
        reports.write_overlap(os.path.join(out, "overlap.csv"), overlap)

    document = {
        "bundles": [
            {
                "label": ds.label,
                "platform": ds.platform.name if ds.platform else None,
                "summary": dataset_summary(ds).to_json(),
            }
            for ds in bundles
        ],
        "notes": notes,
        "failures": failures,
        "block_rates": block_rows,
        "penetration": [
            {
                "platform": platform,
                "esld": r.esld,
                "app_count": r.app_count,
                "percent": r.percent,
                "party": r.party.value,
            }
            for platform, r in pen_rows
        ],
        "popularity_curve": [
            {
                "platform": platform,
                "bucket": r.bucket,
                "domain_count": r.domain_count,
                "rate": r.rate,
            }
            for platform, r in curve_rows
        ],
        "pii_table": [
            {
                "platform": r.platform,
                "pii_kind": r.kind.value,
                "first_party": r.cells[0],
                "third_party": r.cells[1],
                "platform_party": r.cells[2],
                "total": r.cells[3],
            }
            for r in pii_rows
        ],
        "fn_candidates": [
            {
                "platform": platform,
                "fqdn": r.fqdn,
                "matched_keyword": r.matched_keyword,
                "blocked_by": sorted(r.blocked_by),
            }
            for platform, r in fn_rows
        ],
        "overlap": reports.overlap_to_json(overlap) if overlap else None,
        "organizations": organizations,
        "ats_labeled": ats_labeled,
    }
    reports.write_report_json(os.path.join(out, "report.json"), document)

    for failure in failures:
        print(f"table failed: {failure}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


# -- scan-pii ----------------------------------------------------------------


def cmd_scan_pii(args) -> int:
    cfg = _load_global_config(args)
    spec_path = args.pii_spec or cfg.pii_spec_path
    if not spec_path or not os.path.exists(spec_path):
        print("error: PII spec file is required and must exist", file=sys.stderr)
        return EXIT_CONFIG
    try:
        lists = _build_lists(cfg)
        rules = _load_rules(cfg)
        dataset = load_bundle(args.bundle)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    pii.warn_if_world_readable(spec_path)
    with open(spec_path, encoding="utf-8") as fh:
        try:
            specs = pii.load_pii_specs(fh.read())
        except (ValueError, pii.InvalidMac, pii.InvalidCoordinate) as exc:
            print(f"error: invalid PII spec: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    scan_cfg = pii.ScanConfig()
    try:
        variants = pii.build_all_variants(specs, scan_cfg)
    except (pii.InvalidMac, pii.InvalidCoordinate) as exc:
        print(f"error: invalid PII spec: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    ctx = _build_ctx(dataset, rules, cfg)
    developers = {}
    for rec in dataset.records:
        if rec.app_id is not None and rec.developer is not None:
            developers.setdefault(rec.app_id, rec.developer)
    for tx in dataset.transactions:
        if tx.developer is not None:
            developers.setdefault(tx.app_id, tx.developer)

    out_dir = args.out or args.bundle
    os.makedirs(out_dir, exist_ok=True)
    exposures_path = os.path.join(out_dir, "exposures.jsonl")
    redacted_path = os.path.join(out_dir, "http.redacted.jsonl")
    total = 0
    with open(exposures_path, "w", encoding="utf-8") as exp_fh, open(
        redacted_path, "w", encoding="utf-8"
    ) as red_fh:
        for tx in dataset.transactions:
            found = pii.scan_transaction(tx, specs, scan_cfg, variants=variants)
            attributed = pii.attribute_exposures(
                found, ctx, lists, rules, cfg.match_mode, developers
            )
            for record in attributed:
                exp_fh.write(
                    json.dumps(record.to_json(), separators=(",", ":")) + "\n"
                )
            total += len(attributed)
            red_fh.write(
                json.dumps(pii.redact(tx, found, scan_cfg).to_json(), separators=(",", ":"))
                + "\n"
            )
    print(
        json.dumps(
            {
                "transactions": len(dataset.transactions),
                "exposures": total,
                "exposures_path": exposures_path,
                "redacted_path": redacted_path,
            },
            indent=2,
        )
    )
    return EXIT_OK


# -- classify ----------------------------------------------------------------


def cmd_classify(args) -> int:
    cfg = _load_global_config(args)
    try:
        rules = _load_rules(cfg)
        dataset = load_bundle(args.bundle)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ctx = _build_ctx(dataset, rules, cfg)
    platform = dataset.platform.name if dataset.platform else dataset.label

    from .party import esld_of

    pairs = {}
    for rec in dataset.records:
        if rec.app_id is None:
            continue
        domain = esld_of(rec.fqdn, rules)
        if domain is not None:
            pairs.setdefault((rec.app_id, domain), rec.developer)
    for tx in dataset.transactions:
        domain = esld_of(tx.fqdn, rules)
        if domain is not None:
            pairs.setdefault((tx.app_id, domain), tx.developer)

    rows = []
    for (app_id, domain), developer in sorted(pairs.items()):
        label = classify(app_id, developer, domain, ctx)
        rows.append((platform, app_id, developer or "", domain, label.value))
    os.makedirs(cfg.output_dir, exist_ok=True)
    out_path = os.path.join(cfg.output_dir, "classifications.csv")
    reports.write_classifications(out_path, rows)
    print(json.dumps({"pairs": len(rows), "path": out_path}, indent=2))
    return EXIT_OK


# -- serve ---------------------------------------------------------------------


def cmd_serve(args) -> int:
    cfg = _load_global_config(args)
    try:
        lists = _build_lists(cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sink_cfg = cfg.sinkhole
    if not sink_cfg.active_lists:
        sink_cfg.active_lists = tuple(cfg.lists.keys())
    sink_cfg.match_mode = cfg.match_mode
    try:
        sink_cfg.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        service = sinkhole.serve(sink_cfg, lists)
    except (sinkhole.BindFailure, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def reload_lists(signum, frame):
        try:
            rebuilt = _build_lists(cfg)
            active = {bl.name: bl for bl in rebuilt}
            service.set_lists(
                [active[n] for n in sink_cfg.active_lists if n in active]
            )
        except Exception as exc:  # keep serving under the old lists
            log.error("list reload failed: %s", exc)

    signal.signal(signal.SIGHUP, reload_lists)
    signal.signal(signal.SIGUSR1, lambda s, f: service.dump_stats())
    host, port = service.address
    print(f"sinkhole serving on {host}:{port}; SIGHUP reloads lists", file=sys.stderr)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"tvblock {__version__}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tvblock",
        description="Evaluate DNS ad/tracker blocklists against smart-TV traffic",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="global JSON config file")
        p.add_argument("--psl", help="public suffix rules file")
        p.add_argument("--lists", help="blocklist manifest JSON (name -> paths)")
        p.add_argument("--mode", choices=["exact", "suffix"], help="match mode")
        p.add_argument("--out", help="output directory")

    p_ingest = sub.add_parser("ingest", help="parse raw logs into a dataset bundle")
    add_common(p_ingest)
    p_ingest.add_argument("--flows", required=True, help="JSONL flow log")
    p_ingest.add_argument("--http", help="JSONL HTTP transaction log")
    p_ingest.add_argument("--label", help="dataset label")
    p_ingest.add_argument(
        "--platform", choices=PLATFORM_CHOICES, help="declared capture platform"
    )

    p_eval = sub.add_parser("evaluate", help="compute metric tables from bundles")
    add_common(p_eval)
    p_eval.add_argument(
        "--bundle", action="append", required=True, help="dataset bundle directory"
    )
    p_eval.add_argument("--max-bucket", type=int, help="terminal popularity bucket")

    p_scan = sub.add_parser("scan-pii", help="scan a bundle's HTTP log for PII")
    add_common(p_scan)
    p_scan.add_argument("--bundle", required=True, help="dataset bundle directory")
    p_scan.add_argument("--pii-spec", help="PII specification JSON file")

    p_cls = sub.add_parser("classify", help="label (app, eSLD) pairs by party")
    add_common(p_cls)
    p_cls.add_argument("--bundle", required=True, help="dataset bundle directory")

    p_serve = sub.add_parser("serve", help="run the DNS sinkhole")
    add_common(p_serve)
    p_serve.add_argument("--listen", help="listen address HOST:PORT")
    p_serve.add_argument("--upstream", help="upstream resolver HOST:PORT")
    p_serve.add_argument(
        "--blocking", choices=["null", "nxdomain"], help="blocked-answer mode"
    )
    p_serve.add_argument("--query-log", help="query log JSONL path")
    p_serve.add_argument("--stats", help="stats endpoint HOST:PORT")

    sub.add_parser("version", help="print version")
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "evaluate": cmd_evaluate,
    "scan-pii": cmd_scan_pii,
    "classify": cmd_classify,
    "serve": cmd_serve,
    "version": cmd_version,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:  # console_scripts hook
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

"""Command-line entry point: ``ctleak <subcommand> [options]``.

Shared settings may come from ``--config file.json``; flags given on the
command line take precedence. Every subcommand writes machine-readable
output (CSV, TSV or JSON Lines) to the file named by ``--out`` or to stdout.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path
from typing import Iterator, Optional, Sequence

from . import cert_model, dns_names, dns_verifier, growth_analytics, honeypot, phishing, sct_engine
from .ctlog_client import CTLogClient, CTLogError, LogDescriptor, load_log_list
from .entry_store import EntryStore, StoreError

log = logging.getLogger("ctleak")

DEFAULTS = {
    "store": "store",
    "batch": 256,
    "workers": 4,
    "qps": dns_verifier.DEFAULT_QPS,
    "timeout": 2.0,
    "min_count": 100_000,
    "top_suffixes": 10,
    "top_n": growth_analytics.DEFAULT_TOP_N,
}
# config keys naming files that must exist when the config is loaded
FILE_KEYS = ("log_list", "psl", "domain_list", "known_list", "routes", "blocklist", "rules",
             "aliases", "asn_table")


class ConfigError(ValueError):
    pass


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    base = Path(path).parent
    for key in FILE_KEYS:
        if key in cfg:
            p = Path(cfg[key])
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                raise ConfigError(f"config {key}: {p} does not exist")
            cfg[key] = str(p)
    return cfg


def setting(args, name: str, required: bool = False):
    value = getattr(args, name, None)
    if value is None:
        value = args.config.get(name, DEFAULTS.get(name))
    if required and value is None:
        raise ConfigError(f"--{name.replace('_', '-')} is required (flag or config)")
    return value


@contextlib.contextmanager
def output(path: Optional[str]) -> Iterator:
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _jsonl(fh, doc) -> None:
    fh.write(json.dumps(doc, sort_keys=True) + "\n")


def _store(args) -> EntryStore:
    return EntryStore(setting(args, "store"))


def _logs(args) -> list[LogDescriptor]:
    return load_log_list(setting(args, "log_list", required=True))


def _pick_log(args) -> LogDescriptor:
    logs = _logs(args)
    name = setting(args, "log", required=True)
    for desc in logs:
        if desc.name == name:
            return desc
    raise ConfigError(f"log {name!r} not in log list ({', '.join(d.name for d in logs)})")


def _log_names(args) -> dict[bytes, str]:
    if setting(args, "log_list") is None:
        return {}
    return {d.log_id: d.name for d in _logs(args)}


def _psl(args) -> dns_names.PublicSuffixSet:
    return dns_names.PublicSuffixSet.load(setting(args, "psl", required=True))


def names_from_store(store: EntryStore) -> list[str]:
    """Unique valid DNS names from every distinct certificate in the store."""
    seen_certs: set[str] = set()
    names: dict[str, None] = {}
    for lid in store.log_ids():
        for e in store.scan(lid):
            if not e.sha256 or e.sha256 in seen_certs:
                continue
            seen_certs.add(e.sha256)
            try:
                _, der, _ = e.raw().certificate()
                cert = cert_model.parse(der)
            except ValueError as exc:
                log.debug("entry %d unparsed: %s", e.index, exc)
                continue
            for n in cert_model.extract_names(cert):
                names.setdefault(n, None)
    return list(names)


# -- subcommands ---------------------------------------------------------------

def cmd_fetch(args) -> int:
    desc, store = _pick_log(args), _store(args)
    client = CTLogClient(batch_size=setting(args, "batch"))
    sth = client.get_sth(desc)
    upto = sth.tree_size if args.upto is None else min(args.upto, sth.tree_size)
    start = store.high_water_mark(desc.log_id) + 1
    pending, fetched = [], 0
    for entry in client.fetch_range(desc, start, upto - 1, workers=setting(args, "workers")):
        pending.append(entry)
        if len(pending) >= client.batch_size:
            fetched += store.append(pending)
            pending = []
    fetched += store.append(pending)
    with output(args.out) as fh:
        _jsonl(fh, {"log": desc.name, "tree_size": sth.tree_size, "fetched": fetched,
                    "stored": store.high_water_mark(desc.log_id) + 1})
    return 0


def cmd_audit(args) -> int:
    desc, store = _pick_log(args), _store(args)
    client = CTLogClient(batch_size=setting(args, "batch"))
    sth = client.get_sth(desc)
    upto = sth.tree_size if args.upto is None else min(args.upto, sth.tree_size)
    fetched = sum(1 for _ in client.audit_fetch(desc, upto, store, workers=setting(args, "workers")))
    with output(args.out) as fh:
        _jsonl(fh, {"log": desc.name, "audited": upto, "fetched": fetched,
                    "tree_size": sth.tree_size, "consistent": True})
    return 0


def cmd_stats(args) -> int:
    store = _store(args)
    per_log = store.stats()
    with output(args.out) as fh:
        _jsonl(fh, {
            "logs": len(per_log),
            "entries": sum(s["entries"] for s in per_log.values()),
            "unparsed": sum(s["unparsed"] for s in per_log.values()),
            "unique_certificates": len(store.unique_certificates()),
        })
    return 0


def cmd_store_stats(args) -> int:
    names = _log_names(args)
    with output(args.out) as fh:
        for lid, s in _store(args).stats().items():
            _jsonl(fh, {"log": names.get(lid, lid.hex()), "log_id": lid.hex(), **s})
    return 0


def cmd_growth(args) -> int:
    aliases = growth_analytics.load_aliases(setting(args, "aliases")) if setting(args, "aliases") else {}
    obs = growth_analytics.observations_from_store(_store(args), _log_names(args), aliases)
    tally = growth_analytics.Tally.of(obs)
    window = growth_analytics.parse_window(args.window) if args.window else None
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    top_n = setting(args, "top_n")
    with open(out / "growth.csv", "w", newline="") as fh:
        growth_analytics.write_growth(growth_analytics.cumulative_growth(tally, top_n), fh)
    with open(out / "rates.csv", "w", newline="") as fh:
        growth_analytics.write_rates(growth_analytics.daily_rates(tally, top_n), fh)
    with open(out / "matrix.csv", "w", newline="") as fh:
        growth_analytics.write_matrix(growth_analytics.ca_log_matrix(tally, window), fh)
    return 0


def cmd_leak_stats(args) -> int:
    records = dns_names.split_many(names_from_store(_store(args)), _psl(args))
    stats = dns_names.label_stats(records)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "labels.tsv", "w") as fh:
        for label, n in sorted(stats.totals.items(), key=lambda kv: (-kv[1], kv[0])):
            fh.write(f"{label}\t{n}\n")
    with open(out / "top_labels.tsv", "w") as fh:
        for suffix, label in dns_names.top_label_per_suffix(stats).items():
            fh.write(f"{suffix}\t{label}\t{stats.by_suffix[(suffix, label)]}\n")
    return 0


def cmd_enumerate(args) -> int:
    psl = _psl(args)
    names = names_from_store(_store(args))
    stats = dns_names.label_stats(dns_names.split_many(names, psl))
    cfg = dns_names.CandidateConfig(
        min_label_count=setting(args, "min_count"),
        top_suffixes_per_label=setting(args, "top_suffixes"),
        excluded_suffixes=frozenset(args.exclude) if args.exclude is not None
        else dns_names.CandidateConfig.excluded_suffixes,
    )
    domains = dns_names.read_domain_list(setting(args, "domain_list", required=True))
    cands = dns_names.construct_candidates(stats, domains, psl, cfg, observed=names,
                                           seed=setting(args, "seed"))
    with output(args.out) as fh:
        dns_names.write_candidates(cands, fh)
    return 0


def cmd_verify_dns(args) -> int:
    servers = args.nameserver or args.config.get("nameservers")
    if not servers:
        raise ConfigError("at least one --nameserver is required")
    routes = setting(args, "routes")
    routing = (dns_verifier.RoutabilityTable.load(routes, setting(args, "routes_mode") or "allow")
               if routes else dns_verifier.RoutabilityTable.default())
    blocklist = setting(args, "blocklist")
    cfg = dns_verifier.ResolverConfig(
        nameservers=[dns_verifier.ResolverConfig.parse_nameserver(s) for s in servers],
        timeout=setting(args, "timeout"),
        qps=setting(args, "qps"),
        routing=routing,
        blocklist=dns_verifier.load_blocklist(blocklist) if blocklist else frozenset(),
    )
    with open(args.candidates, encoding="utf-8") as fh:
        cands = dns_names.read_candidates(fh)
    verdicts = dns_verifier.verify_candidates(cands, dns_verifier.Resolver(cfg), setting(args, "workers"))
    with output(args.out) as fh:
        dns_verifier.write_verdicts(verdicts, fh)
    known = setting(args, "known_list")
    if args.discovered:
        known_names = Path(known).read_text().split() if known else []
        with output(args.discovered) as fh:
            for name in dns_verifier.diff_against_known(verdicts, known_names):
                fh.write(name + "\n")
    return 0


def _read_cert(path: str) -> cert_model.ParsedCert:
    return cert_model.parse(cert_model.load_pem_or_der(Path(path).read_bytes()))


def cmd_sct_verify(args) -> int:
    logs = load_log_list(args.logs or setting(args, "log_list", required=True))
    cert = _read_cert(args.cert)
    issuer = _read_cert(args.issuer) if args.issuer else None
    delivered = []
    for path, channel in ((args.tls_scts, sct_engine.Channel.TLS_EXTENSION),
                          (args.ocsp_scts, sct_engine.Channel.OCSP_STAPLED)):
        if path:
            delivered += sct_engine.parse_sct_list(Path(path).read_bytes(), channel)
    results = sct_engine.verify_certificate(cert, issuer, logs, delivered)
    precert = _read_cert(args.precert) if args.precert else None
    with output(args.out) as fh:
        for sct in results:
            doc = {"fingerprint": cert.fingerprint.hex(), "channel": sct.channel.value,
                   "status": sct.status.value, "log_id": sct.log_id.hex(),
                   "timestamp": sct.timestamp, "note": sct.note}
            if precert is not None and sct.status is not sct_engine.SctStatus.UNVERIFIED:
                finding = sct_engine.classify_invalid(precert, cert, sct)
                doc.update(classification=finding.classification.value, diff=finding.diff)
            _jsonl(fh, doc)
    return 0


def cmd_phish_scan(args) -> int:
    rules = phishing.load_rules(args.rules or setting(args, "rules"))
    psl = _psl(args)
    if args.input == "store":
        names = names_from_store(_store(args))
    elif args.input in (None, "-"):
        names = [ln.strip() for ln in sys.stdin if ln.strip()]
    else:
        names = dns_names.read_domain_list(args.input)
    findings = phishing.scan(dns_names.split_many((n.lower() for n in names), psl), rules)
    with output(args.out) as fh:
        phishing.write_findings(findings, fh)
    if args.breakdown:
        with output(args.breakdown) as fh:
            fh.write("service,suffix,count,share\n")
            for service, per in phishing.suffix_breakdown(findings).items():
                for suffix, (n, share) in per.items():
                    fh.write(f"{service},{suffix},{n},{share!r}\n")
    return 0


def cmd_honeypot_report(args) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        domains = honeypot.read_manifest(fh)
    asn_path = setting(args, "asn_table")
    asn = honeypot.AsnTable.load(asn_path) if asn_path else None
    events = []
    for path in args.telemetry:
        with open(path, encoding="utf-8") as fh:
            events += honeypot.read_telemetry(fh, domains, asn)
    events = honeypot.filter_ca_validation(events, domains)
    with output(args.out) as fh:
        honeypot.write_report(honeypot.report(domains, events), fh)
    dns_ev = [e for e in events if e.kind is honeypot.EventKind.DNS_QUERY]
    conn_ev = [e for e in events if e.kind is honeypot.EventKind.CONNECTION]
    if args.ecs:
        with output(args.ecs) as fh:
            fh.write("prefix,count,qtypes\n")
            for s in honeypot.ecs_breakdown(dns_ev):
                fh.write(f"{s.prefix},{s.count},{' '.join(sorted(s.qtypes))}\n")
    if args.scans:
        with output(args.scans) as fh:
            fh.write("key_kind,key,queries,flagged,port_count,ports,targets,first_lag_s\n")
            for r in honeypot.correlate_scans(dns_ev, conn_ev):
                lag = "" if r.first_lag is None else f"{r.first_lag:g}"
                fh.write(f"{r.key_kind},{r.key},{r.query_count},{int(r.flagged)},{r.port_count},"
                         f"{' '.join(map(str, r.ports))},{' '.join(map(str, r.targets))},{lag}\n")
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--store", help="entry store directory")
    common.add_argument("--log-list", dest="log_list", help="JSON log list")
    common.add_argument("--psl", help="public suffix list file")
    common.add_argument("--seed", type=int, help="seed for randomized steps")
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output file or directory (default stdout / cwd)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="ctleak", description="Certificate Transparency analysis toolkit")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, func, help_text, parent=sub):
        sp = parent.add_parser(name, parents=[common], help=help_text)
        sp.set_defaults(func=func)
        return sp

    for name, func, text in (("fetch", cmd_fetch, "download entries into the store"),
                             ("audit", cmd_audit, "download and verify entries against the signed head")):
        sp = add(name, func, text)
        sp.add_argument("--log", required=True, help="log name from the log list")
        sp.add_argument("--upto", type=int, help="stop before this index (default: tree size)")
        sp.add_argument("--batch", type=int, help="get-entries batch size")

    add("stats", cmd_stats, "store-wide totals")

    sp = add("growth", cmd_growth, "per-CA growth, daily shares and CA x log matrix")
    sp.add_argument("--window", help="matrix window: YYYY-MM or YYYY-MM-DD:YYYY-MM-DD")
    sp.add_argument("--top-n", dest="top_n", type=int)
    sp.add_argument("--aliases", help="JSON map of issuer variants to CA names")

    add("leak-stats", cmd_leak_stats, "subdomain label statistics over stored names")

    sp = add("enumerate", cmd_enumerate, "construct candidate FQDNs with control names")
    sp.add_argument("--min-count", dest="min_count", type=int)
    sp.add_argument("--top-suffixes", dest="top_suffixes", type=int)
    sp.add_argument("--domain-list", dest="domain_list")
    sp.add_argument("--exclude", nargs="*", help="suffixes to skip (default com net org)")

    sp = add("verify-dns", cmd_verify_dns, "resolve candidates and judge them against controls")
    sp.add_argument("--candidates", required=True)
    sp.add_argument("--nameserver", action="append", help="host[:port], repeatable")
    sp.add_argument("--routes", help="CIDR list of routable space")
    sp.add_argument("--routes-mode", dest="routes_mode", choices=["allow", "deny"])
    sp.add_argument("--qps", type=float)
    sp.add_argument("--timeout", type=float)
    sp.add_argument("--blocklist")
    sp.add_argument("--known-list", dest="known_list")
    sp.add_argument("--discovered", help="write new_fqdn names absent from the known list here")

    sp = add("sct-verify", cmd_sct_verify, "verify SCTs of a certificate")
    sp.add_argument("--cert", required=True)
    sp.add_argument("--issuer")
    sp.add_argument("--logs")
    sp.add_argument("--precert", help="matching precertificate, enables mismatch classification")
    sp.add_argument("--tls-scts", dest="tls_scts", help="raw SCT list from the TLS extension")
    sp.add_argument("--ocsp-scts", dest="ocsp_scts", help="raw SCT list from a stapled OCSP response")

    phish = sub.add_parser("phish", help="phishing candidate detection")
    phish_sub = phish.add_subparsers(dest="phish_command", metavar="action", required=True)
    sp = add("scan", cmd_phish_scan, "match names against service rules", phish_sub)
    sp.add_argument("--rules", help="rule JSON (default: bundled rules)")
    sp.add_argument("--input", help="name file, '-' for stdin, or 'store'")
    sp.add_argument("--breakdown", help="write per-service suffix shares here")

    sp = add("honeypot-report", cmd_honeypot_report, "latency and source report for honeypot names")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--telemetry", required=True, action="append")
    sp.add_argument("--asn-table", dest="asn_table")
    sp.add_argument("--ecs", help="write client-subnet breakdown here")
    sp.add_argument("--scans", help="write scan correlation here")

    store = sub.add_parser("store", help="entry store maintenance")
    store_sub = store.add_subparsers(dest="store_command", metavar="action", required=True)
    add("stats", cmd_store_stats, "per-log entry counts", store_sub)
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.config = load_config(args.config)
        return args.func(args)
    except (CTLogError, StoreError, ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"ctleak {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

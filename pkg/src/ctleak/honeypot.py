"""Analysis of CT honeypot telemetry.

Honeypot names are random labels under an operator zone whose only
publication is a logged certificate. Any DNS query or connection that refers
to them afterwards was therefore learned from CT (or from whoever saw such a
query). This module ingests normalized telemetry, removes the issuing CA's own
validation traffic, and derives per-domain latency and source statistics plus
scan correlation.

Telemetry is TSV, one event per line::

    epoch_ms  kind  qname  qtype  src_ip  asn  ecs  dst_port  [dst_ip]

``kind`` is ``dns_query`` or ``connection``; empty fields are allowed. For
connections ``qname`` carries the TLS SNI or HTTP Host when one was seen.
"""
from __future__ import annotations

import csv
import ipaddress
import logging
import random
import secrets
import shlex
import string
import subprocess
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence, TextIO, Union

log = logging.getLogger(__name__)

LABEL_ALPHABET = string.ascii_lowercase + string.digits
LABEL_LENGTH = 12
HTTP_PORTS = frozenset({80, 443})
ECS_V4_PREFIX = 24
ECS_V6_PREFIX = 56

IPAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]
IPNetwork = Union[ipaddress.IPv4Network, ipaddress.IPv6Network]


class TelemetryError(ValueError):
    pass


class EventKind(str, Enum):
    DNS_QUERY = "dns_query"
    CONNECTION = "connection"


def utc(ts: Union[str, int, float, datetime]) -> datetime:
    """Coerce ISO-8601 text, epoch seconds or a datetime to an aware UTC datetime."""
    if isinstance(ts, datetime):
        return ts.replace(tzinfo=timezone.utc) if ts.tzinfo is None else ts.astimezone(timezone.utc)
    if isinstance(ts, (int, float)):
        return datetime.fromtimestamp(ts, tz=timezone.utc)
    text = ts.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return utc(datetime.fromisoformat(text))


def iso(ts: Optional[datetime]) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ") if ts else ""


@dataclass(frozen=True)
class HoneypotDomain:
    fqdn: str
    ct_entry_time: Optional[datetime] = None
    batch: int = 0
    addresses: tuple[IPAddress, ...] = ()

    @property
    def label(self) -> str:
        return self.fqdn.split(".", 1)[0]

    def covers(self, qname: str) -> bool:
        q = qname.lower().rstrip(".")
        return q == self.fqdn or q.endswith("." + self.fqdn)


@dataclass(frozen=True)
class HoneypotEvent:
    time: datetime
    kind: EventKind
    src_ip: IPAddress
    qname: str = ""
    qtype: str = ""
    src_asn: Optional[int] = None
    ecs: str = ""
    dst_port: Optional[int] = None
    dst_ip: Optional[IPAddress] = None


# -- domain generation and issuance ------------------------------------------

def generate_domains(count: int, parent_zone: str, seed: Optional[int] = None,
                     batch: int = 0) -> list[HoneypotDomain]:
    """``count`` distinct random 12-character labels (about 62 bits each) under ``parent_zone``."""
    rng: random.Random = random.Random(seed) if seed is not None else secrets.SystemRandom()
    zone = parent_zone.lower().strip(".")
    labels: list[str] = []
    seen: set[str] = set()
    while len(labels) < count:
        lab = "".join(rng.choice(LABEL_ALPHABET) for _ in range(LABEL_LENGTH))
        if lab not in seen:
            seen.add(lab)
            labels.append(lab)
    return [HoneypotDomain(f"{lab}.{zone}", batch=batch) for lab in labels]


class StubIssuer:
    """Issuance driver for tests: CT entry times come from a mapping or a clock."""

    def __init__(self, times: Optional[Mapping[str, datetime]] = None,
                 clock: Callable[[], datetime] = lambda: datetime.now(timezone.utc)):
        self.times = dict(times or {})
        self.clock = clock
        self.issued: list[str] = []

    def issue(self, domain: HoneypotDomain) -> datetime:
        self.issued.append(domain.fqdn)
        return utc(self.times.get(domain.fqdn) or self.clock())


class CommandIssuer:
    """Runs an external command per name; it must print the CT entry time (ISO or epoch seconds)."""

    def __init__(self, command: str, timeout: float = 600):
        self.argv = shlex.split(command)
        self.timeout = timeout

    def issue(self, domain: HoneypotDomain) -> datetime:
        argv = [a.replace("{fqdn}", domain.fqdn) for a in self.argv]
        out = subprocess.run(argv, check=True, capture_output=True, text=True, timeout=self.timeout)
        lines = out.stdout.strip().splitlines()
        if not lines:
            raise RuntimeError(f"issuer printed nothing for {domain.fqdn}")
        text = lines[-1].strip()
        try:
            return utc(float(text))
        except ValueError:
            return utc(text)


def leak(domains: Iterable[HoneypotDomain], issuer) -> list[HoneypotDomain]:
    return [replace(d, ct_entry_time=issuer.issue(d)) for d in domains]


def write_manifest(domains: Iterable[HoneypotDomain], fh: TextIO) -> None:
    for d in domains:
        addrs = ",".join(str(a) for a in d.addresses)
        fh.write(f"{d.fqdn}\t{iso(d.ct_entry_time)}\t{d.batch}\t{addrs}\n")


def read_manifest(fh: TextIO) -> list[HoneypotDomain]:
    out = []
    for n, line in enumerate(fh, 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t") + ["", "", ""]
        fqdn, when, batch, addrs = parts[:4]
        try:
            out.append(HoneypotDomain(
                fqdn.lower().rstrip("."),
                utc(when) if when else None,
                int(batch or 0),
                tuple(ipaddress.ip_address(a) for a in addrs.split(",") if a)))
        except ValueError as exc:
            raise TelemetryError(f"manifest line {n}: {exc}") from exc
    return out


# -- telemetry ----------------------------------------------------------------

class AsnTable:
    """Offline prefix -> origin ASN table with longest-prefix match.

    File format: ``prefix<whitespace>asn`` per line, ``#`` comments.
    """

    def __init__(self, rows: Iterable[tuple[str, int]] = ()):
        self._by_len: dict[tuple[int, int], dict[int, int]] = {}
        for prefix, asn in rows:
            net = ipaddress.ip_network(prefix, strict=False)
            self._by_len.setdefault((net.version, net.prefixlen), {})[int(net.network_address)] = int(asn)
        self._order = sorted(self._by_len, key=lambda k: -k[1])

    @classmethod
    def load(cls, path) -> "AsnTable":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.split("#")[0].strip()
                if line:
                    prefix, asn = line.split()[:2]
                    rows.append((prefix, int(asn.upper().removeprefix("AS"))))
        return cls(rows)

    def lookup(self, addr: IPAddress) -> Optional[int]:
        a, bits = int(addr), addr.max_prefixlen
        for version, plen in self._order:
            if version != addr.version:
                continue
            shift = bits - plen
            hit = self._by_len[(version, plen)].get((a >> shift) << shift)
            if hit is not None:
                return hit
        return None


def parse_event(line: str, asn_table: Optional[AsnTable] = None) -> HoneypotEvent:
    parts = line.rstrip("\n").split("\t")
    if len(parts) < 8:
        raise TelemetryError(f"expected at least 8 fields, got {len(parts)}")
    ms, kind, qname, qtype, src, asn, ecs, port = parts[:8]
    dst = parts[8] if len(parts) > 8 else ""
    try:
        src_ip = ipaddress.ip_address(src)
        src_asn = int(asn) if asn else (asn_table.lookup(src_ip) if asn_table else None)
        return HoneypotEvent(
            time=datetime.fromtimestamp(int(ms) / 1000, tz=timezone.utc),
            kind=EventKind(kind),
            src_ip=src_ip,
            qname=qname.lower().rstrip("."),
            qtype=qtype.upper(),
            src_asn=src_asn,
            ecs=ecs,
            dst_port=int(port) if port else None,
            dst_ip=ipaddress.ip_address(dst) if dst else None,
        )
    except ValueError as exc:
        raise TelemetryError(str(exc)) from exc


def read_telemetry(fh: TextIO, domains: Sequence[HoneypotDomain] = (),
                   asn_table: Optional[AsnTable] = None) -> list[HoneypotEvent]:
    """Parse a telemetry file; times must not decrease within it.

    With ``domains`` given, DNS queries for other names are dropped.
    """
    out: list[HoneypotEvent] = []
    last: Optional[datetime] = None
    dropped = 0
    for n, line in enumerate(fh, 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            ev = parse_event(line, asn_table)
        except TelemetryError as exc:
            raise TelemetryError(f"line {n}: {exc}") from exc
        if last is not None and ev.time < last:
            raise TelemetryError(f"line {n}: time goes backwards")
        last = ev.time
        if domains and ev.kind is EventKind.DNS_QUERY and domain_for(ev.qname, domains) is None:
            dropped += 1
            continue
        out.append(ev)
    if dropped:
        log.info("dropped %d queries for non-honeypot names", dropped)
    return out


def write_telemetry(events: Iterable[HoneypotEvent], fh: TextIO) -> None:
    for e in events:
        ms = round(e.time.timestamp() * 1000)
        fields = [str(ms), e.kind.value, e.qname, e.qtype, str(e.src_ip),
                  "" if e.src_asn is None else str(e.src_asn), e.ecs,
                  "" if e.dst_port is None else str(e.dst_port),
                  "" if e.dst_ip is None else str(e.dst_ip)]
        fh.write("\t".join(fields) + "\n")


def domain_for(qname: str, domains: Sequence[HoneypotDomain]) -> Optional[HoneypotDomain]:
    for d in domains:
        if d.covers(qname):
            return d
    return None


def _ordered(events: Iterable[HoneypotEvent]) -> list[HoneypotEvent]:
    return sorted(events, key=lambda e: (e.time, e.kind.value, str(e.src_ip), e.qname, e.qtype,
                                         e.dst_port or 0, str(e.dst_ip or "")))


# -- analysis -----------------------------------------------------------------

def filter_ca_validation(events: Iterable[HoneypotEvent],
                         domains: Sequence[HoneypotDomain]) -> list[HoneypotEvent]:
    """Drop the CA's validation traffic.

    Any source that queried a honeypot name before that name reached CT is
    treated as validation infrastructure, and all of its events go.
    """
    events = list(events)
    for d in domains:
        if d.ct_entry_time is None:
            raise ValueError(f"{d.fqdn} has no CT entry time")
    validators: set = set()
    for e in events:
        if e.kind is EventKind.DNS_QUERY:
            d = domain_for(e.qname, domains)
            if d is not None and e.time < d.ct_entry_time:
                validators.add(e.src_ip)
    kept = [e for e in events if e.src_ip not in validators]
    if validators:
        log.info("removed %d events from %d validation sources", len(events) - len(kept), len(validators))
    return kept


def normalize_ecs(text: str) -> Optional[IPNetwork]:
    """Truncate an ECS prefix to /24 (IPv4) or /56 (IPv6); None when unparseable."""
    if not text:
        return None
    try:
        net = ipaddress.ip_network(text, strict=False)
    except ValueError:
        log.warning("malformed ECS prefix %r ignored", text)
        return None
    target = ECS_V4_PREFIX if net.version == 4 else ECS_V6_PREFIX
    return net.supernet(new_prefix=target) if net.prefixlen > target else net


def _firsts(values: Iterable, limit: Optional[int] = None) -> tuple:
    out: list = []
    for v in values:
        if v is not None and v not in out:
            out.append(v)
            if limit is not None and len(out) == limit:
                break
    return tuple(out)


@dataclass(frozen=True)
class DomainReport:
    fqdn: str
    ct_entry_time: Optional[datetime]
    first_dns_time: Optional[datetime]
    delta_t: Optional[float]
    query_count: int
    distinct_as_count: int
    distinct_ecs_count: int
    first_3_ases: tuple[int, ...]
    first_http_time: Optional[datetime]
    http_delta: Optional[float]
    http_asns: tuple[int, ...]


def _touches(e: HoneypotEvent, d: HoneypotDomain) -> bool:
    return (bool(e.qname) and d.covers(e.qname)) or (e.dst_ip is not None and e.dst_ip in d.addresses)


def report(domains: Sequence[HoneypotDomain], events: Iterable[HoneypotEvent],
           http_ports: frozenset = HTTP_PORTS) -> list[DomainReport]:
    """Per-domain latency and source counts; ``http_delta`` is measured from the first DNS query."""
    events = _ordered(events)
    out = []
    for d in domains:
        dns = [e for e in events if e.kind is EventKind.DNS_QUERY and d.covers(e.qname)]
        http = [e for e in events if e.kind is EventKind.CONNECTION and e.dst_port in http_ports
                and _touches(e, d)]
        first = dns[0].time if dns else None
        delta = (first - d.ct_entry_time).total_seconds() if first and d.ct_entry_time else None
        ecs = {n for n in (normalize_ecs(e.ecs) for e in dns) if n is not None}
        first_http = http[0].time if http else None
        out.append(DomainReport(
            fqdn=d.fqdn,
            ct_entry_time=d.ct_entry_time,
            first_dns_time=first,
            delta_t=delta,
            query_count=len(dns),
            distinct_as_count=len({e.src_asn for e in dns if e.src_asn is not None}),
            distinct_ecs_count=len(ecs),
            first_3_ases=_firsts((e.src_asn for e in dns), 3),
            first_http_time=first_http,
            http_delta=(first_http - first).total_seconds() if first_http and first else None,
            http_asns=_firsts(e.src_asn for e in http),
        ))
    return out


def write_report(reports: Iterable[DomainReport], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["fqdn", "ct_entry", "first_dns", "delta_t_s", "Q", "AS", "CS", "first_3_ases",
                "first_http", "http_delta_s", "http_asns"])
    for r in reports:
        w.writerow([r.fqdn, iso(r.ct_entry_time), iso(r.first_dns_time),
                    "" if r.delta_t is None else f"{r.delta_t:g}",
                    r.query_count, r.distinct_as_count, r.distinct_ecs_count,
                    " ".join(map(str, r.first_3_ases)), iso(r.first_http_time),
                    "" if r.http_delta is None else f"{r.http_delta:g}",
                    " ".join(map(str, r.http_asns))])


@dataclass(frozen=True)
class EcsStats:
    prefix: IPNetwork
    count: int
    qtypes: frozenset
    asns: frozenset


def ecs_breakdown(events: Iterable[HoneypotEvent]) -> list[EcsStats]:
    """Per-prefix query counts and query types, busiest prefix first."""
    counts: Counter = Counter()
    qtypes: dict = defaultdict(set)
    asns: dict = defaultdict(set)
    for e in events:
        if e.kind is not EventKind.DNS_QUERY:
            continue
        net = normalize_ecs(e.ecs)
        if net is None:
            continue
        counts[net] += 1
        if e.qtype:
            qtypes[net].add(e.qtype)
        if e.src_asn is not None:
            asns[net].add(e.src_asn)
    ranked = sorted(counts, key=lambda n: (-counts[n], n.version, n))
    return [EcsStats(n, counts[n], frozenset(qtypes[n]), frozenset(asns[n])) for n in ranked]


@dataclass(frozen=True)
class ScanCorrelation:
    key_kind: str  # "ecs" or "querier"
    key: str
    first_query_time: datetime
    query_count: int
    sources: tuple[IPAddress, ...]
    ports: tuple[int, ...]
    targets: tuple[IPAddress, ...]
    first_lag: Optional[float]
    flagged: bool
    connections: tuple[HoneypotEvent, ...] = field(repr=False, default=())

    @property
    def port_count(self) -> int:
        return len(self.ports)


def correlate_scans(dns_events: Iterable[HoneypotEvent],
                    connection_events: Iterable[HoneypotEvent]) -> list[ScanCorrelation]:
    """Link connecting hosts to earlier honeypot lookups.

    Lookups are grouped by their ECS prefix (the client behind a public
    resolver) and by querier address. A connection whose source falls in a
    group counts for it; the group is flagged when a connection follows its
    first lookup. Groups with no connections produce no record.
    """
    groups: dict[tuple[str, str], list] = {}
    matchers: dict[tuple[str, str], Callable[[IPAddress], bool]] = {}
    for e in _ordered(dns_events):
        if e.kind is not EventKind.DNS_QUERY:
            continue
        keys = [("querier", str(e.src_ip))]
        net = normalize_ecs(e.ecs)
        if net is not None:
            keys.append(("ecs", str(net)))
            matchers.setdefault(("ecs", str(net)), lambda ip, net=net: ip.version == net.version and ip in net)
        matchers.setdefault(("querier", str(e.src_ip)), lambda ip, src=e.src_ip: ip == src)
        for k in keys:
            groups.setdefault(k, [e.time, 0])[1] += 1

    conns = [c for c in _ordered(connection_events) if c.kind is EventKind.CONNECTION]
    out = []
    for key in sorted(groups):
        first, qcount = groups[key]
        hits = [c for c in conns if matchers[key](c.src_ip)]
        if not hits:
            continue
        after = [c for c in hits if c.time >= first]
        out.append(ScanCorrelation(
            key_kind=key[0], key=key[1], first_query_time=first, query_count=qcount,
            sources=_firsts(c.src_ip for c in hits),
            ports=tuple(sorted({c.dst_port for c in hits if c.dst_port is not None})),
            targets=_firsts(c.dst_ip for c in hits),
            first_lag=(after[0].time - first).total_seconds() if after else None,
            flagged=bool(after),
            connections=tuple(hits),
        ))
    return out


def unmatched_connections(dns_events: Iterable[HoneypotEvent],
                          connection_events: Iterable[HoneypotEvent]) -> list[HoneypotEvent]:
    """Connections from sources tied to no lookup: background scanning."""
    connection_events = list(connection_events)
    linked = {id(c) for r in correlate_scans(dns_events, connection_events) for c in r.connections}
    return [c for c in connection_events if c.kind is EventKind.CONNECTION and id(c) not in linked]

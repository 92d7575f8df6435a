"""Existence checks for constructed FQDNs against random control names.

A candidate counts as a new FQDN only when the constructed name resolves to a
routable address and its random sibling in the same zone gets no address at
all; a sibling that answers marks a wildcard zone.
"""
from __future__ import annotations

import ipaddress
import logging
import random
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

from . import dns_wire
from .dns_names import CandidateFqdn

log = logging.getLogger(__name__)

MAX_CNAME_CHAIN = 10
DEFAULT_QPS = 100.0

# RFC 6890 special-purpose and other non-routable IPv4 space
DEFAULT_BOGONS = (
    "0.0.0.0/8", "10.0.0.0/8", "100.64.0.0/10", "127.0.0.0/8", "169.254.0.0/16",
    "172.16.0.0/12", "192.0.0.0/24", "192.0.2.0/24", "192.88.99.0/24", "192.168.0.0/16",
    "198.18.0.0/15", "198.51.100.0/24", "203.0.113.0/24", "224.0.0.0/4", "240.0.0.0/4",
    "255.255.255.255/32",
)


class Status(str, Enum):
    ANSWERED = "answered"
    NXDOMAIN = "nxdomain"
    SERVFAIL = "servfail"
    TIMEOUT = "timeout"


class Outcome(str, Enum):
    NEW_FQDN = "new_fqdn"
    WILDCARD_ZONE = "wildcard_zone"
    NONEXISTENT = "nonexistent"
    INDETERMINATE = "indeterminate"


class MismatchedPair(ValueError):
    pass


class RoutabilityTable:
    """Prefix set deciding which answer addresses count as valid.

    ``mode="allow"``: only addresses inside a listed prefix are valid (a
    border-router style table). ``mode="deny"``: listed prefixes are bogons
    and everything else is valid.
    """

    def __init__(self, prefixes: Iterable[str], mode: str = "allow"):
        if mode not in ("allow", "deny"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self._by_len: dict[int, set[int]] = {}
        self.prefixes: list[ipaddress.IPv4Network] = []
        for p in prefixes:
            net = ipaddress.IPv4Network(p.strip(), strict=False)
            self.prefixes.append(net)
            self._by_len.setdefault(net.prefixlen, set()).add(int(net.network_address))

    @classmethod
    def default(cls) -> "RoutabilityTable":
        return cls(DEFAULT_BOGONS, mode="deny")

    @classmethod
    def load(cls, path, mode: str = "allow") -> "RoutabilityTable":
        lines = Path(path).read_text().splitlines()
        return cls([ln.split("#")[0] for ln in lines if ln.split("#")[0].strip()], mode)

    def covers(self, addr: ipaddress.IPv4Address) -> bool:
        a = int(addr)
        for plen, nets in self._by_len.items():
            shift = 32 - plen
            if (a >> shift) << shift in nets:
                return True
        return False

    def valid(self, addr: ipaddress.IPv4Address) -> bool:
        hit = self.covers(addr)
        return hit if self.mode == "allow" else not hit


class TokenBucket:
    def __init__(self, rate: float, burst: Optional[float] = None):
        self.rate = rate
        self.capacity = burst if burst is not None else max(1.0, rate)
        self.tokens = self.capacity
        self.stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            time.sleep(wait)


@dataclass
class ResolverConfig:
    nameservers: list[tuple[str, int]]
    timeout: float = 2.0
    retries: int = 2
    qps: float = DEFAULT_QPS
    routing: RoutabilityTable = field(default_factory=RoutabilityTable.default)
    blocklist: frozenset = frozenset()
    max_cname: int = MAX_CNAME_CHAIN

    @staticmethod
    def parse_nameserver(spec: str) -> tuple[str, int]:
        host, _, port = spec.rpartition(":") if spec.count(":") == 1 else (spec, "", "53")
        return host, int(port or 53)


def load_blocklist(path) -> frozenset:
    return frozenset(ln.strip().lower().rstrip(".") for ln in Path(path).read_text().splitlines()
                     if ln.strip() and not ln.startswith("#"))


@dataclass(frozen=True)
class ResolutionResult:
    name: str
    status: Status
    addresses: tuple[ipaddress.IPv4Address, ...] = ()
    cname_chain: tuple[str, ...] = ()
    valid_addresses: tuple[ipaddress.IPv4Address, ...] = ()
    note: str = ""

    @property
    def has_valid(self) -> bool:
        return self.status is Status.ANSWERED and bool(self.valid_addresses)


class Resolver:
    """Stub resolver over UDP with retries, CNAME chasing and a qps cap."""

    def __init__(self, config: ResolverConfig):
        if not config.nameservers:
            raise ValueError("no nameservers configured")
        self.config = config
        self.bucket = TokenBucket(config.qps)
        self._rng = random.Random()

    def _blocked(self, name: str) -> bool:
        labels = name.split(".")
        return any(".".join(labels[i:]) in self.config.blocklist for i in range(len(labels)))

    def _exchange(self, name: str) -> tuple[Status, Optional[dns_wire.Message]]:
        cfg = self.config
        for attempt in range(cfg.retries + 1):
            server = cfg.nameservers[attempt % len(cfg.nameservers)]
            qid = self._rng.getrandbits(16)
            self.bucket.acquire()
            family = socket.AF_INET6 if ":" in server[0] else socket.AF_INET
            with socket.socket(family, socket.SOCK_DGRAM) as sock:
                sock.settimeout(cfg.timeout)
                try:
                    sock.sendto(dns_wire.build_query(qid, name), server)
                    while True:
                        data, _ = sock.recvfrom(65535)
                        try:
                            msg = dns_wire.parse_message(data)
                        except dns_wire.WireError:
                            continue
                        if msg.id == qid and msg.is_response:
                            break
                except socket.timeout:
                    if attempt < cfg.retries:
                        time.sleep(self._rng.uniform(0, 0.05))
                    continue
                except OSError as exc:
                    log.debug("query %s to %s failed: %s", name, server, exc)
                    return Status.SERVFAIL, None
            if msg.rcode == dns_wire.NXDOMAIN:
                return Status.NXDOMAIN, msg
            if msg.rcode != dns_wire.NOERROR:
                return Status.SERVFAIL, msg
            return Status.ANSWERED, msg
        return Status.TIMEOUT, None

    def resolve(self, name: str) -> ResolutionResult:
        name = name.lower().rstrip(".")
        if self._blocked(name):
            return ResolutionResult(name, Status.SERVFAIL, note="blocklisted")
        chain: list[str] = []
        seen = {name}
        current = name
        while True:
            status, msg = self._exchange(current)
            if status is not Status.ANSWERED:
                return ResolutionResult(name, status, cname_chain=tuple(chain))
            target = current
            while True:
                addrs = [rr.value for rr in msg.answers if rr.name == target and rr.rtype == dns_wire.A]
                if addrs:
                    valid = tuple(a for a in addrs if self.config.routing.valid(a))
                    return ResolutionResult(name, Status.ANSWERED, tuple(addrs), tuple(chain), valid)
                cnames = [rr.value for rr in msg.answers if rr.name == target and rr.rtype == dns_wire.CNAME]
                if not cnames:
                    break
                target = cnames[0]
                if target in seen:
                    return ResolutionResult(name, Status.SERVFAIL, cname_chain=tuple(chain),
                                            note="cname loop")
                seen.add(target)
                chain.append(target)
                if len(chain) > self.config.max_cname:
                    return ResolutionResult(name, Status.SERVFAIL, cname_chain=tuple(chain[:self.config.max_cname]),
                                            note=f"cname chain exceeds {self.config.max_cname}")
            if target == current:
                # NOERROR without data for this name
                return ResolutionResult(name, Status.ANSWERED, cname_chain=tuple(chain))
            current = target


@dataclass(frozen=True)
class Verdict:
    candidate: CandidateFqdn
    outcome: Outcome
    test: ResolutionResult
    control: ResolutionResult


def _zone(name: str) -> str:
    return name.partition(".")[2]


def judge(test: ResolutionResult, control: ResolutionResult,
          candidate: Optional[CandidateFqdn] = None) -> Verdict:
    if _zone(test.name) != _zone(control.name) or test.name == control.name:
        raise MismatchedPair(f"{test.name} and {control.name} are not a test/control pair")
    if candidate is None:
        candidate = CandidateFqdn(test.name, control.name, test.name.partition(".")[0], _zone(test.name))
    transient = (Status.SERVFAIL, Status.TIMEOUT)
    if test.status in transient or control.status in transient:
        outcome = Outcome.INDETERMINATE
    elif not test.has_valid:
        outcome = Outcome.NONEXISTENT
    elif control.status is Status.ANSWERED and control.addresses:
        # any default answer for a random label means the zone answers everything
        outcome = Outcome.WILDCARD_ZONE
    else:
        outcome = Outcome.NEW_FQDN
    return Verdict(candidate, outcome, test, control)


def verify_candidates(candidates: Sequence[CandidateFqdn], resolver: Resolver,
                      workers: int = 16) -> list[Verdict]:
    """Resolve every pair on a worker pool; verdicts come back in candidate order."""
    def one(c: CandidateFqdn) -> Verdict:
        return judge(resolver.resolve(c.test_name), resolver.resolve(c.control_name), c)

    if workers <= 1:
        return [one(c) for c in candidates]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, candidates))


def diff_against_known(verdicts: Iterable[Verdict], known: Iterable[str]) -> list[str]:
    known_set = {k.strip().lower().rstrip(".") for k in known}
    return [v.candidate.test_name for v in verdicts
            if v.outcome is Outcome.NEW_FQDN and v.candidate.test_name not in known_set]


def write_verdicts(verdicts: Iterable[Verdict], fh: TextIO) -> None:
    for v in verdicts:
        addrs = ",".join(str(a) for a in v.test.valid_addresses)
        fh.write(f"{v.candidate.test_name}\t{v.outcome.value}\t{addrs}\n")

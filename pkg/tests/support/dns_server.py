"""Tiny authoritative UDP DNS server for resolver tests."""
from __future__ import annotations

import ipaddress
import socket
import threading
from collections import Counter

from ctleak import dns_wire


class FixtureDns:
    """Answers A queries from an in-memory zone map.

    ``a``: name -> list of IPv4 strings; ``cname``: name -> target;
    ``wildcards``: zone -> IPv4 answered for any name under it;
    ``servfail`` / ``drop``: names that get SERVFAIL or no reply.
    """

    def __init__(self, a=None, cname=None, wildcards=None, servfail=(), drop=()):
        self.a = {k.lower(): [ipaddress.IPv4Address(x) for x in v] for k, v in (a or {}).items()}
        self.cname = {k.lower(): v.lower() for k, v in (cname or {}).items()}
        self.wildcards = {k.lower(): ipaddress.IPv4Address(v) for k, v in (wildcards or {}).items()}
        self.servfail = set(servfail)
        self.drop = set(drop)
        self.queries: Counter = Counter()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(("127.0.0.1", 0))
        self._sock.settimeout(0.05)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def start(self) -> "FixtureDns":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join()
        self._sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _lookup(self, name: str):
        if name in self.a:
            return [dns_wire.Record(name, dns_wire.A, 60, ip) for ip in self.a[name]]
        if name in self.cname:
            return [dns_wire.Record(name, dns_wire.CNAME, 60, self.cname[name])]
        labels = name.split(".")
        for i in range(1, len(labels)):
            zone = ".".join(labels[i:])
            if zone in self.wildcards:
                return [dns_wire.Record(name, dns_wire.A, 60, self.wildcards[zone])]
        return None

    def answer(self, qname: str) -> tuple[int, list]:
        if qname in self.servfail:
            return dns_wire.SERVFAIL, []
        out, name, hops = [], qname, 0
        # follow in-zone CNAMEs a bounded number of times, like an authoritative server would
        while hops < 4:
            rrs = self._lookup(name)
            if rrs is None:
                return (dns_wire.NXDOMAIN if not out else dns_wire.NOERROR), out
            out.extend(rrs)
            if rrs[0].rtype != dns_wire.CNAME:
                break
            name, hops = rrs[0].value, hops + 1
        return dns_wire.NOERROR, out

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                data, peer = self._sock.recvfrom(4096)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                query = dns_wire.parse_message(data)
            except dns_wire.WireError:
                continue
            qname = query.questions[0][0] if query.questions else ""
            self.queries[qname] += 1
            if qname in self.drop:
                continue
            rcode, answers = self.answer(qname)
            self._sock.sendto(dns_wire.build_response(query, rcode, answers), peer)

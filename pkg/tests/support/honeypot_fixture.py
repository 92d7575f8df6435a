"""Synthetic telemetry for honeypot tests.

``row_a`` rebuilds the first published honeypot domain: CT entry 2018-04-12
14:16:59, first non-CA query 197 s later, 55 queries from 14 ASes carrying
4 distinct client subnets, first HTTPS connection 73 minutes after the first
query. ``ecs_and_scanner`` rebuilds the client-subnet distribution (top three
prefixes used 115, 25 and 10 times, nine more used once or twice) and the host
that scanned 30 ports across two machines.
"""
from __future__ import annotations

import ipaddress
from datetime import datetime, timedelta, timezone

from ctleak.honeypot import EventKind, HoneypotDomain, HoneypotEvent

T = lambda s: datetime.fromisoformat(s).replace(tzinfo=timezone.utc)  # noqa: E731
ip = ipaddress.ip_address

GOOGLE, ONE_AND_ONE, DETEQUE, DO, AWS, QUASI, CA_AS = 15169, 8560, 54054, 14061, 16509, 29073, 64500
HONEYPOT_V4 = (ip("192.0.2.10"), ip("192.0.2.11"))

ROW_A = dict(ct=T("2018-04-12 14:16:59"), first_dns=T("2018-04-12 14:20:16"),
             delta_t=197, Q=55, AS=14, CS=4, first3=(GOOGLE, ONE_AND_ONE, DETEQUE),
             http=T("2018-04-12 15:33:49"), http_asns=(DO, AWS))


def dns(t, qname, src, asn, ecs="", qtype="A"):
    return HoneypotEvent(t, EventKind.DNS_QUERY, ip(src), qname, qtype, asn, ecs)


def conn(t, src, asn, port, dst=HONEYPOT_V4[0], qname=""):
    return HoneypotEvent(t, EventKind.CONNECTION, ip(src), qname, "", asn, "", port, dst)


def row_a(zone="hp.example.net"):
    dom = HoneypotDomain(f"k3q9z0x7m2ab.{zone}", ROW_A["ct"], 1, (HONEYPOT_V4[0], ip("2001:db8::a")))
    name = dom.fqdn
    t0 = ROW_A["first_dns"]
    ev = [
        # CA validation: before logging and again afterwards from the same resolver
        dns(T("2018-04-12 14:15:40"), name, "203.0.113.53", CA_AS),
        dns(T("2018-04-12 14:15:41"), "_acme-challenge." + name, "203.0.113.53", CA_AS, qtype="TXT"),
        dns(T("2018-04-12 14:21:00"), name, "203.0.113.53", CA_AS),
    ]
    # Google public DNS with four client subnets
    subnets = ["198.18.7.0/24", "198.18.9.0/24", "100.70.1.0/24", "100.70.2.128/25"]
    ev.append(dns(t0, name, "172.253.1.1", GOOGLE, subnets[0]))
    ev.append(dns(t0 + timedelta(seconds=20), name, "212.227.1.1", ONE_AND_ONE))
    ev.append(dns(t0 + timedelta(seconds=45), name, "185.1.1.1", DETEQUE))
    others = [AWS, DO, 36692, 24940, 12876, 19397, 44050, 3320, 7922, 4134, 174]
    assert len({GOOGLE, ONE_AND_ONE, DETEQUE, *others}) == 14
    for i, asn in enumerate(others):
        ev.append(dns(t0 + timedelta(minutes=3 + i), name, f"100.{64 + i}.0.9", asn))
    n = len(ev) - 3
    k = 0
    while n < ROW_A["Q"]:
        ev.append(dns(t0 + timedelta(minutes=20 + k), name, "172.253.1.1", GOOGLE,
                      subnets[k % 4], qtype=["A", "AAAA"][k % 2]))
        n += 1
        k += 1
    ev.append(conn(ROW_A["http"], "159.89.1.1", DO, 443, qname=name))
    ev.append(conn(ROW_A["http"] + timedelta(minutes=9), "54.1.1.1", AWS, 80, qname=name))
    # a port-22 probe to the honeypot address is not HTTP(S)
    ev.append(conn(ROW_A["http"] - timedelta(minutes=5), "54.1.1.2", AWS, 22))
    return dom, sorted(ev, key=lambda e: e.time)


def ecs_and_scanner(zone="hp.example.net"):
    doms = [HoneypotDomain(f"{c * 12}.{zone}", T("2018-04-30 13:00:00"), 2) for c in "abcdefghijk"]
    start = T("2018-04-30 13:02:00")
    top = [("100.80.1.0/24", 115), ("100.81.7.0/24", 25), ("100.82.3.0/24", 10)]
    tail = [(f"100.90.{i}.0/24", 2 if i < 8 else 1) for i in range(9)]
    ev = []
    t = start
    qtypes = ["A", "AAAA", "MX", "NS", "SOA"]
    for prefix, count in top + tail:
        for j in range(count):
            d = doms[j % len(doms)]
            # querier reports a /32 client address in some cases; the /24 is what counts
            ecs = prefix if j % 3 else prefix.replace(".0/24", ".77/32")
            qt = qtypes[j % 5] if prefix.startswith("100.80.") else "A"
            ev.append(dns(t, d.fqdn, "172.253.1.1", GOOGLE, ecs, qt))
            t += timedelta(seconds=7)
    # the host behind the 25-query subnet scans 30 ports across both machines
    scan_t = t + timedelta(minutes=30)
    ports = list(range(20, 40)) + [80, 443, 8080, 8443, 3389, 5900, 3306, 5432, 6379, 27017]
    for i, port in enumerate(ports):
        for dst in HONEYPOT_V4:
            ev.append(conn(scan_t + timedelta(seconds=i), "100.81.7.44", QUASI, port, dst))
    # one host from each of three other subnets connects to 443 only
    for k, prefix in enumerate(["100.80.1.", "100.82.3.", "100.90.0."]):
        ev.append(conn(scan_t + timedelta(minutes=5 + k), prefix + "9", 24940, 443))
    # unrelated background scanner
    ev.append(conn(scan_t, "100.99.99.99", 4134, 23))
    return doms, sorted(ev, key=lambda e: e.time)

"""Rule-based flagging of look-alike names for well-known services."""
from __future__ import annotations

import csv
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, TextIO

from .dns_names import FqdnRecord


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceRule:
    service: str
    patterns: tuple[re.Pattern, ...]
    legit_bases: frozenset

    @classmethod
    def build(cls, service: str, patterns: Iterable[str], legit_bases: Iterable[str] = ()) -> "ServiceRule":
        compiled = []
        for p in patterns:
            try:
                compiled.append(re.compile(p, re.IGNORECASE))
            except re.error as exc:
                raise RuleError(f"{service}: bad pattern {p!r}: {exc}") from exc
        if not compiled:
            raise RuleError(f"{service}: no patterns")
        return cls(service, tuple(compiled), frozenset(b.lower().rstrip(".") for b in legit_bases))


@dataclass(frozen=True)
class PhishFinding:
    fqdn: str
    service: str
    pattern: str
    public_suffix: str


def rules_from_json(doc) -> list[ServiceRule]:
    items = doc["rules"] if isinstance(doc, dict) else doc
    out = []
    for item in items:
        try:
            out.append(ServiceRule.build(item["service"], item["patterns"], item.get("legit_bases", ())))
        except KeyError as exc:
            raise RuleError(f"rule missing field {exc}") from exc
    return out


def load_rules(path=None) -> list[ServiceRule]:
    """Load rules from a JSON file, or the bundled defaults when ``path`` is None."""
    if path is None:
        text = resources.files("ctleak").joinpath("data/phishing_rules.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return rules_from_json(json.loads(text))


def match(record: FqdnRecord, rules: Iterable[ServiceRule]) -> list[PhishFinding]:
    name = record.fqdn.lower()
    out = []
    for rule in rules:
        if record.base_domain in rule.legit_bases:
            continue
        for pat in rule.patterns:
            if pat.search(name):
                out.append(PhishFinding(name, rule.service, pat.pattern, record.public_suffix))
                break
    return out


def scan(records: Iterable[FqdnRecord], rules: list[ServiceRule]) -> list[PhishFinding]:
    """Findings for a name stream, deduplicated and sorted for stable output."""
    found = {f for rec in records for f in match(rec, rules)}
    return sorted(found, key=lambda f: (f.service, f.fqdn))


def suffix_breakdown(findings: Iterable[PhishFinding]) -> dict[str, dict[str, tuple[int, float]]]:
    """service -> suffix -> (count, share of that service's findings)."""
    counts: dict[str, Counter] = defaultdict(Counter)
    for f in findings:
        counts[f.service][f.public_suffix] += 1
    out = {}
    for service, c in sorted(counts.items()):
        total = sum(c.values())
        out[service] = {s: (n, n / total) for s, n in sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))}
    return out


def write_findings(findings: Iterable[PhishFinding], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["fqdn", "service", "pattern", "suffix"])
    for f in findings:
        w.writerow([f.fqdn, f.service, f.pattern, f.public_suffix])

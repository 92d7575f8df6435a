"""Public-suffix-aware name splitting, subdomain label statistics, and
construction of candidate FQDNs with random control names."""
from __future__ import annotations

import logging
import random
import secrets
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, TextIO

log = logging.getLogger(__name__)

CONTROL_ALPHABET = string.ascii_lowercase + string.digits
CONTROL_LENGTH = 16


class NotRegistrable(ValueError):
    """The name is itself a public suffix."""


class PublicSuffixSet:
    """Rules from a Public Suffix List file.

    Normal, wildcard (``*.ck``) and exception (``!www.ck``) rules; matching is
    longest-rule-wins with exceptions taking precedence, and an unlisted TLD
    falls back to the implicit ``*`` rule.
    """

    def __init__(self, rules: Iterable[str]):
        self.rules: set[str] = set()
        self.wildcards: set[str] = set()
        self.exceptions: set[str] = set()
        for raw in rules:
            rule = raw.strip().split()[0].lower() if raw.strip() else ""
            if not rule or rule.startswith("//"):
                continue
            if rule.startswith("!"):
                self.exceptions.add(rule[1:])
            elif rule.startswith("*."):
                self.wildcards.add(rule[2:])
            else:
                self.rules.add(rule)

    @classmethod
    def load(cls, path) -> "PublicSuffixSet":
        with open(path, encoding="utf-8") as fh:
            return cls(fh)

    def public_suffix(self, name: str) -> str:
        labels = name.lower().rstrip(".").split(".")
        n = len(labels)
        for i in range(n):
            if ".".join(labels[i:]) in self.exceptions:
                return ".".join(labels[i + 1:])
        for i in range(n):
            cand = ".".join(labels[i:])
            if cand in self.rules:
                return cand
            if i + 1 < n and ".".join(labels[i + 1:]) in self.wildcards:
                return cand
        return labels[-1]


@dataclass(frozen=True)
class FqdnRecord:
    fqdn: str
    public_suffix: str
    base_domain: str
    labels: tuple[str, ...]

    def join(self) -> str:
        return ".".join(self.labels + (self.base_domain,))


def split(fqdn: str, psl: PublicSuffixSet) -> FqdnRecord:
    name = fqdn.lower().rstrip(".")
    suffix = psl.public_suffix(name)
    if name == suffix:
        raise NotRegistrable(f"{fqdn} is a public suffix")
    head = name[: -len(suffix) - 1].split(".")
    base = f"{head[-1]}.{suffix}"
    if head[-1] == "*":
        raise NotRegistrable(f"{fqdn} has a wildcard in place of a registrable label")
    return FqdnRecord(name, suffix, base, tuple(head[:-1]))


def split_many(names: Iterable[str], psl: PublicSuffixSet) -> list[FqdnRecord]:
    """Split unique names, dropping (and logging) bare public suffixes."""
    out, seen = [], set()
    for name in names:
        if name in seen:
            continue
        seen.add(name)
        try:
            out.append(split(name, psl))
        except NotRegistrable as exc:
            log.debug("skipping %s", exc)
    return out


@dataclass
class LabelStats:
    totals: Counter = field(default_factory=Counter)
    by_suffix: Counter = field(default_factory=Counter)  # (suffix, label) -> count

    def merge(self, other: "LabelStats") -> "LabelStats":
        return LabelStats(self.totals + other.totals, self.by_suffix + other.by_suffix)

    def suffixes_for(self, label: str) -> Counter:
        return Counter({s: c for (s, lab), c in self.by_suffix.items() if lab == label})


def label_stats(records: Iterable[FqdnRecord]) -> LabelStats:
    """Count subdomain labels once per position per unique FQDN.

    Wildcard labels (``*``) are not label occurrences.
    """
    stats = LabelStats()
    seen: set[str] = set()
    for rec in records:
        if rec.fqdn in seen:
            continue
        seen.add(rec.fqdn)
        for label in rec.labels:
            if label == "*":
                continue
            stats.totals[label] += 1
            stats.by_suffix[(rec.public_suffix, label)] += 1
    return stats


def top_label_per_suffix(stats: LabelStats) -> dict[str, str]:
    """Most frequent label per suffix; ties go to the lexicographically smaller label."""
    best: dict[str, tuple[int, str]] = {}
    for (suffix, label), count in stats.by_suffix.items():
        cur = best.get(suffix)
        if cur is None or count > cur[0] or (count == cur[0] and label < cur[1]):
            best[suffix] = (count, label)
    return {s: lab for s, (_, lab) in sorted(best.items())}


@dataclass(frozen=True)
class CandidateConfig:
    min_label_count: int = 100_000
    top_suffixes_per_label: int = 10
    excluded_suffixes: frozenset = frozenset({"com", "net", "org"})


@dataclass(frozen=True)
class CandidateFqdn:
    test_name: str
    control_name: str
    label: str
    base_domain: str


def control_label(rng: random.Random) -> str:
    return "".join(rng.choice(CONTROL_ALPHABET) for _ in range(CONTROL_LENGTH))


def construct_candidates(stats: LabelStats, domain_list: Iterable[str], psl: PublicSuffixSet,
                         config: CandidateConfig = CandidateConfig(),
                         observed: Iterable[str] = (),
                         seed: Optional[int] = None) -> list[CandidateFqdn]:
    """Prepend frequent labels to registrable domains in each label's top suffixes.

    ``observed`` holds FQDNs already seen in CT; those are not re-tested.
    With ``seed`` the control names are reproducible, otherwise they come
    from the system entropy source.
    """
    rng: random.Random = random.Random(seed) if seed is not None else secrets.SystemRandom()
    seen = {n.lower() for n in observed}

    by_suffix: dict[str, list[str]] = defaultdict(list)
    for dom in domain_list:
        dom = dom.strip().lower().rstrip(".")
        if not dom:
            continue
        try:
            rec = split(dom, psl)
        except NotRegistrable:
            log.warning("domain list entry %s is a public suffix, skipped", dom)
            continue
        if rec.labels:
            log.warning("domain list entry %s is not a registrable domain, skipped", dom)
            continue
        by_suffix[rec.public_suffix].append(rec.base_domain)

    labels = sorted((lab for lab, c in stats.totals.items() if c >= config.min_label_count),
                    key=lambda lab: (-stats.totals[lab], lab))
    per_label_suffixes: dict[str, Counter] = defaultdict(Counter)
    for (suffix, lab), count in stats.by_suffix.items():
        per_label_suffixes[lab][suffix] = count

    out: list[CandidateFqdn] = []
    emitted: set[str] = set()
    for lab in labels:
        ranked = sorted((s for s in per_label_suffixes[lab] if s not in config.excluded_suffixes),
                        key=lambda s: (-per_label_suffixes[lab][s], s))
        for suffix in ranked[:config.top_suffixes_per_label]:
            for base in by_suffix.get(suffix, ()):
                test = f"{lab}.{base}"
                if test in seen or test in emitted:
                    continue
                emitted.add(test)
                out.append(CandidateFqdn(test, f"{control_label(rng)}.{base}", lab, base))
    return out


def write_candidates(cands: Iterable[CandidateFqdn], fh: TextIO) -> None:
    for c in cands:
        fh.write(f"{c.test_name}\t{c.control_name}\n")


def read_candidates(fh: TextIO) -> list[CandidateFqdn]:
    out = []
    for n, line in enumerate(fh, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        test, control = line.split("\t")
        lab, _, base = test.partition(".")
        c_lab, _, c_base = control.partition(".")
        if base != c_base:
            raise ValueError(f"line {n}: test and control are in different zones")
        out.append(CandidateFqdn(test, control, lab, base))
    return out


def read_domain_list(path) -> list[str]:
    return [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]

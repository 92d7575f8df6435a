"""Per-CA precertificate growth, daily shares and CA x log distribution.

All three views come from one kind of record, an :class:`Observation` per log
entry: which CA issued it, the UTC day of the log's timestamp, which log it is
in and whether it is a precertificate. Only precertificates are counted.
"""
from __future__ import annotations

import calendar
import csv
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Iterable, Mapping, Optional, TextIO

from cryptography import x509
from cryptography.x509.oid import NameOID

from .ctlog_client import RawEntry
from .entry_store import EntryStore
from .tlsenc import PRECERT_ENTRY, DecodeError

log = logging.getLogger(__name__)

OTHER = "other"
UNKNOWN_CA = "unknown"
DEFAULT_TOP_N = 5


@dataclass(frozen=True)
class Observation:
    ca: str
    day: date
    log: str
    is_precert: bool


def _norm(text: Optional[str]) -> str:
    return re.sub(r"\s+", " ", text or "").strip().lower()


def load_aliases(path) -> dict[str, str]:
    """JSON object mapping issuer O or CN variants to a canonical CA name."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return {_norm(k): _norm(v) for k, v in doc.items()}


def ca_key(org: Optional[str], cn: Optional[str] = None, aliases: Mapping[str, str] = {}) -> str:
    for cand in (_norm(org), _norm(cn)):
        if cand and cand in aliases:
            return aliases[cand]
    return _norm(org) or _norm(cn) or UNKNOWN_CA


def _issuer_fields(der: bytes) -> tuple[Optional[str], Optional[str]]:
    issuer = x509.load_der_x509_certificate(der).issuer

    def first(oid):
        attrs = issuer.get_attributes_for_oid(oid)
        return str(attrs[0].value) if attrs else None
    return first(NameOID.ORGANIZATION_NAME), first(NameOID.COMMON_NAME)


def observe(entry: RawEntry, log_name: str, aliases: Mapping[str, str] = {}) -> Optional[Observation]:
    """Observation for one log entry, None when the entry cannot be parsed."""
    try:
        etype, der, ts = entry.certificate()
        org, cn = _issuer_fields(der)
    except (DecodeError, ValueError) as exc:
        log.debug("entry %d of %s unparsed: %s", entry.index, log_name, exc)
        return None
    day = datetime.fromtimestamp(ts / 1000, tz=timezone.utc).date()
    return Observation(ca_key(org, cn, aliases), day, log_name, etype == PRECERT_ENTRY)


def observations_from_store(store: EntryStore, log_names: Mapping[bytes, str] = {},
                            aliases: Mapping[str, str] = {}) -> list[Observation]:
    out = []
    for lid in store.log_ids():
        name = log_names.get(lid, lid.hex())
        for e in store.scan(lid):
            obs = observe(e.raw(), name, aliases)
            if obs is not None:
                out.append(obs)
    return out


@dataclass
class Tally:
    """Precert counts keyed by (ca, day, log); merging is plain addition."""
    counts: Counter = field(default_factory=Counter)
    cas: set = field(default_factory=set)
    days: set = field(default_factory=set)
    logs: set = field(default_factory=set)

    @classmethod
    def of(cls, observations: Iterable[Observation]) -> "Tally":
        t = cls()
        for o in observations:
            t.cas.add(o.ca)
            t.days.add(o.day)
            t.logs.add(o.log)
            if o.is_precert:
                t.counts[(o.ca, o.day, o.log)] += 1
        return t

    def merge(self, other: "Tally") -> "Tally":
        return Tally(self.counts + other.counts, self.cas | other.cas,
                     self.days | other.days, self.logs | other.logs)

    def per_ca_day(self) -> Counter:
        out: Counter = Counter()
        for (ca, day, _), n in self.counts.items():
            out[(ca, day)] += n
        return out

    def ca_totals(self) -> Counter:
        out: Counter = Counter({ca: 0 for ca in self.cas})
        for (ca, _, _), n in self.counts.items():
            out[ca] += n
        return out


def _tally(data) -> Tally:
    return data if isinstance(data, Tally) else Tally.of(data)


def top_cas(tally: Tally, top_n: Optional[int]) -> list[str]:
    totals = tally.ca_totals()
    ranked = sorted(totals, key=lambda ca: (-totals[ca], ca))
    return ranked if top_n is None else ranked[:top_n]


def _bucket(tally: Tally, top_n: Optional[int]):
    keep = set(top_cas(tally, top_n))
    rest = set(tally.cas) - keep
    return keep, rest, (lambda ca: ca if ca in keep else OTHER)


@dataclass(frozen=True)
class GrowthSeries:
    ca: str
    points: tuple[tuple[date, int], ...]

    @property
    def total(self) -> int:
        return self.points[-1][1] if self.points else 0


def _day_range(days: Iterable[date]) -> list[date]:
    days = sorted(days)
    if not days:
        return []
    n = (days[-1] - days[0]).days + 1
    return [days[0] + timedelta(i) for i in range(n)]


def cumulative_growth(data, top_n: Optional[int] = DEFAULT_TOP_N) -> list[GrowthSeries]:
    """One daily cumulative series per top CA (by precert total), the rest merged into "other".

    Days run from the first to the last observed entry, so the series are
    aligned and a CA with no precertificates gets an all-zero series.
    """
    tally = _tally(data)
    if not tally.cas:
        return []
    keep, rest, bucket = _bucket(tally, top_n)
    per_day: Counter = Counter()
    for (ca, day), n in tally.per_ca_day().items():
        per_day[(bucket(ca), day)] += n
    names = top_cas(tally, top_n) + ([OTHER] if rest else [])
    days = _day_range(tally.days)
    out = []
    for ca in names:
        running, pts = 0, []
        for d in days:
            running += per_day[(ca, d)]
            pts.append((d, running))
        out.append(GrowthSeries(ca, tuple(pts)))
    return out


def daily_rates(data, top_n: Optional[int] = None) -> dict[date, dict[str, float]]:
    """Share of each CA in each day's precerts; days without precerts are omitted."""
    tally = _tally(data)
    _, _, bucket = _bucket(tally, top_n)
    per_day: dict[date, Counter] = {}
    for (ca, day), n in tally.per_ca_day().items():
        per_day.setdefault(day, Counter())[bucket(ca)] += n
    out = {}
    for day in sorted(per_day):
        c = per_day[day]
        total = sum(c.values())
        if total:
            out[day] = {ca: c[ca] / total for ca in sorted(c) if c[ca]}
    return out


@dataclass(frozen=True)
class CaLogMatrix:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    cells: Mapping[tuple[str, str], int]

    def cell(self, ca: str, log_name: str) -> int:
        return self.cells.get((ca, log_name), 0)

    def row_sum(self, ca: str) -> int:
        return sum(self.cell(ca, c) for c in self.cols)

    def nonzero(self, ca: str) -> int:
        return sum(1 for c in self.cols if self.cell(ca, c))


def parse_window(text: str) -> tuple[date, date]:
    """``YYYY-MM`` (whole month) or ``YYYY-MM-DD:YYYY-MM-DD`` (inclusive)."""
    if re.fullmatch(r"\d{4}-\d{2}", text):
        y, m = map(int, text.split("-"))
        return date(y, m, 1), date(y, m, calendar.monthrange(y, m)[1])
    start, sep, end = text.partition(":")
    if not sep:
        raise ValueError(f"bad window {text!r}")
    lo, hi = date.fromisoformat(start), date.fromisoformat(end)
    if hi < lo:
        raise ValueError(f"window {text!r} ends before it starts")
    return lo, hi


def ca_log_matrix(data, window: Optional[tuple[date, date]] = None) -> CaLogMatrix:
    tally = _tally(data)
    cells: Counter = Counter()
    for (ca, day, log_name), n in tally.counts.items():
        if window is None or window[0] <= day <= window[1]:
            cells[(ca, log_name)] += n
    rows = tuple(sorted({ca for ca, _ in cells}))
    return CaLogMatrix(rows, tuple(sorted(tally.logs)), dict(cells))


def write_growth(series: Iterable[GrowthSeries], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["date", "ca", "cumulative"])
    for s in series:
        for d, n in s.points:
            w.writerow([d.isoformat(), s.ca, n])


def write_rates(rates: Mapping[date, Mapping[str, float]], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["date", "ca", "share"])
    for d, shares in rates.items():
        for ca, share in shares.items():
            w.writerow([d.isoformat(), ca, repr(share)])


def write_matrix(matrix: CaLogMatrix, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["ca", "log", "count"])
    for ca in matrix.rows:
        for col in matrix.cols:
            w.writerow([ca, col, matrix.cell(ca, col)])

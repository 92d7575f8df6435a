"""Append-only JSON Lines store, one file per log.

Each line holds ``index``, ``leaf_input`` and ``extra_data`` (base64) and
``sha256``, the hex digest of the logged certificate's DER ("" when the
entry could not be parsed). Line number equals entry index.
"""
from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
from dataclasses import dataclass
from itertools import islice
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .ctlog_client import RawEntry
from .tlsenc import DecodeError


class StoreError(Exception):
    pass


class GapError(StoreError):
    pass


class ReplayMismatch(StoreError):
    pass


@dataclass(frozen=True)
class StoredEntry:
    index: int
    leaf_input: bytes
    extra_data: bytes
    log_id: bytes
    sha256: str

    @property
    def parse_ok(self) -> bool:
        return bool(self.sha256)

    @property
    def fingerprint(self) -> Optional[bytes]:
        return bytes.fromhex(self.sha256) if self.sha256 else None

    def raw(self) -> RawEntry:
        return RawEntry(self.index, self.leaf_input, self.extra_data, self.log_id)


def _cert_digest(entry: RawEntry) -> str:
    try:
        _, der, _ = entry.certificate()
    except (DecodeError, ValueError):
        return ""
    return hashlib.sha256(der).hexdigest() if der else ""


class EntryStore:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._hwm: dict[bytes, int] = {}
        self._locks: dict[bytes, threading.Lock] = {}
        self._meta = threading.Lock()

    def path(self, log_id: bytes) -> Path:
        return self.directory / f"{log_id.hex()}.jsonl"

    def log_ids(self) -> list[bytes]:
        return sorted(bytes.fromhex(p.stem) for p in self.directory.glob("*.jsonl"))

    def _lock(self, log_id: bytes) -> threading.Lock:
        with self._meta:
            return self._locks.setdefault(log_id, threading.Lock())

    def _committed_lines(self, log_id: bytes) -> Iterator[str]:
        p = self.path(log_id)
        if not p.exists():
            return
        with p.open("r", encoding="ascii") as fh:
            for line in fh:
                if not line.endswith("\n"):
                    break  # writer mid-line; readers see the committed prefix only
                yield line

    def high_water_mark(self, log_id: bytes) -> int:
        """Index of the last committed entry, -1 when empty."""
        with self._meta:
            if log_id in self._hwm:
                return self._hwm[log_id]
        n = sum(1 for _ in self._committed_lines(log_id))
        with self._meta:
            self._hwm.setdefault(log_id, n - 1)
            return self._hwm[log_id]

    def append(self, entries: Iterable[RawEntry]) -> int:
        entries = list(entries)
        if not entries:
            return 0
        log_id = entries[0].log_id
        if any(e.log_id != log_id for e in entries):
            raise StoreError("append batch mixes logs")
        with self._lock(log_id):
            hwm = self.high_water_mark(log_id)
            replayed = [e for e in entries if e.index <= hwm]
            fresh = [e for e in entries if e.index > hwm]
            if replayed:
                self._check_replay(replayed)
            expected = hwm + 1
            for e in fresh:
                if e.index != expected:
                    raise GapError(f"expected index {expected}, got {e.index}")
                expected += 1
            if not fresh:
                return 0
            lines = [json.dumps({
                "index": e.index,
                "leaf_input": base64.b64encode(e.leaf_input).decode(),
                "extra_data": base64.b64encode(e.extra_data).decode(),
                "sha256": _cert_digest(e),
            }) + "\n" for e in fresh]
            with self.path(log_id).open("a", encoding="ascii") as fh:
                fh.writelines(lines)
                fh.flush()
                os.fsync(fh.fileno())
            with self._meta:
                self._hwm[log_id] = fresh[-1].index
            return len(fresh)

    def _check_replay(self, replayed: list[RawEntry]) -> None:
        lo, hi = replayed[0].index, replayed[-1].index
        stored = {s.index: s for s in self.scan(replayed[0].log_id, lo, hi + 1)}
        for e in replayed:
            s = stored.get(e.index)
            if s is None or s.leaf_input != e.leaf_input or s.extra_data != e.extra_data:
                raise ReplayMismatch(f"entry {e.index} differs from the stored copy")

    def scan(self, log_id: bytes, start: int = 0, stop: Optional[int] = None) -> Iterator[StoredEntry]:
        """Yield entries with ``start <= index < stop`` in index order."""
        count = self.high_water_mark(log_id) + 1
        stop = count if stop is None else stop
        if start < 0 or stop < start or stop > count:
            raise IndexError(f"range [{start}, {stop}) outside stored [0, {count})")
        for line in islice(self._committed_lines(log_id), start, stop):
            doc = json.loads(line)
            yield StoredEntry(doc["index"], base64.b64decode(doc["leaf_input"]),
                              base64.b64decode(doc["extra_data"]), log_id, doc["sha256"])

    def unique_certificates(self, log_ids: Optional[Iterable[bytes]] = None) -> set[str]:
        seen: set[str] = set()
        for lid in (self.log_ids() if log_ids is None else log_ids):
            seen.update(e.sha256 for e in self.scan(lid) if e.sha256)
        return seen

    def stats(self) -> dict[bytes, dict[str, int]]:
        out = {}
        for lid in self.log_ids():
            entries = unparsed = 0
            certs: set[str] = set()
            for e in self.scan(lid):
                entries += 1
                if e.sha256:
                    certs.add(e.sha256)
                else:
                    unparsed += 1
            out[lid] = {"entries": entries, "unique_certificates": len(certs), "unparsed": unparsed}
        return out

"""RFC 6962 v1 HTTP client: signed tree heads, entry ranges, and audited fetches."""
from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import TYPE_CHECKING, Iterator, Optional
from urllib.parse import urljoin, urlparse

import requests

from . import merkle
from .signing import log_id_for, verify
from .tlsenc import (
    PRECERT_ENTRY, DecodeError, DigitallySigned, decode_extra_data, decode_leaf,
    tree_head_input,
)

if TYPE_CHECKING:
    from .entry_store import EntryStore

log = logging.getLogger(__name__)

DEFAULT_BATCH = 256
MAX_RETRIES = 5


class CTLogError(Exception):
    pass


class TransportError(CTLogError):
    pass


class MalformedResponse(CTLogError):
    pass


class SignatureInvalid(CTLogError):
    pass


class LogMisbehavior(CTLogError):
    pass


class TreeSizeRegression(LogMisbehavior):
    pass


class AuditFailure(LogMisbehavior):
    pass


@dataclass(frozen=True)
class LogDescriptor:
    name: str
    url: str
    public_key: bytes
    log_id: bytes = b""
    chrome_inclusion_date: Optional[date] = None

    def __post_init__(self):
        expected = log_id_for(self.public_key)
        if not self.log_id:
            object.__setattr__(self, "log_id", expected)
        elif self.log_id != expected:
            raise ValueError(f"log {self.name}: log_id does not match public key digest")
        parsed = urlparse(self.url)
        if not (parsed.scheme and parsed.netloc):
            raise ValueError(f"log {self.name}: url {self.url!r} is not absolute")
        if not self.url.endswith("/"):
            object.__setattr__(self, "url", self.url + "/")

    def endpoint(self, name: str) -> str:
        return urljoin(self.url, f"ct/v1/{name}")


def load_log_list(path) -> list[LogDescriptor]:
    """Read a JSON log list: ``[{name, url, public_key(b64), chrome_inclusion_date?}]``.

    A top-level object with a ``logs`` key is also accepted.
    """
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        doc = doc.get("logs", [])
    out = []
    for item in doc:
        incl = item.get("chrome_inclusion_date")
        out.append(LogDescriptor(
            name=item["name"],
            url=item["url"],
            public_key=base64.b64decode(item["public_key"]),
            chrome_inclusion_date=date.fromisoformat(incl) if incl else None,
        ))
    return out


@dataclass(frozen=True)
class SignedTreeHead:
    log_id: bytes
    tree_size: int
    root_hash: bytes
    timestamp: int
    signature: bytes
    verified: bool = False

    def head(self) -> merkle.TreeHead:
        return merkle.TreeHead(self.tree_size, self.root_hash, self.timestamp, self.signature)


@dataclass(frozen=True)
class RawEntry:
    index: int
    leaf_input: bytes
    extra_data: bytes
    log_id: bytes

    def certificate(self) -> tuple[int, bytes, int]:
        """(entry_type, DER of the logged certificate or precertificate, timestamp ms)."""
        leaf = decode_leaf(self.leaf_input)
        if leaf.entry_type == PRECERT_ENTRY:
            pre, _ = decode_extra_data(PRECERT_ENTRY, self.extra_data)
            return leaf.entry_type, pre, leaf.timestamp
        return leaf.entry_type, leaf.cert_or_tbs, leaf.timestamp


def _b64(doc: dict, key: str) -> bytes:
    try:
        return base64.b64decode(doc[key], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"field {key!r} missing or not base64") from exc


class CTLogClient:
    """Thread-safe after construction; remembers the newest verified head per log."""

    def __init__(self, session: Optional[requests.Session] = None, batch_size: int = DEFAULT_BATCH,
                 max_retries: int = MAX_RETRIES, backoff: float = 0.5, timeout: float = 30.0):
        self.session = session or requests.Session()
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self._heads: dict[bytes, SignedTreeHead] = {}
        self._lock = threading.Lock()

    # -- transport

    def _get(self, log_desc: LogDescriptor, name: str, params: Optional[dict] = None) -> dict:
        url = log_desc.endpoint(name)
        last = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self.session.get(url, params=params, timeout=self.timeout)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code < 400:
                    try:
                        doc = resp.json()
                    except ValueError as exc:
                        raise MalformedResponse(f"{url}: body is not JSON") from exc
                    if not isinstance(doc, dict):
                        raise MalformedResponse(f"{url}: expected a JSON object")
                    return doc
                last = f"HTTP {resp.status_code}"
            if attempt < self.max_retries:
                delay = self.backoff * (2 ** attempt)
                log.debug("%s failed (%s), retrying in %.2fs", url, last, delay)
                time.sleep(delay)
        raise TransportError(f"{url}: giving up after {self.max_retries} retries ({last})")

    # -- tree heads

    def latest_head(self, log_desc: LogDescriptor) -> Optional[SignedTreeHead]:
        with self._lock:
            return self._heads.get(log_desc.log_id)

    def get_sth(self, log_desc: LogDescriptor) -> SignedTreeHead:
        doc = self._get(log_desc, "get-sth")
        try:
            size, ts = int(doc["tree_size"]), int(doc["timestamp"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse("get-sth: tree_size/timestamp missing") from exc
        root = _b64(doc, "sha256_root_hash")
        sig_bytes = _b64(doc, "tree_head_signature")
        if len(root) != merkle.HASH_SIZE:
            raise MalformedResponse("get-sth: root hash is not 32 bytes")
        try:
            sig = DigitallySigned.decode(sig_bytes)
        except DecodeError as exc:
            raise MalformedResponse(f"get-sth: bad signature encoding: {exc}") from exc
        if not verify(log_desc.public_key, sig, tree_head_input(ts, size, root)):
            raise SignatureInvalid(f"{log_desc.name}: tree head signature does not verify")
        sth = SignedTreeHead(log_desc.log_id, size, root, ts, sig_bytes, verified=True)
        with self._lock:
            prev = self._heads.get(log_desc.log_id)
            if prev is not None:
                if size < prev.tree_size:
                    raise TreeSizeRegression(
                        f"{log_desc.name}: tree size went from {prev.tree_size} to {size}")
                if size == prev.tree_size and root != prev.root_hash:
                    raise LogMisbehavior(
                        f"{log_desc.name}: two different roots for tree size {size}")
            self._heads[log_desc.log_id] = sth
        return sth

    # -- entries and proofs

    def get_entries(self, log_desc: LogDescriptor, start: int, end: int) -> list[RawEntry]:
        if start < 0 or end < start:
            raise ValueError(f"invalid range start={start} end={end}")
        head = self.latest_head(log_desc)
        if head is not None and start >= head.tree_size:
            raise IndexError(f"start {start} beyond tree size {head.tree_size}")
        doc = self._get(log_desc, "get-entries", {"start": start, "end": end})
        items = doc.get("entries")
        if not isinstance(items, list) or not items:
            raise MalformedResponse("get-entries: no entries in response")
        if len(items) > end - start + 1:
            raise MalformedResponse("get-entries: more entries than requested")
        out = []
        for i, item in enumerate(items):
            leaf = _b64(item, "leaf_input")
            try:
                decode_leaf(leaf)
            except DecodeError as exc:
                raise MalformedResponse(f"entry {start + i}: {exc}") from exc
            out.append(RawEntry(start + i, leaf, _b64(item, "extra_data"), log_desc.log_id))
        return out

    def get_consistency_proof(self, log_desc: LogDescriptor, first: int, second: int) -> merkle.ConsistencyProof:
        doc = self._get(log_desc, "get-consistency-proof", {"first": first, "second": second})
        try:
            path = [base64.b64decode(p, validate=True) for p in doc["consistency"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse("get-consistency-proof: bad body") from exc
        return merkle.ConsistencyProof(first, second, path)

    def get_proof_by_hash(self, log_desc: LogDescriptor, leaf_hash: bytes, tree_size: int) -> merkle.AuditProof:
        doc = self._get(log_desc, "get-proof-by-hash", {
            "hash": base64.b64encode(leaf_hash).decode(), "tree_size": tree_size})
        try:
            index = int(doc["leaf_index"])
            path = [base64.b64decode(p, validate=True) for p in doc["audit_path"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse("get-proof-by-hash: bad body") from exc
        return merkle.AuditProof(index, tree_size, path)

    def fetch_range(self, log_desc: LogDescriptor, start: int, end: int,
                    workers: int = 1) -> Iterator[RawEntry]:
        """Yield entries ``start..end`` inclusive in index order, looping over server caps."""
        if end < start:
            return

        def chunk(bounds: tuple[int, int]) -> list[RawEntry]:
            lo, hi = bounds
            got: list[RawEntry] = []
            while lo <= hi:
                batch = self.get_entries(log_desc, lo, hi)
                got.extend(batch)
                lo += len(batch)
            return got

        bounds = [(lo, min(lo + self.batch_size - 1, end))
                  for lo in range(start, end + 1, self.batch_size)]
        if workers <= 1:
            for b in bounds:
                yield from chunk(b)
            return
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map() hands results back in submission order: single in-order committer
            for got in pool.map(chunk, bounds):
                yield from got

    def audit_fetch(self, log_desc: LogDescriptor, upto: int,
                    store: Optional["EntryStore"] = None, workers: int = 1) -> Iterator[RawEntry]:
        """Stream entries ``[0, upto)`` and check their root against the verified head.

        With a store, fetching resumes from its high-water mark and newly
        fetched entries are appended in index order. Raises
        :class:`AuditFailure` after the stream if the prefix is not
        consistent with the head.
        """
        head = self.latest_head(log_desc) or self.get_sth(log_desc)
        if upto < 0 or upto > head.tree_size:
            raise ValueError(f"upto={upto} exceeds verified tree size {head.tree_size}")
        if upto == 0:
            return
        hashes: list[bytes] = []
        start = 0
        if store is not None:
            have = min(store.high_water_mark(log_desc.log_id) + 1, upto)
            for stored in store.scan(log_desc.log_id, 0, have):
                hashes.append(merkle.leaf_hash(stored.leaf_input))
            start = have
        pending: list[RawEntry] = []
        for entry in self.fetch_range(log_desc, start, upto - 1, workers=workers):
            hashes.append(merkle.leaf_hash(entry.leaf_input))
            if store is not None:
                pending.append(entry)
                if len(pending) >= self.batch_size:
                    store.append(pending)
                    pending = []
            yield entry
        if store is not None and pending:
            store.append(pending)

        local_root = merkle.root_from_hashes(hashes)
        if upto == head.tree_size:
            ok = local_root == head.root_hash
        else:
            proof = self.get_consistency_proof(log_desc, upto, head.tree_size)
            ok = merkle.verify_consistency(proof, local_root, head.root_hash)
        if not ok:
            raise AuditFailure(
                f"{log_desc.name}: root of first {upto} entries is not consistent with "
                f"signed head of size {head.tree_size}")
        log.info("%s: audited %d entries against head of size %d", log_desc.name, upto, head.tree_size)


def fingerprint_hex(der: bytes) -> str:
    return hashlib.sha256(der).hexdigest()

import base64
import json

import pytest

from ctleak import ctlog_client as cc
from ctleak import merkle
from ctleak.entry_store import EntryStore
from ctleak.signing import LogSigner
from support.ctlog_server import FixtureLog
from support.logdata import x509_entries


@pytest.fixture(scope="module")
def entries40(ca):
    return x509_entries(ca, 40)


@pytest.fixture
def serve():
    running = []

    def _serve(entries, **kw):
        f = FixtureLog(entries, **kw).start()
        running.append(f)
        return f

    yield _serve
    for f in running:
        f.stop()


def client(**kw):
    kw.setdefault("backoff", 0)
    return cc.CTLogClient(**kw)


def test_descriptor_invariants(signer):
    d = cc.LogDescriptor("x", "https://ct.example/log", signer.public_key_der)
    assert d.log_id == signer.log_id
    assert d.endpoint("get-sth") == "https://ct.example/log/ct/v1/get-sth"
    with pytest.raises(ValueError):
        cc.LogDescriptor("x", "ct.example/log", signer.public_key_der)
    with pytest.raises(ValueError):
        cc.LogDescriptor("x", "https://ct.example/", signer.public_key_der, log_id=b"\x00" * 32)


def test_load_log_list(tmp_path, signer):
    p = tmp_path / "logs.json"
    p.write_text(json.dumps({"logs": [{
        "name": "Pilot", "url": "https://ct.example/pilot/",
        "public_key": base64.b64encode(signer.public_key_der).decode(),
        "chrome_inclusion_date": "2014-06-01"}]}))
    (d,) = cc.load_log_list(p)
    assert d.name == "Pilot" and d.log_id == signer.log_id
    assert d.chrome_inclusion_date.year == 2014


def test_get_sth_verified(serve, entries40):
    f = serve(entries40[:7])
    sth = client().get_sth(f.descriptor())
    assert sth.verified and sth.tree_size == 7
    assert sth.root_hash == merkle.root([leaf for leaf, _ in entries40[:7]])


@pytest.mark.parametrize("kind", ["ec", "rsa"])
def test_get_sth_key_types(serve, entries40, kind):
    f = serve(entries40[:3], signer=LogSigner.generate(kind))
    assert client().get_sth(f.descriptor()).tree_size == 3


def test_get_sth_tampered(serve, entries40):
    f = serve(entries40[:7])
    f.tamper_root = True
    with pytest.raises(cc.SignatureInvalid):
        client().get_sth(f.descriptor())


def test_get_sth_regression(serve, entries40):
    f = serve(entries40[:7])
    c = client()
    c.get_sth(f.descriptor())
    f.sth_size = 5
    with pytest.raises(cc.TreeSizeRegression):
        c.get_sth(f.descriptor())


def test_get_entries(serve, entries40):
    f = serve(entries40[:7])
    got = client().get_entries(f.descriptor(), 0, 4)
    assert [e.index for e in got] == [0, 1, 2, 3, 4]
    assert [e.leaf_input for e in got] == [leaf for leaf, _ in entries40[:5]]


def test_get_entries_server_cap(serve, ca):
    f = serve(x509_entries(ca, 40), batch_cap=32)
    got = client().get_entries(f.descriptor(), 0, 1000)
    assert len(got) == 32


def test_get_entries_precondition(serve, entries40):
    f = serve(entries40[:7])
    with pytest.raises(ValueError):
        client().get_entries(f.descriptor(), 9, 8)
    c = client()
    c.get_sth(f.descriptor())
    with pytest.raises(IndexError):
        c.get_entries(f.descriptor(), 7, 9)


def test_backoff_then_success(serve, entries40):
    f = serve(entries40[:7])
    f.fail_next = 3
    assert client().get_sth(f.descriptor()).tree_size == 7


def test_backoff_gives_up(serve, entries40):
    f = serve(entries40[:7])
    f.fail_next = 100
    with pytest.raises(cc.TransportError):
        client(max_retries=2).get_sth(f.descriptor())
    assert len(f.requests) == 3


def test_fetch_range_loops_over_caps(serve, entries40):
    f = serve(entries40, batch_cap=7)
    got = list(client(batch_size=16).fetch_range(f.descriptor(), 3, 39, workers=3))
    assert [e.index for e in got] == list(range(3, 40))


def test_proof_endpoints(serve, entries40):
    f = serve(entries40[:20])
    c, d = client(), f.descriptor()
    sth = c.get_sth(d)
    leaves = [leaf for leaf, _ in entries40[:20]]
    p = c.get_proof_by_hash(d, merkle.leaf_hash(leaves[11]), 20)
    assert p.leaf_index == 11
    assert merkle.verify_inclusion(p, merkle.leaf_hash(leaves[11]), sth.root_hash)
    cp = c.get_consistency_proof(d, 8, 20)
    assert merkle.verify_consistency(cp, merkle.root(leaves[:8]), sth.root_hash)


def test_audit_clean(serve, entries40, tmp_path):
    f = serve(entries40, batch_cap=9)
    store = EntryStore(tmp_path)
    c = client(batch_size=10)
    got = list(c.audit_fetch(f.descriptor(), 40, store=store))
    assert len(got) == 40
    assert store.high_water_mark(f.descriptor().log_id) == 39


def test_audit_prefix_uses_consistency_proof(serve, entries40):
    f = serve(entries40)
    got = list(client().audit_fetch(f.descriptor(), 13))
    assert len(got) == 13
    assert any("get-consistency-proof" in r for r in f.requests)


def test_audit_detects_swap(serve, entries40):
    f = serve(entries40)
    f.swapped[5] = entries40[6]
    with pytest.raises(cc.AuditFailure):
        list(client().audit_fetch(f.descriptor(), 40))
    with pytest.raises(cc.AuditFailure):
        list(client().audit_fetch(f.descriptor(), 20))


def test_audit_upto_zero(serve, entries40):
    f = serve(entries40[:3])
    assert list(client().audit_fetch(f.descriptor(), 0)) == []


def test_audit_upto_beyond_head(serve, entries40):
    f = serve(entries40[:3])
    with pytest.raises(ValueError):
        list(client().audit_fetch(f.descriptor(), 4))


@pytest.mark.parametrize("cut", [0, 1, 9, 10, 17, 39])
def test_audit_resumable(serve, entries40, tmp_path, cut):
    f = serve(entries40, batch_cap=6)
    d = f.descriptor()
    ref = EntryStore(tmp_path / "ref")
    list(client(batch_size=5).audit_fetch(d, 40, store=ref))

    store = EntryStore(tmp_path / "cut")
    stream = client(batch_size=5).audit_fetch(d, 40, store=store)
    for _ in range(cut):
        next(stream)
    stream.close()  # interrupted
    resumed = EntryStore(tmp_path / "cut")
    list(client(batch_size=5).audit_fetch(d, 40, store=resumed))
    assert resumed.path(d.log_id).read_bytes() == ref.path(d.log_id).read_bytes()
    assert [e.index for e in resumed.scan(d.log_id)] == list(range(40))

import io
import random
from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from ctleak import dns_names as dn

PSL_PATH = Path(__file__).parent / "data" / "psl.dat"


@pytest.fixture(scope="module")
def psl():
    return dn.PublicSuffixSet.load(PSL_PATH)


@pytest.mark.parametrize("name,suffix,base,labels", [
    ("www.example.co.uk", "co.uk", "example.co.uk", ("www",)),
    ("example.com", "com", "example.com", ()),
    ("a.b.example.com", "com", "example.com", ("a", "b")),
    ("x.foo.blogspot.com", "blogspot.com", "foo.blogspot.com", ("x",)),
    ("a.b.ck", "b.ck", "a.b.ck", ()),
    ("www.ck", "ck", "www.ck", ()),
    ("m.www.ck", "ck", "www.ck", ("m",)),
    ("a.b.c.kawasaki.jp", "c.kawasaki.jp", "b.c.kawasaki.jp", ("a",)),
    ("city.kawasaki.jp", "kawasaki.jp", "city.kawasaki.jp", ()),
    ("host.example.unlisted", "unlisted", "example.unlisted", ("host",)),
    ("*.example.com", "com", "example.com", ("*",)),
    ("Mail.Example.COM.", "com", "example.com", ("mail",)),
])
def test_split(psl, name, suffix, base, labels):
    r = dn.split(name, psl)
    assert (r.public_suffix, r.base_domain, r.labels) == (suffix, base, labels)


@pytest.mark.parametrize("name", ["co.uk", "com", "foo.ck", "*.co.uk"])
def test_split_public_suffix_flagged(psl, name):
    with pytest.raises(dn.NotRegistrable):
        dn.split(name, psl)


def test_rule_order_independent(psl):
    lines = PSL_PATH.read_text().splitlines()
    rng = random.Random(3)
    names = ["www.example.co.uk", "a.b.ck", "m.www.ck", "a.b.c.kawasaki.jp", "x.foo.blogspot.com"]
    expected = [dn.split(n, psl) for n in names]
    for _ in range(5):
        rng.shuffle(lines)
        shuffled = dn.PublicSuffixSet(lines)
        assert [dn.split(n, shuffled) for n in names] == expected


label = st.from_regex(r"[a-z0-9]([a-z0-9-]{0,8}[a-z0-9])?", fullmatch=True)
suffix = st.sampled_from(["com", "co.uk", "tech", "de", "b.ck", "unlisted"])


@settings(max_examples=200, deadline=None)
@given(st.lists(label, max_size=4), label, suffix)
def test_split_reassembles(psl, labels, base, suf):
    name = ".".join(labels + [base, suf])
    r = dn.split(name, psl)
    assert r.join() == name
    assert r.base_domain.count(".") == r.public_suffix.count(".") + 1


def test_label_stats_small(psl):
    recs = dn.split_many(["www.a.com", "www.b.com", "mail.a.com", "www.a.com"], psl)
    s = dn.label_stats(recs)
    assert s.totals == Counter({"www": 2, "mail": 1})
    assert dn.label_stats([]).totals == Counter()


def test_label_stats_positions_and_wildcards(psl):
    s = dn.label_stats(dn.split_many(["a.b.example.com", "*.example.com", "www.www.x.de"], psl))
    assert s.totals == Counter({"a": 1, "b": 1, "www": 2})
    assert s.by_suffix[("de", "www")] == 2


def test_label_stats_matches_bruteforce(psl):
    rng = random.Random(11)
    labels = ["www", "mail", "git", "api", "dev", "m"]
    sufs = ["com", "co.uk", "tech", "de", "cloud"]
    names = set()
    while len(names) < 1000:
        depth = rng.choice([0, 1, 1, 2])
        parts = [rng.choice(labels) for _ in range(depth)]
        names.add(".".join(parts + [f"d{rng.randint(0, 300)}", rng.choice(sufs)]))
    names = sorted(names)
    stats = dn.label_stats(dn.split_many(names, psl))
    # oracle: string surgery without the PSL machinery (all test suffixes known)
    oracle = Counter()
    oracle_by = Counter()
    for n in names:
        suf = next(s for s in sorted(sufs, key=len, reverse=True) if n.endswith("." + s))
        head = n[: -len(suf) - 1].split(".")[:-1]
        for lab in head:
            oracle[lab] += 1
            oracle_by[(suf, lab)] += 1
    assert stats.totals == oracle
    assert stats.by_suffix == oracle_by
    half = len(names) // 2
    merged = dn.label_stats(dn.split_many(names[:half], psl)).merge(
        dn.label_stats(dn.split_many(names[half:], psl)))
    assert merged.totals == oracle


def test_top_label_per_suffix(psl):
    names = [f"git.p{i}.tech" for i in range(5)] + ["www.p0.tech", "www.p1.tech", "ftp.z.design",
                                                   "b.t1.io", "a.t2.io"]
    top = dn.top_label_per_suffix(dn.label_stats(dn.split_many(names, psl)))
    assert top["tech"] == "git"
    assert top["design"] == "ftp"
    assert top["io"] == "a"


def test_candidate_defaults():
    cfg = dn.CandidateConfig()
    assert cfg.min_label_count == 100_000
    assert cfg.top_suffixes_per_label == 10
    assert cfg.excluded_suffixes == {"com", "net", "org"}


def test_candidates_filter_threshold(psl):
    stats = dn.label_stats(dn.split_many(["once.a.de"], psl))
    cfg = dn.CandidateConfig(min_label_count=2)
    assert dn.construct_candidates(stats, ["x.de"], psl, cfg, seed=1) == []


def test_candidates_bruteforce(psl):
    ct = ([f"www.s{i}.de" for i in range(5)] + [f"www.s{i}.co.uk" for i in range(3)]
          + [f"www.s{i}.com" for i in range(9)] + [f"git.s{i}.tech" for i in range(4)]
          + ["git.q.de", "api.s0.cloud", "api.s1.cloud", "api.s2.io", "rare.s0.de"])
    stats = dn.label_stats(dn.split_many(ct, psl))
    domains = ["s0.de", "n1.de", "n2.co.uk", "n3.tech", "n4.cloud", "n5.io", "n6.com", "n7.gq"]
    cfg = dn.CandidateConfig(min_label_count=2, top_suffixes_per_label=2)
    got = dn.construct_candidates(stats, domains, psl, cfg, observed=ct, seed=5)

    # brute force: every (label, domain) where label is frequent and the domain's
    # suffix is among the label's two best non-excluded suffixes
    allowed = {"www": {"de", "co.uk"}, "git": {"tech", "de"}, "api": {"cloud", "io"}}
    suffix_of = {d: d.split(".", 1)[1] for d in domains}
    expected = {f"{lab}.{d}" for lab, sufs in allowed.items() for d in domains
                if suffix_of[d] in sufs} - set(ct)
    assert {c.test_name for c in got} == expected
    for c in got:
        ctl, _, zone = c.control_name.partition(".")
        assert zone == c.base_domain and c.test_name == f"{c.label}.{c.base_domain}"
        assert len(ctl) == 16 and set(ctl) <= set(dn.CONTROL_ALPHABET)
    again = dn.construct_candidates(stats, domains, psl, cfg, observed=ct, seed=5)
    assert again == got


def test_candidates_tsv_roundtrip(psl):
    stats = dn.label_stats(dn.split_many(["www.a.de", "www.b.de"], psl))
    got = dn.construct_candidates(stats, ["c.de"], psl, dn.CandidateConfig(min_label_count=2), seed=1)
    buf = io.StringIO()
    dn.write_candidates(got, buf)
    assert buf.getvalue().count("\t") == 1
    assert dn.read_candidates(io.StringIO(buf.getvalue())) == got

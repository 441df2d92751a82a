import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossmatch.errors import InvalidInputError, InvalidParameterError
from crossmatch.paired import PValueTriple
from crossmatch.screening import (
    REPORT_COLUMNS,
    SubgroupEvidence,
    automated_cross_screen,
    holm_global_nulls,
    holm_global_nulls_detail,
    holm_max_detail,
    holm_twosided_detail,
    holm_twosided_global,
    read_differences,
    screening_weights,
    weighted_cross_screen_global,
    weighted_cross_screen_replicability,
    write_differences,
    write_report,
)

from oracles import automated_loop, chi2_4_sf, holm_loop


def evidence(name, rights, lefts=None, means=None):
    lefts = [1 - r for r in rights] if lefts is None else lefts
    keys = [f"y{i:02d}" for i in range(len(rights))]
    means = [0.5 - r for r in rights] if means is None else means
    return SubgroupEvidence(
        name,
        {k: PValueTriple(r, q) for k, r, q in zip(keys, rights, lefts)},
        means=dict(zip(keys, means)),
    )


def three_outcome_data():
    rng = np.random.default_rng(30)
    a = {"o1": rng.normal(1.0, 1, 60), "o2": rng.normal(0.8, 1, 60), "o3": rng.normal(-1.0, 1, 60)}
    b = {"o1": rng.normal(1.0, 1, 60), "o2": rng.normal(0.0, 1, 60), "o3": rng.normal(-1.0, 1, 60)}
    return SubgroupEvidence.from_differences("a", a), SubgroupEvidence.from_differences("b", b)


def test_three_outcome_case():
    a, b = three_outcome_data()
    res = automated_cross_screen(a, b, 0.05)
    assert res.replicated == {"o1", "o3"}
    assert res.replicated_direction("o1") == 1
    assert res.replicated_direction("o3") == -1
    keys = ("o1", "o2", "o3")
    pa = [a.triples[k].right for k in keys]
    qa = [a.triples[k].left for k in keys]
    pb = [b.triples[k].right for k in keys]
    qb = [b.triples[k].left for k in keys]
    sa, sb, rep = automated_loop(pa, qa, pb, qb, 0.05)
    assert [res.status["a"][k] for k in keys] == sa
    assert [res.status["b"][k] for k in keys] == sb
    assert {keys[i] for i in rep} == res.replicated


def test_all_null_selects_nothing():
    a = evidence("a", [0.3, 0.6, 0.8])
    b = evidence("b", [0.5, 0.4, 0.9])
    res = automated_cross_screen(a, b)
    assert not any(res.selected["a"].values()) and not any(res.selected["b"].values())
    assert res.replicated == frozenset() and res.global_discoveries == frozenset()


def test_direction_tie_goes_right():
    a = SubgroupEvidence("a", {"k": PValueTriple(0.01, 0.01)})
    b = SubgroupEvidence("b", {"k": PValueTriple(0.001, 0.999)})
    res = automated_cross_screen(a, b)
    assert res.direction["b"]["k"] == 1
    assert res.status["b"]["k"] == 1


def test_mismatched_outcomes():
    a = SubgroupEvidence("a", {"k": PValueTriple(0.1, 0.9)})
    b = SubgroupEvidence("b", {"j": PValueTriple(0.1, 0.9)})
    with pytest.raises(InvalidInputError):
        automated_cross_screen(a, b)


def test_c_validation():
    a, b = evidence("a", [0.01]), evidence("b", [0.01])
    with pytest.raises(InvalidParameterError):
        weighted_cross_screen_replicability(a, b, c=1.5)
    with pytest.raises(InvalidParameterError):
        weighted_cross_screen_global(a, b, c=-0.1)


probs = st.floats(1e-6, 1.0)


@st.composite
def paired_evidence(draw, max_m=12):
    m = draw(st.integers(1, max_m))
    rows = draw(st.lists(st.tuples(probs, probs, probs, probs), min_size=m, max_size=m))
    a = evidence("a", [r[0] for r in rows], [r[1] for r in rows])
    b = evidence("b", [r[2] for r in rows], [r[3] for r in rows])
    return a, b


@settings(max_examples=150)
@given(paired_evidence())
def test_automated_matches_loop(ab):
    a, b = ab
    keys = sorted(a.triples)
    res = automated_cross_screen(a, b)
    sa, sb, rep = automated_loop(*a.arrays(keys), *b.arrays(keys), 0.05)
    assert [res.status["a"][k] for k in keys] == sa
    assert [res.status["b"][k] for k in keys] == sb
    assert res.replicated == {keys[i] for i in rep}


@settings(max_examples=100)
@given(paired_evidence(), st.randoms())
def test_outcome_order_and_subgroup_swap(ab, rnd):
    a, b = ab
    res = automated_cross_screen(a, b)
    keys = list(a.triples)
    rnd.shuffle(keys)
    a2 = SubgroupEvidence("a", {k: a.triples[k] for k in keys}, means={k: a.means[k] for k in keys})
    b2 = SubgroupEvidence("b", {k: b.triples[k] for k in keys}, means={k: b.means[k] for k in keys})
    res2 = automated_cross_screen(a2, b2)
    assert res2.status == res.status and res2.replicated == res.replicated
    assert automated_cross_screen(b, a).replicated == res.replicated
    for k in res.replicated:
        assert res.status["a"][k] == res.status["b"][k] != 0
        assert res.selected["a"][k] and res.selected["b"][k]


@settings(max_examples=150)
@given(paired_evidence())
def test_weighted_c0_reduces_to_automated(ab):
    a, b = ab
    # Align the mean signs with the smaller one-sided p-value so both direction rules agree.
    for ev in (a, b):
        for k, t in ev.triples.items():
            ev.means[k] = 1.0 if t.right <= t.left else -1.0
    w = weighted_cross_screen_replicability(a, b, c=0.0)
    auto = automated_cross_screen(a, b)
    assert w.status == auto.status
    assert w.replicated == auto.replicated


@settings(max_examples=150)
@given(paired_evidence())
def test_weighted_c1_reduces_to_holm(ab):
    a, b = ab
    res = weighted_cross_screen_replicability(a, b, c=1.0)
    keys = sorted(a.triples)
    for tested, other in ((a, b), (b, a)):
        p = [tested.triples[k].right if other.means[k] > 0 else tested.triples[k].left for k in keys]
        assert {keys[i] for i in holm_loop(p, 0.025)} == res.rejected(tested.name)


def test_weights_plug_in():
    p = np.array([0.001] * 4 + [0.5] * 12)
    selected, w = screening_weights(p, 0.0, 0.05)
    assert selected.sum() == 4
    assert list(w[:4]) == [4.0] * 4 and list(w[4:]) == [0.0] * 12
    _, w = screening_weights(p, 0.5, 0.05)
    assert w.sum() == pytest.approx(16)
    assert w[0] == pytest.approx(2 * w[5])


@settings(max_examples=100)
@given(paired_evidence(), st.floats(0, 1))
def test_global_contains_replicated(ab, c):
    a, b = ab
    res = weighted_cross_screen_global(a, b, c=c)
    assert res.replicated <= res.global_discoveries
    assert res.global_discoveries == res.rejected("a") | res.rejected("b")


def test_one_sided_rejection_is_global_only():
    a = evidence("a", [1e-6, 0.5], means=[1.0, 1.0])
    b = evidence("b", [0.6, 0.5], means=[1.0, 1.0])
    res = weighted_cross_screen_global(a, b, c=0.5)
    assert "y00" in res.global_discoveries
    assert "y00" not in res.replicated


def test_holm_global_examples():
    single = holm_global_nulls_detail(
        SubgroupEvidence("a", {"k": PValueTriple(0.5, 0.5)}), SubgroupEvidence("b", {"k": PValueTriple(0.5, 0.5)})
    )
    assert single.discoveries == frozenset()
    # An outcome whose combined p-value is 0.04 is found by Holm with m = 1.
    x = 2.0
    while 2 * chi2_4_sf(x) > 0.04:
        x += 1e-4
    p = math.exp(-x / 4)
    a = SubgroupEvidence("a", {"k": PValueTriple(p, 1.0)})
    b = SubgroupEvidence("b", {"k": PValueTriple(p, 1.0)})
    d = holm_global_nulls_detail(a, b)
    assert d.pvalues["k"] == pytest.approx(0.04, abs=1e-4)
    assert d.discoveries == {"k"}


def test_holm_global_threshold_arithmetic():
    # Eighteen outcomes each with combined p-value 0.01: first threshold 0.05/18 blocks all.
    x = 2.0
    while 2 * chi2_4_sf(x) > 0.01:
        x += 1e-5
    p = math.exp(-x / 4)
    trip = {f"k{i}": PValueTriple(p, 1.0) for i in range(18)}
    d = holm_global_nulls_detail(SubgroupEvidence("a", trip), SubgroupEvidence("b", dict(trip)))
    assert all(v == pytest.approx(0.01, abs=1e-4) for v in d.pvalues.values())
    assert min(d.thresholds.values()) == pytest.approx(0.05 / 18)
    assert d.discoveries == frozenset()


def test_holm_global_strong_concordant():
    trip_a = {f"k{i}": PValueTriple(0.5, 0.5) for i in range(18)}
    trip_b = dict(trip_a)
    trip_a["k0"] = trip_b["k0"] = PValueTriple(1e-4, 1.0)
    x = -4 * math.log(1e-4)
    assert x == pytest.approx(36.84, abs=0.01)
    assert 2 * chi2_4_sf(x) < 0.05 / 18
    assert holm_global_nulls(SubgroupEvidence("a", trip_a), SubgroupEvidence("b", trip_b)) == {"k0"}


def test_holm_twosided_examples():
    half = {f"k{i}": PValueTriple(0.5, 0.5) for i in range(16)}
    assert holm_twosided_global(SubgroupEvidence("a", half), SubgroupEvidence("b", dict(half))) == frozenset()
    strong = dict(half)
    strong["k3"] = PValueTriple(1e-6, 1.0)
    found = holm_twosided_global(SubgroupEvidence("a", strong), SubgroupEvidence("b", dict(half)))
    assert found == {"k3"}
    detail = holm_twosided_detail(SubgroupEvidence("a", strong), SubgroupEvidence("b", dict(half)))
    assert detail.replicated == frozenset()
    assert detail.p_onesided["a"]["k3"] == pytest.approx(2e-6)


def test_holm_max_direction_and_claim():
    a = evidence("a", [0.001, 0.9])
    b = evidence("b", [0.002, 0.95])
    d = holm_max_detail(a, b)
    assert d.pvalues["y00"] == pytest.approx(0.004)
    assert d.direction["y00"] == 1 and d.direction["y01"] == -1
    assert d.discoveries == {"y00"}
    assert d.claim == "replicability"


def test_report_columns(tmp_path):
    a, b = three_outcome_data()
    path = tmp_path / "report.csv"
    blocks = [automated_cross_screen(a, b), holm_global_nulls_detail(a, b), holm_max_detail(a, b)]
    write_report(path, blocks)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == REPORT_COLUMNS
    assert len(rows) == 3 * 2 + 3 + 3
    rep = {(r["outcome_id"], r["subgroup"]) for r in rows if r["method"] == "automated" and r["replicated"] == "1"}
    assert rep == {("o1", "a"), ("o1", "b"), ("o3", "a"), ("o3", "b")}


def test_differences_roundtrip(tmp_path):
    data = {"s1": {"y": np.array([0.5, -1.25]), "z": np.array([2.0])}, "s2": {"y": np.array([3.0])}}
    path = tmp_path / "d.csv"
    write_differences(path, data)
    assert path.read_text().splitlines()[0] == "outcome_id,subgroup_id,pair_id,diff"
    back = read_differences(path)
    assert list(back) == ["s1", "s2"]
    assert list(back["s1"]["y"]) == [0.5, -1.25]


def test_differences_missing_and_bad_rows(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("outcome_id,subgroup_id,pair_id,diff\ny,s,1,1.5\ny,s,2,\ny,s,3,-2\n")
    assert list(read_differences(path)["s"]["y"]) == [1.5, -2.0]
    path.write_text("outcome_id,subgroup_id,pair_id,diff\ny,s,1,abc\n")
    with pytest.raises(InvalidInputError, match=":2:"):
        read_differences(path)
    path.write_text("outcome_id,pair_id,diff\n")
    with pytest.raises(InvalidInputError):
        read_differences(path)


def test_null_replicability_fwer():
    # No replicable outcome: signal only in subgroup a, nothing in b.
    rng = np.random.default_rng(99)
    reps, m, alpha = 20_000, 8, 0.05
    from scipy.stats import norm

    za = rng.normal(size=(reps, m)) + np.array([4, 4, 0, 0, 0, 0, 0, 0])
    zb = rng.normal(size=(reps, m))
    ra, rb = norm.sf(za), norm.sf(zb)
    from crossmatch.screening import automated_arrays

    arr = automated_arrays(ra, 1 - ra, rb, 1 - rb, alpha)
    fwer = arr["replicated"].any(axis=1).mean()
    assert fwer <= alpha + 3 * math.sqrt(alpha * (1 - alpha) / reps)

"""Color-count sequences and random set families.

The n_k tables asserted here were computed independently with exact integer
arithmetic (k <= e^{cn} iff k^(delta+1) * (2^delta - 1)^n <= 2^(delta*n)) and
cross-checked at 60-digit precision; they are frozen oracle values.  The
delta=1 sequence is the interesting one: e^{6c} = 8 exactly, which float64
floors to 7, so the boundary case guards the exact path.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffcolor.covfree import (
    FAMILY_BIT_CAP,
    ColorSequence,
    SetFamily,
    build_cover_free_family,
    color_sequence,
    cover_free_constant,
    exact_floor_exp,
    feasible_levels,
    first_color_count,
    sample_tuples,
)
from ffcolor.field import LabelField, untracked

FROZEN = {
    1: (6, 8, 16, 256),
    2: (39, 42, 56, 214),
    3: (151, 154, 170, 291, 16554),
    4: (479, 484, 516, 780, 23576),
    8: (23105, 23106, 23116, 23216, 24248),
    10: (132814, 132823, 132929, 134187, 150050),
}


def test_constant_closed_forms():
    assert math.isclose(cover_free_constant(1), math.log(2) / 2, rel_tol=1e-15)
    assert math.isclose(cover_free_constant(2), -math.log(3 / 4) / 3, rel_tol=1e-15)


def test_constant_decreasing():
    vals = [cover_free_constant(d) for d in range(1, 13)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("delta,expect", sorted(FROZEN.items()))
def test_frozen_sequences(delta, expect):
    seq = color_sequence(delta, len(expect))
    assert seq.n == expect
    assert first_color_count(delta) == expect[0]


def test_exact_boundary_delta1():
    # e^{c*6} = 2^3 exactly; naive float64 exp gives 7.999... and floors wrong
    assert exact_floor_exp(6, 1) == 8
    assert math.floor(math.exp(cover_free_constant(1) * 6)) == 7


@given(st.integers(1, 6), st.integers(1, 60))
@settings(max_examples=120, deadline=None)
def test_floor_exp_is_exact_floor(delta, n):
    from hypothesis import assume

    assume(cover_free_constant(delta) * n < math.log(10**7))
    f = exact_floor_exp(n, delta)
    # f <= e^{cn} < f+1, via the integer predicate that defines the bound
    def le(k):
        return k ** (delta + 1) * (2 ** delta - 1) ** n <= 1 << (delta * n)

    assert f >= 1 and le(f) and not le(f + 1)


def test_sequences_strictly_increase():
    for delta, expect in FROZEN.items():
        assert all(a < b for a, b in zip(expect, expect[1:]))


def test_feasible_levels():
    assert feasible_levels(4, 3) == 3
    assert feasible_levels(8, 3) == 3
    assert feasible_levels(10, 3) == 1  # level-2 family alone would be > 2 Gbit
    seq = color_sequence(10, 2)
    assert seq.n_k(1) * seq.n_k(2) > FAMILY_BIT_CAP


def test_build_rejects_infeasible_counts():
    fld = LabelField(1)
    with pytest.raises(ValueError):
        build_cover_free_family(3, 2, 1, fld)


def test_three_sets_over_two_points_always_violate():
    # the only antichains in the subsets of {1,2} have size <= 2, so every
    # 3-set family fails; exercised through the escape hatch
    for seed in range(5):
        fam = build_cover_free_family(3, 2, 1, LabelField(seed),
                                      allow_infeasible=True)
        report = fam.audit(delta=1)
        assert report["mode"] == "exhaustive"
        assert report["bad"] >= 1


def test_two_singleton_sets_pass():
    fam = SetFamily(np.array([[1], [2]], dtype=np.uint64), ground=2, stream="family:d1/l1")
    report = fam.audit(delta=1)
    assert (report["mode"], report["bad"]) == ("exhaustive", 0)


def test_sampled_audit_large_family_clean():
    # violation probability per triple is (3/4)^200 ~ 1e-25
    fld = LabelField(2024)
    fam = build_cover_free_family(100, 200, 2, fld)
    tuples = sample_tuples(untracked(fld), 100, 2, 100_000)
    report = fam.audit(rng_tuples=tuples, delta=2)
    assert report == {"mode": "sampled", "checked": 100_000, "bad": 0}


def test_family_determinism_and_stream_separation():
    a = build_cover_free_family(20, 60, 2, LabelField(7), level=1)
    b = build_cover_free_family(20, 60, 2, LabelField(7), level=1)
    c = build_cover_free_family(20, 60, 2, LabelField(7), level=2)
    d = build_cover_free_family(20, 60, 2, LabelField(8), level=1)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert a.digest() != d.digest()


def test_contains_matches_row_bits():
    fam = build_cover_free_family(10, 130, 2, LabelField(3))
    for row in (1, 4, 10):
        bits = fam.row_bits(row)
        assert len(bits) == 130
        for el in (1, 2, 63, 64, 65, 129, 130):
            assert fam.contains(row, el) == bool(bits[el - 1])


def test_reduce_min_hand_cases():
    # rows: {1,3}, {2}; ground 3
    words = np.array([[0b101], [0b010]], dtype=np.uint64)
    fam = SetFamily(words, ground=3, stream="x")
    own = words[[0, 0, 1]]
    union = words[[1, 0, 0]]
    out = fam.reduce_min(own, union)
    # {1,3}\{2} -> 1;  {1,3}\{1,3} -> empty;  {2}\{1,3} -> 2
    assert out.tolist() == [1, 0, 2]


def test_tail_bits_masked():
    fam = build_cover_free_family(8, 70, 2, LabelField(11))
    assert fam.nwords == 2
    assert not any(int(w) >> 6 for w in fam.words[:, 1])  # bits past 70 are zero


@given(st.integers(0, 2**32), st.integers(2, 50))
@settings(max_examples=60, deadline=None)
def test_membership_rate_is_fair_bits(seed, ground):
    # each element lands in a set with probability 1/2; crude 5-sigma band
    fam = build_cover_free_family(4, ground, 3, LabelField(seed),
                                  allow_infeasible=True)
    total = 4 * ground
    ones = int(sum(fam.row_bits(r).sum() for r in range(1, 5)))
    sd = math.sqrt(total * 0.25)
    assert abs(ones - total / 2) <= 5 * sd + 1


def test_custom_sequence_object():
    seq = ColorSequence(2, (40, 8))
    assert seq.kmax == 2 and seq.n_k(1) == 40 and seq.n_k(2) == 8


def test_exact_exp_paths_agree_past_the_integer_cutoff(monkeypatch):
    import ffcolor.covfree as cf

    # Force the escalating-precision path onto small inputs and compare it
    # with the direct integer comparison, knife-edge floors included.
    monkeypatch.setattr(cf, "INT_CUTOFF", 0)
    for delta in (2, 3, 14):
        for n in (37, 200, 1311):
            k0 = int(math.exp(cover_free_constant(delta) * n))
            for k in (max(k0 - 1, 1), k0, k0 + 1, 2 * k0 + 3):
                want = (k ** (delta + 1) * (2 ** delta - 1) ** n
                        <= 1 << (delta * n))
                assert cf._le_exp_exact(k, n, delta) is want


def test_large_degree_sequence_is_frozen():
    seq = color_sequence(14, 3)
    assert seq.n == (3717910, 3717924, 3718136)

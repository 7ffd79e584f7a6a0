import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colagg.agg import (
    AggregateKind,
    AggState,
    Scalar,
    aggregate_column,
    bulk_update,
    decode_state,
    encode_state,
    finalize,
    init_state,
    merge_states,
)
from colagg.errors import (
    InvalidFloat,
    KindMismatch,
    Overflow,
    UnsupportedValueType,
    UsageError,
)
from colagg.table import Column, DataType, rechunk

from conftest import oracle_components, oracle_final, rel_err

ALL_KINDS = list(AggregateKind)
F8 = DataType.FLOAT64
I8 = DataType.INT64


def farr(vals):
    return np.asarray(vals, dtype=np.float64)


def iarr(vals):
    return np.asarray(vals, dtype=np.int64)


class TestInitState:
    def test_sum_float_identity(self):
        st_ = init_state(AggregateKind.SUM, F8)
        assert st_.components == (0.0,) and st_.empty

    def test_std_identities(self):
        st_ = init_state(AggregateKind.STD, F8)
        assert st_.components == (0.0, 0.0, 0)

    def test_sum_over_utf8_rejected(self):
        with pytest.raises(UnsupportedValueType):
            init_state(AggregateKind.SUM, DataType.UTF8)

    def test_count_over_utf8_allowed(self):
        assert init_state(AggregateKind.COUNT, DataType.UTF8).components == (0,)

    def test_arities(self):
        arity = {"sum": 1, "count": 1, "min": 1, "max": 1, "mean": 2, "std": 3}
        for kind in ALL_KINDS:
            assert len(init_state(kind, F8).components) == arity[kind.value]


class TestBulkUpdate:
    def test_sum_direct(self):
        st_ = bulk_update(init_state(AggregateKind.SUM, F8), farr([1.0, 2.0, 3.0]))
        assert st_.components == (6.0,) and not st_.empty

    def test_mean_direct(self):
        st_ = bulk_update(init_state(AggregateKind.MEAN, F8), farr([1, 2, 3, 4]))
        assert st_.components == (10.0, 4)

    def test_std_matches_elementwise_oracle(self):
        vals = [1.0, 2.0, 3.0]
        expected, _ = oracle_components(AggregateKind.STD, vals, F8)
        st_ = bulk_update(init_state(AggregateKind.STD, F8), farr(vals))
        assert st_.components == expected == (14.0, 6.0, 3)

    def test_dtype_mismatch_rejected(self):
        with pytest.raises(UsageError):
            bulk_update(init_state(AggregateKind.SUM, F8), iarr([1]))

    def test_int_sum_overflow_detected(self):
        st_ = bulk_update(init_state(AggregateKind.SUM, I8), iarr([2**62, 2**62 - 1]))
        assert st_.components == (2**63 - 1,)
        with pytest.raises(Overflow):
            bulk_update(st_, iarr([1]))
        with pytest.raises(Overflow):
            bulk_update(init_state(AggregateKind.SUM, I8), iarr([2**62, 2**62]))

    def test_nan_propagates_through_sum_mean_std(self):
        for kind in (AggregateKind.SUM, AggregateKind.MEAN, AggregateKind.STD):
            st_ = bulk_update(init_state(kind, F8), farr([1.0, float("nan")]))
            assert math.isnan(st_.components[0])

    def test_nan_rejected_by_min_max(self):
        for kind in (AggregateKind.MIN, AggregateKind.MAX):
            with pytest.raises(InvalidFloat):
                bulk_update(init_state(kind, F8), farr([1.0, float("nan")]))


class TestMergeStates:
    def test_mean_component_addition(self):
        a = AggState(AggregateKind.MEAN, F8, (10.0, 4), False)
        b = AggState(AggregateKind.MEAN, F8, (5.0, 1), False)
        assert merge_states(a, b).components == (15.0, 5)

    def test_min_empty_identity(self):
        empty = init_state(AggregateKind.MIN, I8)
        filled = bulk_update(init_state(AggregateKind.MIN, I8), iarr([3]))
        assert merge_states(empty, filled).components == (3,)
        assert merge_states(filled, empty).components == (3,)

    def test_std_merge_matches_concatenated_fold(self):
        a = bulk_update(init_state(AggregateKind.STD, F8), farr([1, 2, 3]))
        b = bulk_update(init_state(AggregateKind.STD, F8), farr([5]))
        merged = merge_states(a, b)
        expected, _ = oracle_components(AggregateKind.STD, [1.0, 2.0, 3.0, 5.0], F8)
        assert merged.components == expected == (39.0, 11.0, 4)

    def test_kind_mismatch(self):
        with pytest.raises(KindMismatch):
            merge_states(init_state(AggregateKind.SUM, F8), init_state(AggregateKind.MIN, F8))

    def test_int_merge_overflow(self):
        a = AggState(AggregateKind.SUM, I8, (2**63 - 1,), False)
        b = AggState(AggregateKind.SUM, I8, (1,), False)
        with pytest.raises(Overflow):
            merge_states(a, b)

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=0, max_size=20),
        st.lists(st.floats(-1e6, 1e6), min_size=0, max_size=20),
        st.lists(st.floats(-1e6, 1e6), min_size=0, max_size=20),
    )
    @settings(max_examples=60, deadline=None)
    def test_merge_associative_within_tolerance(self, xs, ys, zs):
        for kind in ALL_KINDS:
            a = bulk_update(init_state(kind, F8), farr(xs)) if not (
                kind in (AggregateKind.MIN, AggregateKind.MAX)
            ) else bulk_update(init_state(kind, F8), farr(xs))
            b = bulk_update(init_state(kind, F8), farr(ys))
            c = bulk_update(init_state(kind, F8), farr(zs))
            left = merge_states(merge_states(a, b), c)
            right = merge_states(a, merge_states(b, c))
            assert left.empty == right.empty
            for lc, rc in zip(left.components, right.components):
                if isinstance(lc, int):
                    assert lc == rc
                else:
                    assert rel_err(lc, rc) <= 1e-12

    def test_merge_identity_is_exact(self):
        # the identity must return the other side unchanged: adding a literal
        # 0.0 would rewrite a -0.0 component
        neg_zero = AggState(AggregateKind.SUM, F8, (-0.0,), False)
        for merged in (
            merge_states(neg_zero, init_state(AggregateKind.SUM, F8)),
            merge_states(init_state(AggregateKind.SUM, F8), neg_zero),
        ):
            assert math.copysign(1.0, merged.components[0]) == -1.0


class TestFinalize:
    def test_mean(self):
        assert finalize(AggState(AggregateKind.MEAN, F8, (10.0, 4), False)) == Scalar.float64(2.5)

    def test_std_population_form(self):
        got = finalize(AggState(AggregateKind.STD, F8, (14.0, 6.0, 3), False))
        expected = oracle_final(AggregateKind.STD, [1.0, 2.0, 3.0], F8)
        assert got.value == expected
        assert abs(got.value - 0.816496580927726) < 1e-15

    def test_empty_conventions(self):
        assert finalize(init_state(AggregateKind.MIN, I8)) is Scalar.NO_VALUE
        assert finalize(init_state(AggregateKind.COUNT, I8)) == Scalar.int64(0)
        assert finalize(init_state(AggregateKind.SUM, F8)) is Scalar.NO_VALUE

    def test_radicand_clamped(self):
        # a state whose naive variance is a tiny negative number
        st_ = AggState(AggregateKind.STD, F8, (4.0 - 1e-18, 4.0, 4), False)
        assert finalize(st_).value == 0.0

    def test_int_sum_stays_int(self):
        st_ = bulk_update(init_state(AggregateKind.SUM, I8), iarr([1, 2, 3]))
        out = finalize(st_)
        assert out.dtype is I8 and out.value == 6 and isinstance(out.value, int)


class TestAggregateColumn:
    def test_mean_chunked(self):
        col = rechunk(Column.from_pylist("v", [1.0, 2.0, 3.0, 4.0]), 2)
        assert aggregate_column(col, AggregateKind.MEAN).components == (10.0, 4)

    def test_sum_empty(self):
        col = Column.from_pylist("v", [])
        st_ = aggregate_column(col, AggregateKind.SUM)
        assert st_.components == (0,) and st_.empty

    def test_max_hand_checked(self):
        col = Column.from_pylist("v", [7, -2, 7])
        assert aggregate_column(col, AggregateKind.MAX).components == (7,)

    def test_count_on_utf8(self):
        col = Column.from_pylist("s", ["a", "b", "c"])
        assert finalize(aggregate_column(col, AggregateKind.COUNT)) == Scalar.int64(3)
        with pytest.raises(UnsupportedValueType):
            aggregate_column(col, AggregateKind.SUM)


class TestChunkNeutrality:
    @pytest.mark.parametrize("chunk_rows", [1, 7, 65536])
    def test_all_kinds_bitwise(self, chunk_rows):
        rng = np.random.default_rng(11)
        fvals = rng.uniform(-1e6, 1e6, 1000)
        ivals = rng.integers(-(10**6), 10**6, 1000)
        fcol = Column.from_numpy("f", fvals)
        icol = Column.from_numpy("i", ivals.astype(np.int64))
        for kind in ALL_KINDS:
            base_f = aggregate_column(fcol, kind)
            re_f = aggregate_column(rechunk(fcol, chunk_rows), kind)
            assert base_f == re_f  # bitwise: threading preserves fold order
            base_i = aggregate_column(icol, kind)
            re_i = aggregate_column(rechunk(icol, chunk_rows), kind)
            assert base_i == re_i


class TestOracleEquivalence:
    @given(st.lists(st.floats(-1e6, 1e6), max_size=200))
    @settings(max_examples=60, deadline=None)
    def test_float_kinds_match_scalar_loop(self, vals):
        col = Column.from_numpy("v", farr(vals))
        for kind in ALL_KINDS:
            got = finalize(aggregate_column(col, kind))
            expected = oracle_final(kind, vals, F8)
            if expected is None:
                assert got.is_no_value
            elif isinstance(expected, int):
                assert got.value == expected
            else:
                assert rel_err(got.value, expected) <= 1e-9

    @given(st.lists(st.integers(-(10**9), 10**9), max_size=200))
    @settings(max_examples=60, deadline=None)
    def test_int_kinds_exact(self, vals):
        col = Column.from_numpy("v", iarr(vals))
        for kind in (AggregateKind.SUM, AggregateKind.COUNT, AggregateKind.MIN, AggregateKind.MAX):
            got = finalize(aggregate_column(col, kind))
            expected = oracle_final(kind, vals, I8)
            if expected is None:
                assert got.is_no_value
            else:
                assert got.value == expected

    def test_mean_equals_sum_over_count(self):
        rng = np.random.default_rng(5)
        vals = rng.uniform(-1e6, 1e6, 4096)
        col = Column.from_numpy("v", vals)
        mean = finalize(aggregate_column(col, AggregateKind.MEAN)).value
        s = finalize(aggregate_column(col, AggregateKind.SUM)).value
        c = finalize(aggregate_column(col, AggregateKind.COUNT)).value
        assert rel_err(mean, s / c) <= 1e-12


class TestStateWire:
    def test_round_trip_all_kinds(self):
        rng = np.random.default_rng(2)
        fvals = farr(rng.uniform(-10, 10, 17))
        ivals = iarr(rng.integers(-100, 100, 17))
        for kind in ALL_KINDS:
            for dtype, vals in ((F8, fvals), (I8, ivals)):
                st_ = bulk_update(init_state(kind, dtype), vals)
                back = decode_state(encode_state(st_), kind, dtype)
                assert back == st_

    def test_empty_flag_round_trips(self):
        st_ = init_state(AggregateKind.MIN, F8)
        buf = encode_state(st_)
        assert buf[1] == 1
        assert decode_state(buf, AggregateKind.MIN, F8).empty

    def test_kind_tag_order(self):
        # wire tags 0..5 in declaration order
        for i, kind in enumerate(ALL_KINDS):
            assert encode_state(init_state(kind, F8))[0] == i

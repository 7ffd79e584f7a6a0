import numpy as np
import pytest

from colagg.agg import AggregateKind, Scalar, aggregate_column, finalize, init_state
from colagg.cluster import (
    all_reduce_states,
    dist_aggregate,
    dist_groupby,
    gather_tables,
    launch_local_cluster,
)
from colagg.errors import ProtocolViolation, UsageError
from colagg.groupby import GroupByRequest, Strategy
from colagg.jobs import JobSpec
from colagg.bench import launch_job, run_verify
from colagg.table import Table, table_row_slice

from conftest import random_table, rel_err


def tbl(**cols):
    return Table.from_pydict(cols)


class TestCollectives:
    def test_p1_self_delivery(self):
        def job(ctx):
            return ctx.communicator.all_to_all([b"payload"])

        assert launch_local_cluster(1, job) == [[b"payload"]]

    def test_delivery_matrix(self):
        # rank i sends "i->j" to rank j; every rank must hold exactly column j
        P = 4

        def job(ctx):
            out = [f"{ctx.rank}->{j}".encode() for j in range(P)]
            return ctx.communicator.all_to_all(out)

        results = launch_local_cluster(P, job)
        for j, received in enumerate(results):
            assert received == [f"{i}->{j}".encode() for i in range(P)]

    def test_barrier_only_job_completes(self):
        def job(ctx):
            for _ in range(5):
                ctx.barrier()
            return ctx.rank

        assert launch_local_cluster(4, job) == [0, 1, 2, 3]

    def test_all_reduce_sum_states(self):
        from colagg.agg import AggState, DataType

        def job(ctx):
            st = AggState(AggregateKind.SUM, DataType.INT64, (3 + ctx.rank,), False)
            return all_reduce_states(ctx, [st])[0]

        r0, r1 = launch_local_cluster(2, job)
        assert r0 == r1 and r0.components == (7,)

    def test_all_reduce_kind_mismatch_raises_everywhere(self):
        from colagg.table import DataType

        def job(ctx):
            kind = AggregateKind.SUM if ctx.rank == 0 else AggregateKind.MIN
            try:
                all_reduce_states(ctx, [init_state(kind, DataType.FLOAT64)])
            except ProtocolViolation:
                return "raised"
            return "silent"

        assert launch_local_cluster(2, job) == ["raised", "raised"]

    def test_arity_mismatch(self):
        def job(ctx):
            with pytest.raises(ProtocolViolation):
                ctx.communicator.all_to_all([b""] * 3)
            ctx.communicator.barrier = lambda: None  # keep teardown quiet
            return True

        assert launch_local_cluster(2, job) == [True, True]

    def test_gather_tables_rank_order(self):
        def job(ctx):
            shard = tbl(k=[ctx.rank], v=[float(ctx.rank)])
            return gather_tables(ctx, shard, root=0)

        results = launch_local_cluster(3, job)
        assert results[0].columns[0].pylist() == [0, 1, 2]
        assert results[1] is None and results[2] is None

    def test_worker_exception_propagates(self):
        def job(ctx):
            if ctx.rank == 1:
                raise UsageError("boom on rank 1")
            ctx.barrier()  # would deadlock without barrier abort

        with pytest.raises(UsageError, match="boom"):
            launch_local_cluster(2, job)


class TestDistAggregate:
    def test_sum_same_on_all_ranks(self):
        shards = [tbl(v=[1.0, 2.0]), tbl(v=[3.0, 4.0])]

        def job(ctx):
            return dist_aggregate(ctx, shards[ctx.rank], 0, AggregateKind.SUM)

        results = launch_local_cluster(2, job)
        assert results[0] == results[1] == Scalar.float64(10.0)

    def test_empty_shard_contributes_identity(self):
        shards = [tbl(v=[1.0, 2.0]), tbl(v=[3.0]), tbl(v=[])]

        def job(ctx):
            return dist_aggregate(ctx, shards[ctx.rank], 0, AggregateKind.MEAN)

        assert launch_local_cluster(3, job) == [Scalar.float64(2.0)] * 3

    def test_std_matches_single_process_oracle(self):
        rng = np.random.default_rng(17)
        full = tbl(v=rng.uniform(0, 1, 10_000).tolist())
        shards = [table_row_slice(full, r * 2500, (r + 1) * 2500) for r in range(4)]
        expected = finalize(aggregate_column(full.columns[0], AggregateKind.STD))

        def job(ctx):
            return dist_aggregate(ctx, shards[ctx.rank], 0, AggregateKind.STD)

        for got in launch_local_cluster(4, job):
            assert rel_err(got.value, expected.value) <= 1e-9

    def test_all_empty_shards_gives_no_value(self):
        shards = [tbl(v=[]), tbl(v=[])]

        def job(ctx):
            return dist_aggregate(ctx, shards[ctx.rank], 0, AggregateKind.MIN)

        assert launch_local_cluster(2, job) == [Scalar.NO_VALUE] * 2


class TestDistGroupBy:
    def _run(self, shards, req, combiner, strategy=Strategy.HASH):
        def job(ctx):
            out = dist_groupby(ctx, shards[ctx.rank], req, combiner, strategy)
            gathered = gather_tables(ctx, out.grouped.table, root=0)
            return out, gathered

        return launch_local_cluster(len(shards), job)

    def test_two_rank_union(self):
        shards = [tbl(k=[1, 2], v=[1.0, 1.0]), tbl(k=[1, 3], v=[1.0, 1.0])]
        req = GroupByRequest((0,), ((1, AggregateKind.SUM),))
        results = self._run(shards, req, combiner=True)
        gathered = results[0][1]
        rows = dict(zip(gathered.columns[0].pylist(), gathered.columns[1].pylist()))
        assert rows == {1: 2.0, 2: 1.0, 3: 1.0}

    def test_group_disjointness_across_ranks(self):
        rng = np.random.default_rng(5)
        shards = [random_table(rng, 500, 40) for _ in range(4)]
        req = GroupByRequest((0,), ((1, AggregateKind.COUNT),))
        results = self._run(shards, req, combiner=True)
        key_sets = [set(out.grouped.table.columns[0].pylist()) for out, _ in results]
        seen = set()
        for ks in key_sets:
            assert not (seen & ks)
            seen |= ks
        all_keys = set()
        for s in shards:
            all_keys |= set(s.columns[0].pylist())
        assert seen == all_keys

    def test_combiner_on_off_same_gathered_result(self):
        rng = np.random.default_rng(6)
        shards = [random_table(rng, 400, 13) for _ in range(3)]
        req = GroupByRequest((0,), ((1, AggregateKind.SUM), (1, AggregateKind.MEAN)))
        on = self._run(shards, req, combiner=True)[0][1]
        off = self._run(shards, req, combiner=False)[0][1]
        got_on = {
            k: vals
            for k, *vals in zip(*(c.pylist() for c in on.columns))
        }
        got_off = {
            k: vals
            for k, *vals in zip(*(c.pylist() for c in off.columns))
        }
        assert got_on.keys() == got_off.keys()
        for k in got_on:
            for a, b in zip(got_on[k], got_off[k]):
                assert rel_err(a, b) <= 1e-9

    def test_combiner_row_reduction(self):
        # N_P = 10^4 rows over 10 local keys: 10 rows cross the wire with the
        # combiner, all 10^4 without
        rng = np.random.default_rng(8)
        n, g = 10_000, 10
        shard = tbl(
            k=(np.arange(n) % g).tolist(), v=rng.uniform(0, 1, n).tolist()
        )
        req = GroupByRequest((0,), ((1, AggregateKind.SUM),))

        def job_on(ctx):
            return dist_groupby(ctx, shard, req, True).stats.rows_sent

        def job_off(ctx):
            return dist_groupby(ctx, shard, req, False).stats.rows_sent

        assert launch_local_cluster(1, job_on) == [g]
        assert launch_local_cluster(1, job_off) == [n]

    @pytest.mark.parametrize("strategy", list(Strategy))
    def test_strategies_match_oracle_distributed(self, strategy):
        spec = JobSpec(
            op="groupby", world_size=4, rows=8000, groups=60, seed=21,
            strategy=strategy.value, use_combiner=True,
            agg_kinds=["sum", "count", "min", "max", "mean", "std"],
            value_cols=["v"],
        )
        report = run_verify(spec)
        assert report.passed, report.detail

    def test_rows_sent_conservation(self):
        spec = JobSpec(
            op="groupby", world_size=4, rows=4000, groups=30, seed=2,
            use_combiner=False,
        )
        outcome = launch_job(spec)
        assert outcome.rows_sent_total == outcome.rows_received_total == 4000


class TestParallelInvariance:
    def test_fixed_dataset_across_world_sizes(self):
        base = dict(rows=8192, groups=64, seed=77, data_parts=8)
        # integer aggregates: bitwise identical checksums across P
        int_sums = set()
        float_results = {}
        for world in (1, 2, 4, 8):
            out_i = launch_job(
                JobSpec(op="groupby", world_size=world,
                        value_cols=["k"], agg_kinds=["sum"], **base)
            )
            int_sums.add(out_i.checksum())
            out_f = launch_job(
                JobSpec(op="groupby", world_size=world,
                        value_cols=["v"], agg_kinds=["std"], **base)
            )
            float_results[world] = {
                k: v
                for k, v in zip(
                    out_f.table.columns[0].pylist(), out_f.table.columns[1].pylist()
                )
            }
        assert len(int_sums) == 1
        baseline = float_results[1]
        for world in (2, 4, 8):
            assert float_results[world].keys() == baseline.keys()
            for k, v in float_results[world].items():
                assert rel_err(v, baseline[k]) <= 1e-9

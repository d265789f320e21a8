import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import WORKED, worked_gains
from taskgroup import (
    GainMatrix,
    PairAccumulator,
    StepGainRecord,
    accumulate,
    finalize,
    group_gain_to_task,
    group_to_group_gain,
    read_gain_csv,
    read_record_log,
    write_gain_csv,
    write_record_log,
)
from taskgroup.errors import DomainError, NumericalError, StructuralError


def _replay_means(records, n):
    """Independent recomputation of per-pair means straight from a record list."""
    seen = {}
    for rec in records:
        for key, v in rec.pair_gains.items():
            seen.setdefault(key, []).append(v)
    out = np.zeros((n, n))
    for (i, j), vals in seen.items():
        out[i, j] = math.fsum(vals) / len(vals)
    return out


class TestAccumulate:
    def test_single_observation(self):
        acc = accumulate(PairAccumulator(2), StepGainRecord(1, {(0, 1): 0.2}))
        assert acc.counts[0, 1] == 1
        assert finalize(acc).values[0, 1] == pytest.approx(0.2)

    def test_two_point_average(self):
        acc = PairAccumulator(2)
        accumulate(acc, StepGainRecord(1, {(0, 1): 0.2}))
        accumulate(acc, StepGainRecord(2, {(0, 1): 0.4}))
        assert finalize(acc).values[0, 1] == pytest.approx(0.3)

    def test_constant_sequence(self):
        n, c = 3, 0.125
        acc = PairAccumulator(n)
        for t in range(1, 8):
            accumulate(acc, StepGainRecord(t, {(i, j): c for i in range(n) for j in range(n)}))
        np.testing.assert_array_equal(finalize(acc).values, np.full((n, n), c))

    def test_exact_recovery(self):
        S = np.array(WORKED)
        acc = PairAccumulator(3)
        acc.sums = 4 * S
        acc.counts[:] = 4
        np.testing.assert_array_equal(finalize(acc).values, S)

    def test_unobserved_pair_is_zero_and_reported(self):
        acc = accumulate(PairAccumulator(2), StepGainRecord(1, {(0, 0): 0.5, (1, 1): 0.5, (1, 0): 0.1}))
        S = finalize(acc)
        assert S.values[0, 1] == 0.0
        assert S.uncovered == [(0, 1)]
        assert S.coverage_summary()["covered"] == 3

    def test_out_of_range_pair(self):
        with pytest.raises(StructuralError):
            accumulate(PairAccumulator(2), StepGainRecord(1, {(0, 2): 0.1}))

    def test_full_collection_is_elementwise_mean(self, rng):
        n, T = 4, 9
        mats = rng.normal(size=(T, n, n))
        acc = PairAccumulator(n)
        for t in range(T):
            accumulate(acc, StepGainRecord(t + 1, {(i, j): mats[t, i, j] for i in range(n) for j in range(n)}))
        np.testing.assert_allclose(finalize(acc).values, mats.mean(axis=0), rtol=0, atol=1e-15)

    def test_sampled_means_match_replay(self, rng):
        n = 5
        records = []
        for t in range(1, 60):
            sub = sorted(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
            records.append(StepGainRecord(t, {(i, j): rng.normal() for i in sub for j in sub}))
        acc = PairAccumulator(n)
        for rec in records:
            accumulate(acc, rec)
        np.testing.assert_allclose(finalize(acc).values, _replay_means(records, n), atol=1e-14)

    def test_record_order_does_not_matter(self, rng):
        n = 3
        records = [StepGainRecord(t, {(i, j): float(rng.integers(-8, 8)) / 8 for i in range(n) for j in range(n)})
                   for t in range(1, 20)]
        a, b = PairAccumulator(n), PairAccumulator(n)
        for rec in records:
            accumulate(a, rec)
        for k in rng.permutation(len(records)):
            accumulate(b, records[k])
        assert finalize(a) == finalize(b)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericalError):
            StepGainRecord(1, {(0, 1): math.inf})


class TestGroupGains:
    def test_singleton_source(self):
        S = worked_gains()
        for i in range(3):
            for j in range(3):
                if i != j:
                    assert group_gain_to_task(S, [i], j) == S.values[i, j]

    def test_constant_matrix(self):
        S = GainMatrix.from_array(np.full((4, 4), 0.7))
        assert group_gain_to_task(S, [0, 2, 3], 1) == pytest.approx(0.7)

    def test_worked_group_to_task(self):
        assert group_gain_to_task(worked_gains(), {0, 1}, 2) == pytest.approx(-0.25)

    def test_worked_group_to_group(self):
        assert group_to_group_gain(worked_gains(), {0}, {1, 2}) == pytest.approx(0.1)

    def test_single_target_reduces(self):
        S = worked_gains()
        assert group_to_group_gain(S, {0, 1}, {2}) == group_gain_to_task(S, {0, 1}, 2)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_additive_over_disjoint_targets(self, seed):
        rng = np.random.default_rng(seed)
        n = 6
        S = GainMatrix.from_array(rng.normal(size=(n, n)))
        perm = rng.permutation(n)
        A, B1, B2 = perm[:2], perm[2:4], perm[4:]
        whole = group_to_group_gain(S, A, np.concatenate([B1, B2]))
        parts = group_to_group_gain(S, A, B1) + group_to_group_gain(S, A, B2)
        assert whole == pytest.approx(parts, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.01, 100.0), st.integers(0, 2**31 - 1))
    def test_linear_in_gains(self, alpha, seed):
        rng = np.random.default_rng(seed)
        S = GainMatrix.from_array(rng.normal(size=(4, 4)))
        assert group_gain_to_task(S.scaled(alpha), [0, 1, 3], 2) == pytest.approx(
            alpha * group_gain_to_task(S, [0, 1, 3], 2), rel=1e-12, abs=1e-12
        )

    def test_empty_sets_rejected(self):
        with pytest.raises(DomainError):
            group_gain_to_task(worked_gains(), [], 0)
        with pytest.raises(DomainError):
            group_to_group_gain(worked_gains(), [0], [])


class TestGainMatrix:
    def test_rejects_bad_shapes(self):
        with pytest.raises(StructuralError):
            GainMatrix.from_array(np.zeros((2, 3)))
        with pytest.raises(StructuralError):
            GainMatrix(("a", "a"), np.zeros((2, 2)))

    def test_rejects_non_finite(self):
        with pytest.raises((StructuralError, NumericalError)):
            GainMatrix.from_array([[0.0, np.nan], [0.0, 0.0]])

    def test_values_read_only(self):
        S = worked_gains()
        with pytest.raises(ValueError):
            S.values[0, 0] = 1.0


class TestSerialisation:
    def test_csv_round_trip_is_exact(self, tmp_path, rng):
        S = GainMatrix(("alpha", "beta", "gamma"), rng.normal(size=(3, 3)) / 7)
        path = tmp_path / "gains.csv"
        write_gain_csv(S, path)
        raw = path.read_bytes()
        assert raw.startswith(b"task,alpha,beta,gamma\n")
        assert b"\r" not in raw
        back = read_gain_csv(path)
        assert back.names == S.names
        np.testing.assert_array_equal(back.values, S.values)

    def test_csv_row_name_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("task,a,b\na,1,2\nc,3,4\n")
        with pytest.raises(StructuralError):
            read_gain_csv(path)

    def test_csv_ragged_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("task,a,b\na,1\nb,3,4\n")
        with pytest.raises(StructuralError):
            read_gain_csv(path)

    def test_record_log_round_trip(self, tmp_path):
        recs = [StepGainRecord(1, {(0, 1): 0.25, (1, 0): -0.5}), StepGainRecord(2, {(0, 0): 0.1}, skipped={(1, 1)})]
        path = tmp_path / "log.jsonl"
        write_record_log(recs, path)
        lines = path.read_text().splitlines()
        assert lines[0] == '{"step":1,"gains":[[0,1,0.25],[1,0,-0.5]]}'
        back = read_record_log(path)
        assert [r.pair_gains for r in back] == [r.pair_gains for r in recs]
        assert back[1].skipped == {(1, 1)}

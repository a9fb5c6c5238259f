"""Synthetic-set generators: budgets, boundary mechanics, determinism."""

import math
from collections import deque

import numpy as np
import pytest

from copysampler import (
    BoundaryParams,
    HalfspaceOracle,
    JacobianParams,
    LabeledSample,
    Thread,
    binary_search_boundary,
    boundary_distance,
    boundary_sampler,
    jacobian_sampler,
    random_sampler,
    thread_step,
)
from copysampler.core import RandomSource


class TestRandomSampler:
    def test_single_sample(self, circles):
        ds = random_sampler(1, circles, RandomSource(1))
        assert len(ds) == 1
        assert 0 <= ds.y[0] < circles.k

    def test_class_balance_on_halfspace(self, halfspace):
        ds = random_sampler(10_000, halfspace, RandomSource(2))
        frac0 = np.mean(ds.y == 0)
        assert abs(frac0 - 0.5) < 0.02  # binomial 3 sigma is 0.015

    def test_prefix_reproduces_smaller_budget(self, circles):
        big = random_sampler(1000, circles, RandomSource(3))
        small = random_sampler(100, circles, RandomSource(3))
        np.testing.assert_array_equal(big.prefix(100).X, small.X)
        np.testing.assert_array_equal(big.prefix(100).y, small.y)

    def test_budget_validation(self, circles):
        with pytest.raises(ValueError):
            random_sampler(0, circles, RandomSource(1))


class TestBinarySearch:
    def test_1d_example_exact_bisection_count(self):
        oracle = HalfspaceOracle(w=(1.0,), c=0.5)
        a = LabeledSample(np.array([0.0]), 0)
        b = LabeledSample(np.array([1.0]), 1)
        (pa, pb), visited = binary_search_boundary(a, b, 0.01, oracle)
        assert len(visited) == 7  # ceil(log2(1 / 0.01))
        gap = float(np.linalg.norm(pa.point - pb.point))
        assert gap < 0.01
        assert pa.label != pb.label
        assert min(pa.point[0], pb.point[0]) < 0.5 <= max(pa.point[0], pb.point[0])

    def test_close_endpoints_skip_search(self, halfspace):
        a = LabeledSample(np.array([0.499, 0.2]), 0)
        b = LabeledSample(np.array([0.501, 0.2]), 1)
        pair, visited = binary_search_boundary(a, b, 0.01, halfspace)
        assert visited == []
        np.testing.assert_array_equal(pair[0].point, a.point)
        np.testing.assert_array_equal(pair[1].point, b.point)

    def test_visited_equals_query_cost(self, halfspace):
        before = halfspace.query_count
        a = LabeledSample(np.array([0.0, 0.5]), 0)
        b = LabeledSample(np.array([1.0, 0.5]), 1)
        _, visited = binary_search_boundary(a, b, 0.01, halfspace)
        assert halfspace.query_count - before == len(visited)

    def test_equal_labels_rejected(self, halfspace):
        a = LabeledSample(np.array([0.1, 0.1]), 0)
        b = LabeledSample(np.array([0.2, 0.2]), 0)
        with pytest.raises(ValueError):
            binary_search_boundary(a, b, 0.01, halfspace)

    def test_randomized_contract(self, circles):
        # straddle + bisection bound over many random endpoint pairs
        rng = RandomSource(44)
        done = 0
        while done < 100:
            za = rng.uniform(2)
            zb = rng.uniform(2)
            ya, yb = circles.query(za), circles.query(zb)
            if ya == yb:
                continue
            d0 = float(np.linalg.norm(za - zb))
            (pa, pb), visited = binary_search_boundary(
                LabeledSample(za, ya), LabeledSample(zb, yb), 0.01, circles
            )
            assert float(np.linalg.norm(pa.point - pb.point)) < 0.01
            assert pa.label != pb.label
            assert len(visited) <= math.ceil(math.log2(max(d0 / 0.01, 1.0))) + 1
            done += 1


class TestBoundaryParams:
    def test_table_formulas_at_1000(self):
        p = BoundaryParams().resolved(1000)
        assert p.runs == 9            # round(2 + ln 1000)
        assert p.max_threads == 36    # round(8 + 4 ln 1000)
        assert p.max_steps == 22      # floor(5 + 2.6 ln 1000)

    def test_epsilon_step_ordering_enforced(self):
        with pytest.raises(ValueError):
            BoundaryParams(epsilon=0.1, step=0.05)

    def test_explicit_values_respected(self):
        p = BoundaryParams(runs=3, max_threads=5, max_steps=7).resolved(10**6)
        assert (p.runs, p.max_threads, p.max_steps) == (3, 5, 7)


class TestThreadStep:
    def _fresh_thread(self, point, label, direction, countdown=10**9):
        return Thread(
            current=LabeledSample(np.asarray(point, dtype=float), label),
            direction=np.asarray(direction, dtype=float),
            steps_taken=0,
            spawn_countdown=countdown,
        )

    def test_flip_needs_normal_component(self, halfspace):
        # u parallel to the boundary: whenever a step is accepted, its
        # direction must tilt across the plane, the only place the label
        # can change; whether one is accepted depends on the drawn
        # orthogonal direction, so scan several seeds
        start = np.array([0.498, 0.5])
        accepted = 0
        for seed in range(10):
            thread = self._fresh_thread(start, halfspace.query(start), [0.0, 1.0])
            out = thread_step(thread, halfspace, 0.05, 5.0, RandomSource(seed), deque())
            if out is None:
                continue
            accepted += 1
            v = out.current.point - start
            assert abs(v[0]) > 1e-12
            assert out.current.label != thread.current.label
        assert accepted >= 3

    def test_step_length_is_exact(self, halfspace):
        start = np.array([0.48, 0.5])
        thread = self._fresh_thread(start, halfspace.query(start), [1.0, 0.0])
        out = thread_step(thread, halfspace, 0.05, 5.0, RandomSource(5), deque())
        assert out is not None
        assert float(np.linalg.norm(out.current.point - start)) == pytest.approx(
            0.05, abs=1e-12
        )

    def test_direction_stays_unit(self, halfspace):
        thread = self._fresh_thread([0.45, 0.5], 0, [1.0, 0.0])
        out = thread_step(thread, halfspace, 0.05, 5.0, RandomSource(6), deque())
        assert abs(float(np.linalg.norm(out.direction)) - 1.0) < 1e-12

    def test_out_of_range_probe_stops_thread(self, halfspace):
        thread = self._fresh_thread([0.999, 0.5], 1, [1.0, 0.0])
        out = thread_step(thread, halfspace, 0.05, 5.0, RandomSource(7), deque())
        assert out is None

    def test_no_flip_stops_thread(self):
        constant = HalfspaceOracle(w=(1.0, 0.0), c=2.0)  # label 0 everywhere
        thread = self._fresh_thread([0.5, 0.5], 0, [1.0, 0.0])
        out = thread_step(thread, constant, 0.05, 5.0, RandomSource(8), deque())
        assert out is None

    def test_spawn_gap_mean(self, halfspace):
        # walk a thread along the plane for 1e4 accepted steps and measure
        # the gaps between pending-queue pushes
        rng = RandomSource(9)
        pending: deque = deque()
        spawn_steps = []
        step_count = 0
        thread = self._fresh_thread([0.5, 0.5], 1, [0.0, 1.0], countdown=0)
        thread = Thread(thread.current, thread.direction, 0, 5)
        while step_count < 10_000:
            out = thread_step(thread, halfspace, 0.01, 5.0, rng, pending)
            if out is None:  # wandered to an edge; restart mid-plane
                point = np.array([0.5, 0.5])
                thread = Thread(
                    LabeledSample(point, halfspace.query(point)),
                    np.array([0.0, 1.0]), 0, thread.spawn_countdown,
                )
                continue
            step_count += 1
            if len(pending) > len(spawn_steps):
                spawn_steps.append(step_count)
            thread = out
        gaps = np.diff(np.array(spawn_steps))
        assert abs(gaps.mean() - 5.0) < 0.2

    def test_1d_thread_moves(self):
        oracle = HalfspaceOracle(w=(1.0,), c=0.5)
        thread = self._fresh_thread([0.48], 0, [1.0])
        out = thread_step(thread, oracle, 0.05, 5.0, RandomSource(10), deque())
        assert out is not None
        assert out.current.label == 1


class TestBoundarySampler:
    def test_budget_and_range(self, circles):
        ds = boundary_sampler(501, circles, rng=RandomSource(11))
        assert len(ds) == 501
        assert np.all(ds.X >= 0.0) and np.all(ds.X <= 1.0)
        assert ds.query_count >= len(ds)

    def test_half_split_metadata(self, circles):
        ds = boundary_sampler(501, circles, rng=RandomSource(12))
        assert ds.metadata["phase_split"] == 250  # floor(N/2) uniform first

    def test_determinism_byte_for_byte(self, tmp_path, circles):
        import copy

        a = boundary_sampler(300, circles, rng=RandomSource(13))
        b = boundary_sampler(300, copy.deepcopy(circles), rng=RandomSource(13))
        pa = a.to_csv(tmp_path / "a.csv")
        pb = b.to_csv(tmp_path / "b.csv")
        assert pa.read_bytes() == pb.read_bytes()

    def test_constant_oracle_falls_back(self):
        constant = HalfspaceOracle(w=(1.0, 0.0), c=2.0)
        ds = boundary_sampler(2000, constant, rng=RandomSource(14))
        assert len(ds) == 2000
        assert ds.metadata["fallback_uniform"] is True
        assert np.all(ds.y == 0)

    def test_boundary_concentration_smoke(self, circles):
        ds = boundary_sampler(600, circles, rng=RandomSource(15))
        split = ds.metadata["phase_split"]
        dists = np.array([boundary_distance(circles, z) for z in ds.X[split:]])
        assert np.mean(dists <= 0.1) >= 0.25

    def test_min_budget(self, circles):
        with pytest.raises(ValueError):
            boundary_sampler(1, circles, rng=RandomSource(0))


class TestJacobianSampler:
    def test_offsets_have_step_infinity_norm(self, circles):
        trace: list = []
        jacobian_sampler(200, circles, rng=RandomSource(16), trace=trace)
        assert trace, "augmentation must happen"
        for source, pre_clip in trace:
            offset = pre_clip - source
            assert float(np.abs(offset).max()) == pytest.approx(0.05, abs=1e-15)

    def test_offsets_are_diagonal_in_2d(self, circles):
        trace: list = []
        jacobian_sampler(300, circles, rng=RandomSource(17), trace=trace)
        offsets = np.array([pc - src for src, pc in trace])
        unit = offsets / 0.05
        # each component is -1, 0 (exact zero gradient), or +1, up to the
        # rounding of the source + step addition
        snapped = np.round(unit, 12)
        assert np.all(np.isin(snapped, [-1.0, 0.0, 1.0]))
        diag = np.abs(snapped) == 1.0
        assert diag.all(axis=1).mean() > 0.9  # overwhelmingly diagonal

    def test_refit_cap_formula(self, circles):
        params = JacobianParams().resolved(200)
        assert params.refits == 55  # min(100, round(5 + 200/4))
        ds = jacobian_sampler(200, circles, params=params, rng=RandomSource(18))
        assert ds.metadata["refit_attempts"] <= 55

    def test_budget_exactness(self, circles):
        ds = jacobian_sampler(137, circles, rng=RandomSource(19))
        assert len(ds) == 137
        assert np.all(ds.X >= 0.0) and np.all(ds.X <= 1.0)

    def test_budget_below_seed_count_rejected(self, circles):
        with pytest.raises(ValueError):
            jacobian_sampler(30, circles, rng=RandomSource(20))

    def test_determinism(self, circles):
        import copy

        a = jacobian_sampler(120, circles, rng=RandomSource(21))
        b = jacobian_sampler(120, copy.deepcopy(circles), rng=RandomSource(21))
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)


class TestAllSamplersShared:
    @pytest.mark.parametrize("make", [
        lambda o, r: random_sampler(80, o, r),
        lambda o, r: boundary_sampler(80, o, rng=r),
        lambda o, r: jacobian_sampler(80, o, rng=r),
    ])
    def test_budget_range_and_accounting(self, circles, make):
        before = circles.query_count
        ds = make(circles, RandomSource(22))
        assert len(ds) == 80
        assert np.all(ds.X >= 0.0) and np.all(ds.X <= 1.0)
        assert ds.query_count == circles.query_count - before
        assert ds.query_count >= 80

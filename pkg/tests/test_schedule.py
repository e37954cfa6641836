import numpy as np
import pytest

from mgtsd.rng import rng_stream
from mgtsd.schedule import (
    GranularitySchedule,
    ScheduleSpec,
    derive_gran_schedule,
    linear_beta_schedule,
    share_ratio_to_index,
)


class TestLinearBetaSchedule:
    def test_two_step_example(self):
        spec = linear_beta_schedule(2, 0.1, 0.3)
        assert np.allclose(spec.betas, [0.1, 0.3])
        assert np.allclose(spec.alphas, [0.9, 0.7])
        assert np.allclose(spec.alpha_bars, [0.9, 0.63])

    def test_alpha_bar_strictly_decreasing(self):
        spec = linear_beta_schedule(100, 1e-4, 0.1)
        assert np.all(np.diff(spec.alpha_bars) < 0)
        assert spec.alpha_bars[-1] < spec.alpha_bars[0]

    def test_default_bounds_accepted(self):
        spec = linear_beta_schedule(100)
        assert spec.num_steps == 100
        assert spec.betas[0] == pytest.approx(1e-4)
        assert spec.betas[-1] == pytest.approx(0.1)

    @pytest.mark.parametrize(
        "args", [(1, 0.1, 0.2), (10, 0.0, 0.2), (10, 0.3, 0.2), (10, 0.1, 1.0)]
    )
    def test_invalid_bounds_rejected(self, args):
        with pytest.raises(ValueError):
            linear_beta_schedule(*args)


class TestShareRatioToIndex:
    def test_formula_inversion(self):
        assert share_ratio_to_index(0.8, 100) == 21
        assert share_ratio_to_index(0.2, 100) == 81

    def test_full_share_maps_to_one(self):
        assert share_ratio_to_index(1.0, 100) == 1
        assert share_ratio_to_index(1.0, 7) == 1

    def test_invalid_ratio(self):
        with pytest.raises(ValueError):
            share_ratio_to_index(0.0, 10)
        with pytest.raises(ValueError):
            share_ratio_to_index(1.5, 10)

    def test_round_half_up_then_clamp(self):
        # N(1-r) = 2.5 rounds up to 3, so the start index is 4
        assert share_ratio_to_index(0.75, 10) == 4
        assert share_ratio_to_index(1e-9, 10) == 10


class TestDeriveGranSchedule:
    BASE = ScheduleSpec(np.array([0.1, 0.2, 0.3, 0.4]))  # alphas 0.9 0.8 0.7 0.6

    def test_direct_products(self):
        gs = derive_gran_schedule(self.BASE, 3)
        assert np.allclose(gs.alphas, [1.0, 1.0, 0.7, 0.6])
        assert np.allclose(gs.a[1:], [1.0, 1.0, 0.7, 0.42])
        assert np.allclose(gs.b[1:], [0.0, 0.0, 0.3, 0.58])

    def test_start_one_is_base_schedule(self):
        gs = derive_gran_schedule(self.BASE, 1)
        assert np.array_equal(gs.a[1:], self.BASE.alpha_bars)

    def test_maximal_truncation(self):
        gs = derive_gran_schedule(self.BASE, 4)
        assert np.array_equal(gs.a[1:4], np.ones(3))
        assert gs.a[4] == self.BASE.alphas[3]

    def test_out_of_range_start(self):
        with pytest.raises(ValueError):
            derive_gran_schedule(self.BASE, 0)
        with pytest.raises(ValueError):
            derive_gran_schedule(self.BASE, 5)

    def test_sigma_plugin_example(self):
        gs = derive_gran_schedule(ScheduleSpec(np.array([0.1, 0.2])), 1)
        assert gs.sigma(2) == pytest.approx((1 - 0.9) / (1 - 0.72) * 0.2)
        assert gs.sigma(1) == 0.0  # empty product convention a_0 = 1

    def test_frozen_steps_have_zero_sigma(self):
        gs = derive_gran_schedule(self.BASE, 3)
        assert gs.sigma(1) == 0.0
        assert gs.sigma(2) == 0.0
        # first active step is deterministic too: a_{n*-1} = 1
        assert gs.sigma(3) == 0.0
        assert gs.sigma(4) > 0.0


@pytest.mark.parametrize("seed", range(10))
def test_schedule_identities_random(seed):
    s = rng_stream(seed)
    N = int(s.integers(4, 101))
    base = linear_beta_schedule(N, 1e-4, float(s.uniform(0.05, 0.3)))
    starts = sorted(set(int(x) for x in s.integers(1, N + 1, size=3)))
    prev: GranularitySchedule | None = None
    for n_star in starts:
        gs = derive_gran_schedule(base, n_star)
        # frozen below the start index, shared at and above it
        assert np.array_equal(gs.alphas[: n_star - 1], np.ones(n_star - 1))
        assert np.array_equal(gs.alphas[n_star - 1 :], base.alphas[n_star - 1 :])
        # products: a exactly 1 on frozen steps, multiplicative on the tail
        assert np.array_equal(gs.a[:n_star], np.ones(n_star))
        for n in range(n_star, N + 1):
            assert gs.a[n] == gs.a[n - 1] * gs.alphas[n - 1]
        # b bounded and non-decreasing
        assert np.all(gs.b >= 0.0) and np.all(gs.b < 1.0)
        assert np.all(np.diff(gs.b) >= 0.0)
        # shared-tail ratio identity
        tail = base.tail(n_star)
        assert np.array_equal(gs.a[n_star:], tail.alpha_bars * gs.a[n_star - 1])
        # later start index stays cleaner at every step
        if prev is not None:
            assert np.all(prev.a <= gs.a + 1e-15)
        prev = gs

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgtsd.granularity import GranularitySpec, build_multigran, smooth


class TestSmooth:
    def test_two_block_average(self):
        out = smooth(np.array([1.0, 2.0, 3.0, 4.0]), 2)
        assert np.array_equal(out[:, 0], [1.5, 1.5, 3.5, 3.5])

    def test_window_one_is_identity(self):
        x = np.arange(12.0).reshape(6, 2)
        assert np.array_equal(smooth(x, 1), x)

    def test_partial_trailing_block(self):
        out = smooth(np.array([1.0, 2.0, 3.0]), 2)
        assert np.array_equal(out[:, 0], [1.5, 1.5, 3.0])

    def test_window_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            smooth(np.ones((4, 1)), 0)

    @given(
        s=st.integers(1, 6),
        blocks=st.integers(1, 8),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=50, deadline=None)
    def test_mean_conservation_and_idempotence(self, s, blocks, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((s * blocks, 2))
        sm = smooth(x, s)
        assert abs(sm.mean() - x.mean()) < 1e-12
        # re-averaging s identical copies can round in the last ulp
        assert np.allclose(smooth(sm, s), sm, rtol=0, atol=1e-12)

    @given(s=st.integers(2, 6), blocks=st.integers(2, 8), seed=st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_variance_never_increases(self, s, blocks, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((s * blocks, 3))
        assert np.all(smooth(x, s).var(axis=0) <= x.var(axis=0) + 1e-12)


class TestBuildMultigran:
    def test_blocks_of_four_over_24_ticks(self):
        x = np.arange(24.0)[:, None]
        mg = build_multigran(x, [GranularitySpec(1), GranularitySpec(4)])
        level = mg.levels[1, :, 0]
        assert len(np.unique(level)) == 6
        assert np.array_equal(np.repeat(np.unique(level), 4), np.sort(level))

    def test_single_level_equals_input(self):
        x = np.random.default_rng(0).standard_normal((10, 2))
        mg = build_multigran(x, [GranularitySpec(1)])
        assert mg.num_levels == 1
        assert np.array_equal(mg.levels[0], x)

    def test_solar_style_dictionary_accepted(self):
        # 1h base with [1h, 4h, 12h, 24h, 48h] windows
        x = np.random.default_rng(1).standard_normal((96, 2))
        mg = build_multigran(x, [GranularitySpec(w) for w in (1, 4, 12, 24, 48)])
        assert mg.num_levels == 5
        assert mg.levels.shape == (5, 96, 2)

    def test_unsorted_windows_rejected(self):
        x = np.ones((8, 1))
        with pytest.raises(ValueError, match="strictly increasing"):
            build_multigran(x, [GranularitySpec(1), GranularitySpec(4), GranularitySpec(4)])
        with pytest.raises(ValueError, match="strictly increasing"):
            build_multigran(x, [GranularitySpec(1), GranularitySpec(4), GranularitySpec(2)])

    def test_first_window_must_be_one(self):
        with pytest.raises(ValueError, match="window_size 1"):
            build_multigran(np.ones((8, 1)), [GranularitySpec(2), GranularitySpec(4)])

    def test_weights_must_sum_to_one(self):
        specs = [
            GranularitySpec(1, loss_weight=0.5),
            GranularitySpec(2, loss_weight=0.4),
        ]
        with pytest.raises(ValueError, match="sum to 1"):
            build_multigran(np.ones((8, 1)), specs)

    def test_levels_piecewise_constant_on_blocks(self):
        x = np.random.default_rng(2).standard_normal((20, 2))
        mg = build_multigran(x, [GranularitySpec(1), GranularitySpec(5)])
        level = mg.levels[1]
        for b in range(4):
            block = level[5 * b : 5 * (b + 1)]
            assert np.all(block == block[0])
            assert np.allclose(block[0], x[5 * b : 5 * (b + 1)].mean(axis=0))

    def test_block_bounds(self):
        x = np.ones((10, 1))
        mg = build_multigran(x, [GranularitySpec(1), GranularitySpec(4)])
        assert mg.block_bounds(1, 0) == (0, 4)
        assert mg.block_bounds(1, 5) == (4, 8)
        assert mg.block_bounds(1, 9) == (8, 10)

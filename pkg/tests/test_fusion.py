import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expalign.errors import DimensionError
from expalign.fusion import (
    downsample2x,
    downsample2x_adjoint,
    fuse_down,
    fuse_down_adjoint,
    fuse_up,
    fuse_up_adjoint,
    upsample2x,
    upsample2x_adjoint,
)


def down_oracle(m):
    h, w = m.shape[-2] // 2, m.shape[-1] // 2
    out = np.zeros(m.shape[:-2] + (h, w))
    for i in range(h):
        for j in range(w):
            out[..., i, j] = m[..., 2 * i:2 * i + 2, 2 * j:2 * j + 2].mean(axis=(-2, -1))
    return out


def fuse_down_oracle(m3, m4, m5):
    return (down_oracle((down_oracle(m3) + m4) / 2) + m5) / 2


def up_oracle(m):
    h, w = m.shape[-2], m.shape[-1]
    out = np.zeros(m.shape[:-2] + (2 * h, 2 * w))
    for i in range(2 * h):
        for j in range(2 * w):
            out[..., i, j] = m[..., i // 2, j // 2]
    return out


def fuse_up_oracle(m3, m4, m5):
    return (up_oracle((up_oracle(m5) + m4) / 2) + m3) / 2


def random_pyramid(rng, prompts=2, h3=8, w3=8):
    return (rng.normal(size=(prompts, h3, w3)),
            rng.normal(size=(prompts, h3 // 2, w3 // 2)),
            rng.normal(size=(prompts, h3 // 4, w3 // 4)))


class TestResamplers:
    def test_downsample_constant(self):
        np.testing.assert_array_equal(downsample2x(np.full((4, 6), 2.5)), np.full((2, 3), 2.5))

    def test_downsample_block_mean(self):
        np.testing.assert_array_equal(downsample2x(np.array([[1.0, 2.0], [3.0, 4.0]])), [[2.5]])

    def test_downsample_zeros(self):
        assert not downsample2x(np.zeros((6, 8))).any()

    def test_downsample_odd_dims_rejected(self):
        with pytest.raises(DimensionError):
            downsample2x(np.zeros((3, 4)))

    def test_upsample_replicates(self):
        np.testing.assert_array_equal(upsample2x(np.array([[7.0]])), np.full((2, 2), 7.0))
        np.testing.assert_array_equal(upsample2x(np.full((3, 2), -1.0)), np.full((6, 4), -1.0))

    def test_down_up_roundtrip_is_identity(self):
        m = np.random.default_rng(0).normal(size=(3, 4, 6))
        np.testing.assert_array_equal(downsample2x(upsample2x(m)), m)

    def test_matches_loop_oracles(self):
        m = np.random.default_rng(1).normal(size=(2, 4, 8))
        np.testing.assert_allclose(downsample2x(m), down_oracle(m), atol=1e-15)
        np.testing.assert_allclose(upsample2x(m), up_oracle(m), atol=0)


class TestFusion:
    def test_fuse_down_constants(self):
        a, b, c = 1.5, -2.0, 0.5
        out = fuse_down(np.full((1, 8, 8), a), np.full((1, 4, 4), b), np.full((1, 2, 2), c))
        np.testing.assert_allclose(out, ((a + b) / 2 + c) / 2, atol=1e-15)

    def test_fuse_up_constants(self):
        a, b, c = 0.25, 3.0, -1.0
        out = fuse_up(np.full((1, 8, 8), a), np.full((1, 4, 4), b), np.full((1, 2, 2), c))
        np.testing.assert_allclose(out, ((c + b) / 2 + a) / 2, atol=1e-15)

    def test_zero_pyramid(self):
        m3, m4, m5 = np.zeros((1, 4, 4)), np.zeros((1, 2, 2)), np.zeros((1, 1, 1))
        assert not fuse_down(m3, m4, m5).any()
        assert not fuse_up(m3, m4, m5).any()

    def test_matches_loop_oracles(self):
        m3, m4, m5 = random_pyramid(np.random.default_rng(2))
        np.testing.assert_allclose(fuse_down(m3, m4, m5), fuse_down_oracle(m3, m4, m5), atol=1e-14)
        np.testing.assert_allclose(fuse_up(m3, m4, m5), fuse_up_oracle(m3, m4, m5), atol=1e-14)

    def test_shape_contract(self):
        m3, m4, m5 = random_pyramid(np.random.default_rng(3), prompts=3, h3=16, w3=8)
        assert fuse_down(m3, m4, m5).shape == (3, 4, 2)
        assert fuse_up(m3, m4, m5).shape == (3, 16, 8)

    def test_pyramid_violations_rejected(self):
        with pytest.raises(DimensionError):
            fuse_down(np.zeros((1, 8, 8)), np.zeros((1, 4, 4)), np.zeros((1, 1, 1)))
        with pytest.raises(DimensionError):
            fuse_up(np.zeros((1, 8, 8)), np.zeros((2, 4, 4)), np.zeros((1, 2, 2)))

    @given(st.floats(min_value=-4, max_value=4, allow_nan=False), st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, alpha, seed):
        rng = np.random.default_rng(seed)
        p = random_pyramid(rng, prompts=1)
        q = random_pyramid(rng, prompts=1)
        for fuse in (fuse_down, fuse_up):
            lhs = fuse(*(alpha * x + y for x, y in zip(p, q)))
            rhs = alpha * fuse(*p) + fuse(*q)
            assert np.abs(lhs - rhs).max() <= 1e-10


class TestAdjoints:
    # <A x, y> = <x, A^T y> pins the hand-written backward operators

    def test_resampler_adjoints(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(4, 6))
        y = rng.normal(size=(2, 3))
        assert abs(np.vdot(downsample2x(x), y) - np.vdot(x, downsample2x_adjoint(y))) <= 1e-12
        y2 = rng.normal(size=(8, 12))
        assert abs(np.vdot(upsample2x(x), y2) - np.vdot(x, upsample2x_adjoint(y2))) <= 1e-12

    def test_fusion_adjoints(self):
        rng = np.random.default_rng(5)
        pyr = random_pyramid(rng)
        y_down = rng.normal(size=(2, 2, 2))
        g3, g4, g5 = fuse_down_adjoint(y_down)
        lhs = np.vdot(fuse_down(*pyr), y_down)
        rhs = sum(np.vdot(x, g) for x, g in zip(pyr, (g3, g4, g5)))
        assert abs(lhs - rhs) <= 1e-12
        y_up = rng.normal(size=(2, 8, 8))
        g3, g4, g5 = fuse_up_adjoint(y_up)
        lhs = np.vdot(fuse_up(*pyr), y_up)
        rhs = sum(np.vdot(x, g) for x, g in zip(pyr, (g3, g4, g5)))
        assert abs(lhs - rhs) <= 1e-12

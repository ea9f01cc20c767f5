"""Tests for the FMM driver and the direct reference."""

import numpy as np
import pytest

from hfmm.driver import (PotentialVector, RunConfig, direct_apply, error_metric,
                         fmm_apply)
from hfmm.greens import MediaConfig, Point2
from hfmm.tree import Particle


def _random_particles(seed, n, ylo=0.5, yhi=1.5, complex_q=True):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-0.5, 0.5, n)
    ys = rng.uniform(ylo, yhi, n)
    if complex_q:
        qs = rng.normal(size=n) + 1j * rng.normal(size=n)
    else:
        qs = rng.normal(size=n)
    return [Particle(Point2(float(x), float(y)), complex(q))
            for x, y, q in zip(xs, ys, qs)]


class TestErrorMetric:
    def test_identical_vectors(self):
        v = np.array([1.0 + 2j, 3.0])
        assert error_metric(v, v, 2) == 0.0

    def test_unit_mismatch(self):
        assert error_metric(np.array([1.0, 0.0]), np.array([0.0, 0.0]), 1) == 1.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        ref = rng.normal(size=10) + 1j * rng.normal(size=10)
        test = ref + 0.01 * rng.normal(size=10)
        c = 2.0 - 3.0j
        assert error_metric(c * ref, c * test, 10) == pytest.approx(
            error_metric(ref, test, 10), rel=1e-12)

    def test_accepts_potential_vectors(self):
        a = PotentialVector(np.ones(3, complex))
        b = PotentialVector(np.ones(3, complex) * 1.5)
        assert error_metric(a, b, 3) == pytest.approx(0.5, rel=1e-14)

    def test_guards(self):
        with pytest.raises(ValueError):
            error_metric(np.ones(3), np.ones(4), 3)
        with pytest.raises(ValueError):
            error_metric(np.ones(3), np.ones(3), 5)
        with pytest.raises(ValueError):
            error_metric(np.zeros(3), np.ones(3), 3)


class TestDirectApply:
    def test_zero_strengths(self):
        parts = [Particle(Point2(0.1, 1.0), 0.0), Particle(Point2(0.5, 1.3), 0.0)]
        out = direct_apply(parts, MediaConfig.two_layer(1.0, 1.0))
        np.testing.assert_array_equal(out.values, 0.0)

    def test_swap_symmetry(self):
        media = MediaConfig.two_layer(1.0, 1.0)
        a = Particle(Point2(0.0, 1.0), 1.0 + 0j)
        b = Particle(Point2(0.5, 1.4), 2.0 + 0j)
        fwd = direct_apply([a, b], media).values
        rev = direct_apply([b, a], media).values
        np.testing.assert_allclose(fwd, rev[::-1], rtol=1e-13)

    def test_size_guard(self):
        parts = _random_particles(2, 30)
        with pytest.raises(ValueError):
            direct_apply(parts, MediaConfig.free(1.0), max_n=10)

    def test_below_interface_rejected(self):
        parts = [Particle(Point2(0.0, -0.1), 1.0)]
        with pytest.raises(ValueError):
            direct_apply(parts, MediaConfig.two_layer(1.0, 1.0))


class TestRunConfig:
    def test_order_guard(self):
        with pytest.raises(ValueError):
            RunConfig(media=MediaConfig.free(1.0), order=0)

    def test_table_policy_guard(self):
        with pytest.raises(ValueError):
            RunConfig(media=MediaConfig.free(1.0), order=5, table_policy="lazy")

    def test_evan_count_resolution(self):
        two = RunConfig(media=MediaConfig.two_layer(1.0, 1.0), order=5)
        three = RunConfig(media=MediaConfig.three_layer(1.0, 0.6, 1.3, 0.7), order=5)
        assert two.resolved_evan_count() == 64
        assert three.resolved_evan_count() == 128
        pinned = RunConfig(media=MediaConfig.free(1.0), order=5, evan_count=96)
        assert pinned.resolved_evan_count() == 96


class TestFmmAgainstDirect:
    def test_free_space(self):
        parts = _random_particles(3, 400)
        media = MediaConfig.free(1.0)
        ref = direct_apply(parts, media)
        got = fmm_apply(parts, RunConfig(media=media, order=20, leaf_capacity=30))
        assert error_metric(ref, got, len(parts)) <= 1e-9

    def test_two_layer_elevated(self):
        parts = _random_particles(4, 250, ylo=1.0, yhi=2.0)
        media = MediaConfig.two_layer(1.0, 1.0)
        ref = direct_apply(parts, media)
        got = fmm_apply(parts, RunConfig(media=media, order=20, leaf_capacity=30))
        assert error_metric(ref, got, len(parts)) <= 1e-9

    def test_two_layer_near_interface(self):
        parts = _random_particles(5, 220, ylo=0.02, yhi=1.0)
        media = MediaConfig.two_layer(1.0, 1.0)
        ref = direct_apply(parts, media)
        got = fmm_apply(parts, RunConfig(media=media, order=20, leaf_capacity=30))
        assert error_metric(ref, got, len(parts)) <= 1e-8

    def test_three_layer(self):
        parts = _random_particles(6, 150, ylo=0.05, yhi=1.0)
        media = MediaConfig.three_layer(1.0, 0.6, 1.3, 0.7)
        ref = direct_apply(parts, media)
        got = fmm_apply(parts, RunConfig(media=media, order=20, leaf_capacity=30))
        assert error_metric(ref, got, len(parts)) <= 1e-7

    def test_alpha_zero_mirror_construction(self):
        parts = _random_particles(7, 300, ylo=0.1, yhi=1.2)
        layered = fmm_apply(parts, RunConfig(media=MediaConfig.two_layer(1.0, 0.0),
                                             order=25, leaf_capacity=30))
        mirrored = parts + [Particle(Point2(p.position.x, -p.position.y),
                                     p.strength) for p in parts]
        free = fmm_apply(mirrored, RunConfig(media=MediaConfig.free(1.0),
                                             order=25, leaf_capacity=30))
        # free-space run reports all 2N targets; the first N match the
        # layered potentials up to each target's own mirror contribution,
        # which the doubled direct sum includes and the layered sum
        # includes through the scattered kernel; values must agree
        assert error_metric(layered.values, free.values[:len(parts)],
                            len(parts)) <= 1e-9


class TestStructure:
    def test_determinism(self):
        parts = _random_particles(8, 300, ylo=0.05, yhi=1.5)
        cfg = RunConfig(media=MediaConfig.two_layer(1.0, 1.0), order=12,
                        leaf_capacity=25)
        a = fmm_apply(parts, cfg).values
        b = fmm_apply(parts, cfg).values
        np.testing.assert_array_equal(a, b)

    def test_threads_match_serial(self):
        parts = _random_particles(9, 400, ylo=0.05, yhi=1.5)
        media = MediaConfig.two_layer(1.0, 1.0)
        serial = fmm_apply(parts, RunConfig(media=media, order=12,
                                            leaf_capacity=25, threads=1)).values
        parallel = fmm_apply(parts, RunConfig(media=media, order=12,
                                              leaf_capacity=25, threads=4)).values
        assert np.max(np.abs(parallel - serial)) <= 1e-12 * np.max(np.abs(serial))

    def test_linearity(self):
        pos = _random_particles(10, 250, ylo=0.1, yhi=1.5)
        rng = np.random.default_rng(11)
        q1 = rng.normal(size=250) + 1j * rng.normal(size=250)
        q2 = rng.normal(size=250) + 1j * rng.normal(size=250)
        media = MediaConfig.two_layer(1.0, 1.0)
        cfg = RunConfig(media=media, order=12, leaf_capacity=25)

        def run(qs):
            parts = [Particle(p.position, complex(q)) for p, q in zip(pos, qs)]
            return fmm_apply(parts, cfg).values

        combined = run(q1 + q2)
        summed = run(q1) + run(q2)
        assert np.max(np.abs(combined - summed)) <= 1e-11 * np.max(np.abs(combined))

    def test_timings_reported(self):
        parts = _random_particles(12, 150)
        out = fmm_apply(parts, RunConfig(media=MediaConfig.two_layer(1.0, 1.0),
                                         order=8))
        for key in ("build", "tables", "upward", "downward", "near", "total"):
            assert key in out.timings
            assert out.timings[key] >= 0.0

    def test_on_the_fly_matches_precompute(self):
        parts = _random_particles(13, 200, ylo=0.1, yhi=1.2)
        media = MediaConfig.two_layer(1.0, 1.0)
        pre = fmm_apply(parts, RunConfig(media=media, order=10,
                                         table_policy="precompute")).values
        fly = fmm_apply(parts, RunConfig(media=media, order=10,
                                         table_policy="on-the-fly")).values
        np.testing.assert_array_equal(pre, fly)

    def test_table_cache_round_trip(self, tmp_path):
        parts = _random_particles(14, 200, ylo=0.1, yhi=1.2)
        media = MediaConfig.two_layer(1.0, 1.0)
        cache = str(tmp_path / "tables.bin")
        cfg = RunConfig(media=media, order=10, table_cache=cache)
        first = fmm_apply(parts, cfg).values
        assert (tmp_path / "tables.bin").exists()
        second = fmm_apply(parts, cfg).values  # now loaded from disk
        np.testing.assert_array_equal(first, second)

    def test_below_interface_rejected(self):
        parts = [Particle(Point2(0.0, 0.5), 1.0), Particle(Point2(0.1, -0.2), 1.0)]
        with pytest.raises(ValueError):
            fmm_apply(parts, RunConfig(media=MediaConfig.two_layer(1.0, 1.0), order=5))

"""Tests for the direct Green's function oracles."""

import numpy as np
import pytest

from hfmm.greens import (MediaConfig, Point2, domain_green, free_space,
                         free_space_spectral, line_image_density, mirror_image,
                         polar_offset, reflectance, scattered_batch,
                         scattered_direct, three_layer_sigma, vertical_wavenumber)
from hfmm.quadrature import SommerfeldRules

# Frozen regression constant: scattered_direct(two-layer k=1 alpha=1,
# x=(0.5,1.5), x0=(0,1)) at tol=1e-13, recorded once from the adaptive
# oracle and pinned against silent drift.
SCATTERED_REGRESSION = -0.0008746040461407173 - 0.010916981317584264j


class TestGeometryHelpers:
    def test_polar_offset_round_trip(self):
        off = polar_offset(0.3, -0.4)
        assert off.rho == pytest.approx(0.5, rel=1e-14)
        assert off.rho * np.cos(off.theta) == pytest.approx(0.3, abs=1e-14)
        assert off.rho * np.sin(off.theta) == pytest.approx(-0.4, abs=1e-14)

    def test_mirror_image(self):
        assert mirror_image(Point2(0.0, 1.0)) == Point2(0.0, -1.0)
        assert mirror_image(Point2(2.0, 0.0)) == Point2(2.0, 0.0)
        p = Point2(1.3, -0.7)
        assert mirror_image(mirror_image(p)) == p

    def test_line_image_density(self):
        assert line_image_density(0.0, 1.7) == 0.0
        assert line_image_density(1.0, 0.0) == 2.0j
        s = np.linspace(0.0, 5.0, 11)
        np.testing.assert_allclose(np.abs(line_image_density(0.8, s)), 1.6,
                                   rtol=1e-14)


class TestMediaConfig:
    def test_variants(self):
        assert MediaConfig.free(2.0).variant == "free"
        assert MediaConfig.two_layer(1.0, 0.5).alpha == 0.5
        m = MediaConfig.three_layer(1.0, 0.6, 1.3, 0.7)
        assert (m.k2, m.k3, m.d) == (0.6, 1.3, 0.7)

    def test_invalid_wavenumbers(self):
        with pytest.raises(ValueError):
            MediaConfig.free(-1.0)
        with pytest.raises(ValueError):
            MediaConfig.three_layer(1.0, 0.6, 1.3, 0.0)

    def test_guided_mode_guard(self):
        with pytest.raises(ValueError):
            MediaConfig.three_layer(1.0, 1.5, 0.8, 0.5)

    def test_rescaled_round_trip(self):
        m = MediaConfig.three_layer(1.0, 0.6, 1.3, 0.7)
        back = m.rescaled(2.0).rescaled(0.5)
        assert back == m


class TestFreeSpace:
    def test_pinned_value_unit_distance(self):
        v = free_space(1.0, (1.0, 0.0), (0.0, 0.0))
        assert v == pytest.approx(-0.022064241053919 + 0.191299421639492j,
                                  abs=1e-13)

    def test_swap_symmetry(self):
        a, b = (0.2, 1.1), (-0.7, 2.3)
        assert free_space(0.7, a, b) == free_space(0.7, b, a)

    def test_coincident_points(self):
        with pytest.raises(ValueError):
            free_space(1.0, (0.0, 1.0), (0.0, 1.0))

    @pytest.mark.parametrize("k", [0.1, 1.0])
    def test_spectral_split_matches(self, k):
        rules = SommerfeldRules.default()
        rng = np.random.default_rng(3)
        for _ in range(10):
            dx, dy = rng.uniform(-2, 2), rng.uniform(0.2, 3.0)
            x, x0 = (dx, 1.0 + dy), (0.0, 1.0)
            direct = free_space(k, x, x0)
            split = free_space_spectral(k, x, x0, rules)
            assert abs(split - direct) <= 1e-10 * abs(direct)

    def test_spectral_reflection_invariance(self):
        rules = SommerfeldRules.default()
        v1 = free_space_spectral(1.0, (0.4, 1.9), (-0.1, 1.0), rules)
        v2 = free_space_spectral(1.0, (-0.4, 1.9), (0.1, 1.0), rules)
        assert v1 == pytest.approx(v2, abs=1e-14)

    def test_spectral_requires_vertical_separation(self):
        with pytest.raises(ValueError):
            free_space_spectral(1.0, (1.0, 1.0), (0.0, 1.0), SommerfeldRules.default())

    def test_spectral_rule_doubling_stable(self):
        x, x0 = (0.3, 1.4), (0.0, 1.0)
        v1 = free_space_spectral(1.0, x, x0, SommerfeldRules.default(64, 64))
        v2 = free_space_spectral(1.0, x, x0, SommerfeldRules.default(128, 128))
        assert abs(v2 - v1) <= 1e-12


class TestReflectance:
    def test_two_layer_alpha_zero_is_one(self):
        media = MediaConfig.two_layer(1.0, 0.0)
        t = np.linspace(0.1, 10.0, 7).astype(complex)
        np.testing.assert_allclose(reflectance(media, t), 1.0, rtol=1e-15)

    def test_two_layer_unit_modulus_on_evanescent_axis(self):
        media = MediaConfig.two_layer(1.0, 0.8)
        t = np.linspace(1e-3, 50.0, 101).astype(complex)
        np.testing.assert_allclose(np.abs(reflectance(media, t)), 1.0, rtol=1e-14)

    def test_two_layer_pole_guard(self):
        media = MediaConfig.two_layer(1.0, 0.5)
        with pytest.raises(ValueError):
            reflectance(media, np.array([0.5j]))

    def test_free_media_reflectance_zero(self):
        v = reflectance(MediaConfig.free(1.0), np.array([1.0 + 0j]))
        np.testing.assert_array_equal(v, 0.0)

    def test_three_layer_equal_wavenumbers(self):
        media = MediaConfig.three_layer(1.0, 1.0, 1.0, 0.7)
        t = np.array([0.5, 2.0])
        lam_sq = t * t + 1.0
        s1, s2p, s2m, s3 = three_layer_sigma(media, lam_sq, path="evanescent")
        np.testing.assert_allclose(s1, 0.0, atol=1e-13)
        np.testing.assert_allclose(s2p, 1.0, rtol=1e-13)
        np.testing.assert_allclose(s2m, 0.0, atol=1e-13)
        np.testing.assert_allclose(s3, np.exp(-t * 0.7), rtol=1e-12)

    def test_three_layer_thick_limit(self):
        # e^{-kappa2 d} -> 0 eliminates the lower interface:
        # sigma1 -> (kappa1 - kappa2) / (kappa1 + kappa2)
        media = MediaConfig.three_layer(1.0, 0.6, 1.3, 400.0)
        t = np.linspace(0.3, 5.0, 20)
        lam_sq = t * t + 1.0
        k1 = vertical_wavenumber(lam_sq, media.k1)
        k2 = vertical_wavenumber(lam_sq, media.k2)
        s1, _, _, _ = three_layer_sigma(media, lam_sq, path="evanescent")
        np.testing.assert_allclose(s1, (k1 - k2) / (k1 + k2), atol=1e-10)

    def test_three_layer_propagating_near_endpoint(self):
        # near tau = 0 the recomputed kappa_2 would round to zero for
        # equal wavenumbers; the contour-supplied kappa1 must prevent it
        media = MediaConfig.three_layer(1.0, 1.0, 1.0, 0.7)
        kappa1 = -1j * np.sin(np.array([1e-8, 1e-4, 0.3]))
        s1 = reflectance(media, kappa1)
        np.testing.assert_allclose(s1, 0.0, atol=1e-12)


class TestScatteredOracle:
    def test_frozen_regression_constant(self):
        media = MediaConfig.two_layer(1.0, 1.0)
        v = scattered_direct(media, (0.5, 1.5), (0.0, 1.0), 1e-13)
        assert v == pytest.approx(SCATTERED_REGRESSION, abs=1e-13)

    def test_alpha_zero_is_mirror_image(self):
        media = MediaConfig.two_layer(1.3, 0.0)
        x, x0 = (0.4, 0.9), (-0.2, 0.6)
        v = scattered_direct(media, x, x0, 1e-13)
        assert v == pytest.approx(free_space(1.3, x, mirror_image(Point2(*x0))),
                                  abs=1e-12)

    @pytest.mark.parametrize("pair", [((0.5, 1.5), (0.0, 1.0)),
                                      ((-1.0, 0.3), (0.7, 2.0))])
    def test_swap_symmetry(self, pair):
        media = MediaConfig.two_layer(1.0, 1.0)
        x, x0 = pair
        assert scattered_direct(media, x, x0, 1e-12) == pytest.approx(
            scattered_direct(media, x0, x, 1e-12), abs=1e-12)

    def test_tol_range_enforced(self):
        media = MediaConfig.two_layer(1.0, 1.0)
        with pytest.raises(ValueError):
            scattered_direct(media, (0.5, 1.5), (0.0, 1.0), 1e-3)

    def test_source_below_interface_rejected(self):
        media = MediaConfig.two_layer(1.0, 1.0)
        with pytest.raises(ValueError):
            scattered_direct(media, (0.5, 1.5), (0.0, -1.0), 1e-12)

    def test_target_continuation_limited(self):
        # targets slightly below y = 0 are allowed (spectral
        # continuation, used by the boundary check) but y + y0 <= 0 is not
        media = MediaConfig.two_layer(1.0, 1.0)
        scattered_direct(media, (0.5, -0.01), (0.0, 1.0), 1e-12)
        with pytest.raises(ValueError):
            scattered_direct(media, (0.5, -1.5), (0.0, 1.0), 1e-12)

    def test_batch_matches_direct_two_layer(self):
        media = MediaConfig.two_layer(1.0, 1.0)
        pts = [((0.5, 1.5), (0.0, 1.0)), ((-0.3, 0.2), (0.1, 0.4)),
               ((2.0, 0.05), (1.9, 0.07))]
        dx = np.array([x[0] - x0[0] for x, x0 in pts])
        dy = np.array([x[1] + x0[1] for x, x0 in pts])
        batch = scattered_batch(media, dx, dy, 1e-13)
        for j, (x, x0) in enumerate(pts):
            assert batch[j] == pytest.approx(
                scattered_direct(media, x, x0, 1e-13), abs=1e-12)

    def test_batch_matches_direct_three_layer(self):
        media = MediaConfig.three_layer(1.0, 0.6, 1.3, 0.7)
        batch = scattered_batch(media, np.array([0.3]), np.array([1.2]), 1e-13)
        direct = scattered_direct(media, (0.3, 0.7), (0.0, 0.5), 1e-13)
        assert batch[0] == pytest.approx(direct, abs=1e-12)

    def test_equal_wavenumber_three_layer_vanishes(self):
        media = MediaConfig.three_layer(1.0, 1.0, 1.0, 0.7)
        rng = np.random.default_rng(5)
        dx = rng.uniform(-2, 2, 8)
        dy = rng.uniform(0.2, 3.0, 8)
        np.testing.assert_allclose(scattered_batch(media, dx, dy, 1e-13), 0.0,
                                   atol=1e-12)


class TestDomainGreen:
    def test_reciprocity(self):
        media = MediaConfig.two_layer(1.0, 1.0)
        x, x0 = (0.5, 1.5), (-0.3, 0.8)
        assert domain_green(media, x, x0, 1e-12) == pytest.approx(
            domain_green(media, x0, x, 1e-12), abs=1e-10)

    def test_boundary_impedance_residual(self):
        # |du/dn - i*alpha*u| / |u| at y = 0, n = (0, -1), centered h=1e-5
        media = MediaConfig.two_layer(1.0, 1.0)
        x0, h = (0.0, 1.0), 1e-5
        for bx in (-0.8, 0.1, 1.2):
            up = domain_green(media, (bx, h), x0, 1e-13)
            u2 = domain_green(media, (bx, 2 * h), x0, 1e-13)
            dn = -(u2 - up) / h          # n = (0, -1)
            u0 = 0.5 * (up + u2)
            # first-order stencil at y = 1.5 h; O(h) truncation dominates
            assert abs(dn - 1j * media.alpha * u0) / abs(u0) <= 1e-4

    def test_boundary_residual_contract_form(self):
        # centered finite differences on the reflected extension via the
        # impedance condition checked at y = 0 through the CLI harness
        from hfmm.cli import check_boundary_residual
        value, ok = check_boundary_residual()
        assert ok and value <= 1e-6

    def test_alpha_zero_neumann_image(self):
        media = MediaConfig.two_layer(0.9, 0.0)
        x, x0 = (0.3, 1.2), (0.0, 0.7)
        v = domain_green(media, x, x0, 1e-13)
        expect = free_space(0.9, x, x0) + free_space(0.9, x, (0.0, -0.7))
        assert v == pytest.approx(expect, abs=1e-12)

    def test_helmholtz_residual(self):
        media = MediaConfig.two_layer(1.0, 1.0)
        x0, h, k = (0.0, 1.0), 1e-3, 1.0
        for pt in [(0.6, 1.4), (-0.9, 0.5)]:
            u = lambda a, b: domain_green(media, (a, b), x0, 1e-12)
            lap = (u(pt[0] + h, pt[1]) + u(pt[0] - h, pt[1])
                   + u(pt[0], pt[1] + h) + u(pt[0], pt[1] - h)
                   - 4.0 * u(*pt)) / h ** 2
            u0 = u(*pt)
            assert abs(lap + k * k * u0) / abs(u0) <= 1e-4

    def test_free_media_reduces_to_kernel(self):
        media = MediaConfig.free(1.0)
        x, x0 = (0.5, 1.5), (0.0, 1.0)
        assert domain_green(media, x, x0) == free_space(1.0, x, x0)

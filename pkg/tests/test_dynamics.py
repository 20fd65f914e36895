import math

import numpy as np
import pytest

from bslattice.dynamics import (GridResolutionError, RevivalError, continuum_decay_fit,
                                continuum_dispersive, continuum_grid, dispersive_fit, duhamel,
                                evolve, gaussian_sup, point_box, point_lorentz_norm,
                                point_strichartz_norm, point_sup_norms, propagate,
                                required_radius, revival_horizon, strichartz_exponent,
                                strichartz_norm)
from bslattice.lattice_core import LatticeBox, lorentz_norm, symbol_eval

from oracles import FROZEN, max_bessel


class TestPropagate:
    def test_time_zero_identity(self):
        box = LatticeBox(2, 5)
        u0 = np.random.default_rng(0).normal(size=box.shape)
        assert np.allclose(propagate(u0, 0.0, box), u0, atol=1e-14)

    def test_plane_wave_phase(self):
        box = LatticeBox(1, 20)
        k = 7
        x = np.arange(box.side)
        u0 = np.exp(2j * np.pi * k * x / box.side)
        t = 1.3
        want = np.exp(-1j * t * symbol_eval(k / box.side)) * u0
        assert np.allclose(propagate(u0, t, box), want, atol=1e-12)

    def test_point_datum_is_bessel(self):
        # |e^{-itH0} delta_0 (x)| = |J_x(2t)|
        from scipy.special import jv
        box = LatticeBox(1, 64)
        u = propagate(box.delta(), 3.0, box)
        x = np.arange(-64, 65)
        assert np.allclose(np.abs(u), np.abs(jv(np.abs(x), 6.0)), atol=1e-12)

    def test_snapshots_stack(self):
        box = LatticeBox(1, 10)
        out = propagate(box.delta(), [0.0, 0.5], box)
        assert out.shape == (2, 21)

    def test_revival_guard(self):
        box = LatticeBox(1, 10)
        t = revival_horizon(box) * 1.01
        with pytest.raises(RevivalError) as info:
            propagate(box.delta(), t, box)
        R = info.value.required_R
        assert revival_horizon(LatticeBox(1, R)) >= t > revival_horizon(LatticeBox(1, R - 1))
        assert R == required_radius(t)

    def test_norms_recorded(self):
        box = LatticeBox(2, 8)
        run = evolve(box.delta(), [0.0, 0.4, 1.0], box)
        assert np.allclose(run.l2_norms, 1.0, atol=1e-12)
        assert run.sup_norms[0] == 1.0 and run.snapshots is None

    def test_duhamel_constant_source_matches_closed_form(self):
        # F(s) = f constant: -i int_0^t e^{-i(t-s)H0} f ds = (e^{-itH0} - 1) H0^{-1} f on
        # each nonzero mode; on the zero mode it is -i t f.
        box = LatticeBox(1, 6)
        f = np.zeros(box.shape)
        f[box.R] = 1.0
        t = 0.7
        got = duhamel(lambda s: f, t, box, steps=2048)
        h = 4 * np.sin(np.pi * np.arange(box.side) / box.side) ** 2
        fh = np.fft.fft(f)
        with np.errstate(divide="ignore", invalid="ignore"):
            mult = np.where(h > 0, (np.exp(-1j * t * h) - 1) / h, -1j * t)
        assert np.allclose(got, np.fft.ifft(mult * fh), atol=1e-6)

    def test_duhamel_horizon(self):
        box = LatticeBox(1, 3)
        with pytest.raises(RevivalError):
            duhamel(lambda s: box.delta(), 10.0, box)


class TestDispersive:
    def test_sup_norms_match_bessel_oracle(self):
        times = [50.0, 100.0, 200.0]
        sup, l2, box = point_sup_norms(1, times)
        for t, v in zip(times, sup):
            assert v == pytest.approx(max_bessel(t), rel=1e-10)
            assert v * t ** (1 / 3) == pytest.approx(FROZEN["dispersive_C"][int(t)], rel=1e-10)
        assert np.allclose(l2, 1.0, atol=1e-10)

    def test_envelope_in_d3(self):
        C = FROZEN["dispersive_C"][100]
        sup, _, _ = point_sup_norms(3, [100.0])
        assert sup[0] == pytest.approx((C * 100.0 ** (-1 / 3)) ** 3, rel=1e-9)

    def test_point_box_covers_horizon(self):
        box = point_box(300.0)
        assert revival_horizon(box) >= 300.0

    def test_rejects_multi_dimensional_box(self):
        with pytest.raises(ValueError):
            point_sup_norms(2, [1.0], box=LatticeBox(2, 4))

    def test_fit_short_window(self):
        fit = dispersive_fit(2, t_range=(50.0, 500.0), samples=9)
        assert fit.slope == pytest.approx(-2 / 3, abs=0.03)
        assert not fit.inconclusive
        assert set(fit.to_json()) == {"d", "slope", "intercept", "residual", "window",
                                      "inconclusive"}


class TestStrichartz:
    def test_exponent(self):
        assert strichartz_exponent(4) == 8.0 and strichartz_exponent(5) == 5.0
        with pytest.raises(ValueError):
            strichartz_exponent(3)

    def test_zero_data(self):
        box = LatticeBox(4, 2)
        assert strichartz_norm(np.zeros(box.shape), 0.1, box) == 0.0

    def test_homogeneous(self):
        box = LatticeBox(4, 3)
        u0 = box.delta()
        a = strichartz_norm(u0, 0.5, box, steps_per_unit=64)
        b = strichartz_norm(2.5 * u0, 0.5, box, steps_per_unit=64)
        assert b == pytest.approx(2.5 * a, rel=1e-12)

    def test_box_matches_infinite_lattice_early(self):
        box = LatticeBox(4, 8)
        a = strichartz_norm(box.delta(), 0.5, box, steps_per_unit=64)
        b = point_strichartz_norm(4, 0.5, steps_per_unit=64)
        assert a == pytest.approx(b, rel=1e-6)

    def test_point_norm_at_time_zero(self):
        assert point_lorentz_norm(4, 0.0, 8.0) == pytest.approx(
            lorentz_norm([1.0], 8.0, 2.0), rel=1e-14)

    def test_point_norms_frozen_and_saturating(self):
        ref = FROZEN["strichartz_d4"]
        vals = {T: point_strichartz_norm(4, float(T)) for T in (1, 2, 4)}
        for T in ref:
            assert vals[T] == pytest.approx(ref[T], rel=1e-5)
        assert vals[4] / vals[2] <= 1.05


class TestContinuum:
    def test_matches_closed_form(self):
        for t in (1.0, 10.0):
            assert continuum_dispersive(1, 1, t) == pytest.approx(gaussian_sup(t), rel=1e-10)

    def test_d2_envelope(self):
        v = continuum_dispersive(2, 1, 10.0)
        assert v == pytest.approx(gaussian_sup(10.0, d=2), rel=1e-10)
        assert v == pytest.approx(1 / (4 * math.pi * 10.0), rel=0.1)

    def test_sign_independent(self):
        for k in (0, 1, 2):
            assert continuum_dispersive(2, k, 5.0) == pytest.approx(gaussian_sup(5.0, d=2),
                                                                     rel=1e-10)

    def test_coarse_grid_rejected(self):
        dx, half = continuum_grid(10.0)
        with pytest.raises(GridResolutionError) as info:
            continuum_dispersive(1, 0, 10.0, half_length=half / 2)
        assert info.value.half_length == pytest.approx(half)
        with pytest.raises(GridResolutionError):
            continuum_dispersive(1, 0, 10.0, dx=2 * dx)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            continuum_dispersive(2, 3, 1.0)

    def test_fit(self):
        fit = continuum_decay_fit(3, 1, t_range=(10.0, 100.0), samples=5)
        assert fit.slope == pytest.approx(-1.5, abs=0.01)

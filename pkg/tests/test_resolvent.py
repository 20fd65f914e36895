import math

import numpy as np
import pytest

from bslattice.counterexamples import FlatBandCutoff, flatband_I
from bslattice.lattice_core import ComplexEnergy, LatticeBox, TorusGrid, apply_H0
from bslattice.resolvent import (GradientFloorError, OnSpectrumError, ResolutionError,
                                 boundary_value_continuity, delta_surface, free_kernel,
                                 green_values, holder_difference_norm, minimal_grid_size,
                                 surface_integral, weighted_resolvent_norm)

from oracles import FROZEN, green_1d


class TestFreeKernel:
    def test_origin_closed_form(self):
        k = free_kernel(LatticeBox(1, 0), -1.0, grid=TorusGrid(1, 2**12))
        assert k.at(0) == pytest.approx(1 / math.sqrt(5), rel=1e-12)

    @pytest.mark.parametrize("z", [-1.0, complex(2.0, 0.3), complex(9.0, -0.5)])
    def test_even(self, z):
        k = free_kernel(LatticeBox(2, 4), z)
        assert np.allclose(k.values, k.values[::-1, ::-1], atol=1e-14)
        assert np.allclose(k.values, k.values.T, atol=1e-14)

    def test_resolvent_identity_1d(self):
        z = -1.0
        k = free_kernel(LatticeBox(1, 40), z, grid=TorusGrid(1, 2**12))
        res = apply_H0(k.values, "dirichlet") - z * k.values
        delta = LatticeBox(1, 40).delta()
        # interior sites, where the Dirichlet cut of the box is invisible
        assert np.max(np.abs(res - delta)[5:-5]) < 1e-8

    def test_hermitian_symmetry(self):
        box = LatticeBox(3, 3)
        z = ComplexEnergy(4.5, 0.05)
        a = free_kernel(box, z).values
        b = free_kernel(box, z.conj()).values
        assert np.allclose(b, a.conj(), atol=1e-13)

    def test_fft_matches_direct_riemann_sum(self):
        N, z = 64, complex(1.0, 0.7)
        k = free_kernel(LatticeBox(1, 5), z, grid=TorusGrid(1, N))
        xi = np.arange(N) / N
        h = 4 * np.sin(np.pi * xi) ** 2
        x = np.arange(-5, 6)
        direct = (np.exp(2j * np.pi * np.outer(x, xi)) @ (1 / (h - z))) / N
        assert np.max(np.abs(k.values - direct)) < 1e-12

    @pytest.mark.parametrize("d,z", [(3, complex(3.0, 0.2)), (3, complex(6.0, 0.3)), (3, -0.5),
                                     (2, complex(4.0, 1e-2))])
    def test_fft_and_time_integral_agree(self, d, z):
        box = LatticeBox(d, 4)
        a = free_kernel(box, z, method="fft").values
        b = free_kernel(box, z, method="bessel").values
        assert np.max(np.abs(a - b)) < 1e-9

    def test_1d_matches_closed_form_inside_band(self):
        z = complex(2.0, 0.05)
        k = free_kernel(LatticeBox(1, 30), z)
        x = np.arange(-30, 31)
        assert np.max(np.abs(k.values - green_1d(x, z))) < 1e-9

    def test_resolution_error_carries_N(self):
        z = ComplexEnergy(2.0, 1e-3)
        with pytest.raises(ResolutionError) as info:
            free_kernel(LatticeBox(1, 3), z, grid=TorusGrid(1, 64))
        assert info.value.minimal_N == minimal_grid_size(z, 1) >= 32 / 1e-3

    def test_on_spectrum_rejected(self):
        with pytest.raises(OnSpectrumError):
            free_kernel(LatticeBox(1, 2), 2.0)

    def test_green_values_match_table(self):
        z = complex(5.0, 0.1)
        k = free_kernel(LatticeBox(3, 3), z)
        pts = np.array([[0, 0, 0], [1, 2, 3], [-3, 0, 2]])
        got = green_values(pts, z)
        want = [k.at(p) for p in pts]
        assert np.allclose(got, want, atol=1e-10)

    def test_origin_modulus_grows_as_eps_shrinks(self):
        eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
        vals = [abs(green_values([[0, 0, 0]], complex(3.0, e))[0]) for e in eps]
        assert np.all(np.diff(vals) >= -1e-12)

    def test_csv(self, tmp_path):
        k = free_kernel(LatticeBox(1, 1), -1.0)
        k.write_csv(tmp_path / "k.csv")
        lines = (tmp_path / "k.csv").read_text().splitlines()
        assert lines[0] == "x1,re,im,err" and len(lines) == 4


class TestWeightedNorm:
    def test_conjugation(self):
        box = LatticeBox(2, 6)
        z = ComplexEnergy(3.0, 0.05)
        a = weighted_resolvent_norm(1.0, 1.5, z, box)
        b = weighted_resolvent_norm(1.0, 1.5, z.conj(), box)
        assert a == pytest.approx(b, rel=1e-8)

    def test_matches_dense_oracle_and_stays_bounded(self):
        box = LatticeBox(3, 6)
        ref = FROZEN["weighted_norm_R6_a2"]
        got = {e: weighted_resolvent_norm(2, 2, ComplexEnergy(6.0, e), box) for e in ref}
        for e in ref:
            assert got[e] == pytest.approx(ref[e], rel=1e-9)
        assert got[1e-3] / got[1e-1] <= 1.5

    def test_monotone_in_weights(self):
        box = LatticeBox(2, 8)
        z = ComplexEnergy(2.0, 0.1)
        vals = [weighted_resolvent_norm(a, b, z, box)
                for a, b in [(0.5, 0.5), (1.0, 0.5), (1.0, 1.0), (1.5, 1.0), (1.5, 2.0)]]
        assert np.all(np.diff(vals) <= 1e-12)

    def test_single_site_is_kernel_modulus(self):
        z = ComplexEnergy(-1.0, 0.0)
        v = weighted_resolvent_norm(1.0, 1.0, z, LatticeBox(1, 0))
        assert v == pytest.approx(1 / math.sqrt(5), rel=1e-10)


class TestDeltaSurface:
    def test_1d_counting_measure(self):
        out = delta_surface(2.0, {(0,): 1.0}, out_box=LatticeBox(1, 0))
        assert out[0].real == pytest.approx(1 / (2 * math.pi), rel=1e-12)

    def test_linear_zero(self):
        out = delta_surface(2.0, {(0,): 0.0}, out_box=LatticeBox(1, 2))
        assert not np.any(out)

    def test_stone_formula_1d(self):
        box = LatticeBox(1, 4)
        out = delta_surface(2.0, {(0,): 1.0}, out_box=box)
        x = np.arange(-4, 5)
        eps = 1e-7
        stone = (green_1d(x, complex(2, eps)) - green_1d(x, complex(2, -eps))) / (2j * math.pi)
        assert np.max(np.abs(out - stone)) < 1e-6

    def test_stone_formula_2d(self):
        box = LatticeBox(2, 2)
        mu, eps = 3.0, 1e-3
        out = delta_surface(mu, {(0, 0): 1.0}, out_box=box, n=512)
        pts = box.sites()
        gp = green_values(pts, complex(mu, eps))
        gm = green_values(pts, complex(mu, -eps))
        stone = ((gp - gm) / (2j * math.pi)).reshape(box.shape)
        assert np.max(np.abs(out - stone)) < 5e-3 * np.max(np.abs(out))

    def test_flat_line_integral(self):
        box = LatticeBox(2, 5)
        out = delta_surface(4.0, {(0, 0): 1.0}, chi=FlatBandCutoff(), out_box=box)
        s = box.sites()
        want = flatband_I(s[:, 0], s[:, 1]).reshape(box.shape)
        assert np.max(np.abs(out - want)) < 1e-12

    def test_threshold_without_cutoff(self):
        with pytest.raises(GradientFloorError):
            delta_surface(4.0, {(0, 0): 1.0}, out_box=LatticeBox(2, 1))

    def test_surface_area_1d(self):
        val, err = surface_integral(2.0, lambda p: np.ones(len(p)), 1)
        assert val == pytest.approx(1 / (2 * math.pi), rel=1e-14)


class TestBoundaryValues:
    def test_identical_pair_zero(self):
        assert holder_difference_norm(1.5, 2.0, 0.1, 0.1, LatticeBox(1, 5)) == 0.0

    @pytest.mark.parametrize("eps", [[0.1, 0.01, 0.05], [0.1, 0.1, 0.01], [0.1, 0.01]])
    def test_rejects_bad_ladder(self, eps):
        with pytest.raises(ValueError):
            boundary_value_continuity(1.5, 2.0, eps, LatticeBox(1, 5))

    def test_report_fields(self):
        rep = boundary_value_continuity(1.5, 2.0, [1e-1, 1e-2, 1e-3], LatticeBox(1, 200))
        js = rep.to_json()
        assert set(js) >= {"s", "mu", "eps_pairs", "M_values", "fitted_exponent"}
        assert rep.hypothesis_met and rep.classification == "cauchy"

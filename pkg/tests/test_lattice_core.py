import json
import math

import numpy as np
import pytest

from bslattice.lattice_core import (AnisotropicWeight, ComplexEnergy, FlatBandWeight, LatticeBox,
                                    NormNotComputableError, PointMass, PowerDecay, Table,
                                    TorusGrid, apply_H0, critical_points, lorentz_norm,
                                    potential_from_json, potential_lorentz_norm, symbol_eval,
                                    threshold_energies, write_lattice_csv)


class TestSymbol:
    def test_minimum(self):
        assert symbol_eval([0.0, 0.0, 0.0]) == 0.0

    def test_flat_point_d2(self):
        assert symbol_eval([0.25, 0.25]) == pytest.approx(4.0, abs=1e-14)

    def test_maximum_d1(self):
        assert symbol_eval(0.5) == pytest.approx(4.0, abs=1e-14)

    def test_reduced_mod_one(self):
        assert symbol_eval([1.3, -0.2]) == pytest.approx(symbol_eval([0.3, 0.8]), abs=1e-14)

    def test_range(self):
        xi = np.random.default_rng(0).random((1000, 4))
        v = symbol_eval(xi)
        assert v.min() >= 0 and v.max() <= 16


class TestCriticalPoints:
    def test_d1(self):
        pts = critical_points(1)
        assert [(p.location, p.energy, p.kind) for p in pts] == [
            ((0.0,), 0.0, "elliptic"), ((0.5,), 4.0, "elliptic")]

    def test_d2(self):
        kinds = {p.location: (p.energy, p.kind) for p in critical_points(2)}
        assert kinds[(0.0, 0.0)] == (0.0, "elliptic")
        assert kinds[(0.5, 0.5)] == (8.0, "elliptic")
        assert kinds[(0.0, 0.5)] == (4.0, "hyperbolic")
        assert kinds[(0.5, 0.0)] == (4.0, "hyperbolic")

    @pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
    def test_count_and_classification(self, d):
        pts = critical_points(d)
        assert len(pts) == 2**d
        for p in pts:
            assert (p.kind == "elliptic") == (p.signature in (0, d))
            assert p.energy in threshold_energies(d)
            assert symbol_eval(p.location) == pytest.approx(p.energy, abs=1e-12)

    def test_rejects_d0(self):
        with pytest.raises(ValueError):
            critical_points(0)


class TestGridAndBox:
    def test_grid_spacing_and_symbol(self):
        g = TorusGrid(2, 16)
        assert g.spacing == 1 / 16 and g.node_count == 256
        assert g.symbol()[4, 4] == pytest.approx(4.0)

    @pytest.mark.parametrize("N", [8, 24, 100])
    def test_grid_rejects_bad_N(self, N):
        with pytest.raises(ValueError):
            TorusGrid(1, N)

    def test_grid_memory_budget(self):
        with pytest.raises(MemoryError):
            TorusGrid(3, 1024, memory_budget=2**20)

    def test_box_sites_lexicographic(self):
        box = LatticeBox(2, 1)
        s = box.sites()
        assert len(s) == 9 == box.size
        assert s[0].tolist() == [-1, -1] and s[1].tolist() == [-1, 0] and s[-1].tolist() == [1, 1]
        assert box.index((0, 0)) == 4

    def test_box_json_roundtrip(self):
        box = LatticeBox(3, 7)
        assert LatticeBox.from_json(json.loads(json.dumps(box.to_json()))) == box

    def test_energy(self):
        z = ComplexEnergy(2.0, -0.1)
        assert z.half_plane == "-" and z.conj().z == complex(2.0, 0.1)
        assert ComplexEnergy(-1.0, 0.0).dist_to_spectrum(1) == 1.0
        assert ComplexEnergy(2.0, 0.0).on_spectrum(1)


class TestPotentials:
    def test_power_decay_envelope(self):
        V = PowerDecay(2.0, -1, 3.0)
        box = LatticeBox(3, 5)
        r = box.norm_array()
        assert np.all(np.abs(V.on_box(box)) <= 3.0 * (1 + r) ** -2 + 1e-15)

    def test_point_mass(self):
        V = PointMass((1, 0), -2.0)
        assert V.evaluate(np.array([[1, 0], [0, 0]])).tolist() == [-2.0, 0.0]

    def test_table_counts(self):
        W = Table.from_dict({(0,): -5.0, (1,): 5.0, (2,): 0.0})
        assert (W.count("nonzero"), W.count("negative"), W.count("positive")) == (2, 1, 1)

    def test_table_rejects_duplicates(self):
        with pytest.raises(ValueError):
            Table((((0,), 1.0), ((0,), 2.0)))

    @pytest.mark.parametrize("V", [PowerDecay(2.0, -1, 1.5), PointMass((0, 1), 3.0),
                                   AnisotropicWeight(6.0), FlatBandWeight(),
                                   Table.from_dict({(0, 0): 1.0, (1, -1): -2.0})])
    def test_json_roundtrip(self, V):
        W = potential_from_json(json.loads(json.dumps(V.to_json())))
        sites = LatticeBox(2 if not isinstance(V, AnisotropicWeight) else 3, 3).sites()
        assert np.array_equal(W.evaluate(sites), V.evaluate(sites))

    def test_flatband_weight_is_2d(self):
        with pytest.raises(ValueError):
            FlatBandWeight().weight(np.zeros((1, 3), int))


class TestApplyH0:
    def test_delta_1d(self):
        u = LatticeBox(1, 3).delta()
        assert apply_H0(u).tolist() == [0, 0, -1, 2, -1, 0, 0]

    def test_constants_harmonic_periodic(self):
        u = np.ones((5, 5, 5))
        assert np.all(apply_H0(u, "periodic") == 0)

    def test_dirichlet_boundary_deficit(self):
        out = apply_H0(np.ones(5), "dirichlet")
        assert out.tolist() == [1, 0, 0, 0, 1]

    def test_plane_wave_eigenfunction(self):
        box = LatticeBox(2, 3)
        L = box.side
        k = np.array([2, 5])
        x1, x2 = box.coordinates()
        u = np.exp(2j * np.pi * (k[0] * x1 + k[1] * x2) / L)
        lam = symbol_eval(k / L)
        assert np.allclose(apply_H0(u, "periodic"), lam * u, atol=1e-12)

    def test_unknown_bc(self):
        with pytest.raises(ValueError):
            apply_H0(np.ones(3), "neumann")


class TestLorentz:
    def test_delta_weak(self):
        assert lorentz_norm([0, 1, 0], 3.0) == 1.0

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 4.0])
    def test_delta_p_equals_r(self, p):
        assert lorentz_norm([1.0], p, p) == pytest.approx(1.0, abs=1e-14)

    def test_homogeneity_example(self):
        assert lorentz_norm([0, -3.5], 2.0) == 3.5

    def test_p_equals_r_is_lp(self):
        u = np.random.default_rng(1).normal(size=50)
        for p in (1.0, 2.0, 3.0):
            assert lorentz_norm(u, p, p) == pytest.approx(np.sum(np.abs(u) ** p) ** (1 / p))

    def test_counts_match_expanded(self):
        vals, counts = np.array([3.0, 1.0, 0.5]), np.array([1, 4, 10])
        full = np.repeat(vals, counts)
        for r in (np.inf, 2.0):
            assert lorentz_norm(vals, 2.5, r, counts=counts) == pytest.approx(
                lorentz_norm(full, 2.5, r), rel=1e-13)

    def test_rejects_nonfinite(self):
        with pytest.raises(NormNotComputableError):
            lorentz_norm([1.0, np.inf], 2.0)

    def test_zero(self):
        assert lorentz_norm(np.zeros(4), 2.0, 2.0) == 0.0

    @pytest.mark.parametrize("d,alpha", [(4, 3.0), (3, 2.0)])
    def test_critical_power_decay(self, d, alpha):
        # (1+|x|)^-alpha at alpha p = d: the weak norm is the limit of
        # t #{|x| < rho}^(1/p), i.e. the unit-ball volume to the power 1/p
        omega = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
        v = potential_lorentz_norm(PowerDecay(alpha), d, d / alpha)
        assert v == pytest.approx(omega ** (alpha / d), rel=1e-12)

    def test_critical_strong_norm_diverges(self):
        with pytest.raises(NormNotComputableError):
            potential_lorentz_norm(PowerDecay(3.0), 4, 4.0 / 3.0, 2.0)

    def test_subcritical_power_decay_settles(self):
        v = potential_lorentz_norm(PowerDecay(3.0), 3, 1.5)
        box = lorentz_norm(PowerDecay(3.0).on_box(LatticeBox(3, 12)), 1.5)
        assert box <= v * (1 + 1e-12) and v == pytest.approx(box, rel=1e-2)

    def test_non_decaying_rejected(self):
        with pytest.raises(NormNotComputableError):
            potential_lorentz_norm(PowerDecay(0.0), 3, 2.0)


def test_csv_export(tmp_path):
    box = LatticeBox(1, 1)
    path = tmp_path / "u.csv"
    write_lattice_csv(path, box, np.array([1, 2j, 3]))
    rows = path.read_text().splitlines()
    assert rows[0].split(",")[:1] == ["x1"] and len(rows) == 4

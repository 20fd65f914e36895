import dataclasses
import json
import math

import numpy as np
import pytest

from bslattice.birman_schwinger import (NoUniformMarginError, SweepReport, bs_bound_states,
                                        bs_matrix, bs_norm, bs_sup_sweep, classify,
                                        default_eps_ladder, default_mu_grid, weak_coupling_margin)
from bslattice.lattice_core import (ComplexEnergy, LatticeBox, PointMass, PowerDecay, Table,
                                    potential_lorentz_norm, threshold_energies)
from bslattice.spectral_box import build_hamiltonian, eig_outside

from oracles import green_origin_below

SHORT = [1e-1, 10**-1.5, 1e-2]


class TestMatrix:
    @pytest.mark.parametrize("mu", [0.1, 0.5, 2.0])
    def test_single_site_closed_form(self, mu):
        K = bs_matrix(PointMass((0,), -1.0), ComplexEnergy(-mu * mu, 0.0), LatticeBox(1, 3))
        assert K.shape == (1, 1)
        assert K.matrix[0, 0].real == pytest.approx(1 / math.sqrt(mu**2 * (mu**2 + 4)), rel=1e-12)
        assert bs_norm(K) == pytest.approx(abs(K.matrix[0, 0]))

    def test_zero_potential(self):
        K = bs_matrix(Table(()), ComplexEnergy(2.0, 0.1), LatticeBox(2, 3))
        assert K.shape == (0, 0) and bs_norm(K) == 0.0

    def test_conjugate_transpose(self):
        V = Table.from_dict({(0, 0): -1.0, (1, 2): 0.5, (-2, 1): 2.0})
        z = ComplexEnergy(3.0, 0.2)
        a = bs_matrix(V, z, LatticeBox(2, 3)).dense()
        b = bs_matrix(V, z.conj(), LatticeBox(2, 3)).dense()
        assert np.allclose(b, a.conj().T, atol=1e-13)

    def test_hermitian_psd_below_spectrum(self):
        K = bs_matrix(PowerDecay(2.0, -1), ComplexEnergy(-0.3, 0.0), LatticeBox(2, 3))
        A = K.dense()
        ev = np.linalg.eigvalsh(A)
        assert K.hermitian and np.allclose(A, A.conj().T, atol=1e-13)
        assert ev.min() > -1e-12
        assert bs_norm(K) == pytest.approx(ev.max(), rel=1e-10)

    def test_matrix_free_matches_dense(self):
        box = LatticeBox(3, 6)
        z = ComplexEnergy(5.0, 0.1)
        K = bs_matrix(PowerDecay(2.0), z, box)
        assert K.operator is not None
        dense = K.operator.dense()
        u = np.random.default_rng(0).normal(size=box.size)
        assert np.allclose(K.matvec(u), dense @ u, atol=1e-12)
        assert np.allclose(K.rmatvec(u), dense.conj().T @ u, atol=1e-12)
        assert bs_norm(K, tol=1e-10) == pytest.approx(np.linalg.norm(dense, 2), rel=1e-8)

    def test_rejects_spectrum(self):
        with pytest.raises(ValueError):
            bs_matrix(PointMass((0,), 1.0), ComplexEnergy(2.0, 0.0), LatticeBox(1, 1))

    def test_log_growth_d2(self):
        # ||K|| = G0(0; -mu^2) ~ (1/(2 pi)) log(1/mu) near the bottom of the band
        V = PointMass((0, 0), -1.0)
        box = LatticeBox(2, 1)
        n = [bs_norm(bs_matrix(V, ComplexEnergy(-m * m, 0.0), box)) for m in (1e-3, 1e-4)]
        assert n[0] == pytest.approx(green_origin_below(1e-3, 2), rel=1e-9)
        assert (n[1] - n[0]) / math.log(10) == pytest.approx(1 / (2 * math.pi), rel=1e-3)


class TestSweep:
    def test_mu_grid_covers_thresholds(self):
        g = default_mu_grid(3)
        assert g[0] == -1.0 and g[-1] == 13.0
        assert {0.0, 4.0, 8.0, 12.0} <= set(g)
        assert np.allclose(default_eps_ladder(), [10 ** (-k / 2) for k in range(2, 7)])

    @pytest.mark.parametrize("sup,verdict", [
        ([1.0, 1.2, 1.5, 1.7, 1.9], "bounded"),
        ([1.0, 1.78, 3.16, 5.62, 10.0], "divergent"),
        ([1.0, 2.5, 1.0, 2.5, 1.2], "inconclusive"),
    ])
    def test_classify(self, sup, verdict):
        assert classify(sup, default_eps_ladder())[0] == verdict

    def test_point_mass_d1_divergent(self):
        rep = bs_sup_sweep(PointMass((0,), -1.0), LatticeBox(1, 5))
        assert rep.verdict == "divergent"
        assert rep.sup_slope == pytest.approx(-0.5, abs=0.01)

    def test_slow_decay_d3_divergent(self):
        rep = bs_sup_sweep(PowerDecay(1.0), LatticeBox(3, 8), eps_ladder=SHORT)
        assert rep.verdict == "divergent"
        assert rep.argmax_mu[-1] in threshold_energies(3)

    def test_d4_weak_lorentz_potential_bounded(self):
        V = PowerDecay(3.0)
        assert math.isfinite(potential_lorentz_norm(V, 4, 4 / 3))
        rep = bs_sup_sweep(V, LatticeBox(4, 3), eps_ladder=SHORT)
        assert rep.verdict == "bounded"

    def test_mirror_symmetry(self):
        V = PowerDecay(2.0)
        box = LatticeBox(2, 4)
        mus = [1.0, 7.0]
        a = bs_sup_sweep(V, box, mu_values=mus, eps_ladder=SHORT, mirror=False)
        assert np.allclose(a.norms[0], a.norms[1], rtol=1e-7)

    def test_report_roundtrip_and_outputs(self, tmp_path):
        rep = bs_sup_sweep(PowerDecay(2.0), LatticeBox(2, 3), eps_ladder=SHORT)
        back = SweepReport.from_json(json.loads(json.dumps(rep.to_json())))
        assert back == rep
        table = rep.verdict_table()
        assert f"verdict={rep.verdict}" in table and len(table.splitlines()) == 3 + len(SHORT)
        rep.write_csv(tmp_path / "s.csv")
        rows = (tmp_path / "s.csv").read_text().splitlines()
        assert rows[0] == "mu,eps,norm,slope"
        assert len(rows) == 1 + len(rep.mu_values) * len(SHORT)

    def test_box_size_stability_fast_decay(self):
        z = ComplexEnergy(-1.0, 0.0)
        n = [bs_norm(bs_matrix(PowerDecay(4.0), z, LatticeBox(3, R))) for R in (8, 16)]
        assert abs(n[1] - n[0]) < 1e-6 * n[1]


class TestWeakCoupling:
    def _report(self, sup, verdict="bounded"):
        rep = bs_sup_sweep(PowerDecay(2.0), LatticeBox(1, 2), eps_ladder=SHORT)
        return dataclasses.replace(rep, sup_per_eps=(sup,) * len(SHORT), verdict=verdict)

    def test_reciprocal(self):
        assert weak_coupling_margin(PowerDecay(2.0), self._report(2.0)) == 0.5

    def test_divergent_has_no_margin(self):
        V = PointMass((0,), -1.0)
        rep = bs_sup_sweep(V, LatticeBox(1, 5))
        with pytest.raises(NoUniformMarginError):
            weak_coupling_margin(V, rep)

    def test_wrong_potential(self):
        with pytest.raises(ValueError):
            weak_coupling_margin(PowerDecay(3.0), self._report(2.0))

    def test_cross_check_no_bound_states(self):
        V = PowerDecay(2.0, -1)
        box = LatticeBox(3, 8)
        rep = bs_sup_sweep(V, box, eps_ladder=SHORT)
        lam = weak_coupling_margin(V, rep)
        assert 0 < lam < math.inf
        assert len(eig_outside(build_hamiltonian(box, "dirichlet", V, lam / 2))) == 0


class TestBoundStates:
    def test_closed_form_1d(self):
        assert bs_bound_states(PointMass((0,), -1.0), 1.0, 1) == [
            pytest.approx(2 - math.sqrt(5), abs=1e-13)]

    def test_two_sites_match_box(self):
        V = Table.from_dict({(0,): -1.0, (3,): -2.0})
        roots = bs_bound_states(V, 1.5, 1)
        H = build_hamiltonian(LatticeBox(1, 200), "dirichlet", V, 1.5)
        box = [v for v, _ in eig_outside(H).below]
        assert len(roots) == len(box) == 2
        assert np.allclose(roots, box, atol=1e-8)

    def test_weak_point_mass_3d_has_none(self):
        # G0(0; 0) ~ 0.2527 in d = 3, so lam < 1 / 0.2527 gives no bound state
        assert bs_bound_states(PointMass((0, 0, 0), -1.0), 3.0, 3) == []
        assert len(bs_bound_states(PointMass((0, 0, 0), -1.0), 5.0, 3)) == 1

    def test_rejects_positive(self):
        with pytest.raises(ValueError):
            bs_bound_states(PointMass((0,), 1.0), 1.0, 1)

import json
import math

import numpy as np
import pytest

from bslattice.lattice_core import LatticeBox, PowerDecay, Table
from bslattice.spectral_box import (BoxMarginError, CountRange, build_hamiltonian,
                                    certify_hamiltonian, counting_check, eig_outside, kernel_dim,
                                    random_table, write_certificates)


class TestAssembly:
    def test_small_dirichlet_matrix(self):
        H = build_hamiltonian(LatticeBox(1, 1))
        assert H.matrix.toarray().tolist() == [[2, -1, 0], [-1, 2, -1], [0, -1, 2]]

    def test_dirichlet_spectrum_closed_form(self):
        n = 21
        H = build_hamiltonian(LatticeBox(1, 10))
        got = np.linalg.eigvalsh(H.matrix.toarray())
        want = 2 - 2 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1))
        assert np.allclose(np.sort(got), np.sort(want), atol=1e-12)

    @pytest.mark.parametrize("bc", ["dirichlet", "periodic"])
    def test_free_spectrum_inside_band(self, bc):
        H = build_hamiltonian(LatticeBox(2, 4), bc)
        ev = np.linalg.eigvalsh(H.matrix.toarray())
        assert ev.min() >= -1e-12 and ev.max() <= 8 + 1e-12
        assert H.norm_bound() == 8.0

    def test_margin_enforced(self):
        with pytest.raises(BoxMarginError):
            build_hamiltonian(LatticeBox(2, 4), W=Table.from_dict({(3, 0): -1.0}))

    def test_background_added(self):
        box = LatticeBox(1, 2)
        H = build_hamiltonian(box, V=PowerDecay(1.0), lam=2.0)
        assert np.allclose(H.matrix.diagonal() - 2.0, 2.0 * PowerDecay(1.0).on_box(box))

    def test_coo_export(self, tmp_path):
        H = build_hamiltonian(LatticeBox(1, 1))
        H.write_coo(tmp_path / "h.mtx")
        lines = (tmp_path / "h.mtx").read_text().splitlines()
        assert lines[0] == "% 3 3 7" and lines[1] == "0 0 2.0" and len(lines) == 8


class TestOutside:
    def test_free_has_none(self):
        out = eig_outside(build_hamiltonian(LatticeBox(3, 4)))
        assert len(out) == 0 and out.values() == []

    def test_point_mass_1d_closed_form(self):
        box = LatticeBox(1, 60)
        lo = eig_outside(build_hamiltonian(box, W=Table.from_dict({(0,): -1.0})))
        hi = eig_outside(build_hamiltonian(box, W=Table.from_dict({(0,): 1.0})))
        assert lo.below[0][0] == pytest.approx(2 - math.sqrt(5), abs=1e-12) and not lo.above
        assert hi.above[0][0] == pytest.approx(2 + math.sqrt(5), abs=1e-12) and not hi.below

    def test_strong_point_mass_3d(self):
        out = eig_outside(build_hamiltonian(LatticeBox(3, 8), W=Table.from_dict({(0, 0, 0): -3.0})))
        # |W| = 3 < 1 / G0(0; 0) ~ 3.96: at most one eigenvalue, none in the infinite lattice
        assert out.count_below() <= 1 and out.count_above() == 0

    def test_nonnegative_perturbation_nothing_below(self):
        W = Table.from_dict({(0, 0): 2.0, (1, 0): 7.0, (0, -1): 0.5})
        out = eig_outside(build_hamiltonian(LatticeBox(2, 6), W=W))
        assert out.count_below() == 0

    def test_stable_under_doubling(self):
        W = Table.from_dict({(0, 0): -4.0, (1, 1): 3.0})
        a = eig_outside(build_hamiltonian(LatticeBox(2, 8), W=W)).values()
        b = eig_outside(build_hamiltonian(LatticeBox(2, 16), W=W)).values()
        assert len(a) == len(b) and np.allclose(a, b, atol=1e-6)

    def test_translation_invariance_periodic(self):
        W = Table.from_dict({(0, 0): -4.0, (1, 0): 6.0})
        Ws = Table.from_dict({(1, -1): -4.0, (2, -1): 6.0})
        box = LatticeBox(2, 6)
        a = eig_outside(build_hamiltonian(box, "periodic", W=W)).values()
        b = eig_outside(build_hamiltonian(box, "periodic", W=Ws)).values()
        assert np.allclose(a, b, atol=1e-10)

    def test_symmetric_pair_is_degenerate(self):
        # two far-apart equal wells: nearly degenerate pair grouped by tolerance
        W = Table.from_dict({(-4,): -3.0, (4,): -3.0})
        out = eig_outside(build_hamiltonian(LatticeBox(1, 12), W=W), tol=1e-2)
        assert out.below[0][1] == 2


class TestKernelDim:
    def test_at_bound_state(self):
        H = build_hamiltonian(LatticeBox(1, 40), W=Table.from_dict({(0,): -1.0}))
        assert kernel_dim(H, 2 - math.sqrt(5)) == 1
        assert kernel_dim(H, -1.0) == 0

    def test_inside_band_dense(self):
        H = build_hamiltonian(LatticeBox(1, 5))
        mu = 2 - 2 * math.cos(math.pi / 12)
        assert kernel_dim(H, mu) == 1

    def test_ambiguous_cluster(self):
        H = build_hamiltonian(LatticeBox(1, 5))
        mu = 2 - 2 * math.cos(math.pi / 12)
        r = kernel_dim(H, mu + 5e-8, tol=1e-8)
        assert r == CountRange(0, 1) and int(r) == 1


class TestCounting:
    def test_two_site_example(self):
        W = Table.from_dict({(0, 0, 0): -5.0, (1, 0, 0): 5.0})
        H = build_hamiltonian(LatticeBox(3, 8), W=W)
        out = eig_outside(H)
        assert (out.count_below(), out.count_above()) == (1, 1)
        certs = certify_hamiltonian(H, W)
        assert all(c.passed for c in certs)
        assert {c.check for c in certs} == {"below", "above", "kernel"}

    def test_random_trials_pass(self):
        certs = counting_check(None, 0.0, trials=5, box=LatticeBox(2, 8), seed=3)
        assert certs and all(c.passed for c in certs)
        assert {c.trial for c in certs} == set(range(5))

    def test_random_table_shape(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            W = random_table(3, rng)
            assert 1 <= W.count("nonzero") <= 5
            assert np.max(np.abs(W.support())) <= 2

    def test_hypothesis_label(self):
        certs = counting_check(PowerDecay(2.0, -1), 0.1, W=Table.from_dict({(0, 0): -1.0}),
                               box=LatticeBox(2, 4), margin=0.5)
        assert certs[0].hypothesis.startswith("|lambda| below weak-coupling margin")
        with pytest.warns(UserWarning):
            counting_check(PowerDecay(2.0, -1), 1.0, W=Table.from_dict({(0, 0): -1.0}),
                           box=LatticeBox(2, 4))

    def test_requires_box(self):
        with pytest.raises(ValueError):
            counting_check(None, 0.0)

    def test_jsonl(self, tmp_path):
        certs = counting_check(None, 0.0, W=Table.from_dict({(0,): -1.0}), box=LatticeBox(1, 10))
        write_certificates(tmp_path / "c.jsonl", certs)
        rows = [json.loads(l) for l in (tmp_path / "c.jsonl").read_text().splitlines()]
        assert len(rows) == len(certs)
        assert set(rows[0]) == {"check", "where", "multiplicity", "bound", "pass", "trial",
                                "hypothesis"}

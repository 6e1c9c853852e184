import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smi.coherence import (CANNED_DATA, DiscreteTwoModuleModel, canned_model, check_additivity,
                           check_order_coherence, check_prequential_additivity,
                           enumerate_posterior, gibbs_posterior, gibbs_update, partitions,
                           prior_tempered_update, random_case, run_suite, tempered_update,
                           total_variation)
from smi.core import Bayes, Cut, Delta, Eta, Gamma, smi_losses
from smi.errors import ZeroMassError

SANCTIONED = [Cut(), Eta(0.5), Delta(1.5, "discrete_uniform"), Gamma(0.5)]
FOUR_POINTS = ((0, 2), (1, 0))


def brute_cut(model, Y, Z):
    """pi(phi | Z) pi(theta | Y, phi) by explicit loops, marginal over theta_tilde."""
    F, T = model.shape
    prior_phi = model.prior.sum(1)
    out = np.zeros((F, T))
    for f in range(F):
        pz = prior_phi[f] * np.prod([model.p_z[f, z] for z in Z])
        w = np.array([model.prior[f, t] * np.prod([model.p_y[f, t, y] for y in Y])
                      for t in range(T)])
        out[f] = pz * w / w.sum()
    return out / out.sum()


def brute_eta(model, Y, Z, eta):
    """pi(phi, theta_tilde) p(Z|phi) p(Y|phi, theta_tilde)^eta pi(theta | Y, phi), over (phi, theta)."""
    F, T = model.shape
    out = np.zeros((F, T))
    for f in range(F):
        lz = np.prod([model.p_z[f, z] for z in Z])
        w_tilde = sum(model.prior[f, tt] * np.prod([model.p_y[f, tt, y] for y in Y]) ** eta
                      for tt in range(T))
        w = np.array([model.prior[f, t] * np.prod([model.p_y[f, t, y] for y in Y])
                      for t in range(T)])
        out[f] = lz * w_tilde * w / w.sum()
    return out / out.sum()


class TestEnumeration:
    def test_endpoint_tables(self):
        m = canned_model()
        Y, Z = CANNED_DATA
        bayes = enumerate_posterior(m, Bayes(), Y, Z)
        np.testing.assert_array_equal(enumerate_posterior(m, Eta(1), Y, Z), bayes)
        cut = enumerate_posterior(m, Cut(), Y, Z)
        np.testing.assert_array_equal(enumerate_posterior(m, Eta(0), Y, Z), cut)
        np.testing.assert_array_equal(enumerate_posterior(m, Gamma(0), Y, Z), cut)

    def test_cut_against_loops(self):
        m = canned_model()
        Y, Z = CANNED_DATA
        np.testing.assert_allclose(enumerate_posterior(m, Cut(), Y, Z).sum(1), brute_cut(m, Y, Z),
                                   rtol=0, atol=1e-14)

    @pytest.mark.parametrize("eta", [0.2, 0.7])
    def test_eta_against_loops(self, eta):
        model, Y, Z = random_case(3, 1)
        np.testing.assert_allclose(enumerate_posterior(model, Eta(eta), Y, Z).sum(1),
                                   brute_eta(model, Y, Z, eta), rtol=0, atol=1e-14)

    @pytest.mark.parametrize("setting", SANCTIONED + [Bayes()], ids=str)
    def test_gibbs_matches_direct(self, setting):
        for i in range(10):
            model, Y, Z = random_case(7, i)
            np.testing.assert_allclose(gibbs_posterior(model, setting, Y, Z),
                                       enumerate_posterior(model, setting, Y, Z),
                                       rtol=0, atol=1e-12)

    def test_loss_values_via_generic_adapter(self):
        # the table losses agree with smi_losses evaluated through the TwoModuleModel adapter
        from smi.coherence import LOSSES, _Data
        model, Y, Z = random_case(2, 4)
        tm = model.as_two_module_model()
        q0 = model.augmented_prior()
        for setting in (Cut(), Eta(0.4), Gamma(0.3), Bayes()):
            d = _Data(model, Y, Z, None)
            F, T = model.shape
            table = np.broadcast_to(LOSSES[setting.kind](d.block(d.everything()), q0, setting),
                                    (F, T, T))
            for f, tt, t in itertools.product(range(F), range(T), range(T)):
                np.testing.assert_allclose(table[f, tt, t],
                                           smi_losses(tm, setting, f, tt, t, list(Y), list(Z)),
                                           rtol=0, atol=1e-12)

    def test_tables_normalised(self):
        for i in range(5):
            model, Y, Z = random_case(1, i)
            for s in SANCTIONED:
                np.testing.assert_allclose(enumerate_posterior(model, s, Y, Z).sum(), 1.0,
                                           rtol=0, atol=1e-12)

    def test_zero_mass(self):
        p_z = np.array([[1.0, 0.0], [1.0, 0.0]])
        p_y = np.full((2, 2, 2), 0.5)
        m = DiscreteTwoModuleModel(p_z, p_y, np.full((2, 2), 0.25))
        with pytest.raises(ZeroMassError):
            enumerate_posterior(m, Cut(), (0,), (1,))

    def test_invalid_tables(self):
        with pytest.raises(ValueError):
            DiscreteTwoModuleModel(np.full((2, 2), 0.6), np.full((2, 2, 2), 0.5),
                                   np.full((2, 2), 0.25))
        with pytest.raises(ValueError):
            DiscreteTwoModuleModel(np.full((2, 2), 0.5), np.full((2, 2, 2), 0.5),
                                   np.array([[0.5, 0.5], [0.0, 0.0]]))


class TestPartitions:
    def test_counts(self):
        # ordered partitions of 4 labelled items into K possibly empty blocks: K^4
        for K in (2, 3, 4):
            assert len(list(partitions(2, 2, K))) == K**4

    def test_cover_and_disjoint(self):
        for part in partitions(2, 1, 3):
            ys = sorted(i for b in part.blocks for i in b.y)
            zs = sorted(i for b in part.blocks for i in b.z)
            assert ys == [0, 1] and zs == [0]


class TestChecks:
    def test_bayes_additive(self):
        m = canned_model()
        r = check_additivity(Bayes(), m, *FOUR_POINTS)
        assert r.max_deviation < 1e-12

    def test_cut_not_additive(self):
        m = canned_model()
        assert check_additivity(Cut(), m, *CANNED_DATA).max_deviation > 0.01

    def test_single_block_exact(self):
        m = canned_model()
        assert check_additivity(Cut(), m, *CANNED_DATA, K_values=(1,)).max_deviation == 0.0

    @pytest.mark.parametrize("setting", SANCTIONED, ids=str)
    def test_prequential_additivity(self, setting):
        m = canned_model()
        r = check_prequential_additivity(setting, gibbs_update, m, *FOUR_POINTS)
        assert r.max_deviation < 1e-12

    @pytest.mark.parametrize("setting", SANCTIONED + [Bayes()], ids=str)
    def test_order_coherence(self, setting):
        m = canned_model()
        assert check_order_coherence(setting, gibbs_update, m, *FOUR_POINTS).max_deviation < 1e-12

    def test_bayes_order_coherence_exact(self):
        m = canned_model()
        assert check_order_coherence(Bayes(), gibbs_update, m, *FOUR_POINTS).max_deviation < 1e-14

    def test_mismatched_pairs(self):
        m = canned_model()
        assert check_prequential_additivity(Cut(), tempered_update(0.5), m,
                                            *CANNED_DATA).max_deviation > 0.01
        assert check_order_coherence(Bayes(), prior_tempered_update(0.5), m,
                                     *CANNED_DATA).max_deviation > 0.01
        assert check_order_coherence(Cut(), tempered_update(0.5), m,
                                     *CANNED_DATA).max_deviation > 0.01

    def test_total_variation(self):
        assert total_variation([0.5, 0.5], [1.0, 0.0]) == 0.5
        assert total_variation([0.2, 0.8], [0.2, 0.8]) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), eta=st.floats(0.05, 0.95),
           delta=st.floats(0.5, 3.0), gamma=st.floats(0.05, 0.95))
    def test_random_models_coherent(self, seed, eta, delta, gamma):
        model, Y, Z = random_case(seed, 0)
        for s in (Eta(eta), Delta(delta, "discrete_uniform"), Gamma(gamma), Cut()):
            assert check_order_coherence(s, gibbs_update, model, Y, Z).max_deviation < 1e-10
            assert check_prequential_additivity(s, gibbs_update, model, Y, Z,
                                                K_values=(2, 3)).max_deviation < 1e-10


class TestSuite:
    def test_small_suite_passes(self):
        rep = run_suite(n_models=5, seed=3)
        assert rep["passed"]
        assert {c["check"] for c in rep["checks"]} == {"additivity", "prequential_additivity",
                                                       "order_coherence"}
        for c in rep["checks"]:
            assert math.isfinite(c["max_deviation"]) and "witness_partition" in c

    def test_injected_mismatch_fails(self):
        rep = run_suite(n_models=3, seed=3, inject_mismatch=True)
        assert not rep["passed"]
        bad = [c for c in rep["checks"] if not c["passed"]]
        assert bad and all("tempered" in c["pair"] for c in bad)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from replicaqec import lattice, noise, oracle, sym
from replicaqec.lattice import LatticeSpec

from twirl import exact_average


class TestEstimate:
    def test_from_samples(self):
        est = oracle.McEstimate.from_samples([1.0, 2.0, 3.0, 4.0])
        assert est.mean == 2.5
        assert est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
        assert est.n_samples == 4

    def test_zero_variance_z_score(self):
        est = oracle.McEstimate(0.25, 0.0, 1000)
        assert est.z_score(0.25 + 1e-15) == pytest.approx(0, abs=0.01)
        assert abs(est.z_score(0.26)) > 1e6


class TestHaarSampling:
    def test_unitary(self):
        rng = oracle.sample_stream(1)
        u = oracle.haar_unitaries(4, 200, rng)
        err = np.einsum("bji,bjk->bik", u.conj(), u) - np.eye(4)
        assert np.max(np.abs(err)) < 1e-12

    @pytest.mark.parametrize("d", [2, 3])
    def test_first_and_second_moments(self, d):
        q = d * d
        u = oracle.haar_unitaries(q, 100_000, oracle.sample_stream(5, d))
        a2 = np.abs(u[:, 0, 0]) ** 2
        first = oracle.McEstimate.from_samples(a2)
        second = oracle.McEstimate.from_samples(a2 ** 2)
        assert abs(first.z_score(1 / q)) < 3
        assert abs(second.z_score(sym.haar_moment(q, (0, 0), (0, 0)))) < 3

    def test_single_gate_shape(self):
        assert oracle.sample_haar_gate(3, oracle.sample_stream(0)).shape == (9, 9)

    def test_circuit_determinism(self):
        a = oracle.sample_circuit(6, 3, 2, seed=9, index=4)
        b = oracle.sample_circuit(6, 3, 2, seed=9, index=4)
        c = oracle.sample_circuit(6, 3, 2, seed=9, index=5)
        assert len(a.gates) == len(lattice.brickwork(6, 3).gates)
        assert all(np.array_equal(x, y) for x, y in zip(a.gates, b.gates))
        assert not np.array_equal(a.gates[0], c.gates[0])


class TestAnnealed:
    def test_determinism_and_chunking(self):
        spec = LatticeSpec(6, 2, 3, noise.amplitude_damping(0.2), setup="II")
        a = oracle.simulate_annealed(spec, "purity_B", 300, seed=3, chunk=100)
        b = oracle.simulate_annealed(spec, "purity_B", 300, seed=3, chunk=300)
        assert a == b

    @pytest.mark.parametrize("method", ["density", "trajectory"])
    @pytest.mark.parametrize("setup", ["I", "II"])
    def test_against_exact_average(self, method, setup):
        ch = noise.depolarizing(2, 0.2)
        spec = LatticeSpec(4, 1, 3, ch, setup=setup)
        targets = ["purity_B", "purity_RB", "holevo_zero", "holevo_mixed"] + (["fidelity"] if setup == "II" else [])
        est = oracle.simulate_annealed(spec, targets, 2000, seed=17, method=method)
        for tg in targets:
            ref = exact_average(4, 1, 3, ch.kraus_ops, setup, tg)
            assert abs(est[tg].z_score(ref)) < 3.5, tg

    def test_full_depolarizing_is_constant(self):
        spec = LatticeSpec(6, 2, 2, noise.depolarizing(2, 1.0))
        est = oracle.simulate_annealed(spec, "purity_B", 200, method="density")
        assert est.mean == pytest.approx(2.0 ** -6, abs=1e-14)
        assert est.std_error < 1e-14

    def test_noiseless_deep_matches_weingarten_sum(self):
        spec = LatticeSpec(6, 2, 12)
        est = oracle.simulate_annealed(spec, ["purity_B", "holevo_zero"], 200, method="density")
        assert abs(est["purity_B"].z_score(math.exp(lattice.contract(spec, "purity_B")))) < 3
        from replicaqec import asym
        haar = math.exp(asym.haar_log_moment(spec, "holevo_zero"))
        assert abs(est["holevo_zero"].mean - haar) < 3 * est["holevo_zero"].std_error + 2e-3

    def test_identity_channel_setups_identical(self):
        ch = noise.identity_channel(2)
        a = oracle.simulate_annealed(LatticeSpec(6, 2, 3, ch), "purity_RB", 200, seed=1)
        b = oracle.simulate_annealed(LatticeSpec(6, 2, 3, ch, setup="II"), "purity_RB", 200, seed=1)
        assert abs(a.mean - b.mean) < 3 * math.hypot(a.std_error, b.std_error) + 1e-12

    @given(seed=st.integers(0, 2 ** 32), gamma=st.floats(0, 1), setup=st.sampled_from(["I", "II"]))
    @settings(max_examples=8, deadline=None)
    def test_purities_in_range(self, seed, gamma, setup):
        spec = LatticeSpec(4, 1, 2, noise.amplitude_damping(gamma), setup=setup)
        runs = oracle._run_density(spec, ("purity_B", "purity_RB"), seed, range(20))
        assert np.all(runs["purity_B"] >= 2.0 ** -4 - 1e-12) and np.all(runs["purity_B"] <= 1 + 1e-12)
        assert np.all(runs["purity_RB"] >= 2.0 ** -5 - 1e-12) and np.all(runs["purity_RB"] <= 1 + 1e-12)

    def test_channel_preserves_trace(self):
        rng = np.random.default_rng(0)
        n, d = 3, 2
        a = rng.normal(size=(2, 8, 8)) + 1j * rng.normal(size=(2, 8, 8))
        rho = a @ np.conj(np.transpose(a, (0, 2, 1)))
        rho /= np.trace(rho, axis1=1, axis2=2)[:, None, None]
        rho = rho.reshape((2,) + (d,) * (2 * n))
        sup = noise.amplitude_damping(0.4).superoperator()
        for x in range(n):
            rho = oracle._apply_channel_dm(rho, sup, x, n, d)
            tr = np.trace(rho.reshape(2, 8, 8), axis1=1, axis2=2)
            assert np.max(np.abs(tr - 1)) < 1e-12

    def test_rejections(self):
        spec = LatticeSpec(4, 1, 2)
        with pytest.raises(ValueError):
            oracle.simulate_annealed(spec, "purity_B", 50)
        with pytest.raises(ValueError):
            oracle.simulate_annealed(spec, "fidelity", 100)
        with pytest.raises(ValueError):
            oracle.simulate_annealed(LatticeSpec(4, 1, 2, alpha=3), "purity_B", 100)
        with pytest.raises(ValueError):
            oracle.simulate_annealed(spec, "entropy", 100)
        with pytest.raises(ValueError):
            oracle.simulate_annealed(LatticeSpec(10, 2, 2), "purity_RB", 100, method="density")

    def test_method_choice(self):
        assert oracle.choose_method(LatticeSpec(4, 2, 1), ["purity_RB"]) == "density"
        assert oracle.choose_method(LatticeSpec(8, 2, 1), ["purity_RB"]) == "trajectory"


class TestFramePotential:
    def test_haar_values(self):
        assert oracle.haar_frame_potential(4, 2) == pytest.approx(2 / (4 * 5))
        assert oracle.haar_frame_potential(4, 2, "printed") == pytest.approx(2 / 4 ** 4)
        assert oracle.haar_frame_potential(2 ** 10, 3) == pytest.approx(
            6 / (1024 * 1025 * 1026), rel=1e-12)
        with pytest.raises(ValueError):
            oracle.haar_frame_potential(4, 2, "other")

    def test_depth_zero(self):
        fp = oracle.frame_potential(6, 0, 2, 100)
        assert fp.estimate.mean == 1.0
        assert fp.delta_f == pytest.approx(1 / oracle.haar_frame_potential(64, 2) - 1)

    @pytest.mark.parametrize("t, alpha", [(1, 2), (2, 2), (3, 3)])
    def test_against_exact_lattice(self, t, alpha):
        fp = oracle.frame_potential(6, t, alpha, 4000, seed=2)
        assert abs(fp.estimate.z_score(lattice.frame_potential_exact(6, t, alpha))) < 3

    def test_deep_circuits_reach_haar(self):
        fp = oracle.frame_potential(6, 30, 2, 4000, seed=8)
        assert abs(fp.delta_f) < 3 * fp.estimate.std_error / oracle.haar_frame_potential(64, 2)

    def test_size_limit(self):
        with pytest.raises(ValueError):
            oracle.frame_potential(16, 1, 2, 100)

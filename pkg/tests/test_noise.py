import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from replicaqec import noise, sym

GAMMAS = np.linspace(0.0, 1.0, 11)


def brute_overlap_alpha2(ch, affected=(0, 1)):
    """Tr(P_pi^T (N on affected)(P_sigma)) with explicit 4x4 permutation matrices."""
    d = ch.dim_d
    eye = np.eye(d * d)
    swap = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            swap[i * d + j, j * d + i] = 1
    perms = [eye, swap]
    lifts = [[np.kron(a if 0 in affected else np.eye(d), b if 1 in affected else np.eye(d))
              for b in (ch.kraus_ops if 1 in affected else [np.eye(d)])]
             for a in (ch.kraus_ops if 0 in affected else [np.eye(d)])]
    ops = [k for row in lifts for k in row]
    out = np.zeros((2, 2))
    for a, p in enumerate(perms):
        for b, s in enumerate(perms):
            out[a, b] = np.trace(p.T @ sum(k @ s @ k.conj().T for k in ops)).real
    return out


def random_channel(seed, d=2, n_ops=3):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n_ops * d, d)) + 1j * rng.normal(size=(n_ops * d, d))
    q, _ = np.linalg.qr(a)      # isometry -> Kraus set
    return noise.KrausChannel(d, tuple(q[i * d:(i + 1) * d] for i in range(n_ops)))


class TestConstruction:
    @pytest.mark.parametrize("make", [
        lambda g: noise.depolarizing(2, g),
        lambda g: noise.depolarizing(3, g),
        noise.amplitude_damping,
        lambda g: noise.pauli_channel(1 - g, g / 2, 0, g / 2),
    ])
    @pytest.mark.parametrize("gamma", GAMMAS)
    def test_trace_preserving(self, make, gamma):
        ch = make(gamma)
        tp = sum(k.conj().T @ k for k in ch.kraus_ops)
        assert np.max(np.abs(tp - np.eye(ch.dim_d))) < 1e-12

    def test_zero_noise_is_identity(self):
        assert noise.depolarizing(2, 0).is_identity
        assert len(noise.depolarizing(2, 0).kraus_ops) == 1
        assert noise.amplitude_damping(0).is_identity
        assert noise.pauli_channel(1, 0, 0, 0).is_identity

    def test_full_depolarizing_outputs_maximally_mixed(self):
        ch = noise.depolarizing(2, 1)
        rho = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])
        np.testing.assert_allclose(ch(rho), np.eye(2) / 2, atol=1e-15)

    def test_unital_flags(self):
        assert noise.pauli_channel(0.9, 0.1, 0, 0).unital
        assert noise.depolarizing(3, 0.4).unital
        assert not noise.amplitude_damping(0.3).unital
        assert noise.amplitude_damping(0.0).unital

    @pytest.mark.parametrize("gamma", GAMMAS)
    def test_pauli_form_equals_depolarizing(self, gamma):
        dep = noise.depolarizing(2, gamma).superoperator()
        pauli = noise.pauli_channel(1 - 3 * gamma / 4, gamma / 4, gamma / 4, gamma / 4).superoperator()
        np.testing.assert_allclose(dep, pauli, atol=1e-12)

    def test_depolarizing_action_d3(self):
        ch = noise.depolarizing(3, 0.35)
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        np.testing.assert_allclose(ch(rho), 0.65 * rho + 0.35 * np.eye(3) / 3, atol=1e-13)

    @pytest.mark.parametrize("bad", [-0.1, 1.1])
    def test_gamma_out_of_range(self, bad):
        with pytest.raises(ValueError):
            noise.depolarizing(2, bad)
        with pytest.raises(ValueError):
            noise.amplitude_damping(bad)

    def test_bad_pauli_vector(self):
        with pytest.raises(ValueError):
            noise.pauli_channel(0.5, 0.5, 0.5, -0.5)
        with pytest.raises(ValueError):
            noise.pauli_channel(0.5, 0.2, 0.2, 0.2)

    def test_non_trace_preserving_rejected(self):
        with pytest.raises(ValueError):
            noise.KrausChannel(2, (0.5 * np.eye(2),))

    def test_power_of_depolarizing(self):
        ch = noise.power(noise.depolarizing(2, 0.1), 3)
        np.testing.assert_allclose(ch.superoperator(),
                                   noise.depolarizing(2, 1 - 0.9 ** 3).superoperator(), atol=1e-12)

    def test_compose_order(self):
        ad, dep = noise.amplitude_damping(0.4), noise.depolarizing(2, 0.2)
        ch = noise.compose(ad, dep)
        rho = np.array([[0.2, 0.1], [0.1, 0.8]])
        # either order convention must match one explicit sequence
        seq = [dep(ad(rho)), ad(dep(rho))]
        assert any(np.allclose(ch(rho), s, atol=1e-13) for s in seq)


class TestOverlaps:
    @pytest.mark.parametrize("alpha", [2, 3, 4])
    def test_identity_channel_gives_gram(self, alpha):
        ov = noise.noisy_overlap(noise.identity_channel(2), alpha)
        np.testing.assert_allclose(ov.entries, sym.gram(2, alpha).entries, atol=1e-12)

    def test_depolarizing_half(self):
        ov = noise.noisy_overlap(noise.depolarizing(2, 0.5), 2)
        np.testing.assert_allclose(ov.entries, [[4, 2], [2, 1.75]], atol=1e-12)
        assert ov.kind == "noisy-all-replicas"

    def test_depolarizing_point_two(self):
        ov = noise.noisy_overlap(noise.depolarizing(2, 0.2), 2)
        np.testing.assert_allclose(ov.entries, [[4, 2], [2, 1 + 3 * 0.64]], atol=1e-12)

    def test_full_depolarizing_swap_entry(self):
        ov = noise.noisy_overlap(noise.depolarizing(2, 1.0), 2)
        assert ov.entries[1, 1] == pytest.approx(1.0, abs=1e-12)

    def test_amplitude_damping_swap_identity_entry(self):
        ov = noise.noisy_overlap(noise.amplitude_damping(0.3), 2)
        assert ov.entries[1, 0] == pytest.approx(2 + 2 * 0.3 ** 2, abs=1e-12)

    @pytest.mark.parametrize("ch", [noise.amplitude_damping(0.3), noise.depolarizing(2, 0.7),
                                    noise.pauli_channel(0.6, 0.1, 0.25, 0.05)])
    @pytest.mark.parametrize("affected", [None, (1,), (2,)])
    def test_against_explicit_matrices(self, ch, affected):
        ov = noise.noisy_overlap(ch, 2, affected)
        brute = brute_overlap_alpha2(ch, (0, 1) if affected is None else tuple(a - 1 for a in affected))
        np.testing.assert_allclose(ov.entries, brute, atol=1e-12)

    def test_one_replica_kind(self):
        assert noise.noisy_overlap(noise.amplitude_damping(0.3), 3, (2,)).kind == "noisy-one-replica"

    def test_bad_replica_label(self):
        with pytest.raises(ValueError):
            noise.noisy_overlap(noise.amplitude_damping(0.3), 2, (3,))

    @given(st.integers(0, 10 ** 6))
    @settings(max_examples=20, deadline=None)
    def test_custom_channels_match_brute_force(self, seed):
        ch = random_channel(seed)
        np.testing.assert_allclose(noise.noisy_overlap(ch, 2).entries, brute_overlap_alpha2(ch), atol=1e-11)

    def test_repeated_identity_is_idempotent(self):
        ident = noise.identity_channel(2)
        twice = noise.compose(ident, ident)
        for alpha in (2, 3):
            np.testing.assert_allclose(noise.noisy_overlap(twice, alpha).entries,
                                       noise.noisy_overlap(ident, alpha).entries, atol=1e-12)

    def test_decomposition_independence(self):
        # rotate the Kraus set by a unitary mixing matrix: same channel, same overlaps
        ch = noise.amplitude_damping(0.45)
        mix = np.array([[1, 1j], [1j, 1]]) / math.sqrt(2)
        ops = tuple(sum(mix[a, b] * ch.kraus_ops[b] for b in range(2)) for a in range(2))
        other = noise.KrausChannel(2, ops)
        for alpha in (2, 3):
            np.testing.assert_allclose(noise.noisy_overlap(other, alpha).entries,
                                       noise.noisy_overlap(ch, alpha).entries, atol=1e-12)


class TestCostExponents:
    def test_identity(self):
        g = noise.cost_exponents(noise.identity_channel(2))
        assert (g.g_se, g.g_ss, g.g_es) == pytest.approx((0, 0, 0), abs=1e-14)

    @pytest.mark.parametrize("gamma", GAMMAS)
    def test_depolarizing(self, gamma):
        g = noise.cost_exponents(noise.depolarizing(2, gamma))
        assert g.g_ss == pytest.approx(2 - math.log2(1 + 3 * (1 - gamma) ** 2), abs=1e-12)
        assert g.g_se == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("gamma", GAMMAS)
    def test_amplitude_damping_swap_swap(self, gamma):
        g = noise.cost_exponents(noise.amplitude_damping(gamma))
        assert g.g_ss == pytest.approx(-math.log2(1 - gamma * (2 - gamma) / 2), abs=1e-12)

    @pytest.mark.parametrize("gamma", GAMMAS)
    @pytest.mark.parametrize("px", [0.0, 0.3])
    def test_unital_means_no_swap_identity_cost(self, gamma, px):
        rest = 1 - px
        ch = noise.pauli_channel(rest * (1 - gamma), px, rest * gamma / 2, rest * gamma / 2)
        assert abs(noise.cost_exponents(ch).g_se) < 1e-15

    def test_non_positive_entry_reported(self, monkeypatch):
        real = noise.noisy_overlap

        def zero_swap(ch, alpha, replicas_affected=None):
            ov = real(ch, alpha, replicas_affected)
            entries = ov.entries.copy()
            entries[1, 1] = 0.0
            return sym.OverlapMatrix(entries, ov.dim_q, ov.kind)

        monkeypatch.setattr(noise, "noisy_overlap", zero_swap)
        with pytest.raises(FloatingPointError):
            noise.cost_exponents(noise.depolarizing(2, 0.3))


class TestHashing:
    GRID = np.linspace(0, 1, 101)

    def test_depolarizing_closed_form_and_pauli_vector(self):
        for gamma in self.GRID:
            h = noise.hashing_h2(noise.depolarizing(2, gamma))
            closed = 2 - math.log(1 + 3 * (1 - gamma) ** 2, 2)
            p = [1 - 3 * gamma / 4] + [gamma / 4] * 3
            renyi = -math.log2(sum(x * x for x in p))
            assert abs(h - closed) < 1e-12
            assert abs(h - renyi) < 1e-12

    def test_pauli_vector_example(self):
        assert noise.hashing_h2(noise.pauli_channel(0.9, 0.1, 0, 0)) == pytest.approx(-math.log2(0.82), abs=1e-12)
        # -log2(0.82) = 0.2863041851566..., not 0.28640
        assert noise.hashing_h2(noise.pauli_channel(0.9, 0.1, 0, 0)) == pytest.approx(0.2863041851566, abs=1e-12)

    def test_amplitude_damping_closed_form(self):
        for gamma in self.GRID:
            h = noise.hashing_h2(noise.amplitude_damping(gamma))
            closed = -math.log2(1 - (2 - gamma) * gamma / 2) + math.log2(1 + gamma ** 2)
            assert abs(h - closed) < 1e-12

    def test_endpoints(self):
        assert noise.hashing_h2(noise.depolarizing(2, 0)) == pytest.approx(0, abs=1e-14)
        assert noise.hashing_h2(noise.depolarizing(2, 1)) == pytest.approx(2, abs=1e-12)

    @pytest.mark.parametrize("h2", [0.0, 0.25, 0.4, 0.75, 1.3, 2.0])
    def test_gamma_inverse(self, h2):
        gamma = noise.depolarizing_gamma(h2)
        assert noise.hashing_h2(noise.depolarizing(2, gamma)) == pytest.approx(h2, abs=1e-12)

    def test_h_alpha_reduces_to_h2(self):
        for gamma in self.GRID:
            assert abs(noise.hashing_h_alpha(2, gamma, 2) - noise.hashing_h2(noise.depolarizing(2, gamma))) < 1e-12

    def test_h_alpha_zero_noise(self):
        for alpha in (2, 3, 4, 5):
            assert noise.hashing_h_alpha(2, 0.0, alpha) == pytest.approx(0, abs=1e-14)

    def test_h3_full_depolarizing(self):
        # Pauli probabilities (1/4)^4 -> Renyi-3 entropy of the uniform vector = 2
        assert noise.hashing_h_alpha(2, 1.0, 3) == pytest.approx(-0.5 * math.log2(4 * 0.25 ** 3), abs=1e-12)
        assert noise.hashing_h_alpha(2, 1.0, 3) == pytest.approx(2.0, abs=1e-12)

    def test_h_alpha_family_guard(self):
        with pytest.raises(ValueError):
            noise.hashing_h_alpha(2, 0.1, 3, family="amplitude_damping")


class TestChannelSpec:
    @pytest.mark.parametrize("text, label", [
        ("depolarizing(gamma=0.1)", "depolarizing"),
        ("amplitude_damping(gamma=0.1)", "amplitude-damping"),
        ("pauli(p=[0.7, 0.1, 0.1, 0.1])", "pauli"),
        ("identity()", "identity"),
    ])
    def test_parse_and_print(self, text, label):
        ch = noise.parse_channel(text)
        assert ch.label == label
        again = noise.parse_channel(noise.channel_spec_string(ch))
        np.testing.assert_allclose(again.superoperator(), ch.superoperator(), atol=1e-15)

    @pytest.mark.parametrize("text", ["depolarizing", "depolarizing(0.1)", "foo(gamma=1)",
                                      "depolarizing(g=0.1)", "pauli(p=[1,2)"])
    def test_rejected(self, text):
        with pytest.raises(ValueError):
            noise.parse_channel(text)

    def test_kraus_file(self, tmp_path):
        ch = noise.amplitude_damping(0.3)
        lines = []
        for k in ch.kraus_ops:
            lines += [" ".join(f"{z.real:.17g},{z.imag:.17g}" for z in row) for row in k]
            lines.append("")
        path = tmp_path / "ad.txt"
        path.write_text("# amplitude damping\n" + "\n".join(lines))
        loaded = noise.parse_channel("kraus(file='ad.txt')", base_dir=tmp_path)
        np.testing.assert_allclose(loaded.superoperator(), ch.superoperator(), atol=1e-15)
        assert loaded.label == "custom"

    def test_empty_kraus_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("# nothing\n")
        with pytest.raises(ValueError):
            noise.load_kraus_file(path)

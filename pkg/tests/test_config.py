import textwrap

import pytest
from hypothesis import given, settings, strategies as st

from replicaqec import config
from replicaqec.config import ConfigError

BASE = """\
mode = "lattice"
setup = "I"
channel = "depolarizing"
[sweep]
n = [8, 12]
t = [2, 4]
gamma = [0.1]
r = [0.25]
"""


def loads(text):
    return config.loads(textwrap.dedent(text), "cfg.toml")


class TestParsing:
    def test_basic(self):
        cfg = loads(BASE)
        assert cfg.mode == "lattice"
        assert cfg.sweep["n"] == (8, 12)
        assert cfg.noise_axis == "gamma"
        assert cfg.n_points() == 4

    @pytest.mark.parametrize("recipe", ["fig2a", "fig2b", "fig2c", "fig2d", "fig3", "fig4", "fig5"])
    def test_shipped_recipes_parse(self, recipe):
        from replicaqec.cli import recipe_text
        panels = config.load_recipe(recipe_text(recipe), recipe)
        assert panels
        for _, cfg in panels:
            assert cfg.n_points() >= 1

    def test_round_trip(self):
        cfg = loads(BASE)
        assert config.loads(cfg.to_toml()) == cfg

    def test_fit_round_trip(self):
        text = """\
        mode = "fit"
        [sweep]
        n = [16, 32]
        t = [1, 2, 3, 4, 5]
        h2 = [0.4]
        r = [0.25]
        [fit]
        models = ["N_exp2t", "exp_t"]
        windows = ["early", [2, 5]]
        l0 = 2.0
        """
        cfg = loads(text)
        assert cfg.fit.models == ("N_exp2t", "exp_t")
        assert config.loads(cfg.to_toml()) == cfg

    def test_overrides(self):
        cfg = loads(BASE).with_overrides(seed=7, direction="space")
        assert cfg.seed == 7 and cfg.direction == "space"
        assert loads(BASE).with_overrides(seed=None).seed == 0

    @given(st.lists(st.sampled_from([4, 8, 12, 16, 20]), min_size=1, max_size=3, unique=True),
           st.lists(st.integers(1, 30), min_size=1, max_size=5, unique=True),
           st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=4, unique=True),
           st.integers(0, 2 ** 63 - 1))
    @settings(max_examples=40, deadline=None)
    def test_round_trip_property(self, ns, ts, gammas, seed):
        cfg = config.from_dict({"mode": "lattice", "seed": seed,
                                "sweep": {"n": ns, "t": ts, "gamma": gammas, "r": [0.25]}})
        assert config.loads(cfg.to_toml()) == cfg


class TestErrors:
    def _error(self, text):
        with pytest.raises(ConfigError) as info:
            loads(text)
        return info.value

    def test_empty_axis(self):
        err = self._error(BASE.replace("t = [2, 4]", "t = []"))
        assert err.field_name.endswith("t") and err.line == 6
        assert "cfg.toml:6" in str(err)

    def test_r_times_n(self):
        err = self._error(BASE.replace("r = [0.25]", "r = [0.3]"))
        assert err.line == 8 and "integral" in str(err)

    def test_unknown_key(self):
        err = self._error("colour = 1\n" + BASE)
        assert err.line == 1

    def test_bad_mode(self):
        assert self._error(BASE.replace('"lattice"', '"plot"')).line == 1

    def test_toml_syntax(self):
        err = self._error(BASE.replace('setup = "I"', 'setup = = "I"'))
        assert err.line == 2

    @pytest.mark.parametrize("old, new", [
        ("gamma = [0.1]", "gamma = [1.5]"),
        ("gamma = [0.1]", "gamma = [0.1]\nh2 = [0.3]"),
        ("n = [8, 12]", "n = [7]"),
        ('channel = "depolarizing"', 'channel = "bitflip"'),
        ('setup = "I"', 'setup = "III"'),
        ("gamma = [0.1]", "f2 = [0.3]"),
    ])
    def test_invalid_values(self, old, new):
        self._error(BASE.replace(old, new))

    def test_fidelity_needs_setup_two(self):
        self._error(BASE.replace('setup = "I"', 'setup = "I"\nquantities = ["fidelity"]'))

    def test_oracle_limits(self):
        oracle = BASE.replace('"lattice"', '"oracle"')
        self._error(oracle)   # N = 12 > 10
        self._error(oracle.replace("n = [8, 12]", "n = [8]").replace('mode = "oracle"', 'mode = "oracle"\nsamples = 50'))

    def test_fit_needs_models_and_depths(self):
        fit = BASE.replace('"lattice"', '"fit"')
        self._error(fit)
        self._error(fit + '[fit]\nmodels = ["exp_t"]\n')   # only 2 depths

    def test_rm_has_no_size_axis(self):
        self._error(BASE.replace('"lattice"', '"rm"'))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            config.load(tmp_path / "none.toml")


class TestEmbedded:
    def test_from_csv_header(self):
        cfg = loads(BASE)
        csv = "# replicaqec 0.1.0\n# config:\n" + "".join(f"# {l}\n" for l in cfg.to_toml().splitlines()) \
              + "# end config\nn,t\n8,2\n"
        assert config.embedded_config(csv) == cfg

    def test_missing_block(self):
        with pytest.raises(ConfigError):
            config.embedded_config("n,t\n1,2\n")

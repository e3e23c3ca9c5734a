"""
Test module for run configuration parsing, validation and overrides.
"""

from fractions import Fraction

import pytest

from dgff_lab.config import (
    RunConfig,
    apply_overrides,
    load_config,
    parse_config,
    serialize_config,
)
from dgff_lab.errors import ConfigError

GREEN = """
[run]
experiment = green
seed = 1

[domain]
domain = disc
center = 0.5, 0
radius = 2
N = 1, 4
"""


def messages(error: ConfigError):
    return [message for _, message in error.violations]


class TestParseConfig:
    """Reading valid configurations."""

    def test_sections(self):
        config = parse_config(GREEN)
        assert config.experiment == "green"
        assert config.domain == "disc"
        assert config.center == (0.5, 0.0)
        assert config.N == [1, 4]
        assert config.threads == 1
        assert config.formats == ["csv", "json", "svg"]

    def test_keys_without_header(self):
        config = parse_config("experiment = free-energy\nseed = 3\nN = 8\nbeta = 0.5, 1.5\n")
        assert config.beta == [0.5, 1.5]
        assert config.seed == 3

    def test_comments_are_ignored(self):
        config = parse_config("# a run\nexperiment = green ; inline\nseed = 1\nN = 8\n")
        assert config.experiment == "green"

    def test_beta_pairs(self):
        config = parse_config("experiment = limit-q\nseed = 1\nbeta = 3, 4\nbeta_prime = 5\n")
        assert config.beta_pairs == [(3.0, 5.0), (4.0, 5.0)]
        same = parse_config("experiment = limit-q\nseed = 1\nbeta = 3, 4\n")
        assert same.beta_pairs == [(3.0, 3.0), (4.0, 4.0)]

    def test_fractions(self):
        config = parse_config("experiment = lemma32\nseed = 1\n")
        assert config.fractions("p") == [Fraction(2, 3), Fraction(1, 3)]
        assert config.is_verify

    def test_serialize_round_trip(self):
        config = parse_config(GREEN)
        text = serialize_config(config)
        assert text.startswith("[run]\nexperiment = green")
        assert parse_config(text) == config

    def test_serialize_round_trip_limit(self):
        config = parse_config(
            "experiment = theorem2\nseed = 9\nbeta = 3.5\nbeta_prime = 5\nL = 3\nmodel = constant\n"
        )
        assert parse_config(serialize_config(config)) == config


class TestViolations:
    """Every problem is reported, with line numbers."""

    def test_duplicate_key(self):
        text = "[run]\nexperiment = green\nseed = 1\nN = 8\n[model]\nseed = 2\n"
        with pytest.raises(ConfigError) as excinfo:
            parse_config(text)
        assert (6, "duplicate key 'seed' (first defined on line 3, again on line 6)") in excinfo.value.violations

    def test_unknown_key_and_section(self):
        text = "[run]\nexperiment = green\nseed = 1\nN = 8\nbogus = 1\n[extra]\n"
        with pytest.raises(ConfigError) as excinfo:
            parse_config(text)
        assert (5, "unknown key 'bogus'") in excinfo.value.violations
        assert (6, "unknown section [extra]") in excinfo.value.violations

    def test_all_violations_collected(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config("experiment = theorem2\nbeta = 2\nbogus = 3\n")
        found = messages(excinfo.value)
        assert "missing required key 'seed'" in found
        assert "unknown key 'bogus'" in found
        assert "missing required key 'beta_prime' for experiment theorem2" in found
        assert any("must exceed beta_c = sqrt(2 pi) = 2.506628" in m for m in found)

    def test_beta_below_critical_has_line(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config("experiment = limit-q\nseed = 1\nbeta = 2\n")
        assert (3, "beta = 2 must exceed beta_c = sqrt(2 pi) = 2.506628 for experiment limit-q") in (
            excinfo.value.violations
        )

    def test_lattice_experiment_needs_beta(self):
        with pytest.raises(ConfigError, match="missing required key 'beta' for experiment overlap"):
            parse_config("experiment = overlap\nseed = 1\nN = 8\n")

    def test_green_needs_only_n(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config("experiment = green\nseed = 1\n")
        assert messages(excinfo.value) == ["missing required key 'N' for experiment green"]

    def test_ball_radii(self):
        with pytest.raises(ConfigError, match="r_ball = 5 must not exceed R_ball = 3"):
            parse_config("experiment = decoration\nseed = 1\nr_ball = 5\nR_ball = 3\n")

    def test_c_probs_length(self):
        with pytest.raises(ConfigError, match="one entry per c_values entry"):
            parse_config("experiment = lemma32\nseed = 1\nc_values = 0, 1\nc_probs = 1\n")

    def test_field_errors(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config("experiment = green\nseed = -1\nN = 0\nthreads = 0\n")
        lines = {line for line, _ in excinfo.value.violations}
        assert {2, 3, 4} <= lines

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="experiment"):
            parse_config("experiment = everything\nseed = 1\n")

    def test_not_rational(self):
        with pytest.raises(ConfigError, match="not a rational number"):
            parse_config("experiment = lemma32\nseed = 1\np = half, 1/2\n")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config("experiment = green\nseed = 1\nN = 8\njust words\n")

    def test_error_text(self):
        error = ConfigError([(3, "first"), (None, "second")])
        assert str(error) == "Invalid configuration:\n  line 3: first\n  second"
        assert error.exit_code == 1


class TestLoadConfig:
    """Reading configuration files."""

    def test_load(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(GREEN)
        assert load_config(path) == parse_config(GREEN)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read configuration file"):
            load_config(tmp_path / "absent.cfg")


class TestOverrides:
    """Command-line overrides."""

    def test_override_existing(self):
        config = apply_overrides(parse_config(GREEN), ["N=8", "seed=5"])
        assert config.N == [8]
        assert config.seed == 5
        assert config.domain == "disc"

    def test_from_scratch(self):
        config = apply_overrides(None, ["experiment=green", "seed=2", "N=4"])
        assert isinstance(config, RunConfig)
        assert config.N == [4]

    def test_malformed(self):
        with pytest.raises(ConfigError, match="override must look like key=value"):
            apply_overrides(parse_config(GREEN), ["N"])

    def test_unknown(self):
        with pytest.raises(ConfigError, match="unknown key 'bogus' in override"):
            apply_overrides(parse_config(GREEN), ["bogus=1"])

    def test_result_is_validated(self):
        with pytest.raises(ConfigError, match="must exceed beta_c"):
            apply_overrides(parse_config(GREEN), ["experiment=limit-q", "beta=1"])

    @pytest.mark.parametrize("lam", ["0", "1"])
    def test_lambda_endpoints_rejected(self, lam):
        with pytest.raises(ConfigError, match="lam"):
            apply_overrides(parse_config(GREEN), [f"lam={lam}"])

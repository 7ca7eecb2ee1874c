"""Tests for config parsing and validation."""

import math

import pytest

from fracns.config import SCHEMA, parse_config, read_pairs
from fracns.errors import ConfigError, RangeError

MINIMAL = """
kind = ou-check
seed = 0
T = 10
"""


def violations(text, **overrides):
    with pytest.raises(ConfigError) as info:
        parse_config(text, overrides)
    return info.value.violations


class TestParsing:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.kind == "ou-check" and cfg.seeds == (0,)
        assert cfg.T == 10.0 and cfg.dt == 0.01
        assert cfg.L == 2 * math.pi and cfg.moments == [1.0, 2.0, 4.0]
        assert set(cfg.values) == set(SCHEMA)

    def test_sections_and_comments(self):
        text = "[run]\nkind = simulate  # comment\nseeds = 1, 2\n[numerics]\nT = 1\n# dt = 0\n"
        cfg = parse_config(text)
        assert cfg.seeds == (1, 2) and cfg.dt == 0.01

    def test_overrides_win(self):
        cfg = parse_config(MINIMAL, {"dt": "0.5", "T": "2"})
        assert cfg.dt == 0.5 and cfg.T == 2.0

    def test_replayable_excludes_out(self):
        a = parse_config(MINIMAL, {"out": "a"})
        b = parse_config(MINIMAL, {"out": "b"})
        assert a.replayable() == b.replayable() and "out" not in a.replayable()

    def test_paths_relative_to_config(self, tmp_path):
        cfg = parse_config(MINIMAL + "out = res\n", base_dir=tmp_path)
        assert cfg.out_dir == tmp_path / "res"

    def test_read_pairs_syntax(self):
        pairs, problems = read_pairs("a = 1\nbogus line\na = 2\n")
        assert pairs == {"a": "2"}
        assert len(problems) == 2 and "duplicate" in problems[1]


class TestViolations:
    def test_zero_dt(self):
        assert "dt must be positive" in violations(MINIMAL, dt="0")

    def test_unknown_key_named(self):
        assert any("'detla'" in v for v in violations(MINIMAL + "detla = 1e-3\n"))

    def test_all_violations_listed(self):
        found = violations("kind = simulate\nnu = -1\nN = 0\nscheme = euler\nmystery = 3\n")
        for needle in ("'seed'", "'T'", "nu must be positive", "N must be >= 1", "unknown scheme", "'mystery'"):
            assert any(needle in v for v in found), needle

    def test_unparseable(self):
        assert any("cannot parse" in v for v in violations(MINIMAL + "N = eight\n"))

    def test_missing_file(self, tmp_path):
        found = violations(MINIMAL + "v0_kind = file\nv0_file = absent.tsns\n")
        assert any("absent.tsns" in v and "does not exist" in v for v in found)

    def test_file_kind_needs_path(self):
        assert "h_kind = file needs h_file" in violations(MINIMAL + "h_kind = file\n")

    def test_unknown_kind(self):
        assert any("is not one of" in v for v in violations("kind = teleport\nseed = 0\n"))

    def test_seed_and_seeds(self):
        assert any("not both" in v for v in violations(MINIMAL + "seeds = 1, 2\n"))

    def test_scales_order(self):
        text = "kind = dimension\nseed = 0\nscales = 0.1, 0.2\n"
        assert any("strictly decreasing" in v for v in violations(text))

    def test_delta_floor(self):
        assert "deltas must be >= 1e-12" in violations(MINIMAL + "deltas = 1e-3, 1e-13\n")

    def test_not_finite(self):
        assert any("cannot parse" in v for v in violations(MINIMAL + "nu = nan\n"))


class TestAlignment:
    def test_off_grid_time_is_range_error(self):
        with pytest.raises(RangeError, match="T value 10.005"):
            parse_config(MINIMAL, {"T": "10.005"})

    def test_off_grid_horizon(self):
        with pytest.raises(RangeError, match="horizons"):
            parse_config("kind = pullback\nseed = 0\nhorizons = 1, 2.5\ndt = 1\n")

    def test_mixed_faults_report_as_config(self):
        found = violations(MINIMAL, T="10.005", nu="-1")
        assert any("not a multiple" in v for v in found) and "nu must be positive" in found

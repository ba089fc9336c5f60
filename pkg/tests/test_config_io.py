from pathlib import Path

import numpy as np
import pytest
import yaml

from mvexec import ConfigError, MissingInputError, PenaltySpec, solve_slice
from mvexec.config import (
    load_config,
    load_priors_file,
    priors_to_mapping,
    write_priors_file,
)
from mvexec.curve import global_target
from mvexec.io import (
    cache_key,
    load_solution_cache,
    plot_data_bundles,
    save_solution_cache,
    write_csv,
)

from conftest import reference_curve, prior_set_for, two_venue_rates, two_venue_spec

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestLoadConfig:
    def test_reference_config_loads_and_matches_builder(self):
        cfg = load_config(CONFIGS / "two_venues.yaml",
                          need=("market", "priors", "grid", "penalty", "curve", "engine"))
        spec = cfg.market
        assert spec.n_venues == 2
        assert spec.space.n_states == 36
        want = two_venue_rates()
        assert np.array_equal(spec.intensities.rates, want)
        # the loaded spec is genuinely venue-symmetric
        sigma = spec.space.venue_permutation([1, 0])
        lam0 = spec.intensities.rates[0][:, sigma]
        lam1 = spec.intensities.rates[1]
        assert np.array_equal(lam0, lam1)
        assert cfg.grid.n_q == 101 and cfg.grid.n_l == 51
        assert cfg.engine.n_slices == 10
        assert cfg.priors.normal.mu0 == 0.1

    def test_quick_config_loads(self):
        cfg = load_config(CONFIGS / "quick.yaml", need=("market", "priors", "grid"))
        assert cfg.grid.n_q == 21

    def test_otc_config_loads(self):
        cfg = load_config(CONFIGS / "otc.yaml", need=("otc",))
        assert cfg.otc.rfq[(0, "bid")].alpha == 3.0
        assert cfg.otc.niw.dim == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "nope.yaml")

    def test_missing_section_names_it(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("market: {}\n")
        with pytest.raises(ConfigError, match="venues"):
            load_config(p)

    def test_missing_regime_entry_names_path(self, tmp_path):
        raw = yaml.safe_load((CONFIGS / "quick.yaml").read_text())
        del raw["market"]["intensities"]["base"][0]["1,1"]
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump(raw))
        with pytest.raises(ConfigError, match=r"intensities.base\[0\].*missing entry"):
            load_config(p)

    def test_bad_generator_row_sum_names_path(self, tmp_path):
        raw = yaml.safe_load((CONFIGS / "quick.yaml").read_text())
        raw["market"]["generator"]["spread"][0] = [[-5.0, 4.0], [5.0, -5.0]]
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump(raw))
        with pytest.raises(ConfigError, match=r"generator.spread\[0\]"):
            load_config(p)

    def test_chain_prior_mismatch_detected(self, tmp_path):
        raw = yaml.safe_load((CONFIGS / "quick.yaml").read_text())
        raw["priors"]["ctmc"]["generator"]["spread"] = \
            raw["priors"]["ctmc"]["generator"]["spread"][:1]
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump(raw))
        with pytest.raises(ConfigError):
            load_config(p, need=("market", "priors"))


class TestPriorRoundTrip:
    def test_posterior_file_reloads_identically(self, tmp_path):
        spec = two_venue_spec()
        priors = prior_set_for(spec)
        path = tmp_path / "posterior.yaml"
        write_priors_file(path, priors)
        back = load_priors_file(path, spec)
        assert np.array_equal(back.intensity_alpha, priors.intensity_alpha)
        assert np.array_equal(back.intensity_beta, priors.intensity_beta)
        assert np.array_equal(back.prop_alpha, priors.prop_alpha)
        assert back.prop_venue_level == priors.prop_venue_level
        for name in priors.ctmc:
            assert np.array_equal(back.ctmc[name].a, priors.ctmc[name].a)
            assert np.array_equal(back.ctmc[name].alpha, priors.ctmc[name].alpha)
        assert back.normal == priors.normal
        # a second round trip is byte-stable
        path2 = tmp_path / "again.yaml"
        write_priors_file(path2, back)
        assert path.read_text() == path2.read_text()

    def test_mapping_is_explicit_arrays(self):
        priors = prior_set_for(two_venue_spec())
        mapping = priors_to_mapping(priors)
        assert "alpha" in mapping["intensities"]
        assert "confidence" not in mapping["intensities"]


class TestCsvAndCache:
    def test_write_csv_deterministic_bytes(self, tmp_path):
        rows = [(0, 1.5, 0.1), (1, 2.5, -0.25)]
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        write_csv(a, ["i", "x", "y"], rows)
        write_csv(b, ["i", "x", "y"], rows)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == "i,x,y"
        assert a.read_text().endswith("\n")

    def test_solution_cache_round_trip(self, tmp_path):
        from conftest import small_grid

        spec = two_venue_spec()
        grid = small_grid()
        sol = solve_slice(spec, grid, PenaltySpec(1e-5), global_target(reference_curve()), 0.0)
        key = cache_key({"market": "demo"}, {"grid": "demo"})
        path = save_solution_cache(tmp_path, key, sol)
        back = load_solution_cache(path, grid)
        assert np.array_equal(back.value, sol.value)
        assert np.array_equal(back.limits, sol.limits)
        assert back.slice_start == sol.slice_start
        with pytest.raises(MissingInputError):
            load_solution_cache(tmp_path / "missing.npz", grid)

    def test_cache_key_stable(self):
        assert cache_key({"a": 1}, {"b": 2}) == cache_key({"a": 1}, {"b": 2})
        assert cache_key({"a": 1}) != cache_key({"a": 2})


class TestPlotBundles:
    def test_missing_run_dir_errors_without_output(self, tmp_path):
        out = tmp_path / "out"
        with pytest.raises(MissingInputError):
            plot_data_bundles(tmp_path / "empty", out, [0, 0], [1, 1])
        assert not out.exists()

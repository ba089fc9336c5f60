import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvexec import (
    ConfigError,
    DomainError,
    Generator,
    IntensityTable,
    ProportionTable,
    VenueSpec,
    ZoneMap,
    fill_intensity,
    joint_state_index,
    regime_flat_of,
    regime_of,
    state_components,
)
from mvexec.market import holding_rates, jump_probs

from conftest import two_venue_spec


class TestJointStateIndex:
    def test_first_element(self, reference_spec):
        assert joint_state_index((0, 0), (0, 0), reference_spec) == 0

    def test_maximal_element(self, reference_spec):
        # product of cardinalities 2*2*3*3 - 1
        assert joint_state_index((1, 1), (2, 2), reference_spec) == 35

    def test_round_trip_all_states(self, reference_spec):
        for s in range(36):
            spreads, imbs = state_components(s, reference_spec)
            assert joint_state_index(spreads, imbs, reference_spec) == s

    def test_out_of_range(self, reference_spec):
        with pytest.raises(DomainError):
            joint_state_index((2, 0), (0, 0), reference_spec)
        with pytest.raises(DomainError):
            state_components(36, reference_spec)

    @given(st.integers(0, 1), st.integers(0, 1), st.integers(0, 2), st.integers(0, 2))
    def test_encode_decode_hypothesis(self, s0, s1, i0, i1):
        spec = two_venue_spec()
        idx = joint_state_index((s0, s1), (i0, i1), spec)
        assert state_components(idx, spec) == ((s0, s1), (i0, i1))


class TestRegimes:
    def test_identity_zones_regime_tuple(self, reference_spec):
        # every raw state is its own regime in the reference setup
        s = joint_state_index((0, 0), (1, 1), reference_spec)
        assert regime_of(s, reference_spec) == (0, 0, 1, 1)

    def test_collapsed_zones_constant(self):
        spec = two_venue_spec()
        zones = ZoneMap(((0, 0), (0, 0)), ((0, 0, 0), (0, 0, 0)))
        collapsed = type(spec)(
            venues=spec.venues,
            zones=zones,
            generator=spec.generator,
            intensities=IntensityTable(kappa=0.0, rates=np.ones((2, 3, 1))),
            proportions=ProportionTable(omega=np.array([0.5, 1.0]),
                                        probs=np.full((2, 3, 1, 2), 0.5)),
            price=spec.price,
        )
        for s in range(36):
            assert regime_flat_of(s, collapsed) == 0

    def test_constructed_map(self):
        # venue spreads {1, 2, 3} ticks grouped into {low} / {high} regimes
        venues = (VenueSpec(0.05, (0.05, 0.10, 0.15), (-0.5, 0.0, 0.5)),)
        zones = ZoneMap(((0, 1, 1),), ((0, 0, 1),))
        gen = Generator("factored", spread=(np.zeros((3, 3)),), imbalance=(np.zeros((3, 3)),))
        n_regimes = 2 * 2
        spec = two_venue_spec().__class__(
            venues=venues, zones=zones, generator=gen,
            intensities=IntensityTable(kappa=0.0, rates=np.ones((1, 3, n_regimes))),
            proportions=ProportionTable(omega=np.array([1.0]),
                                        probs=np.ones((1, 3, n_regimes, 1))),
            price=two_venue_spec().price,
        )
        s = joint_state_index((2,), (0,), spec)
        assert regime_of(s, spec) == (1, 0)


class TestFillIntensity:
    def test_zero_posted_volume_convention(self, reference_spec):
        # kappa = 2.5e-5 but total volume 0 on the other venue keeps f = exp(0)... the
        # convention zeroes unposted venues, so post an epsilon-free single unit lot.
        s = joint_state_index((0, 0), (0, 0), reference_spec)
        rate = fill_intensity(s, (0, 0), (0.0, 0.0), reference_spec)
        assert rate[0] == 0.0 and rate[1] == 0.0  # nothing posted, nothing fills

    def test_base_rate_recovered_when_kappa_zero(self):
        spec = two_venue_spec(kappa=0.0)
        s = joint_state_index((0, 0), (0, 0), spec)
        rate = fill_intensity(s, (0, 0), (1000.0, 0.0), spec)
        assert rate[0] == 5.35

    def test_base_entry_small_volume(self, reference_spec):
        # f^lambda(total) multiplies the (0,0)-imbalance entry 5.35
        s = joint_state_index((0, 0), (0, 0), reference_spec)
        rate = fill_intensity(s, (0, 0), (1000.0, 0.0), reference_spec)
        assert rate[0] == pytest.approx(5.35 * math.exp(-2.5e-5 * 1000.0), rel=1e-15)

    def test_exponential_decay_hand_value(self, reference_spec):
        s = joint_state_index((0, 0), (0, 0), reference_spec)
        rate = fill_intensity(s, (0, 0), (20000.0, 20000.0), reference_spec)
        # 5.35 * exp(-1), evaluated independently
        assert rate[0] == pytest.approx(1.9681550102672165, rel=1e-14)

    def test_inadmissible_new_best_limit_at_one_tick(self, reference_spec):
        s = joint_state_index((0, 0), (0, 0), reference_spec)
        with pytest.raises(DomainError):
            fill_intensity(s, (-1, 0), (1000.0, 0.0), reference_spec)
        # admissible at the two-tick spread
        s2 = joint_state_index((1, 0), (0, 0), reference_spec)
        fill_intensity(s2, (-1, 0), (1000.0, 0.0), reference_spec)

    def test_negative_volume_rejected(self, reference_spec):
        with pytest.raises(DomainError):
            fill_intensity(0, (0, 0), (-1.0, 0.0), reference_spec)

    def test_strictly_decreasing_in_each_volume(self, reference_spec):
        s = joint_state_index((0, 0), (1, 1), reference_spec)
        grid = np.linspace(1000.0, 50000.0, 20)
        prev = None
        for ell in grid:
            r = fill_intensity(s, (0, 0), (ell, 1000.0), reference_spec)[0]
            if prev is not None:
                assert r < prev
            prev = r


class TestGenerator:
    def test_row_sums_and_signs_enforced(self):
        with pytest.raises(ConfigError):
            Generator("factored", spread=(np.array([[-5.0, 4.0], [5.0, -5.0]]),),
                      imbalance=(np.zeros((2, 2)),))
        with pytest.raises(ConfigError):
            Generator("factored", spread=(np.array([[1.0, -1.0], [5.0, -5.0]]),),
                      imbalance=(np.zeros((2, 2)),))

    def test_jump_decomposition(self):
        m = np.array([[-5.0, 2.0, 3.0], [1.0, -4.0, 3.0], [0.0, 0.0, 0.0]])
        nu = holding_rates(m)
        p = jump_probs(m)
        assert np.allclose(nu, [5.0, 4.0, 0.0])
        assert np.all(np.diag(p) == 0.0)
        assert np.allclose(p[0], [0.0, 0.4, 0.6])
        assert np.allclose(p[2], 0.0)  # absorbing row
        assert p[:2].sum(axis=1) == pytest.approx(1.0)

    def test_joint_matrix_rows_sum_to_zero(self, reference_spec):
        R = reference_spec.joint_generator_matrix()
        assert R.shape == (36, 36)
        assert np.abs(R.sum(axis=1)).max() < 1e-9
        off = R.copy()
        np.fill_diagonal(off, 0.0)
        assert np.all(off >= 0)

    def test_joint_matrix_matches_hand_entry(self, reference_spec):
        spec = reference_spec
        s = joint_state_index((0, 0), (1, 1), spec)
        s_up = joint_state_index((1, 0), (1, 1), spec)
        R = spec.joint_generator_matrix()
        assert R[s, s_up] == 5.0  # venue-0 spread jump rate
        assert R[s, s] == -(5.0 + 5.0 + 5.0 + 5.0)

    def test_coupled_mode(self):
        joint = np.array([[-1.0, 1.0], [2.0, -2.0]])
        g = Generator("coupled", joint=joint)
        assert g.chains(1)[0][0] == "joint"


class TestProportions:
    def test_normalised_exactly(self):
        probs = np.full((1, 3, 2, 3), 1.0)  # thirds after normalisation
        probs = probs / 3.0
        table = ProportionTable(omega=np.array([0.25, 0.5, 1.0]), probs=probs)
        sums = table.probs.sum(axis=-1)
        assert np.all(sums == 1.0)

    def test_rejects_bad_vectors(self):
        with pytest.raises(ConfigError):
            ProportionTable(omega=np.array([0.5, 0.4]), probs=np.full((1, 3, 1, 2), 0.5))
        with pytest.raises(ConfigError):
            ProportionTable(omega=np.array([0.5, 1.0]), probs=np.full((1, 3, 1, 2), 0.4))
        with pytest.raises(ConfigError):
            ProportionTable(omega=np.array([0.5, 1.5]), probs=np.full((1, 3, 1, 2), 0.5))


class TestVenueAndZones:
    def test_spread_must_be_tick_multiple(self):
        with pytest.raises(ConfigError):
            VenueSpec(0.05, (0.07,), (0.0,))

    def test_imbalance_bounds(self):
        with pytest.raises(ConfigError):
            VenueSpec(0.05, (0.05,), (-1.5, 0.0))

    def test_zone_contiguity(self):
        with pytest.raises(ConfigError):
            ZoneMap(((0, 2),), ((0,),))

    def test_venue_permutation_round_trip(self, reference_spec):
        sigma = reference_spec.space.venue_permutation([1, 0])
        assert np.all(sigma[sigma] == np.arange(36))
        s = joint_state_index((0, 1), (2, 0), reference_spec)
        swapped = joint_state_index((1, 0), (0, 2), reference_spec)
        assert sigma[s] == swapped

"""Tests for the experiment layer: admissibility, absorption, comparison, Lipschitz, zeta, dimension."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracns.errors import ConfigError, RangeError
from fracns.integrator import SimParams
from fracns.lab import (
    absorbing_entry_time,
    absorbing_experiment,
    admissibility_from_gradient,
    attractor_sample_deterministic,
    box_count,
    box_counting_dimension,
    comparison_norms,
    comparison_plateau,
    fit_plateau,
    linearized_ratio,
    lipschitz_ratio,
    mode_coordinates,
    non_increasing_after_max,
    pullback_radii,
    verify_noise_admissibility,
    zeta_path_functional,
)
from fracns.noise import WienerPath, ou_trajectory, sample_two_sided_wiener
from fracns.spectral import Lattice, SpectralField, inner, random_field, sine_mode, sobolev_norm

SQRT_PI = math.sqrt(math.pi)


def orthonormal_basis(lat, count, seed):
    """Fields orthonormal in H, supported on the first shell."""
    rng = np.random.default_rng(seed)
    basis = []
    while len(basis) < count:
        u = random_field(lat, rng, kmax=1)
        for b in basis:
            u = u - b * inner(u, b)
        basis.append(u * (1 / sobolev_norm(u)))
    return basis


def combine(basis, weights):
    return SpectralField(basis[0].lattice, sum(w * b.coeffs for w, b in zip(weights, basis)))


class TestAdmissibility:
    def test_zero_noise(self):
        rep = verify_noise_admissibility(SpectralField.zeros(Lattice(N=4)), 1.0)
        assert rep.threshold == pytest.approx(1.7724538509055159, rel=1e-15)
        assert rep.satisfied
        assert rep.alpha_split == 1.0
        assert rep.lambda_rate == pytest.approx(0.25, rel=1e-15)
        assert rep.beta_split is None and not rep.beta_defined

    def test_half_threshold(self):
        rep = admissibility_from_gradient(SQRT_PI / 2, 1.0, Lattice(N=2))
        assert rep.alpha_split == pytest.approx(0.5, abs=1e-12)
        assert rep.beta_split == pytest.approx(0.5, abs=1e-12)
        assert rep.lambda_rate == pytest.approx(0.125, abs=1e-12)

    def test_boundary_is_not_admissible(self):
        rep = admissibility_from_gradient(SQRT_PI, 1.0, Lattice(N=2))
        assert not rep.satisfied
        assert rep.alpha_split is None and rep.beta_split is None and rep.lambda_rate is None

    def test_measured_profile(self, lat4):
        h = sine_mode(lat4, (1, 0, 0), (0, 1, 0), 0.5)
        rep = verify_noise_admissibility(h, 2.0)
        assert rep.grad_h_sup == pytest.approx(0.5, rel=1e-14)
        assert rep.alpha_split == pytest.approx(1 - 0.5 / (2 * SQRT_PI), rel=1e-14)

    def test_lattice_mismatch(self, lat4):
        with pytest.raises(ConfigError):
            verify_noise_admissibility(SpectralField.zeros(lat4), 1.0, Lattice(N=3))

    def test_invalid_inputs(self, lat4):
        with pytest.raises(ConfigError):
            admissibility_from_gradient(-1.0, 1.0, lat4)
        with pytest.raises(ConfigError):
            admissibility_from_gradient(1.0, 0.0, lat4)

    @settings(max_examples=60, deadline=None)
    @given(frac=st.floats(1e-6, 1 - 1e-6), nu=st.floats(0.01, 100), L=st.floats(0.5, 20))
    def test_splitting_identities(self, frac, nu, L):
        lat = Lattice(L=L, N=1)
        scale = nu * lat.lambda1 ** 1.25
        g = frac * SQRT_PI * scale
        rep = admissibility_from_gradient(g, nu, lat)
        assert rep.satisfied
        assert 0 < rep.alpha_split <= 1 and rep.beta_split > 0
        # 1 - alpha cancels when g is tiny; measure against the scale instead
        assert abs((1 - rep.alpha_split) * scale - g / SQRT_PI) <= 1e-12 * scale
        assert g * (1 + rep.beta_split) / SQRT_PI == pytest.approx((1 - rep.alpha_split / 2) * scale, rel=1e-12)
        assert rep.lambda_rate == pytest.approx(rep.alpha_split * scale / 4, rel=1e-14)

    def test_serializes(self):
        rep = admissibility_from_gradient(0.0, 1.0, Lattice(N=1))
        d = json.loads(json.dumps(rep.to_dict()))
        assert set(d) >= {"grad_h_sup", "threshold", "satisfied", "alpha_split", "beta_split", "lambda_rate"}


class TestAttractorSample:
    def test_unforced_collapses_to_zero(self, lat4):
        p = SimParams(1.0, lat4, 0.1)
        samples = attractor_sample_deterministic(p, 20.0 / lat4.lambda1 ** 1.25, 3, seed=4, radius=2.0)
        assert len(samples) == 3
        assert max(sobolev_norm(u) for u in samples) <= 1e-6

    def test_forced_samples_consistent(self, lat4):
        f = random_field(lat4, np.random.default_rng(3), norm=2.0, kmax=2)
        p = SimParams(1.0, lat4, 0.1, f)
        a = attractor_sample_deterministic(p, 10.0, 3, seed=1)
        b = attractor_sample_deterministic(p, 10.0, 3, seed=2)
        ra = max(sobolev_norm(u, 2.5) for u in a)
        rb = max(sobolev_norm(u, 2.5) for u in b)
        assert ra > 0 and abs(ra - rb) <= 0.1 * ra
        c = attractor_sample_deterministic(p, 20.0, 3, seed=1)
        rc = max(sobolev_norm(u, 2.5) for u in c)
        assert abs(rc - ra) <= 0.05 * rc

    def test_validation(self, lat4):
        p = SimParams(1.0, lat4, 0.1)
        with pytest.raises(ConfigError):
            attractor_sample_deterministic(p, 0.0, 2)
        with pytest.raises(ConfigError):
            attractor_sample_deterministic(p, 1.0, 0)


class TestComparison:
    def test_identical_dynamics(self, lat4, rng):
        f = random_field(lat4, rng, kmax=2)
        p = SimParams(1.0, lat4, 0.05, f)
        u0 = random_field(lat4, rng)
        path = sample_two_sided_wiener(1, -2.0, 0.0, 0.05)
        series = comparison_norms(p, path, 2.0, u0, u0)
        assert all(np.all(v == 0) for v in series.norms.values())

    def test_unforced_attraction(self, lat4, rng):
        p = SimParams(1.0, lat4, 0.05)
        path = sample_two_sided_wiener(1, -10.0, 0.0, 0.05)
        series = comparison_norms(p, path, 10.0, random_field(lat4, rng), random_field(lat4, rng, norm=2.0))
        assert series.norms[0.0][-1] < 1e-4 * series.norms[0.0][0]

    def test_plateau_horizon_stable(self, lat4, rng):
        f = random_field(lat4, rng, norm=1.0, kmax=2)
        h = sine_mode(lat4, (1, 0, 0), (0, 1, 0), 1.0)
        p = SimParams(2.0, lat4, 0.05, f, h)
        cloud = attractor_sample_deterministic(p, 10.0, 2, seed=3)
        path = sample_two_sided_wiener(5, -40.0, 0.0, 0.05)
        v0 = random_field(lat4, rng, norm=5.0)
        plateaus = [comparison_plateau(comparison_norms(p, path, t, v0, cloud[0]), 10.0) for t in (20.0, 40.0)]
        assert np.isfinite(plateaus).all() and plateaus[0] > 0
        assert abs(plateaus[1] - plateaus[0]) <= 0.1 * plateaus[1]

    def test_distance_series(self, lat4, rng):
        p = SimParams(1.0, lat4, 0.05, random_field(lat4, rng, kmax=2))
        cloud = [random_field(lat4, rng), random_field(lat4, rng)]
        path = sample_two_sided_wiener(5, -1.0, 0.0, 0.05)
        series = comparison_norms(p, path, 1.0, cloud[1], cloud[0], cloud=cloud)
        assert series.extra["dist_sq"][0] == 0.0


class TestAbsorbing:
    def test_entry_time_linear_decay(self, lat4):
        nu, dt = 0.5, 0.05
        p = SimParams(nu, lat4, dt, nonlinear=False)
        v0 = sine_mode(lat4, (0, 1, 0), (1, 0, 0), 4.0)
        horizons = np.round(np.arange(0, 41) * 0.1, 10)
        path = sample_two_sided_wiener(0, -horizons[-1], 0.0, dt)
        radii = pullback_radii(p, path, horizons, [v0], sobolev=(0.0,))[0.0]
        t_star = 1.37
        radius = math.exp(-2 * nu * lat4.lambda1 ** 1.25 * t_star) * sobolev_norm(v0) ** 2
        entry = absorbing_entry_time(horizons, radii, radius)
        assert t_star <= entry <= t_star + 0.1 + 1e-12

    def test_infinite_radius(self):
        assert absorbing_entry_time([0.0, 1.0, 2.0], [5.0, 3.0, 1.0], math.inf) == 0.0

    def test_never_entered(self):
        assert absorbing_entry_time([1.0, 2.0], [5.0, 3.0], 1.0) == math.inf

    def test_late_excursion_resets_entry(self):
        assert absorbing_entry_time([1, 2, 3, 4], [1, 5, 1, 1], 2.0) == 3

    def test_slack(self):
        assert absorbing_entry_time([1.0], [1.0 + 5e-7], 1.0) == 1.0

    @settings(max_examples=60, deadline=None)
    @given(radii=st.lists(st.floats(0, 100), min_size=1, max_size=12), r1=st.floats(0, 120), r2=st.floats(0, 120))
    def test_shrinking_radius_never_decreases_entry(self, radii, r1, r2):
        horizons = np.arange(len(radii), dtype=float)
        small, big = sorted((r1, r2))
        assert absorbing_entry_time(horizons, radii, small) >= absorbing_entry_time(horizons, radii, big)

    def test_fit_plateau(self):
        assert fit_plateau([9.0, 1.0, 1.02, 0.99]) == pytest.approx(1.0033333333333334)
        assert fit_plateau([1.0, 2.0, 3.0]) is None
        assert fit_plateau([1.0, 1.0]) is None

    def test_non_increasing_after_max(self):
        assert non_increasing_after_max([1.0, 5.0, 3.0, 3.0, 2.0])
        assert not non_increasing_after_max([5.0, 3.0, 4.0])

    def test_experiment_report(self, lat4):
        h = sine_mode(lat4, (1, 0, 0), (0, 1, 0), 0.5)
        p = SimParams(1.0, lat4, 0.1, random_field(lat4, np.random.default_rng(0), kmax=2), h)
        rep = absorbing_experiment(p, [0, 1], [1.0, 2.0, 4.0, 8.0], 10.0, 2, entry_radii={0.0: 5.0})
        assert len(rep.radii[0.0]) == 2 and len(rep.radii[0.0][0]) == 4
        assert all(r >= 0 for row in rep.radii[1.25] for r in row)
        d = json.loads(json.dumps(rep.to_dict()))
        assert d["params"]["nu"] == 1.0 and d["seeds"] == [0, 1]
        assert "s=0,radius=5" in d["entry_time"]


class TestLipschitz:
    @pytest.fixture
    def setup(self, lat4):
        rng = np.random.default_rng(8)
        h = sine_mode(lat4, (1, 0, 0), (0, 1, 0), 0.5)
        p = SimParams(1.0, lat4, 0.05, random_field(lat4, rng, kmax=2), h)
        path = sample_two_sided_wiener(2, -1.0, 0.0, 0.05)
        return p, path, random_field(lat4, rng, norm=0.5), random_field(lat4, rng, norm=1.0)

    def test_linear_response_regime(self, setup):
        p, path, v0, d = setup
        rep = lipschitz_ratio(p, path, 1.0, v0, [(1e-3, d), (1e-4, d), (1e-5, d)], sobolev=(0.0, 2.5))
        r0 = np.array(rep.ratios[0.0])
        assert np.ptp(r0) <= 0.05 * r0.min()
        lin = linearized_ratio(p, path, 1.0, v0, d, sobolev=(0.0, 2.5))
        assert r0[-1] == pytest.approx(lin[0.0], rel=0.01)
        assert rep.stable and rep.verdict[2.5] == "stable"

    def test_rejects_zero_direction(self, setup, lat4):
        p, path, v0, _ = setup
        with pytest.raises(ConfigError):
            lipschitz_ratio(p, path, 1.0, v0, [(1e-3, SpectralField.zeros(lat4))])

    def test_rejects_tiny_delta(self, setup):
        p, path, v0, d = setup
        with pytest.raises(ConfigError):
            lipschitz_ratio(p, path, 1.0, v0, [(1e-13, d)])

    def test_rejects_non_unit_direction(self, setup):
        p, path, v0, d = setup
        with pytest.raises(ConfigError):
            lipschitz_ratio(p, path, 1.0, v0, [(1e-3, d * 2.0)])

    def test_rejects_empty_ladder(self, setup):
        p, path, v0, _ = setup
        with pytest.raises(ConfigError):
            lipschitz_ratio(p, path, 1.0, v0, [])

    def test_smoothing_past_absorption(self, lat4):
        rng = np.random.default_rng(9)
        p = SimParams(1.0, lat4, 0.05, random_field(lat4, rng, kmax=2), sine_mode(lat4, (1, 0, 0), (0, 1, 0), 0.5))
        path = sample_two_sided_wiener(4, -8.0, 0.0, 0.05)
        d = random_field(lat4, rng, slope=0.0)  # rough direction: H-data, large H^{5/2} content
        rep = lipschitz_ratio(p, path, 8.0, random_field(lat4, rng, norm=3.0), [(1e-4, d)], sobolev=(0.0, 2.5))
        assert np.isfinite(rep.ratios[2.5][0])
        assert rep.ratios[2.5][0] < sobolev_norm(d, 2.5)

    def test_report_keeps_raw_pairs(self, setup):
        p, path, v0, d = setup
        rep = lipschitz_ratio(p, path, 1.0, v0, [(1e-3, d), (1e-4, d)])
        dd = rep.to_dict()
        assert dd["deltas"] == [1e-3, 1e-4]
        assert len(dd["ratios"]["0.0"]) == 2


class TestZeta:
    def zero_ou(self, T, dt=0.01):
        n = round(T / dt)
        path = WienerPath(seed=0, dt=dt, origin=n, increments=np.zeros(n))
        return ou_trajectory(path, z_init=0.0)

    def test_closed_form(self):
        res = zeta_path_functional(self.zero_ou(40.0, 0.001), 1.0, 0.25, 0.0, C=1.0, T_trunc=40.0)
        # int_{-T}^0 e^{1.25 s} ds; trapezoid error ~ dt^2 k^2 / 12
        assert res.value == pytest.approx((1 - math.exp(-50.0)) / 1.25, rel=1e-6)
        assert res.value == pytest.approx(0.8, rel=1e-6)
        assert res.exponent_rate == pytest.approx(1.25)
        assert res.tail_bound == pytest.approx(math.exp(-50.0) / 1.25, rel=1e-12)

    def test_linear_in_C(self):
        path = sample_two_sided_wiener(3, -30.0, 0.0, 0.01)
        a = zeta_path_functional(path.ou, 0.7, 0.2, 0.4, C=1.0, T_trunc=30.0)
        b = zeta_path_functional(path.ou, 0.7, 0.2, 0.4, C=2.0, T_trunc=30.0)
        assert b.value == 2 * a.value

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_tail_bound_covers_doubling(self, seed):
        path = sample_two_sided_wiener(seed, -40.0, 0.0, 0.01)
        args = (path.ou, 0.8, 0.5, 0.6)
        short = zeta_path_functional(*args, T_trunc=20.0)
        long = zeta_path_functional(*args, T_trunc=40.0)
        assert 0 <= long.value - short.value <= short.tail_bound

    def test_insufficient_window(self):
        path = sample_two_sided_wiener(0, -5.0, 0.0, 0.01)
        with pytest.raises(RangeError):
            zeta_path_functional(path.ou, 1.0, 0.25, 0.0, T_trunc=10.0)

    def test_invalid_parameters(self):
        ou = self.zero_ou(1.0)
        with pytest.raises(ConfigError):
            zeta_path_functional(ou, 0.0, 0.25, 0.0, T_trunc=1.0)
        with pytest.raises(ConfigError):
            zeta_path_functional(ou, 1.0, 0.25, 0.0, C=0.0, T_trunc=1.0)


class TestDimension:
    def test_repeated_point(self, lat4, rng):
        u = random_field(lat4, rng)
        rep = box_counting_dimension([u] * 10, 0.0, [0.1, 0.01])
        assert rep.slope == 0.0 and rep.degenerate

    def test_coordinates_isometric(self, lat4, rng):
        # a field on the lowest shells is represented exactly by the projection
        u = random_field(lat4, rng, kmax=1)
        x = mode_coordinates([u], 1.25, 24)
        assert np.linalg.norm(x) == pytest.approx(sobolev_norm(u, 1.25), rel=1e-14)

    def test_rank_limit(self):
        lat = Lattice(N=1)
        with pytest.raises(ConfigError):
            mode_coordinates([SpectralField.zeros(lat)], 0.0, 1000)

    def test_scales_validated(self, lat4, rng):
        u, v = random_field(lat4, rng), random_field(lat4, rng)
        with pytest.raises(ConfigError):
            box_counting_dimension([u, v], 0.0, [0.1, 0.2])
        with pytest.raises(ConfigError):
            box_counting_dimension([u], 0.0, [0.2, 0.1])

    def test_curve(self):
        lat = Lattice(N=1)
        basis = orthonormal_basis(lat, 2, seed=0)
        th = np.linspace(0, 2 * np.pi, 4000, endpoint=False)
        curve = [combine(basis, [math.cos(t), math.sin(t)]) for t in th]
        rep = box_counting_dimension(curve, 0.0, [0.4, 0.2, 0.1, 0.05, 0.025])
        assert rep.slope == pytest.approx(1.0, abs=0.15)
        assert all(a <= b for a, b in zip(rep.counts, rep.counts[1:]))
        assert rep.slope_low <= rep.slope <= rep.slope_high

    def test_flat_torus(self):
        lat = Lattice(N=1)
        basis = orthonormal_basis(lat, 4, seed=0)
        g = np.linspace(0, 2 * np.pi, 300, endpoint=False)
        ca, sa = np.cos(g), np.sin(g)
        pts = [combine(basis, [ca[i], sa[i], ca[k], sa[k]]) for i in range(g.size) for k in range(g.size)]
        rep = box_counting_dimension(pts, 0.0, [0.6, 0.42, 0.3, 0.21, 0.15])
        assert rep.slope == pytest.approx(2.0, abs=0.2)

    def test_coordinate_input(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(size=(20000, 1))
        rep = box_counting_dimension(pts, 0.0, [0.1, 0.05, 0.025, 0.0125])
        assert rep.slope == pytest.approx(1.0, abs=0.05)
        assert box_count(pts, 0.5) == 2

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from featbo.acquisition import (
    L_FLOOR,
    AcquisitionSpec,
    ConstraintState,
    acq_value,
    acq_value_and_grad,
    acquisition_batch,
    acquisition_value_and_grad,
    constraint_value,
    estimate_lipschitz,
    propose,
)
from featbo.surrogate import JointSurrogate, ModelConfig, ParamLayout, fit


def surrogate_with(X, y, config, seed=0, log_ls=0.0, spread=2.0):
    lay = ParamLayout(X.shape[1], config)
    rng = np.random.default_rng(seed)
    th = lay.initial(rng)
    enc = lay.slices["encoder"]
    th[enc] += spread * rng.standard_normal(enc.stop - enc.start)
    for name, sl in lay.slices.items():
        if "kernel" in name:
            th[sl.start:sl.stop - 1] = log_ls
    return JointSurrogate(th, X, y, config)


def sampled_pairs_ok(s, L, n=100, seed=0):
    rng = np.random.default_rng(seed)
    Z1 = rng.uniform(size=(n, s.config.d))
    Z2 = rng.uniform(size=(n, s.config.d))
    lhs = np.abs(s.decoder_mean(Z1) - s.decoder_mean(Z2))
    rhs = L * np.linalg.norm(Z1 - Z2, axis=1)[:, None] * (1 + 1e-6)
    return bool(np.all(lhs <= rhs))


# -- closed forms --------------------------------------------------------------


def test_tabulated_values():
    assert acq_value(AcquisitionSpec("PI", y_min=0.3), 0.3, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert acq_value(AcquisitionSpec("EI", y_min=0.3), 0.3, 1.0) == pytest.approx(0.398942, abs=1e-6)
    assert acq_value(AcquisitionSpec("UCB"), 1.0, 2.0) == pytest.approx(2.464102, abs=1e-6)
    assert acq_value(AcquisitionSpec("EI", y_min=-1.0), 0.0, 1.0) == pytest.approx(0.083315, abs=1e-6)


def test_against_scipy_norm():
    rng = np.random.default_rng(0)
    mu, sig, ym = rng.standard_normal(50), rng.uniform(0.1, 3, 50), 0.2
    z = (ym - mu) / sig
    np.testing.assert_allclose(acq_value(AcquisitionSpec("PI", ym), mu, sig), norm.cdf(z), atol=1e-14)
    ei = (ym - mu) * norm.cdf(z) + sig * norm.pdf(z)
    np.testing.assert_allclose(acq_value(AcquisitionSpec("EI", ym), mu, sig), ei, atol=1e-13)


def test_zero_sigma_limits():
    pi, ei, ucb = AcquisitionSpec("PI", 1.0), AcquisitionSpec("EI", 1.0), AcquisitionSpec("UCB", 1.0)
    assert acq_value(pi, 0.5, 0.0) == 1.0
    assert acq_value(pi, 1.5, 0.0) == 0.0
    assert acq_value(ei, 0.25, 0.0) == 0.75
    assert acq_value(ei, 2.0, 0.0) == 0.0
    assert acq_value(ucb, 0.7, 0.0) == -0.7


@pytest.mark.parametrize("mu", [-0.4, 0.6, 1.7])
def test_continuity_at_tiny_sigma(mu):
    for kind in ("PI", "EI"):
        spec = AcquisitionSpec(kind, y_min=0.5)
        assert acq_value(spec, mu, 1e-10) == pytest.approx(acq_value(spec, mu, 0.0), abs=1e-8)


def test_spec_validation():
    with pytest.raises(ValueError):
        AcquisitionSpec("LCB")
    with pytest.raises(ValueError):
        AcquisitionSpec("UCB", beta=0.0)
    with pytest.raises(ValueError):
        AcquisitionSpec("EI", y_min=np.nan)
    assert AcquisitionSpec("ei").kind == "EI"
    assert AcquisitionSpec().beta == pytest.approx(math.sqrt(3))


def test_grid_shape_properties():
    mu = np.linspace(-3, 3, 61)
    sig = np.linspace(0, 3, 31)
    M, S = np.meshgrid(mu, sig, indexing="ij")
    ei = acq_value(AcquisitionSpec("EI", 0.1), M, S)
    pi = acq_value(AcquisitionSpec("PI", 0.1), M, S)
    ucb = acq_value(AcquisitionSpec("UCB", 0.1), M, S)
    assert np.all(ei >= 0)
    assert np.all((pi >= 0) & (pi <= 1))
    assert np.all(np.diff(ucb, axis=0) < 0)
    assert np.all(np.diff(ucb, axis=1) >= 0)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["PI", "EI", "UCB"]), st.floats(-3, 3), st.floats(0.05, 3), st.floats(-2, 2))
def test_partials_match_fd(kind, mu, sigma, ym):
    spec = AcquisitionSpec(kind, y_min=ym)
    _, dmu, dsig = acq_value_and_grad(spec, mu, sigma)
    h = 1e-6
    fd_mu = (acq_value(spec, mu + h, sigma) - acq_value(spec, mu - h, sigma)) / (2 * h)
    fd_sig = (acq_value(spec, mu, sigma + h) - acq_value(spec, mu, sigma - h)) / (2 * h)
    assert float(dmu) == pytest.approx(fd_mu, abs=1e-6)
    assert float(dsig) == pytest.approx(fd_sig, abs=1e-6)


def test_acquisition_gradient_in_z_matches_fd():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(7, 4))
    s = surrogate_with(X, rng.standard_normal(7), ModelConfig(d=2), log_ls=np.log(0.4))
    for kind in ("PI", "EI", "UCB"):
        spec = AcquisitionSpec(kind, y_min=float(s.y_raw.min()))
        z = np.array([0.37, 0.61])
        _, g = acquisition_value_and_grad(s, spec, z)
        h = 1e-6
        fd = [(acquisition_batch(s, spec, (z + h * e)[None])[0]
               - acquisition_batch(s, spec, (z - h * e)[None])[0]) / (2 * h) for e in np.eye(2)]
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)


# -- constraint ------------------------------------------------------------------


def test_constraint_hand_examples():
    cs = ConstraintState(np.full((1, 2), 0.5), 1.0, [0.3])
    assert constraint_value(np.array([0.9, 0.5]), cs) == pytest.approx(-0.1, abs=1e-12)
    assert constraint_value(np.array([0.5, 0.7]), cs) == pytest.approx(0.1, abs=1e-12)
    assert constraint_value(np.array([0.5, 0.5]), cs) == pytest.approx(0.3)


def test_constraint_uses_nearest_point():
    Z = np.array([[0.1, 0.1], [0.9, 0.9]])
    cs = ConstraintState(Z, 2.0, [0.2, 1.0])
    # nearest is the first point: radius 0.1, distance 0.05
    assert constraint_value(np.array([0.15, 0.1]), cs) == pytest.approx(0.05)


def test_vacuous_constraint_at_floor():
    cs = ConstraintState(np.full((1, 3), 0.2), 0.0, [0.5])
    assert cs.L == L_FLOOR
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * 3)).reshape(3, -1).T
    assert all(constraint_value(c, cs) > 0 for c in corners)


def test_constraint_state_validation():
    with pytest.raises(ValueError):
        ConstraintState(np.zeros((2, 2)), 1.0, [0.1])


# -- Lipschitz constant -----------------------------------------------------------


def test_lipschitz_one_dimensional_toy_matches_grid():
    cfg = ModelConfig(d=1, kernel="se")
    s = surrogate_with(np.array([[0.8]]), np.array([1.0]), cfg, log_ls=np.log(0.2), spread=0.5)
    L = estimate_lipschitz(s, seed=0, n_random=500, n_top=10)
    g = np.linspace(0, 1, 10_001)
    mu = s.decoder_mean(g[:, None])[:, 0]
    ref = np.max(np.abs(np.diff(mu) / np.diff(g)))
    assert L == pytest.approx(ref, rel=0.02)


def test_lipschitz_constant_decoder_gives_floor():
    cfg = ModelConfig(d=2)
    X = np.full((5, 3), 0.5)  # probit(0.5) = 0 so every decoder target is zero
    s = surrogate_with(X, np.arange(5.0), cfg)
    assert estimate_lipschitz(s, n_random=200, n_top=5) == L_FLOOR


@pytest.mark.parametrize("seed", range(4))
def test_lipschitz_sampled_pairs_random_surrogates(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(8, 5))
    s = surrogate_with(X, rng.standard_normal(8), ModelConfig(d=2), seed=seed, log_ls=np.log(0.3))
    L = estimate_lipschitz(s, seed=seed, n_random=2000, n_top=10)
    assert sampled_pairs_ok(s, L, seed=seed)


def test_lipschitz_sampled_pairs_fitted_surrogate():
    rng = np.random.default_rng(11)
    X = rng.uniform(size=(10, 6))
    y = np.sin(6 * X[:, 0]) + X[:, 1]
    s = fit(X, y, ModelConfig(d=2, restarts=1, max_iter=60), seed=0)
    L = estimate_lipschitz(s, seed=1, n_random=2000, n_top=10)
    assert sampled_pairs_ok(s, L)


# -- proposal -------------------------------------------------------------------


def test_ucb_single_point_goes_far_from_data():
    X = np.array([[0.3, 0.6, 0.2]])
    s = surrogate_with(X, np.array([0.4]), ModelConfig(d=2), seed=3, log_ls=np.log(0.5), spread=1.0)
    spec = AcquisitionSpec("UCB", y_min=0.4)
    p = propose(s, spec, constrained=False, seed=0, n_random=500, n_top=10)
    u = np.linspace(0, 1, 50)
    G = np.array(np.meshgrid(u, u, indexing="ij")).reshape(2, -1).T
    vals = acquisition_batch(s, spec, G)
    assert p.value >= vals.max() - 1e-9
    z0 = s.Z[0]
    assert np.linalg.norm(p.z - z0) == pytest.approx(np.max(np.linalg.norm(G - z0, axis=1)), abs=1e-6)


def fitted_example(seed=5):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(9, 5))
    y = np.sum((X - 0.4) ** 2, axis=1)
    return fit(X, y, ModelConfig(d=2, restarts=1, max_iter=60), seed=seed)


def test_propose_deterministic():
    s = fitted_example()
    spec = AcquisitionSpec("EI", y_min=float(s.y_raw.min()))
    a = propose(s, spec, constrained=True, seed=4, n_random=300, n_top=5, lipschitz_budget=(300, 5))
    b = propose(s, spec, constrained=True, seed=4, n_random=300, n_top=5, lipschitz_budget=(300, 5))
    np.testing.assert_array_equal(a.z, b.z)
    assert a.value == b.value


@pytest.mark.parametrize("kind", ["PI", "EI", "UCB"])
def test_constrained_proposal_is_feasible_and_inside_radius(kind):
    s = fitted_example()
    spec = AcquisitionSpec(kind, y_min=float(s.y_raw.min()))
    p = propose(s, spec, constrained=True, seed=2, n_random=400, n_top=8, lipschitz_budget=(500, 5))
    assert np.all((p.z >= 0) & (p.z <= 1))
    assert constraint_value(p.z, p.constraint) >= -1e-8
    dist = np.linalg.norm(s.Z - p.z, axis=1)
    i = int(np.argmin(dist))
    assert dist[i] <= p.constraint.radii[i] + 1e-8
    free = propose(s, spec, constrained=False, seed=2, n_random=400, n_top=8)
    assert free.value >= p.value - 1e-9


def test_constrained_with_small_L_equals_unconstrained():
    s = fitted_example()
    spec = AcquisitionSpec("EI", y_min=float(s.y_raw.min()))
    c = propose(s, spec, constrained=True, seed=0, n_random=400, n_top=8, L=L_FLOOR)
    u = propose(s, spec, constrained=False, seed=0, n_random=400, n_top=8)
    assert c.value == pytest.approx(u.value, rel=1e-6, abs=1e-10)

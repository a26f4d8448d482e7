import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpgate.gaussian import (
    GaussianError,
    GaussianState,
    SymplecticTransform,
    apply,
    controlled_z,
    displace_x,
    displace_z,
    fourier,
    homodyne_measure,
    homodyne_update,
    loss_channel,
    make_coherent,
    make_squeezed_vacuum,
    marginal_pdf,
    qnd_sum,
    rotation,
    shear,
    squeezer,
    symplectic_form,
    vacuum,
)

finite = st.floats(-5, 5, allow_nan=False)


def random_state(rng, n_modes=1, max_db=6.0):
    """Random physical state: squeezed, rotated, displaced and slightly lossy."""
    state = make_squeezed_vacuum(rng.uniform(-max_db, max_db))
    for _ in range(n_modes - 1):
        state = state.tensor(make_squeezed_vacuum(rng.uniform(-max_db, max_db)))
    for m in range(n_modes):
        state = apply(state, rotation(rng.uniform(0, math.pi)), [m])
        state = apply(state, SymplecticTransform(np.eye(2), rng.normal(0, 1, 2)), [m])
        state = loss_channel(state, m, rng.uniform(0.7, 1.0))
    return state


def test_vacuum_conventions():
    v = make_coherent(0.0, 0.0)
    assert np.array_equal(v.cov, np.diag([0.25, 0.25]))
    assert np.array_equal(v.normalized_cov, np.eye(2))
    assert v.purity() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("ax, ap", [(1.4, 0.0), (0.0, 1.3)])
def test_coherent_inputs(ax, ap):
    s = make_coherent(ax, ap)
    assert np.allclose(s.mean, [ax, ap])
    assert np.allclose(s.cov, 0.25 * np.eye(2))


def test_squeezed_vacuum_levels():
    assert np.allclose(make_squeezed_vacuum(0.0).cov, vacuum().cov)
    sx = make_squeezed_vacuum(-4.3, "x")
    assert sx.normalized_cov[0, 0] == pytest.approx(0.37154, abs=5e-6)
    assert sx.normalized_cov[1, 1] == pytest.approx(1 / 0.37154, rel=1e-4)
    sp = make_squeezed_vacuum(-5.2, "p")
    assert sp.normalized_cov[1, 1] == pytest.approx(0.30200, abs=5e-6)
    assert sp.purity() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(GaussianError):
        make_squeezed_vacuum(float("nan"))
    with pytest.raises(GaussianError):
        make_squeezed_vacuum(-3.0, "q")


def test_state_validation():
    with pytest.raises(GaussianError):
        GaussianState([0, 0], [[1, 0.5], [0.4, 1]])
    with pytest.raises(GaussianError):
        GaussianState([0, 0, 0], np.eye(3))
    assert not GaussianState([0, 0], 0.1 * np.eye(2)).is_physical()


def test_shear_examples():
    assert np.array_equal(shear(0.0).matrix, np.eye(2))
    out = apply(make_coherent(1.4, 0.0), shear(2.0))
    assert np.allclose(out.mean, [1.4, 2.8])
    vac = apply(vacuum(), shear(2.0))
    assert np.allclose(vac.normalized_cov, [[1, 2], [2, 5]])
    # eigen-decomposition oracle: S S^T = [[1,2],[2,5]] has eigenvalues 3 -+ 2 sqrt(2)
    assert np.linalg.eigvalsh(vac.normalized_cov)[0] == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-12)
    assert 3 - 2 * math.sqrt(2) == pytest.approx(0.17157, abs=5e-6)


def test_fourier():
    F = fourier()
    assert np.allclose((F @ F @ F @ F).matrix, np.eye(2))
    assert np.allclose(apply(make_coherent(1.4, 0), F).mean, [0.0, 1.4])
    for kappa in (-1.5, 0.3, 2.0):
        conj = F @ shear(kappa) @ F.inverse()
        assert np.allclose(conj.matrix, [[1, -kappa], [0, 1]])


def test_displacements():
    assert np.allclose(apply(vacuum(), displace_z(0.0)).mean, 0.0)
    assert np.allclose(apply(vacuum(), displace_z(1.3)).mean, [0.0, 1.3])
    assert np.allclose(apply(vacuum(), displace_x(1.3)).mean, [1.3, 0.0])


def test_controlled_z():
    cz = controlled_z()
    assert cz.is_symplectic()
    out = apply(vacuum(2), cz)
    v = out.normalized_cov
    # congruence oracle: cov = S S^T for two vacua
    S = np.array([[1, 0, 0, 0], [0, 1, 1, 0], [0, 0, 1, 0], [1, 0, 0, 1]], float)
    assert np.allclose(v, S @ S.T)
    assert v[0, 3] == pytest.approx(1.0) and v[1, 2] == pytest.approx(1.0)
    # commutes with x displacements on either mode
    for m in (0, 1):
        shifted = SymplecticTransform(np.eye(4), np.eye(4)[2 * m] * 0.7)
        assert np.allclose((cz @ shifted).matrix, (shifted @ cz).matrix)
        s1 = apply(apply(vacuum(2), shifted), cz)
        s2 = apply(apply(vacuum(2), cz), shifted)
        assert np.allclose(s1.mean[[0, 2]], s2.mean[[0, 2]])


def test_qnd_sum_is_fourier_conjugated_cz():
    qnd = qnd_sum()
    assert qnd.is_symplectic()
    F2 = SymplecticTransform.linear(np.kron(np.diag([1.0, 0.0]), np.eye(2)) + np.kron(np.diag([0.0, 1.0]), fourier().matrix))
    assert np.allclose((F2.inverse() @ controlled_z() @ F2).matrix, qnd.matrix)


def test_qnd_sum_copies_x_in_squeezing_limit():
    state = make_coherent(1.4, 0.3).tensor(make_squeezed_vacuum(-60.0, "x"))
    out = apply(state, qnd_sum())
    assert out.mean[2] == pytest.approx(1.4, abs=1e-12)
    # x_A variance -> x_in variance
    assert out.cov[2, 2] == pytest.approx(out.cov[0, 0], abs=1e-5)
    assert out.cov[0, 2] == pytest.approx(out.cov[0, 0], abs=1e-12)


def test_apply_embedding_and_errors():
    rng = np.random.default_rng(3)
    s = random_state(rng, 2)
    same = apply(s, SymplecticTransform.identity(2))
    assert np.allclose(same.mean, s.mean) and np.allclose(same.cov, s.cov)
    twice = apply(apply(s, shear(1.0), [0]), shear(1.0), [0])
    once = apply(s, shear(2.0), [0])
    assert np.allclose(twice.mean, once.mean) and np.allclose(twice.cov, once.cov)
    prod = make_coherent(0.5, -0.2).tensor(make_squeezed_vacuum(-3.0))
    moved = apply(prod, shear(1.7), [1])
    assert np.allclose(moved.reduced([0]).cov, prod.reduced([0]).cov)
    assert np.allclose(moved.reduced([0]).mean, prod.reduced([0]).mean)
    with pytest.raises(GaussianError):
        apply(s, shear(1.0), [0, 1])
    with pytest.raises(GaussianError):
        apply(s, qnd_sum(), [0, 0])
    with pytest.raises(GaussianError):
        apply(s, shear(1.0), [2])


def test_loss_channel():
    s = make_squeezed_vacuum(-4.9, "x")
    assert np.allclose(loss_channel(s, 0, 1.0).cov, s.cov)
    assert np.allclose(loss_channel(s, 0, 0.0).cov, vacuum().cov)
    lossy = loss_channel(s, 0, 0.93)
    assert lossy.normalized_cov[0, 0] == pytest.approx(0.93 * 10**-0.49 + 0.07, abs=1e-12)
    assert lossy.normalized_cov[0, 0] == pytest.approx(0.37094, abs=5e-6)
    with pytest.raises(GaussianError):
        loss_channel(s, 0, 1.2)


def test_homodyne_product_state_leaves_other_mode():
    prod = make_coherent(0.4, 0.1).tensor(make_squeezed_vacuum(-3.0, "p"))
    rng = np.random.default_rng(0)
    o, post = homodyne_measure(prod, 0, 0.7, rng=rng)
    assert np.allclose(post.mean, prod.reduced([1]).mean)
    assert np.allclose(post.cov, prod.reduced([1]).cov)


def test_homodyne_vacuum_variance_phase_invariant():
    theta = math.atan(2.0)
    assert math.degrees(theta) == pytest.approx(63.4, abs=0.05)
    upd = homodyne_update(vacuum(2), 0, theta)
    assert upd.outcome_var == pytest.approx(0.25, abs=1e-15)


def test_homodyne_conditioning_matches_rejection_sampling():
    state = apply(make_coherent(1.4, 0.0).tensor(vacuum()), qnd_sum())
    rng = np.random.default_rng(11)
    shots = rng.multivariate_normal(state.mean, state.cov, size=1_000_000)
    theta = 0.0  # p of the input mode
    measured = shots[:, 0] * math.sin(theta) + shots[:, 1] * math.cos(theta)
    for target in (-0.3, 0.0, 0.4):
        _, post = homodyne_measure(state, 0, theta, outcome=target)
        sel = shots[np.abs(measured - target) < 0.01][:, 2:]
        se = np.sqrt(np.diag(post.cov) / len(sel))
        assert np.all(np.abs(sel.mean(axis=0) - post.mean) < 4 * se)
        # p_in' = p_in - p_A carries no information on x_A
        assert post.mean[0] == pytest.approx(1.4, abs=1e-12)
        emp = np.cov(sel.T)
        se_cov = np.sqrt((np.outer(np.diag(post.cov), np.diag(post.cov)) + post.cov**2) / len(sel))
        assert np.all(np.abs(emp - post.cov) < 4 * se_cov)


def test_homodyne_conditioning_correlated_case():
    rng = np.random.default_rng(5)
    state = apply(random_state(rng, 2), qnd_sum())
    shots = rng.multivariate_normal(state.mean, state.cov, size=1_000_000)
    theta = 0.9
    measured = shots[:, 0] * math.sin(theta) + shots[:, 1] * math.cos(theta)
    target = float(np.median(measured))
    _, post = homodyne_measure(state, 0, theta, outcome=target)
    sel = shots[np.abs(measured - target) < 0.005][:, 2:]
    se = np.sqrt(np.diag(post.cov) / len(sel))
    assert np.all(np.abs(sel.mean(axis=0) - post.mean) < 4 * se)
    _, post2 = homodyne_measure(state, 0, theta, outcome=target + 1.0)
    assert np.array_equal(post.cov, post2.cov)


def test_homodyne_errors():
    with pytest.raises(GaussianError):
        homodyne_measure(vacuum(2), 3, 0.0, outcome=0.0)
    with pytest.raises(GaussianError):
        homodyne_measure(vacuum(2), 0, 0.0)
    o, post = homodyne_measure(vacuum(1), 0, 0.0, outcome=0.2)
    assert post is None and o == 0.2


def test_marginal_pdf():
    xs = np.linspace(-4, 4, 4001)
    for theta in (0.0, 0.5, 2.0):
        pdf = marginal_pdf(vacuum(), 0, theta, xs)
        assert np.allclose(pdf, np.exp(-2 * xs**2) / math.sqrt(2 * math.pi * 0.25))
    sheared = apply(vacuum(), shear(2.0))
    wide = np.linspace(-12, 12, 20001)
    var = np.trapezoid(wide**2 * marginal_pdf(sheared, 0, 0.0, wide), wide)
    assert var == pytest.approx(1.25, rel=1e-9)
    assert np.trapezoid(marginal_pdf(sheared, 0, 1.1, wide), wide) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(a=finite, b=finite)
def test_symplectic_closure(a, b):
    t = shear(a) @ rotation(b) @ squeezer(0.3 * a) @ fourier() @ displace_z(b)
    assert t.is_symplectic(1e-10 * max(1.0, np.abs(t.matrix).max() ** 2))
    assert np.linalg.det(t.matrix) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(s=finite, kappa=finite, mx=finite, mp=finite)
def test_weyl_heisenberg_mapping_on_means(s, kappa, mx, mp):
    state = make_coherent(mx, mp)
    # U^dag X(s) U = X(s) Z(-kappa s): U first, then X(s), then U^dag
    conj = shear(kappa).inverse() @ displace_x(s) @ shear(kappa)
    expected = displace_x(s) @ displace_z(-kappa * s)
    assert np.allclose(conj.matrix, expected.matrix)
    assert np.allclose(conj.displacement, expected.displacement, atol=1e-12 * (1 + abs(kappa * s)))
    lhs = apply(state, conj)
    assert np.allclose(lhs.mean, state.mean + [s, -kappa * s], atol=1e-9 * (1 + abs(kappa * s)))
    zc = shear(kappa).inverse() @ displace_z(s) @ shear(kappa)
    assert np.allclose(zc.displacement, displace_z(s).displacement)
    assert np.allclose(zc.matrix, np.eye(2))


@settings(max_examples=40, deadline=None)
@given(kappa=finite, seed=st.integers(0, 2**32 - 1))
def test_heisenberg_generators(kappa, seed):
    state = random_state(np.random.default_rng(seed))
    out = apply(state, shear(kappa))
    assert out.mean[0] == pytest.approx(state.mean[0], abs=1e-12)
    assert out.cov[0, 0] == pytest.approx(state.cov[0, 0], abs=1e-12)
    assert out.mean[1] == pytest.approx(state.mean[1] + kappa * state.mean[0], abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_operations_preserve_physicality(seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, 2)
    assert s.is_physical()
    for t, modes in [(qnd_sum(), [0, 1]), (controlled_z(), [1, 0]), (shear(rng.normal(0, 2)), [1]), (fourier(), [0])]:
        s = apply(s, t, modes)
        assert s.is_physical()
    s = loss_channel(s, 0, rng.uniform())
    assert s.is_physical()
    _, post = homodyne_measure(s, 1, rng.uniform(0, 2 * math.pi), rng=rng)
    assert post.is_physical()
    assert 0 < post.purity() <= 1 + 1e-9


def test_symplectic_form_and_eigenvalues():
    omega = symplectic_form(2)
    assert np.allclose(omega @ omega, -np.eye(4))
    assert np.allclose(vacuum(2).symplectic_eigenvalues(), [0.25, 0.25])
    thermal = GaussianState([0, 0], 0.75 * np.eye(2))
    assert np.allclose(thermal.symplectic_eigenvalues(), [0.75])

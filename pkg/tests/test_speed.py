import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curvflow.errors import ConeDomainError, ConeUnderflowError
from curvflow.speed import (
    SpeedSpec,
    coincidence_threshold,
    divided_differences,
    eval_speed,
    grad_eigen,
    hess_eigen,
    matrix_first_derivative,
    matrix_second_form,
    second_form_eigenbasis,
    speed_and_grad,
    subset_incidence,
)

from oracles import (
    fd_directional_second,
    fd_gradient,
    fd_hessian,
    random_cone_point,
    random_rotation,
    random_symmetric,
    speed_bruteforce,
)

# ----- hand-computed values ------------------------------------------------


def test_unit_tuple_harmonic():
    # four 3-subsets, each summing to 3: 1 / (4/3)
    assert eval_speed(SpeedSpec(4, 3, 1.0), [1, 1, 1, 1]) == pytest.approx(0.75, abs=1e-15)


def test_unit_tuple_interpolated():
    # 1 / (0.5 * 4/3 + 0.5 / 4) = 24/19
    assert eval_speed(SpeedSpec(4, 3, 0.5), [1, 1, 1, 1]) == pytest.approx(24 / 19, rel=1e-15)


def test_near_boundary_value():
    # 3-subset sums 0.9, 0.9, 0.9, 1.5; trace 1.4
    z = [-0.1, 0.5, 0.5, 0.5]
    expected = 1.0 / (0.5 * (3 / 0.9 + 1 / 1.5) + 0.5 / 1.4)
    assert eval_speed(SpeedSpec(4, 3, 0.5), z) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.424242, abs=1e-6)


def test_k_equals_n_is_trace():
    spec = SpeedSpec(5, 5, 0.3)
    z = np.array([0.2, 0.5, 1.0, 2.0, 3.0])
    assert eval_speed(spec, z) == pytest.approx(z.sum(), rel=1e-15)
    np.testing.assert_array_equal(grad_eigen(spec, z), np.ones(5))
    np.testing.assert_array_equal(hess_eigen(spec, z), np.zeros((5, 5)))


def test_unit_tuple_gradient_by_symmetry():
    # Euler relation with equal entries: every component is gamma / n
    g = grad_eigen(SpeedSpec(4, 3, 1.0), np.ones(4))
    np.testing.assert_allclose(g, 0.1875, rtol=1e-15)


def test_subset_incidence_shape():
    m = subset_incidence(5, 3)
    assert m.shape == (10, 5)
    assert np.all(m.sum(axis=1) == 3)
    assert np.all(m.sum(axis=0) == 6)


def test_shift_is_applied():
    spec = SpeedSpec(4, 3, 0.5, kappa=0.25)
    z = np.array([0.5, 1.0, 1.5, 2.0])
    assert eval_speed(spec, z) == pytest.approx(speed_bruteforce(z - 0.25, 3, 0.5), rel=1e-14)


# ----- domain handling --------------------------------------------------------


@pytest.mark.parametrize("bad", [dict(n=1, k=1, rho=1), dict(n=4, k=5, rho=1), dict(n=4, k=0, rho=1),
                                 dict(n=4, k=3, rho=0.0), dict(n=4, k=3, rho=1.5), dict(n=4, k=3, rho=0.5, kappa=-1)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        SpeedSpec(**bad)


def test_outside_cone_raises_with_index():
    spec = SpeedSpec(4, 3, 1.0)
    z = np.array([[1, 1, 1, 1], [-1, 0.2, 0.3, 5.0]])
    with pytest.raises(ConeDomainError) as info:
        eval_speed(spec, z)
    assert info.value.index == 1


def test_cone_boundary_raises():
    with pytest.raises(ConeDomainError):
        eval_speed(SpeedSpec(4, 3, 1.0), [0.0, 0.0, 0.0, 1.0])


def test_underflow_raises():
    with pytest.raises(ConeUnderflowError):
        eval_speed(SpeedSpec(4, 3, 1.0), [1e-320, 1e-320, 1e-320, 1.0])


def test_wrong_length_raises():
    with pytest.raises(ValueError):
        eval_speed(SpeedSpec(4, 3, 1.0), [1, 2, 3])


def test_nonsymmetric_matrix_raises():
    Z = np.diag([1.0, 2, 3, 4])
    Z[0, 1] = 0.5
    with pytest.raises(ValueError):
        matrix_first_derivative(SpeedSpec(4, 3, 1.0), Z)


# ----- oracle agreement -------------------------------------------------------

CASES = [(n, k, rho) for n in (4, 5, 6) for k in range(3, n) for rho in (1.0, 0.5, 0.05)]


@pytest.mark.parametrize("n,k,rho", CASES)
def test_value_matches_bruteforce(n, k, rho):
    rng = np.random.default_rng(n * 100 + k * 10 + int(rho * 100))
    spec = SpeedSpec(n, k, rho)
    z = np.array([random_cone_point(rng, n, k) for _ in range(20)])
    ref = [speed_bruteforce(row, k, rho) for row in z]
    np.testing.assert_allclose(eval_speed(spec, z), ref, rtol=1e-13)


@pytest.mark.parametrize("n,k,rho", CASES)
def test_gradient_and_hessian_match_finite_differences(n, k, rho):
    rng = np.random.default_rng(7 + n + k)
    spec = SpeedSpec(n, k, rho)
    for _ in range(5):
        z = random_cone_point(rng, n, k)
        f = lambda v: speed_bruteforce(np.sort(v), k, rho)  # noqa: E731
        g = grad_eigen(spec, z)
        np.testing.assert_allclose(g, fd_gradient(f, z, 1e-6), rtol=1e-6, atol=1e-9)
        H = hess_eigen(spec, z)
        fd = fd_hessian(f, z, 1e-4)
        assert np.max(np.abs(H - fd)) <= 1e-4 * np.max(np.abs(H))


def test_speed_and_grad_consistent():
    spec = SpeedSpec(5, 3, 0.3)
    z = np.array([0.1, 0.5, 0.7, 1.0, 2.0])
    g, d = speed_and_grad(spec, z)
    assert g == eval_speed(spec, z)
    np.testing.assert_array_equal(d, grad_eigen(spec, z))


def test_matrix_second_form_directional_fd():
    rng = np.random.default_rng(3)
    for n, k, rho in [(4, 3, 1.0), (5, 4, 0.5), (6, 3, 0.05)]:
        spec = SpeedSpec(n, k, rho)
        for _ in range(10):
            z = random_cone_point(rng, n, k)
            O = random_rotation(rng, n)
            Z = O @ np.diag(z) @ O.T
            Z = 0.5 * (Z + Z.T)
            B = random_symmetric(rng, n)
            f = lambda M: speed_bruteforce(np.linalg.eigvalsh(M), k, rho)  # noqa: E731
            fd = fd_directional_second(f, Z, B, 1e-3)
            val = matrix_second_form(spec, Z, B)
            assert val == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_second_form_at_repeated_eigenvalues():
    # the round point is a coincident-eigenvalue configuration; the limit branch must agree with finite differences
    spec = SpeedSpec(4, 3, 0.5)
    rng = np.random.default_rng(11)
    Z = np.eye(4)
    for _ in range(5):
        B = random_symmetric(rng, 4)
        f = lambda M: speed_bruteforce(np.linalg.eigvalsh(M), 3, 0.5)  # noqa: E731
        assert matrix_second_form(spec, Z, B) == pytest.approx(fd_directional_second(f, Z, B, 1e-3), rel=1e-4, abs=1e-7)


def test_divided_differences_continuous_across_threshold():
    spec = SpeedSpec(4, 3, 0.5)
    base = np.array([0.5, 1.0, 1.0, 2.0])
    tau = float(coincidence_threshold(np.diag(base)))
    near = base + np.array([0, 0, 10 * tau, 0])
    D_close = divided_differences(spec, base, tau)[1, 2]
    D_near = divided_differences(spec, near, tau)[1, 2]
    assert D_near == pytest.approx(D_close, rel=1e-5)


def test_second_form_radial_direction_vanishes():
    spec = SpeedSpec(4, 3, 0.2)
    z = np.array([-0.2, 0.7, 1.0, 1.5])
    assert second_form_eigenbasis(spec, z, np.diag(z)) == pytest.approx(0.0, abs=1e-12)


# ----- structural identities (properties) ------------------------------------


spec_strategy = st.sampled_from(CASES).map(lambda c: SpeedSpec(*c))


@st.composite
def spec_and_point(draw):
    spec = draw(spec_strategy)
    seed = draw(st.integers(0, 2**32 - 1))
    z = random_cone_point(np.random.default_rng(seed), spec.n, spec.k, min_margin=0.05)
    return spec, z


@given(spec_and_point(), st.floats(0.01, 100.0))
def test_homogeneity(sp, t):
    spec, z = sp
    assert eval_speed(spec, t * z) == pytest.approx(t * eval_speed(spec, z), rel=1e-12)
    np.testing.assert_allclose(grad_eigen(spec, t * z), grad_eigen(spec, z), rtol=1e-11)
    np.testing.assert_allclose(hess_eigen(spec, t * z), hess_eigen(spec, z) / t, rtol=1e-9, atol=1e-12 / t)


@given(spec_and_point(), st.randoms(use_true_random=False))
def test_permutation_symmetry(sp, rnd):
    spec, z = sp
    perm = list(range(spec.n))
    rnd.shuffle(perm)
    assert eval_speed(spec, z[perm]) == pytest.approx(eval_speed(spec, z), rel=1e-14)


@given(spec_and_point())
def test_euler_relation_and_radial_kernel(sp):
    spec, z = sp
    g = eval_speed(spec, z)
    assert grad_eigen(spec, z) @ z == pytest.approx(g, rel=1e-12)
    H = hess_eigen(spec, z)
    assert np.max(np.abs(H @ z)) <= 1e-11 * np.max(np.abs(H)) * np.abs(z).max()


@given(spec_and_point())
def test_concavity_and_positivity(sp):
    spec, z = sp
    assert np.all(grad_eigen(spec, z) > 0)
    assert np.linalg.eigvalsh(hess_eigen(spec, z)).max() <= 1e-10 * np.abs(hess_eigen(spec, z)).max()


@given(spec_and_point(), st.integers(0, 2**32 - 1))
def test_orthogonal_invariance(sp, seed):
    spec, z = sp
    rng = np.random.default_rng(seed)
    O = random_rotation(rng, spec.n)
    Z = O @ np.diag(z) @ O.T
    Z = 0.5 * (Z + Z.T)
    P = random_rotation(rng, spec.n)
    lhs = matrix_first_derivative(spec, P @ Z @ P.T)
    rhs = P @ matrix_first_derivative(spec, Z) @ P.T
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_batched_matches_loop():
    spec = SpeedSpec(5, 3, 0.4)
    rng = np.random.default_rng(5)
    z = np.array([random_cone_point(rng, 5, 3) for _ in range(8)]).reshape(2, 4, 5)
    out = hess_eigen(spec, z)
    for i, j in itertools.product(range(2), range(4)):
        np.testing.assert_allclose(out[i, j], hess_eigen(spec, z[i, j]), rtol=1e-12, atol=1e-16)

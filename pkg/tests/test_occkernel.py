import math

import numpy as np
import pytest
from conftest import constant_trajectory, random_basis, random_trajectory
from hypothesis import given, settings
from hypothesis import strategies as st

from occid import (
    KernelConfig,
    OccupationBasis,
    GramMatrix,
    Trajectory,
    gram_entry,
    gram_matrix,
    kernel_eval,
    occ_eval,
    occ_eval_batch,
    target_matrix,
    target_vector,
)

GAUSS = KernelConfig("gaussian", 1.5)


def test_constant_trajectories_reduce_to_kernel():
    a, b = [0.3, -0.4], [1.0, 0.2]
    basis = OccupationBasis((constant_trajectory(a), constant_trajectory(b)), 1, GAUSS)
    assert gram_entry(basis, 0, 1) == pytest.approx(kernel_eval(GAUSS, a, b), rel=1e-14)


def test_constant_controls_factor():
    a, b, c, d = [0.3], [-0.5], 0.7, -1.9
    basis = OccupationBasis((constant_trajectory(a, u=c), constant_trajectory(b, u=d)), 1, GAUSS)
    assert gram_entry(basis, 0, 1) == pytest.approx((1 + c * d) * kernel_eval(GAUSS, a, b), rel=1e-14)


def test_gram_entry_symmetric(rng):
    basis = random_basis(rng, M=4, s=2, m=2)
    for i in range(4):
        for j in range(4):
            gij, gji = gram_entry(basis, i, j), gram_entry(basis, j, i)
            assert abs(gij - gji) <= 1e-12 * abs(gij)


def test_gram_entry_index_errors(rng):
    basis = random_basis(rng, M=2)
    with pytest.raises(IndexError):
        gram_entry(basis, 0, 2)


def test_basis_validation(rng):
    t1 = random_trajectory(rng, n=2, m=1)
    t2 = random_trajectory(rng, n=3, m=1)
    with pytest.raises(ValueError):
        OccupationBasis((t1, t2), 1, GAUSS)
    with pytest.raises(ValueError):
        OccupationBasis((t1,), 2, GAUSS)   # missing derivative row
    with pytest.raises(ValueError):
        OccupationBasis((), 1, GAUSS)


def test_gram_single_constant():
    basis = OccupationBasis((constant_trajectory([0.5, 0.5]),), 1, GAUSS)
    np.testing.assert_allclose(gram_matrix(basis).entries, [[1.0]], rtol=1e-14)


@pytest.mark.parametrize("s,rule", [(1, "trapezoid"), (2, "trapezoid"), (3, "simpson")])
def test_gram_matrix_matches_entry_loop(rng, s, rule):
    basis = random_basis(rng, M=3, s=s, rule=rule)
    G = gram_matrix(basis).entries
    ref = np.array([[gram_entry(basis, i, j) for j in range(3)] for i in range(3)])
    np.testing.assert_allclose(G, ref, rtol=1e-12)
    ev = np.linalg.eigvalsh(G)
    assert ev.min() >= -1e-8 * ev.max()


def test_blocking_and_threads_do_not_change_result(rng):
    basis = random_basis(rng, M=9, s=2, m=1, N=15)
    ref = gram_matrix(basis).entries
    for block, threads in ((15, 1), (40, 3), (10**6, 2)):
        G = gram_matrix(basis, threads=threads, block_samples=block).entries
        np.testing.assert_allclose(G, ref, rtol=1e-13, atol=0)
        assert np.array_equal(G, G.T)


def test_gram_regularized(rng):
    basis = random_basis(rng, M=3)
    G = GramMatrix(gram_matrix(basis).entries, 0.5)
    np.testing.assert_allclose(G.regularized() - G.entries, 0.5 * np.eye(3))


def test_target_first_order(rng):
    tr = random_trajectory(rng, s=1)
    np.testing.assert_array_equal(target_vector(tr, 1), tr.states[-1] - tr.states[0])


def test_target_quadratic():
    t = np.linspace(0, 1, 11)
    tr = Trajectory(t, t**2 / 2, None, [[0.0]])
    assert target_vector(tr, 2)[0] == pytest.approx(0.5, abs=1e-15)


def test_target_sine():
    t = np.linspace(0, 1, 11)
    tr = Trajectory(t, np.sin(t), None, [[1.0]])
    assert target_vector(tr, 2)[0] == pytest.approx(math.sin(1) - 1, abs=1e-15)
    assert target_vector(tr, 2)[0] == pytest.approx(-0.1585290152, abs=1e-10)


def test_target_third_order_polynomial():
    # gamma = 1 + 2t + 3t^2 + 4t^3: target is the cubic term 4 T^3
    t = np.linspace(0, 0.5, 11)
    tr = Trajectory(t, 1 + 2 * t + 3 * t**2 + 4 * t**3, None, [[2.0], [6.0]])
    assert target_vector(tr, 3)[0] == pytest.approx(4 * 0.5**3, rel=1e-13)


def test_target_missing_derivatives(rng):
    with pytest.raises(ValueError):
        target_vector(random_trajectory(rng, s=1), 2)


def test_target_matrix_shape(rng):
    basis = random_basis(rng, M=4, s=2, n=3)
    assert target_matrix(basis).shape == (4, 3)


def test_occ_eval_constant_first_order():
    x0, x = np.array([0.2, 0.1]), np.array([-0.3, 0.4])
    tr = constant_trajectory(x0, u=[0.0, 0.0])
    v = occ_eval(OccupationBasis((tr,), 1, GAUSS), 0, x)
    np.testing.assert_allclose(v, [kernel_eval(GAUSS, x0, x), 0.0, 0.0], rtol=1e-14, atol=0)


def test_occ_eval_constant_second_order():
    T, x0, x = 0.8, np.array([0.2]), np.array([1.1])
    tr = constant_trajectory(x0, T=T, u=0.0, s=2)
    v = occ_eval(OccupationBasis((tr,), 2, GAUSS), 0, x)
    np.testing.assert_allclose(v, [T**2 / 2 * kernel_eval(GAUSS, x0, x), 0.0], rtol=1e-14, atol=0)


def test_occ_eval_dimension_error(rng):
    basis = random_basis(rng, M=2, n=2)
    with pytest.raises(ValueError):
        occ_eval(basis, 0, [1.0, 2.0, 3.0])


@pytest.mark.parametrize("s", [1, 2, 3])
def test_reproducing_self_consistency(rng, s):
    basis = random_basis(rng, M=3, s=s, m=2)
    for i in range(3):
        tr = basis.trajectories[i]
        A = basis.weights[i][:, None] * np.column_stack([np.ones(tr.N), tr.controls])
        for j in range(3):
            V = occ_eval_batch(basis, j, tr.states)
            value = np.sum(A * V)
            ref = gram_entry(basis, i, j)
            assert abs(value - ref) <= 1e-12 * abs(ref)


def test_diagonal_operator_kernel_identity(rng):
    # the (m+1)-vector inner product is the scalar kernel times (1 + u.u')
    tr_i = random_trajectory(rng, N=5, m=2)
    tr_j = random_trajectory(rng, N=5, m=2)
    basis = OccupationBasis((tr_i, tr_j), 1, GAUSS)
    wi, wj = basis.weights
    total = 0.0
    for a in range(5):
        for b in range(5):
            va = np.concatenate([[1.0], tr_i.controls[a]])
            vb = np.concatenate([[1.0], tr_j.controls[b]])
            Kv = kernel_eval(GAUSS, tr_i.states[a], tr_j.states[b]) * np.eye(3) @ vb
            total += wi[a] * wj[b] * va @ Kv
    assert gram_entry(basis, 0, 1) == pytest.approx(total, rel=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 2), st.floats(0.1, 5.0))
def test_gram_symmetric_psd_property(seed, s, m, mu):
    rng = np.random.default_rng(seed)
    basis = random_basis(rng, M=5, s=s, m=m, shape=mu, N=9)
    G = gram_matrix(basis).entries
    assert np.array_equal(G, G.T)
    ev = np.linalg.eigvalsh(G)
    assert ev.min() >= -1e-8 * max(ev.max(), 0.0)

import numpy as np
import pytest
import scipy.sparse as sp

from mollow.errors import LayoutError, ModelError, ParameterError
from mollow.operators import (SpaceLayout, annihilation_op, build_liouvillian,
                              lift, trace_indices, unvec, vec)


def test_annihilation_matrix_elements():
    a = annihilation_op(4)
    expect = np.zeros((4, 4), dtype=complex)
    for m in range(1, 4):
        expect[m - 1, m] = np.sqrt(m)
    assert np.array_equal(a, expect)
    with pytest.raises(ParameterError):
        annihilation_op(1)
    with pytest.raises(ParameterError):
        annihilation_op(2.5)


def test_layout_validation_and_indices():
    with pytest.raises(LayoutError):
        SpaceLayout((3, 2))  # slot 0 must be the emitter
    lay = SpaceLayout((2, 3, 2))
    assert lay.total_dim == 12
    # slot indices must cycle with the kron ordering used by lift
    idx1 = lay.local_indices(1)
    assert idx1[0] == 0 and idx1[2] == 1 and idx1[4] == 2 and idx1[6] == 0
    idx2 = lay.local_indices(2)
    assert np.array_equal(idx2[:4], [0, 1, 0, 1])


def test_lift_matches_explicit_kron():
    lay = SpaceLayout((2, 3))
    a = annihilation_op(3)
    lifted = lift(a, 1, lay, sparse=False)
    explicit = np.kron(np.eye(2), a)
    assert np.allclose(lifted, explicit)
    s = lift(a, 1, lay, sparse=True)
    assert sp.issparse(s)
    assert np.allclose(s.toarray(), explicit)
    with pytest.raises(LayoutError):
        lift(a, 0, lay)  # wrong local dimension
    with pytest.raises(LayoutError):
        lift(a, 5, lay)


def test_vec_unvec_and_kron_identity():
    rng = np.random.default_rng(3)
    D = 5
    rho = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    A = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    B = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    assert np.allclose(unvec(vec(rho), D), rho)
    # the column-stacking workhorse identity
    assert np.allclose(np.kron(B.T, A) @ vec(rho), vec(A @ rho @ B))
    assert np.isclose(vec(rho)[trace_indices(D)].sum(), np.trace(rho))


def _toy_model():
    lay = SpaceLayout((2, 3))
    s = lift(annihilation_op(2), 0, lay, sparse=False)
    x = lift(annihilation_op(3), 1, lay, sparse=False)
    H = 1.3 * (s.conj().T @ s) + 0.7 * (s + s.conj().T) \
        + 0.4 * (x.conj().T @ x) + 0.1 * (s.conj().T @ x + x.conj().T @ s)
    return lay, H, [(1.0, s), (0.5, x)]


def test_liouvillian_dense_sparse_identical():
    lay, H, diss = _toy_model()
    Ld = build_liouvillian(H, diss, lay, sparse=False)
    Ls = build_liouvillian(H, diss, lay, sparse=True)
    assert sp.issparse(Ls.generator) and not sp.issparse(Ld.generator)
    assert np.allclose(Ld.generator, Ls.toarray(), atol=1e-14)


def test_liouvillian_action_matches_master_equation():
    lay, H, diss = _toy_model()
    L = build_liouvillian(H, diss, lay, sparse=False)
    rng = np.random.default_rng(11)
    rho = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    rho = rho + rho.conj().T
    rhs = 1j * (rho @ H - H @ rho)
    for rate, c in diss:
        cd = c.conj().T
        rhs += (rate / 2) * (2 * c @ rho @ cd - cd @ c @ rho - rho @ cd @ c)
    assert np.allclose(unvec(L.generator @ vec(rho), 6), rhs, atol=1e-12)


def test_liouvillian_trace_preserving():
    lay, H, diss = _toy_model()
    L = build_liouvillian(H, diss, lay, sparse=False)
    # vec(I)^T is a left null vector of any trace-preserving generator
    left = np.zeros(36)
    left[trace_indices(6)] = 1.0
    assert np.max(np.abs(left @ L.generator)) < 1e-12


def test_liouvillian_input_validation():
    lay, H, diss = _toy_model()
    with pytest.raises(ModelError):
        build_liouvillian(H + 1j * np.eye(6), diss, lay)
    with pytest.raises(ModelError):
        build_liouvillian(H, [(-1.0, diss[0][1])], lay)

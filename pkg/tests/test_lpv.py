import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lpvp.cr3bp import affine_model
from lpvp.lpv import (AffineMatrixFunction, LpvPlant, ParameterBox, ShapeError, closed_loop,
                      eval_affine, vertices)

from conftest import lpv_toy_plant, scalar_plant

finite = st.floats(-10, 10, allow_nan=False)


def test_eval_constant_only():
    f = AffineMatrixFunction(np.eye(2))
    np.testing.assert_array_equal(eval_affine(f, [3.0, -1.0]), np.eye(2))


def test_eval_pure_linear_term():
    f = AffineMatrixFunction([[0.0]], {0: [[1.0]]})
    np.testing.assert_array_equal(eval_affine(f, [5.0]), [[5.0]])


def test_cr3bp_entry_hand_value():
    A, _, _, _ = affine_model(0.5)
    rho = np.array([1.0, 1.0, 0, 0, 0, 0])
    assert eval_affine(A, rho)[2, 0] == 0.0


def test_eval_at_zero_is_constant():
    f = AffineMatrixFunction([[1.0, 2.0]], {0: [[3.0, 4.0]], 2: [[5.0, 6.0]]})
    np.testing.assert_array_equal(f(np.zeros(3)), f.constant)


def test_eval_short_rho_rejected():
    f = AffineMatrixFunction([[0.0]], {2: [[1.0]]})
    with pytest.raises(ShapeError):
        eval_affine(f, [1.0, 2.0])


@pytest.mark.parametrize("basis", [{0: [[1.0, 2.0]]}, [(0, [[1.0]]), (0, [[2.0]])], {-1: [[1.0]]}])
def test_bad_basis(basis):
    with pytest.raises(ShapeError):
        AffineMatrixFunction([[0.0]], basis)


def test_index_outside_declared_dimension():
    with pytest.raises(ShapeError):
        AffineMatrixFunction([[0.0]], {3: [[1.0]]}, n_params=2)


@settings(max_examples=200, deadline=None)
@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite),
       st.floats(0, 1), arrays(float, (4, 2, 2), elements=finite))
def test_affinity(r1, r2, t, mats):
    f = AffineMatrixFunction(mats[0], {0: mats[1], 1: mats[2], 2: mats[3]})
    lhs = f(t * r1 + (1 - t) * r2)
    rhs = t * f(r1) + (1 - t) * f(r2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()) * 100)


def test_vertex_hull_entrywise():
    f = AffineMatrixFunction([[1.0, -1.0]], {0: [[2.0, 0.5]], 1: [[-1.0, 3.0]]})
    box = ParameterBox([-1.0, 0.0], [2.0, 0.5])
    V = np.array([f(v) for v in vertices(box)])
    lo, hi = V.min(axis=0), V.max(axis=0)
    for rho in box.sample(200, 0):
        M = f(rho)
        assert np.all(M >= lo - 1e-12) and np.all(M <= hi + 1e-12)


def test_vertices_interval():
    out = vertices(ParameterBox([0.0], [1.0]))
    assert [v.tolist() for v in out] == [[0.0], [1.0]]


def test_vertices_square_order():
    out = vertices(ParameterBox([0.0, 0.0], [1.0, 2.0]))
    assert [v.tolist() for v in out] == [[0, 0], [1, 0], [0, 2], [1, 2]]


def test_vertices_degenerate():
    box = ParameterBox([1.0, 1.0], [1.0, 3.0])
    assert [v.tolist() for v in vertices(box)] == [[1, 1], [1, 3]]
    assert box.n_vertices == 2


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        ParameterBox([1.0], [0.0])


def test_closed_loop_zero_gain_is_open_loop():
    plant = lpv_toy_plant()
    err = closed_loop(plant, np.zeros((2, 3)), np.zeros(3))
    for rho in vertices(plant.box):
        np.testing.assert_array_equal(err.A_cl(rho), plant.A(rho))
        Bw = err.B_w(rho)
        np.testing.assert_array_equal(Bw[:, :2], plant.B_d(rho) @ plant.S_d)
        np.testing.assert_array_equal(Bw[:, 2:], 0.0)


def test_closed_loop_scalar():
    err = closed_loop(scalar_plant(), [[-2.0]], [0.5])
    assert err.A_cl([0.0])[0, 0] == -3.0
    np.testing.assert_allclose(err.B_w([0.0]), [[1.0, -1.0]])
    np.testing.assert_allclose(err.D_w([0.0]), [[0.0, 0.5]])


def test_closed_loop_basis_structure():
    plant = lpv_toy_plant()
    err = closed_loop(plant, np.ones((2, 3)), np.ones(3))
    assert err.A_cl.indices == (0, 1)


def test_closed_loop_shape_errors():
    plant = scalar_plant()
    with pytest.raises(ShapeError):
        closed_loop(plant, np.zeros((2, 1)), [1.0])
    with pytest.raises(ValueError):
        closed_loop(plant, [[0.0]], [-1.0])


def test_plant_validation():
    with pytest.raises(ValueError):
        scalar_plant(S_d=[[0.0]])
    with pytest.raises(ShapeError):
        scalar_plant(C_y=[[1.0, 2.0]])
    with pytest.raises(ValueError):
        LpvPlant(A=np.eye(2) * -1, B_d=np.eye(2), C_y=np.eye(2), C_z=np.eye(2),
                 S_d=[[1.0, 0.1], [0.0, 1.0]], box=ParameterBox([0.0], [0.0]))

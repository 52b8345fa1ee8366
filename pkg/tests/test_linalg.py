from fractions import Fraction

import numpy as np
import pytest

from impasse.linalg import charpoly, eigen, eigenvalues, group_eigenvalues, nullspace

F = Fraction


def test_charpoly_exact():
    # [[2, 1], [0, 3]] -> t^2 - 5t + 6
    assert charpoly([[F(2), F(1)], [F(0), F(3)]]) == [1, -5, 6]


def test_irregular_jacobian_eigenpairs():
    J = [[F(2), F(0), F(2)], [F(-2), F(0), F(-2)], [F(0), F(0), F(-3)]]
    pairs = {p.value: p for p in eigen(J)}
    assert set(pairs) == {2, 0, -3}
    assert all(isinstance(v, Fraction) for v in pairs)
    assert [list(v) for v in pairs[2].vectors] == [[1, -1, 0]]
    assert pairs[-3].vectors[0][2] != 0


def test_complex_pair_sorted():
    vals = eigenvalues([[F(0), F(1)], [F(-1), F(1)]])
    assert vals[0] == pytest.approx(0.5 + np.sqrt(3) / 2 * 1j, abs=1e-14)
    assert vals[1] == pytest.approx(0.5 - np.sqrt(3) / 2 * 1j, abs=1e-14)


def test_multiplicity_and_geometric_dimension():
    # one Jordan block: algebraic 2, geometric 1
    pairs = eigen([[F(1), F(0)], [F(1), F(1)]])
    assert len(pairs) == 1
    assert pairs[0].multiplicity == 2
    assert len(pairs[0].vectors) == 1
    assert group_eigenvalues([F(1), F(1), F(2)]) == [(F(1), 2), (F(2), 1)]


def test_nullspace_exact():
    ns = nullspace([[F(1), F(2)], [F(2), F(4)]])
    assert len(ns) == 1
    v = ns[0]
    assert v[0] + 2 * v[1] == 0


@pytest.mark.parametrize("seed", range(5))
def test_random_float_matrices_match_numpy(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, 6))
    ours = [complex(v) for v in eigenvalues(A.tolist())]
    ref = list(np.linalg.eigvals(A))
    assert len(ours) == len(ref)
    for z in ours:
        i = int(np.argmin([abs(z - w) for w in ref]))
        assert abs(z - ref.pop(i)) < 1e-9


def test_float_eigenvectors_satisfy_definition():
    A = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]])
    for p in eigen(A.tolist()):
        for v in p.vectors:
            v = np.array(v, dtype=float)
            assert np.linalg.norm(A @ v - float(p.value) * v) < 1e-9 * np.linalg.norm(v)

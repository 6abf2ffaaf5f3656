import json
import math

import numpy as np
import pytest

from nodaiter import oracle
from nodaiter.errors import DisconnectedGraph, GenerationFailed
from nodaiter.problems import (
    ProblemSpec,
    build,
    graph_adjacency,
    graph_m_matrix,
    is_connected,
    is_z_matrix,
    laplacian_2d,
    laplacian_2d_sigma_min,
    m_product,
    sparse_product,
    tridiag_m_matrix,
    tridiag_sigma_min,
    uniform_stream,
)
from nodaiter.sparse import SparseMatrix, augment


def _same(a, b):
    return (
        a.shape == b.shape
        and a.row_offsets.tobytes() == b.row_offsets.tobytes()
        and a.col_indices.tobytes() == b.col_indices.tobytes()
        and a.values.tobytes() == b.values.tobytes()
    )


def test_uniform_stream_is_fixed():
    # first outputs of PCG64(0) via (u >> 11) * 2**-53; pinned so a numpy change is caught
    u = uniform_stream(0, 3)
    assert u.tolist() == uniform_stream(0, 3).tolist()
    raw = np.random.PCG64(0).random_raw(3)
    assert u.tolist() == [(int(r) >> 11) * 2.0**-53 for r in raw]
    assert np.all((u >= 0) & (u < 1))


# -- Laplacian ---------------------------------------------------------------


def test_laplacian_small():
    a = laplacian_2d(2)
    assert a.shape == (4, 4)
    assert laplacian_2d_sigma_min(2) == pytest.approx(2.0, rel=1e-15)
    assert oracle.sigma_min_oracle(a) == pytest.approx(2.0, rel=1e-12)


def test_laplacian_m3_closed_form():
    assert laplacian_2d_sigma_min(3) == pytest.approx(4 - 2 * math.sqrt(2), rel=1e-14)
    assert oracle.sigma_min_oracle(laplacian_2d(3)) == pytest.approx(4 - 2 * math.sqrt(2), rel=1e-12)


def test_laplacian_m31_closed_form():
    assert laplacian_2d_sigma_min(31) == pytest.approx(8 * math.sin(math.pi / 64) ** 2, rel=1e-15)
    ev = np.linalg.eigvalsh(laplacian_2d(31).to_dense())
    assert ev[0] == pytest.approx(laplacian_2d_sigma_min(31), rel=1e-10)


def test_laplacian_structure():
    a = laplacian_2d(5)
    d = a.to_dense()
    assert np.all(np.diag(d) == 4)
    assert set(np.unique(d[~np.eye(25, dtype=bool)])) <= {0.0, -1.0}
    assert a.is_symmetric and is_z_matrix(a) and is_connected(a)


def test_laplacian_rejects_tiny_grid():
    with pytest.raises(ValueError):
        laplacian_2d(1)


# -- graph M-matrix ----------------------------------------------------------------


def test_graph_two_nodes():
    s = 0.3
    m = graph_m_matrix(2, 2.0, s, 0)
    np.testing.assert_allclose(m.to_dense(), [[1 + s, -1], [-1, 1 + s]])
    assert oracle.sigma_min_oracle(m) == pytest.approx(s, rel=1e-10)


def test_graph_300_connected_and_matches_oracle():
    m = graph_m_matrix(300, 0.15, 0.5, 42)
    assert is_connected(m) and is_z_matrix(m) and m.is_symmetric
    dense = m.to_dense()
    assert np.all(np.diag(dense) > 0)
    lam = np.linalg.eigvalsh(dense)[0]
    assert oracle.sigma_min_oracle(m) == pytest.approx(lam, rel=1e-9)


def test_graph_is_deterministic():
    assert _same(graph_m_matrix(120, 0.2, 0.5, 5), graph_m_matrix(120, 0.2, 0.5, 5))
    assert not _same(graph_m_matrix(120, 0.2, 0.5, 5), graph_m_matrix(120, 0.2, 0.5, 6))


def test_graph_adjacency_uses_strict_distance():
    b = graph_adjacency(50, 0.3, 1)
    pts = uniform_stream(1, 100).reshape(50, 2)
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    ref = (d < 0.3) & ~np.eye(50, dtype=bool)
    np.testing.assert_array_equal(b.to_dense() != 0, ref)


def test_graph_reseeds_when_disconnected():
    # find a seed whose first sample is disconnected, then check the generator moved on
    seed = next(s for s in range(200) if not is_connected(graph_adjacency(30, 0.25, s)))
    m = graph_m_matrix(30, 0.25, 0.5, seed)
    assert is_connected(m)


def test_graph_gives_up():
    with pytest.raises(DisconnectedGraph):
        graph_m_matrix(50, 0.01, 0.5, 0, max_attempts=3)


@pytest.mark.parametrize("kw", [dict(n=1), dict(radius=0.0), dict(sigma_slack=0.0)])
def test_graph_argument_checks(kw):
    args = dict(n=10, radius=0.5, sigma_slack=0.5, seed=0) | kw
    with pytest.raises(ValueError):
        graph_m_matrix(**args)


# -- M-matrix products -----------------------------------------------------------------


def test_two_by_two_product_is_z_matrix_and_regenerated():
    m = SparseMatrix.from_dense([[2, -1], [-1, 2]])
    p = sparse_product(m, m)
    np.testing.assert_array_equal(p.to_dense(), [[5, -4], [-4, 5]])
    assert is_z_matrix(p)
    with pytest.raises(GenerationFailed):
        m_product(2, 0)


def test_product_of_tridiagonals_is_monotone_not_z():
    t = tridiag_m_matrix(3)
    p = sparse_product(t, t)
    assert p.to_dense()[0, 2] == 1.0
    assert not is_z_matrix(p)
    assert oracle.dense_inverse(p).min() >= -1e-12


@pytest.mark.parametrize("n", [3, 10, 30, 60])
def test_m_product_monotone(n):
    p = m_product(n, 4)
    assert not is_z_matrix(p) and is_connected(p)
    inv = oracle.dense_inverse(p)
    assert inv.min() >= -1e-12 * np.abs(inv).max()


def test_m_product_50_sigma_matches_oracle():
    p = m_product(50, 11)
    s = oracle.sigma_min_oracle(p)
    ref = 1.0 / np.max(np.abs(np.linalg.eigvals(np.linalg.inv(p.to_dense()))))
    assert s == pytest.approx(ref, rel=1e-8)


def test_m_product_deterministic():
    assert _same(m_product(25, 3), m_product(25, 3))


# -- generated matrices are irreducible and monotone -----------------------------------


@pytest.mark.parametrize(
    "mat",
    [
        laplacian_2d(7),
        tridiag_m_matrix(40),
        graph_m_matrix(60, 0.3, 0.5, 2),
        m_product(60, 1),
    ],
    ids=["laplacian", "tridiag", "graph", "product"],
)
def test_generated_matrix_invariants(mat):
    assert is_connected(mat)
    d = mat.to_dense()
    assert np.all(np.diag(d) > 0)
    inv = oracle.dense_inverse(d)
    assert inv.min() >= -1e-12 * np.abs(inv).max()


# -- specs -------------------------------------------------------------------------------


def test_build_dispatch():
    a, s = build({"kind": "laplacian2d", "m": 31})
    assert a.nrows == 961 and s == laplacian_2d_sigma_min(31)
    a, s = build({"kind": "augmented_svd", "inner": {"kind": "tridiag", "n": 50}})
    assert a.nrows == 100 and s == pytest.approx(2 - 2 * math.cos(math.pi / 51), rel=1e-15)
    assert _same(a, augment(tridiag_m_matrix(50)))
    a, s = build({"kind": "graph", "n": 30, "radius": 0.4, "sigma_slack": 0.5, "seed": 1})
    assert s is None
    a, s = build({"kind": "mproduct", "n": 10, "seed": 2})
    assert s is None


def test_tridiag_closed_form():
    assert tridiag_sigma_min(50) == pytest.approx(np.linalg.eigvalsh(tridiag_m_matrix(50).to_dense())[0], rel=1e-12)


def test_spec_json_round_trip():
    text = '{"kind": "augmented_svd", "inner": {"kind": "graph", "n": 100, "radius": 0.2, "seed": 4}}'
    spec = ProblemSpec.from_json(text)
    again = ProblemSpec.from_json(spec.to_json())
    assert again.to_dict() == spec.to_dict() == json.loads(text)
    assert "graph" in spec.description


@pytest.mark.parametrize("d", [{"kind": "nope"}, {"kind": "augmented_svd"}])
def test_spec_validation(d):
    with pytest.raises(ValueError):
        ProblemSpec.from_dict(d)

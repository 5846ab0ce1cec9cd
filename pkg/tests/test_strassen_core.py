import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from limset.errors import DimensionError, InputError, ParameterError
from limset.qp_oracle import solve_tube_qp
from limset.strassen_core import (
    GridFn,
    dirichlet_energy,
    dist_to_scaled_strassen,
    line,
    min_energy_in_ball,
    parseval_energy,
    project_direction,
    representation_decompose,
    strassen_sample,
    taut_string,
    vector_energy,
)


def tent(n_grid: int) -> GridFn:
    return GridFn.from_callable(lambda t: np.minimum(2 * t, 1) - np.maximum(0, 2 * t - 1), n_grid)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


@pytest.mark.parametrize("n_grid", [1, 8, 64, 257])
def test_energy_of_unit_line(n_grid):
    assert_allclose(dirichlet_energy(line(1.0, n_grid)).value, 1.0, rtol=1e-12)


def test_energy_zero_and_scaling(random_walk):
    assert dirichlet_energy(GridFn.zeros(32)).value == 0.0
    assert_allclose(dirichlet_energy(line(3.0, 16)).value, 9.0, rtol=1e-12)
    g = random_walk(64)
    base = dirichlet_energy(g).value
    for lam in (0.1, 2.5, -7.0):
        assert_allclose(dirichlet_energy(g * lam).value, lam * lam * base, rtol=1e-12)
    assert dirichlet_energy(-g).value == base


def test_energy_rejects_vector_functions(random_walk):
    with pytest.raises(DimensionError):
        dirichlet_energy(random_walk(16, dim=2))


def test_gridfn_must_start_at_zero():
    with pytest.raises(InputError):
        GridFn.from_values([1.0, 2.0, 3.0])


def test_taut_string_line_case():
    sol = taut_string(line(1.0, 64), 0.25)
    assert abs(sol.energy.value - 0.5625) <= 1e-9
    assert_allclose(sol.minimizer.scalar, 0.75 * np.linspace(0, 1, 65), atol=1e-12)
    assert sol.minimizer.scalar[0] == 0.0


def test_taut_string_inside_ball_is_zero(random_walk):
    g = random_walk(64)
    sol = taut_string(g, g.sup_norm() + 1e-3)
    assert sol.energy.value == 0.0
    assert np.all(sol.minimizer.scalar == 0.0)


def test_taut_string_rejects_nonpositive_epsilon():
    with pytest.raises(ParameterError):
        taut_string(line(1.0, 8), 0.0)


def test_taut_string_tent_matches_oracle():
    g = tent(64)
    ours = min_energy_in_ball(g, 0.1).value
    oracle = solve_tube_qp(g, 0.1)
    assert oracle.converged
    assert abs(ours - oracle.energy) <= 1e-6


@pytest.mark.parametrize("n_grid", [16, 64, 128])
@pytest.mark.parametrize("epsilon", [0.05, 0.1, 0.3])
def test_taut_string_matches_qp_oracle(random_walk, n_grid, epsilon):
    for _ in range(2):
        g = random_walk(n_grid)
        sol = taut_string(g, epsilon)
        assert np.max(np.abs(sol.minimizer.scalar - g.scalar)) <= epsilon + 1e-12
        assert_allclose(sol.energy.value, dirichlet_energy(sol.minimizer).value)
        oracle = solve_tube_qp(g, epsilon)
        assert abs(sol.energy.value - oracle.energy) <= 1e-6


def test_tube_energy_is_monotone_in_epsilon(random_walk):
    g = random_walk(64)
    energies = [min_energy_in_ball(g, eps).value for eps in (0.02, 0.05, 0.1, 0.2, 0.4)]
    assert all(a >= b - 1e-12 for a, b in zip(energies, energies[1:]))


def test_project_direction():
    f = GridFn.stack([line(1.0, 16), line(1.0, 16)])
    u = np.array([1.0, 1.0]) / math.sqrt(2.0)
    assert_allclose(project_direction(f, u).scalar, math.sqrt(2.0) * np.linspace(0, 1, 17), rtol=1e-12)
    with pytest.raises(ParameterError):
        project_direction(f, [1.0, 1.0])


def test_project_direction_of_product(random_walk, rng):
    g = random_walk(32)
    x = rng.standard_normal(3)
    u = rng.standard_normal(3)
    u /= np.linalg.norm(u)
    projected = dirichlet_energy(project_direction(g.outer(x), u)).value
    assert_allclose(projected, np.dot(u, x) ** 2 * dirichlet_energy(g).value, rtol=1e-10)


def test_dist_to_scaled_strassen_line():
    assert dist_to_scaled_strassen(line(2.0, 64), 1.0) == pytest.approx(1.0, abs=1e-6)
    assert dist_to_scaled_strassen(line(0.5, 64), 1.0) == 0.0


def test_dist_to_scaled_strassen_matches_dense_scan(random_walk):
    g = random_walk(64, scale=2.0)
    d = dist_to_scaled_strassen(g, 1.0)
    grid = np.linspace(0.0, g.sup_norm(), 50)
    feasible = [eps for eps in grid[1:] if solve_tube_qp(g, eps).energy <= 1.0 + 1e-9]
    assert abs(d - feasible[0]) <= grid[1] - grid[0] + 1e-6


def test_representation_decompose():
    f = GridFn.stack([line(1.0, 16), GridFn.zeros(16)])
    x, gs = representation_decompose(f)
    assert_allclose(x, [1.0, 0.0])
    assert np.all(gs[1].scalar == 0.0)

    f = GridFn.stack([line(0.5, 16), line(0.5, 16)])
    x, gs = representation_decompose(f)
    assert_allclose(x, [0.5, 0.5], rtol=1e-12)
    assert_allclose(gs[0].scalar, np.linspace(0, 1, 17), rtol=1e-12)


def test_representation_round_trip():
    ks = strassen_sample(64)
    h1, h2 = ks["up_down"], -ks["rise_flat"]
    f = GridFn.stack([h1 * 0.3, h2 * -0.7])
    x, gs = representation_decompose(f)
    assert_allclose(x, [0.3, 0.7], rtol=1e-10)
    for xi, gi, fi in zip(x, gs, f.coords()):
        assert dirichlet_energy(gi).value <= 1 + 1e-9
        assert_allclose(xi * gi.scalar, fi.scalar, atol=1e-15)


def test_parseval_invariance(random_walk, rng):
    f = GridFn.stack([line(1.0, 16), GridFn.zeros(16)])
    assert_allclose(parseval_energy(f, np.eye(2)), 1.0)
    assert_allclose(parseval_energy(f, rotation(0.7)), 1.0, rtol=1e-12)

    f = random_walk(64, dim=3)
    reference = vector_energy(f)
    for _ in range(20):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        assert_allclose(parseval_energy(f, q.T), reference, rtol=1e-9)


def test_parseval_rejects_non_orthonormal():
    f = GridFn.stack([line(1.0, 8), line(1.0, 8)])
    with pytest.raises(ParameterError):
        parseval_energy(f, [[1.0, 0.0], [1.0, 1.0]])


def test_strassen_sample_geometry():
    for name, g in strassen_sample(64).items():
        assert_allclose(dirichlet_energy(g).value, 1.0, rtol=1e-12, err_msg=name)
        assert g.sup_norm() <= 1.0 + 1e-12
        v, t = g.scalar, g.nodes
        gaps = np.abs(v[:, None] - v[None, :]) - np.sqrt(np.abs(t[:, None] - t[None, :]))
        assert np.max(gaps) <= 1e-12


def test_csv_round_trip(random_walk):
    g = random_walk(20, dim=2)
    back = GridFn.from_csv(g.to_csv())
    assert np.array_equal(back.values, g.values)
    assert GridFn.from_json(g.to_json()).n_grid == 20


def test_csv_rejects_malformed():
    with pytest.raises(InputError):
        GridFn.from_csv("x,y\n0,0\n1,1\n")
    with pytest.raises(InputError):
        GridFn.from_csv("t,f_1\n0,0\n0.5,abc\n1,1\n")

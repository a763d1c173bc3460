import numpy as np
import pytest

from whistlerlab.fields import (
    CellularField,
    GaussianCurlBump,
    ShearField,
    SpectralInterpolant,
    SumField,
    UniformField,
    sample_on_grid,
)
from whistlerlab.grid import Grid3, RealVectorField
from whistlerlab.symbols import (
    CONE_HALF_ANGLE,
    EXTREMAL_DIRECTION,
    PhasePoint,
    angle_between,
    deformation_tensor,
    diagonalization_residual,
    group_velocity,
    principal_matrix,
    principal_symbol,
    projections,
    projections_batch,
)

E3 = UniformField()


# -- principal symbol ---------------------------------------------------------

def test_principal_symbol_values():
    assert principal_symbol(E3, PhasePoint((0, 0, 0), (0, 0, 1))) == pytest.approx(1.0)
    assert principal_symbol(E3, PhasePoint((0, 0, 0), (1, 0, 0))) == pytest.approx(0.0)
    assert principal_symbol(E3, PhasePoint((0, 0, 0), (0, 3, 4))) == pytest.approx(20.0)


def test_principal_symbol_degree_two_homogeneity():
    rng = np.random.default_rng(0)
    B = GaussianCurlBump(amp=0.2) + E3
    for _ in range(20):
        x = rng.standard_normal(3)
        xi = rng.standard_normal(3)
        lam = rng.uniform(0.1, 10.0)
        a = principal_symbol(B, PhasePoint(tuple(x), tuple(lam * xi)))
        b = principal_symbol(B, PhasePoint(tuple(x), tuple(xi)))
        assert a == pytest.approx(lam**2 * b, rel=1e-12)


# -- eigenprojections --------------------------------------------------------

def test_projection_algebra_random():
    rng = np.random.default_rng(1)
    xi = rng.standard_normal((10_000, 3))
    pip, pi0, pim = projections_batch(xi)
    eye = np.eye(3)
    for P in (pip, pi0, pim):
        assert np.max(np.abs(P @ P - P)) < 1e-13
    assert np.max(np.abs(pip @ pim)) < 1e-13
    assert np.max(np.abs(pip @ pi0)) < 1e-13
    assert np.max(np.abs(pim @ pi0)) < 1e-13
    assert np.max(np.abs(pip + pi0 + pim - eye)) < 1e-13


def test_projection_vertical_direction():
    pip, pi0, pim = projections((0, 0, 1))
    assert np.max(np.abs(pi0 - np.diag([0, 0, 1.0]))) < 1e-14
    assert np.linalg.matrix_rank(pip) == 1
    assert np.linalg.matrix_rank(pim) == 1


def test_projection_reality():
    rng = np.random.default_rng(2)
    for _ in range(50):
        xi = rng.standard_normal(3)
        for a, b in zip(projections(xi), projections(-xi)):
            assert np.max(np.abs(np.conj(b) - a)) < 1e-14


# -- diagonalization ----------------------------------------------------------

def test_diagonalization_residual_uniform():
    assert diagonalization_residual(E3, PhasePoint((0, 0, 0), (0, 0, 1))) < 1e-13


def test_diagonalization_residual_random():
    rng = np.random.default_rng(3)
    B = SumField([E3, GaussianCurlBump(amp=0.5)])
    for _ in range(1000):
        x = rng.standard_normal(3)
        xi = rng.standard_normal(3) * rng.uniform(0.1, 50)
        p = abs(principal_symbol(B, PhasePoint(tuple(x), tuple(xi))))
        res = diagonalization_residual(B, PhasePoint(tuple(x), tuple(xi)))
        assert res < 1e-12 * max(p, 1e-30) + 1e-14


def test_diagonalization_residual_homogeneity():
    # both sides are degree-2 homogeneous; build a deliberately broken pair to
    # confirm the residual scales like lambda^2
    B = SumField([E3, GaussianCurlBump(amp=0.3)])
    x = (0.1, -0.2, 0.3)
    xi = np.array([0.4, 0.5, -0.6])
    base = _perturbed_residual(B, x, xi)
    scaled = _perturbed_residual(B, x, 2.0 * xi)
    assert scaled == pytest.approx(4.0 * base, rel=1e-10)


def _perturbed_residual(B, x, xi):
    from whistlerlab.symbols import principal_matrix, projections

    Bx = B.B(np.asarray(x, dtype=float))
    pval = float(Bx @ xi * np.linalg.norm(xi))
    pip, _, pim = projections(xi)
    # drop the minus piece: nonzero remainder with clean homogeneity
    resid = principal_matrix(Bx, np.asarray(xi)) - 1j * pval * pip
    return float(np.linalg.norm(resid))


def test_diagonalization_matches_spectral_operator():
    # principal_matrix must be the symbol of curl((curl .) x B) at frozen B
    rng = np.random.default_rng(4)
    xi = rng.standard_normal(3)
    Bx = rng.standard_normal(3)
    bh = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    lhs = principal_matrix(Bx, xi) @ bh
    rhs = 1j * np.cross(xi, np.cross(1j * np.cross(xi, bh), Bx))
    assert np.max(np.abs(lhs - rhs)) < 1e-13 * np.max(np.abs(rhs))


# -- group velocity ------------------------------------------------------------

def test_group_velocity_values():
    assert np.allclose(group_velocity(+1, (0, 0, 1)), (0, 0, 2), atol=1e-14)
    assert np.allclose(group_velocity(+1, (1, 0, 0)), (0, 0, 1), atol=1e-14)


def test_group_velocity_sign_symmetry():
    rng = np.random.default_rng(5)
    xi = rng.standard_normal((100, 3))
    assert np.allclose(group_velocity(-1, xi), -group_velocity(+1, xi), atol=1e-14)


def test_group_velocity_is_xi_gradient_of_p():
    rng = np.random.default_rng(6)
    for _ in range(20):
        xi = rng.standard_normal(3) * rng.uniform(0.5, 3)
        h = 1e-6
        fd = np.zeros(3)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fp = (xi + e) @ np.array([0, 0, 1.0]) * np.linalg.norm(xi + e)
            fm = (xi - e) @ np.array([0, 0, 1.0]) * np.linalg.norm(xi - e)
            fd[a] = (fp - fm) / (2 * h)
        assert np.allclose(fd, group_velocity(+1, xi), atol=1e-7 * np.linalg.norm(xi))


def test_group_velocity_cone():
    rng = np.random.default_rng(7)
    xi = rng.standard_normal((100_000, 3))
    v = group_velocity(+1, xi)
    ang = angle_between(v, np.array([0.0, 0.0, 1.0]))
    assert np.max(ang) <= CONE_HALF_ANGLE + 1e-9
    ext = angle_between(group_velocity(+1, EXTREMAL_DIRECTION), np.array([0.0, 0.0, 1.0]))
    assert abs(float(ext) - CONE_HALF_ANGLE) < 1e-6


# -- deformation tensor ----------------------------------------------------------

def test_deformation_uniform_zero():
    D = deformation_tensor(E3, (0.3, 0.1, -0.2))
    assert np.max(np.abs(D)) == 0.0


def test_deformation_shear():
    f = ShearField(amp=0.2, scale=1.0)
    D = deformation_tensor(f, (0.0, 0.0, 0.0))
    expected = np.zeros((3, 3))
    expected[0, 2] = expected[2, 0] = 0.1  # amp cos(0)/scale / 2
    assert np.max(np.abs(D - expected)) < 1e-14


def test_deformation_trace_free_for_divergence_free():
    rng = np.random.default_rng(8)
    B = SumField([E3, GaussianCurlBump(amp=0.7, sigma=(1.0, 0.8, 1.2))])
    pts = rng.standard_normal((200, 3))
    D = deformation_tensor(B, pts)
    assert np.max(np.abs(np.trace(D, axis1=-2, axis2=-1))) < 1e-10


# -- field evaluators ------------------------------------------------------------

def _fd_grad(B, x, h=1e-6):
    out = np.zeros((3, 3))
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        out[a] = (B.B(x + e) - B.B(x - e)) / (2 * h)
    return out


@pytest.mark.parametrize("field", [
    ShearField(amp=0.3, scale=2.0),
    GaussianCurlBump(amp=0.5, center=(0.2, -0.1, 0.4), sigma=(1.0, 1.3, 0.7), direction=(0.0, 1.0, 0.0)),
    CellularField(amp=0.8, lam=1.5, bz=0.2),
])
def test_analytic_gradients_match_finite_differences(field):
    rng = np.random.default_rng(9)
    for _ in range(5):
        x = rng.standard_normal(3)
        assert np.max(np.abs(field.gradB(x) - _fd_grad(field, x))) < 1e-8
        h = 1e-4
        hess_fd = np.zeros((3, 3, 3))
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            hess_fd[a] = (field.gradB(x + e) - field.gradB(x - e)) / (2 * h)
        assert np.max(np.abs(field.hessB(x) - hess_fd)) < 1e-6


def test_fourier_interpolation_exact_single_mode():
    grid = Grid3(16, lam=2.0)
    x, _, _ = grid.xmesh()
    data = np.zeros((3, grid.n, grid.n, grid.n))
    data[2] = 1.0 + 0.5 * np.cos(x / grid.lam)
    f = SpectralInterpolant(RealVectorField(grid, data), method="fourier")
    rng = np.random.default_rng(10)
    pts = rng.uniform(-grid.box_length / 2, grid.box_length / 2, (50, 3))
    exact = np.zeros((50, 3))
    exact[:, 2] = 1.0 + 0.5 * np.cos(pts[:, 0] / grid.lam)
    assert np.max(np.abs(f.B(pts) - exact)) < 1e-10
    # gradient of the mode
    gexact = np.zeros((50, 3, 3))
    gexact[:, 0, 2] = -0.5 * np.sin(pts[:, 0] / grid.lam) / grid.lam
    assert np.max(np.abs(f.gradB(pts) - gexact)) < 1e-10


def test_tricubic_close_to_fourier():
    grid = Grid3(32, lam=2.0)
    base = SumField([E3, GaussianCurlBump(amp=0.4, sigma=(1.5, 1.5, 1.5))])
    sampled = sample_on_grid(base, grid)
    four = SpectralInterpolant(sampled, method="fourier")
    tric = SpectralInterpolant(sampled, method="tricubic")
    rng = np.random.default_rng(11)
    pts = rng.uniform(-3, 3, (20, 3))
    assert np.max(np.abs(four.B(pts) - tric.B(pts))) < 5e-4

import numpy as np
import pytest

from whistlerlab.certify import (
    CertifyTargets,
    DEFAULT_CONSTANTS,
    RaySampleSpec,
    asymptotic_uniformity,
    certify,
    commutator_symbol,
    doi_multiplier,
    envelope,
    f_out,
    mizohata_constant,
    nondegeneracy,
    nontrapping_length,
    renorm_psi,
    size_bound,
)
from whistlerlab.dyadic import ell1_hs_norm, lowpass_multiplier, phi0 as phi0_of, smooth_cutoff_below
from whistlerlab.fields import GaussianCurlBump, SumField, UniformField, sample_on_grid
from whistlerlab.grid import Grid3, RealVectorField, fftn, ifftn
from whistlerlab.rays import integrate_ray, integrate_rays, variational_flow
from whistlerlab.symbols import CONE_HALF_ANGLE, PhasePoint, angle_between, group_velocity

GRID = Grid3(32, lam=4.0)
E3 = UniformField()
FAST_SPEC = RaySampleSpec(x3_resolution=2, refine_rounds=1, refine_points=12, t_max=40.0, tol=1e-8)


def bump_field(delta, sigma=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)):
    return SumField([E3, GaussianCurlBump(amp=delta, sigma=sigma, center=center, direction=(0, 1, 0))])


# -- size bound -----------------------------------------------------------------

def test_size_bound_uniform_zero():
    assert size_bound(2.0, sample_on_grid(E3, GRID)) == 0.0


def test_size_bound_linear_in_delta():
    a = size_bound(2.0, sample_on_grid(bump_field(1e-2), GRID))
    b = size_bound(2.0, sample_on_grid(bump_field(2e-2), GRID))
    assert b == pytest.approx(2.0 * a, rel=1e-10)


def test_size_bound_shell_weights():
    # perturbation on the single lattice radius |xi| = 2 lands in shell 1 only:
    # raising s by one multiplies the norm by exactly 2^1
    x, _, _ = GRID.xmesh()
    pert = np.zeros((3, GRID.n, GRID.n, GRID.n))
    pert[0] = 1e-2 * np.cos(2.0 * x)
    B0 = sample_on_grid(E3, GRID)
    f = RealVectorField(GRID, B0.data + pert)
    s = 1.0
    ratio = size_bound(s + 1.0, f) / size_bound(s, f)
    assert ratio == pytest.approx(2.0, rel=1e-9)


# -- nondegeneracy -----------------------------------------------------------------

def test_nondegeneracy_uniform():
    assert nondegeneracy(sample_on_grid(E3, GRID)) == pytest.approx(1.0, abs=1e-12)


def test_nondegeneracy_tilted_constant():
    f = sample_on_grid(UniformField((0.3, 0.0, 1.0)), GRID)
    assert nondegeneracy(f) == pytest.approx(np.sqrt(1.09), abs=1e-12)


def test_nondegeneracy_dip():
    # engineered dip: |B| reaches 0.2 at the bump center plane
    base = sample_on_grid(E3, GRID)
    x, y, z = GRID.xmesh()
    w = np.exp(-(x**2 + y**2 + z**2) / 2.0)
    dipped = base.data.copy()
    # horizontal perturbation opposing nothing: |B|^2 = (a w_y)^2 + 1 shape;
    # instead scale B3 via a divergence-free shear in x1 only
    dipped[2] = 1.0 - 0.8 * np.exp(-(x**2) / 2.0)
    f = RealVectorField(GRID, dipped)
    mu = nondegeneracy(f)
    margin = 0.5 * GRID.spacing * np.max(np.abs(np.gradient(dipped[2], GRID.spacing, axis=0)))
    assert mu <= 0.2 + margin
    assert mu >= 0.2 - 1.5 * margin


# -- Mizohata constant ----------------------------------------------------------------

def test_mizohata_uniform_zero():
    scan = mizohata_constant(E3, 1.0, FAST_SPEC)
    assert scan.value == 0.0
    assert not scan.unbounded


def test_mizohata_perturbative_slope():
    vals = []
    deltas = [1e-1, 1e-2, 1e-3]
    for d in deltas:
        scan = mizohata_constant(bump_field(d), 1.0, FAST_SPEC)
        vals.append(scan.value)
    slopes = np.diff(np.log(vals)) / np.diff(np.log(deltas))
    assert np.all(np.abs(slopes - 1.0) < 0.1)


def test_mizohata_lemma_consistency():
    # A <= 10 M (1 + mu^{-1} L) across the small test-field suite
    for d in (0.05, 0.1):
        B = bump_field(d)
        sample = sample_on_grid(B, GRID)
        M = size_bound(4.0, sample)
        mu = nondegeneracy(sample)
        A = mizohata_constant(B, 1.0, FAST_SPEC).value
        L = nontrapping_length(B, 1.0, FAST_SPEC).value
        assert A <= 10.0 * M * (1.0 + L / mu)


# -- asymptotic uniformity ---------------------------------------------------------------

def test_asymptotic_uniformity_disjoint_support():
    # perturbation compactly supported in |x^3| <= R/2: the chi_{>R} cutoff
    # is identically zero on its support, so the measured eps vanishes
    R = 4.0
    x, y, z = GRID.xmesh()
    g = 1e-2 * np.exp(-(x**2 + y**2 + z**2) / 2.0)
    c = phi0_of(np.abs(z) / (R / 4.0))
    h = 1e-6
    cz = (phi0_of(np.abs(z + h) / (R / 4.0)) - phi0_of(np.abs(z - h) / (R / 4.0))) / (2 * h)
    # curl(w e1) with w = g c, derivatives taken analytically: exact support
    pert = np.stack([np.zeros_like(g), g * (-z) * c + g * cz, -g * (-y) * c])
    assert np.max(np.abs(pert[:, :, :, np.abs(GRID.x1d) > R / 2])) == 0.0
    B0 = sample_on_grid(E3, GRID)
    val = asymptotic_uniformity(4.0, RealVectorField(GRID, B0.data + pert), R=R)
    assert val < 1e-10


def test_asymptotic_uniformity_monotone_in_R():
    B = bump_field(1e-2, sigma=(1.0, 1.0, 3.0))
    sample = sample_on_grid(B, GRID)
    vals = [asymptotic_uniformity(2.0, sample, R) for R in (1.0, 2.0, 4.0)]
    assert vals[0] >= vals[1] >= vals[2]


def test_localization_interplay():
    # || (1-chi_{<2R}) P_{<k} b || <= C (||(1-chi_{<R}) b|| + (2^k R)^{-1} ||chi_{<R} b||), C <= 8
    rng = np.random.default_rng(1)
    s, k, R = 1.0, 2, 2.0
    data = rng.standard_normal((3, GRID.n, GRID.n, GRID.n))
    dh = fftn(data)
    dh[:, GRID.kabs > GRID.kmax / 2] = 0.0
    b = ifftn(dh).real
    x3 = GRID.x1d
    low = ifftn(fftn(b) * lowpass_multiplier(GRID, k)).real
    lhs = ell1_hs_norm(s, RealVectorField(GRID, low * (1.0 - smooth_cutoff_below(x3, 2 * R))[None, None, None, :]))
    rhs1 = ell1_hs_norm(s, RealVectorField(GRID, b * (1.0 - smooth_cutoff_below(x3, R))[None, None, None, :]))
    rhs2 = ell1_hs_norm(s, RealVectorField(GRID, b * smooth_cutoff_below(x3, R)[None, None, None, :]))
    assert lhs <= 8.0 * (rhs1 + rhs2 / (2.0**k * R))


# -- nontrapping length ---------------------------------------------------------------

def test_nontrapping_uniform_closed_form():
    scan = nontrapping_length(E3, 1.0, RaySampleSpec(x3_resolution=2, refine_rounds=2))
    expect = 3.0 * np.sqrt(2.0)
    assert abs(scan.value - expect) / expect < 0.02
    # the maximizing direction sits at the cone extremal angle
    best_xi = scan.best_start[3:6]
    ang = angle_between(group_velocity(+1, best_xi), np.array([0.0, 0.0, 1.0]))
    assert abs(float(ang) - CONE_HALF_ANGLE) < 0.05


def test_nontrapping_monotone_in_R():
    B = bump_field(0.05)
    l1 = nontrapping_length(B, 1.0, FAST_SPEC).value
    l2 = nontrapping_length(B, 2.0, FAST_SPEC).value
    assert l2 >= l1


# -- certify -----------------------------------------------------------------------------

def test_certify_small_bump_passes():
    B = bump_field(1e-3)
    rep = certify(4.0, B, GRID, CertifyTargets(M=1.0, mu=0.5, A=1.0, R=1.0, L=10.0), FAST_SPEC)
    assert rep.passed, rep.to_dict()


def test_certify_degenerate_fails_nondegeneracy():
    base = sample_on_grid(E3, GRID)
    x, _, _ = GRID.xmesh()
    data = base.data.copy()
    data[2] = 1.0 - np.exp(-(x**2) / 0.5)  # |B| = 0 at x1 = 0 planes
    rep = certify(4.0, E3, GRID, CertifyTargets(), FAST_SPEC, B0_sampled=RealVectorField(GRID, data))
    assert not rep.passes["nondegeneracy"]
    assert not rep.passed


def test_certify_stability_spot_check():
    base_targets = CertifyTargets(M=1.0, mu=0.5, A=1.0, R=1.0, L=10.0)
    B = bump_field(1e-3)
    rep = certify(4.0, B, GRID, base_targets, FAST_SPEC)
    assert rep.passed
    # small ell1 H^s perturbation keeps it passing with doubled targets
    B2 = SumField([B, GaussianCurlBump(amp=2e-4, center=(0.5, 0.0, 0.3), direction=(1, 0, 0))])
    doubled = CertifyTargets(
        M=2 * base_targets.M,
        mu=base_targets.mu / 2,
        A=2 * max(base_targets.A, rep.M),
        R=base_targets.R,
        L=2 * base_targets.L,
        eps=2 * base_targets.eps,
    )
    rep2 = certify(4.0, B2, GRID, doubled, FAST_SPEC)
    assert rep2.passed


def test_report_serializes():
    rep = certify(4.0, E3, GRID, CertifyTargets(), FAST_SPEC)
    d = rep.to_dict()
    assert d["measured"]["M"] == 0.0
    assert d["measured"]["A_sampled"] == 0.0
    import json

    json.dumps(d)


# -- envelope and multipliers ----------------------------------------------------------------

def test_envelope_domination_and_mass():
    # Bbar band-limited well below k0: pointwise |grad Bbar| <= C F(x^3), C <= 4
    k0 = 3
    B = bump_field(0.2, sigma=(2.0, 2.0, 2.0))
    sample = sample_on_grid(B, GRID)
    dh = fftn(sample.data)
    dh *= lowpass_multiplier(GRID, k0 - 2)
    Bbar = RealVectorField(GRID, ifftn(dh).real)
    F = envelope(Bbar, k0)
    k = GRID.deriv_kvec
    fh = fftn(Bbar.data)
    grad = np.stack([ifftn(1j * k[a] * fh).real for a in range(3)])
    gmag = np.sqrt(np.sum(grad**2, axis=(0, 1)))
    ratio = gmag.max(axis=(0, 1)) / np.maximum(F(GRID.x1d), 1e-300)
    assert np.max(ratio) <= 4.0
    # integral F <= 4 ||grad Bbar||_{L1_{x3} L^inf}
    l1linf = float(np.sum(gmag.max(axis=(0, 1))) * GRID.spacing)
    assert F.integral() <= 4.0 * l1linf


def test_f_out_monotone_and_positive_bracket():
    B = bump_field(0.2)
    sample = sample_on_grid(B, GRID)
    F = envelope(sample, 3)
    w = f_out(F, R0=1.0)
    z = GRID.x1d
    vals = w(z)
    assert np.all(np.diff(vals) >= -1e-14)


def test_doi_multiplier_uniform_bracket_identity():
    # d/dt f_in(X(t), Xi(t)) = chi_{<2R0}(X^3) |Xi| along the flow
    R0 = 1.0
    xi = (0.1, 0.2, 1.0)
    p0 = PhasePoint((0.0, 0.0, -0.5), xi)
    traj = integrate_ray(E3, +1, p0, t_max=0.4, direction="forward")
    h = 0.2
    idx = np.argmin(np.abs(traj.t - h))
    p1 = PhasePoint(tuple(traj.x[idx]), tuple(traj.xi[idx]))
    f0 = doi_multiplier(E3, R0, p0)
    f1 = doi_multiplier(E3, R0, p1)
    t_elapsed = traj.t[idx]
    expect = float(smooth_cutoff_below(np.array([0.0]), 2 * R0)[0]) * np.linalg.norm(xi) * t_elapsed
    # chi = 1 all along this stretch, so the increment is chi |xi| t up to
    # the documented quadrature tolerance of the shared bridge region
    assert abs((f1 - f0) - expect) < 1e-5 * max(abs(expect), 1.0)


def test_renorm_psi_uniform_vanishing_tilde():
    # grad Bbar = 0: the commutator symbol vanishes; only the q-correction remains
    p = PhasePoint((0.0, 0.0, 0.3), (0.0, 0.5, 2.0))
    val_p = renorm_psi(E3, sigma=2.0, R=1.0, sign=+1, p=p, A=0.5)
    val_m = renorm_psi(E3, sigma=2.0, R=1.0, sign=-1, p=p, A=0.5)
    # x^3 = 0.3 is inside (-4R, 4R) where q = 0
    assert val_p == pytest.approx(0.0, abs=1e-12)
    assert val_m == pytest.approx(0.0, abs=1e-12)
    far = PhasePoint((0.0, 0.0, 10.0), (0.0, 0.5, 2.0))
    vp = renorm_psi(E3, sigma=2.0, R=1.0, sign=+1, p=far, A=0.5)
    vm = renorm_psi(E3, sigma=2.0, R=1.0, sign=-1, p=far, A=0.5)
    assert vp > 0 and vm == pytest.approx(-vp, rel=1e-10)


def test_commutator_symbol_formula():
    rng = np.random.default_rng(2)
    B = bump_field(0.3)
    x = rng.standard_normal(3)
    xi = rng.standard_normal(3) * 2
    grad = B.gradB(x)
    expect = -1.5 * np.einsum("ab,a,b->", grad, xi, xi) * np.linalg.norm(xi) / (1 + xi @ xi)
    assert commutator_symbol(B, 1.5, x, xi) == pytest.approx(expect, rel=1e-12)


# -- invariants: probes along rays ------------------------------------------------------------

def test_positivity_probe_certified_field():
    """d/dt [(f_out + C_f M chi_{<4R0} f_in)(X, Xi)] >= -tol along rays of a
    certified field, |Xi(0)| = 1, |X^3| <= 8 R0."""
    R0 = 1.0
    delta = 1e-2
    B = bump_field(delta)
    sample = sample_on_grid(B, GRID)
    M = size_bound(4.0, sample)
    F = envelope(sample, 3)
    w = f_out(F, R0)
    rng = np.random.default_rng(3)
    dirs = rng.standard_normal((40, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    starts = np.concatenate(
        [rng.uniform(-1, 1, (40, 2)), rng.uniform(-2, 2, (40, 1)), dirs], axis=1
    )
    trajs = integrate_rays(B, +1, starts, t_max=40.0, slab_halfwidth=4.2 * R0, tol=1e-9)
    worst = 0.0
    for traj in trajs:
        # f_in along the ray by cumulative quadrature of chi_{<2R0} |Xi|
        chi = smooth_cutoff_below(traj.x[:, 2], 2 * R0)
        vals = chi * np.linalg.norm(traj.xi, axis=1)
        fin = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(traj.t))])
        g = w(traj.x[:, 2]) + DEFAULT_CONSTANTS["C_f"] * M * smooth_cutoff_below(traj.x[:, 2], 4 * R0) * fin
        inside = np.abs(traj.x[:, 2]) <= 8 * R0
        dg = np.diff(g)
        mask = inside[:-1] & inside[1:]
        if np.any(mask):
            worst = min(worst, float(dg[mask].min()))
    assert worst >= -1e-8


def test_frequency_ratio_bounded_by_ray_mizohata():
    B = bump_field(0.2)
    rng = np.random.default_rng(4)
    for _ in range(10):
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        start = PhasePoint(tuple(rng.uniform(-1, 1, 3)), tuple(d))
        traj = integrate_ray(B, +1, start, t_max=30.0, slab_halfwidth=3.0)
        nrm = np.linalg.norm(traj.xi, axis=1)
        grad = B.gradB(traj.x)
        gnorm = np.linalg.norm(grad.reshape(len(traj.t), 9), axis=1)
        a_ray = np.trapezoid(gnorm * nrm, traj.t)
        assert nrm.max() / nrm.min() <= np.exp(a_ray) * (1 + 1e-8)


def test_variation_bound_spot_check():
    # Jacobian growth <= C exp(C' mu^{-1} M A arclength); fitted C' reported finite
    B = bump_field(0.1)
    sample = sample_on_grid(B, GRID)
    M = size_bound(4.0, sample)
    mu = nondegeneracy(sample)
    A = max(mizohata_constant(B, 1.0, FAST_SPEC).value, 1e-12)
    traj, jac = variational_flow(B, +1, PhasePoint((0.2, 0.0, -0.5), (0.3, 0.2, 1.0)), t_max=3.0)
    from whistlerlab.rays import hamiltonian_rhs

    xdot, _ = hamiltonian_rhs(B, +1, traj.x, traj.xi)
    arclength = np.trapezoid(np.linalg.norm(xdot, axis=1), traj.t)
    growth = max(np.linalg.norm(jac[-1], 2), 1.0 + 1e-9)
    c_prime = np.log(growth) / max(M * A * arclength / mu, 1e-300)
    assert np.isfinite(c_prime) and c_prime > 0

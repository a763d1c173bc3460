"""Acceptance suite: every criterion at its stated tolerance, one pass/fail
line per criterion (run with -s to stream them).

Run: pytest tests/test_acceptance.py -v -s
"""

import time

import numpy as np
import pytest

from whistlerlab.certify import CertifyTargets, RaySampleSpec, certify
from whistlerlab.dyadic import (
    SpaceTimeField,
    shell_multiplier,
    shell_top,
    slab_level_cap,
    slab_partition,
    xk_norm,
    yk_norm,
)
from whistlerlab.fields import GaussianCurlBump, SumField, UniformField, sample_on_grid
from whistlerlab.grid import Grid3, RealVectorField, SpectralVectorField, fftn, ifftn, leray_project
from whistlerlab.psdo import (
    SeparableTerm,
    SymbolFn,
    composition_residual,
    hf_cv_check,
    paralin_error,
    paralin_error_balanced,
)
from whistlerlab.rays import cone_angle, frequency_drift_check, integrate_ray, integrate_rays
from whistlerlab.smoothing import measure_smoothing
from whistlerlab.solver import (
    SolverState,
    TwoPointFiveDState,
    diag_residual,
    field_energy,
    max_divergence,
    propagate_constant,
    solve,
    solve_2p5d,
)
from whistlerlab.symbols import (
    CONE_HALF_ANGLE,
    EXTREMAL_DIRECTION,
    PhasePoint,
    angle_between,
    diagonalization_residual,
    group_velocity,
    principal_symbol,
    projections_batch,
)

E3 = UniformField()
SMOOTH_BG = SumField([E3, GaussianCurlBump(amp=0.05, sigma=(1.2, 1.0, 1.4), direction=(0, 1, 0))])


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def divfree_field(grid, seed, band, amp=1.0):
    rng = np.random.default_rng(seed)
    dh = fftn(rng.standard_normal((3, grid.n, grid.n, grid.n)))
    dh[:, 0, 0, 0] = 0.0
    dh[:, grid.kabs > band] = 0.0
    dh = leray_project(SpectralVectorField(grid, dh)).data
    dh *= amp / max(np.max(np.abs(ifftn(dh).real)), 1e-300)
    return SpectralVectorField(grid, dh)


@pytest.mark.acceptance
def test_cone_bound():
    t0 = time.time()
    rng = np.random.default_rng(0)
    xi = rng.standard_normal((100_000, 3))
    ang_sphere = angle_between(group_velocity(+1, xi), np.array([0.0, 0.0, 1.0]))
    max_sphere = float(np.max(ang_sphere))

    starts = np.concatenate(
        [rng.uniform(-1.5, 1.5, (1000, 3)), rng.standard_normal((1000, 3))], axis=1
    )
    trajs = integrate_rays(SMOOTH_BG, +1, starts, t_max=0.5, tol=1e-9, direction="forward")
    max_ray = max(cone_angle(t, SMOOTH_BG).max_angle for t in trajs)

    ext = angle_between(group_velocity(+1, EXTREMAL_DIRECTION), np.array([0.0, 0.0, 1.0]))
    elapsed = time.time() - t0
    ok = (
        max_sphere <= CONE_HALF_ANGLE + 1e-9
        and max_ray <= CONE_HALF_ANGLE + 1e-9
        and abs(float(ext) - CONE_HALF_ANGLE) < 1e-6
        and elapsed < 30.0
    )
    report(
        "cone bound",
        ok,
        f"sphere max {max_sphere:.12f}, ray max {max_ray:.12f}, bound {CONE_HALF_ANGLE:.12f}, "
        f"extremal dev {abs(float(ext) - CONE_HALF_ANGLE):.2e}, {elapsed:.1f}s",
    )


@pytest.mark.acceptance
def test_group_velocity_values():
    v1 = group_velocity(+1, (0.0, 0.0, 1.0))
    v2 = group_velocity(+1, (1.0, 0.0, 0.0))
    err = max(float(np.max(np.abs(v1 - np.array([0, 0, 2.0])))), float(np.max(np.abs(v2 - np.array([0, 0, 1.0])))))
    report("group velocity", err < 1e-14, f"max deviation {err:.2e}")


@pytest.mark.acceptance
def test_projection_algebra_and_diagonalization():
    rng = np.random.default_rng(1)
    xi = rng.standard_normal((10_000, 3))
    pip, pi0, pim = projections_batch(xi)
    worst = 0.0
    for P in (pip, pi0, pim):
        worst = max(worst, float(np.max(np.abs(P @ P - P))))
    worst = max(worst, float(np.max(np.abs(pip @ pim))), float(np.max(np.abs(pip @ pi0))))
    worst = max(worst, float(np.max(np.abs(pip + pi0 + pim - np.eye(3)))))

    worst_diag = 0.0
    for _ in range(200):
        x = rng.standard_normal(3)
        v = rng.standard_normal(3) * rng.uniform(0.1, 10)
        p = PhasePoint(tuple(x), tuple(v))
        pval = abs(principal_symbol(SMOOTH_BG, p))
        res = diagonalization_residual(SMOOTH_BG, p)
        worst_diag = max(worst_diag, res / max(pval, 1e-300))
    ok = worst < 1e-13 and worst_diag < 1e-12
    report("projection algebra", ok, f"algebra defect {worst:.2e}, diag residual/|p| {worst_diag:.2e}")


@pytest.mark.acceptance
def test_frequency_evolution_formula():
    traj = integrate_ray(E3, +1, PhasePoint((0, 0, 0), (0.2, 0.5, 1.0)), 1.0, direction="forward", n_uniform=33)
    uniform_res = frequency_drift_check(traj, E3)

    from whistlerlab.fields import ShearField

    B = SumField([E3, ShearField(amp=0.3, scale=2.0)])
    start = PhasePoint((0.3, 0.0, 0.0), (0.4, 0.3, 1.0))
    res = []
    for n in (5, 9, 17):
        t = integrate_ray(B, +1, start, 1.0, tol=1e-12, direction="forward", n_uniform=n)
        res.append(frequency_drift_check(t, B))
    ratios = [res[i] / res[i + 1] for i in range(2)]
    ok = uniform_res < 1e-10 and all(r > 8 for r in ratios)
    report(
        "frequency evolution",
        ok,
        f"uniform residual {uniform_res:.2e}, refinement ratios {[f'{r:.1f}' for r in ratios]} (4th order ~16)",
    )


@pytest.mark.acceptance
def test_diagonalized_system_residual():
    grid = Grid3(64, lam=2.0)
    b = RealVectorField(grid, ifftn(divfree_field(grid, 2, band=grid.kmax / 3).data).real)

    uniform_res = diag_residual(sample_on_grid(E3, grid), b)

    worst = 0.0
    for seed in (3, 4):
        bump = SumField([E3, GaussianCurlBump(amp=0.3, sigma=(1.5, 1.8, 1.2), center=(0.3 * seed, 0, 0))])
        dh = fftn(sample_on_grid(bump, grid).data)
        dh[:, grid.kabs > grid.kmax / 3] = 0.0
        Bbar = RealVectorField(grid, ifftn(leray_project(SpectralVectorField(grid, dh)).data).real)
        worst = max(worst, diag_residual(Bbar, b))
    ok = uniform_res < 1e-10 and worst < 1e-8
    report("diagonalized-system residual", ok, f"uniform {uniform_res:.2e} (<1e-10), smooth random {worst:.2e} (<1e-8)")


@pytest.mark.acceptance
def test_paralinearization_identity():
    t0 = time.time()
    grid = Grid3(64, lam=1.0)
    worst = 0.0
    for seed in range(50):
        b = RealVectorField(grid, ifftn(divfree_field(grid, 100 + seed, band=grid.kmax / 3).data).real)
        g1 = paralin_error(b)
        g2 = paralin_error_balanced(b)
        scale = max(np.max(np.abs(g1.data)), 1e-300)
        worst = max(worst, float(np.max(np.abs(g1.data - g2.data)) / scale))
    elapsed = time.time() - t0
    ok = worst < 1e-10 and elapsed < 60.0
    report("paralinearization identity", ok, f"worst relative defect {worst:.2e} over 50 fields, {elapsed:.1f}s")


@pytest.mark.acceptance
def test_solver_oracles():
    # linearized vs exact multiplier propagator
    grid32 = Grid3(32, lam=2.0)
    b0 = divfree_field(grid32, 5, band=grid32.kmax / 3, amp=1e-3)
    state = solve(SolverState(0.0, b0), 1.0, mode="linearized", background=(0, 0, 1.0), cfl=0.15)
    exact = propagate_constant(b0, 1.0)
    prop_err = float(np.max(np.abs(state.Bh.data - exact.data)) / np.max(np.abs(exact.data)))

    # nonlinear energy conservation at n=64
    grid64 = Grid3(64, lam=4.0)
    pert = divfree_field(grid64, 6, band=grid64.kmax / 3, amp=5e-2)
    data = pert.data.copy()
    data[2, 0, 0, 0] += grid64.n**1.5
    st = SolverState(0.0, SpectralVectorField(grid64, data))
    e0 = field_energy(st.Bh)
    st = solve(st, 0.5, mode="nonlinear")
    drift = abs(field_energy(st.Bh) - e0) / e0
    div_worst = max(max_divergence(st.Bh), max_divergence(state.Bh))

    # 2.5-D cross-validation
    n, lam = 32, 2.0
    rng = np.random.default_rng(7)
    kx = np.fft.fftfreq(n) * n
    keep = np.abs(kx) <= 2
    mask2 = keep[:, None] & keep[None, :]
    psi = np.fft.ifft2(np.fft.fft2(rng.standard_normal((n, n))) * mask2).real * 0.3
    phi = 1.0 + np.fft.ifft2(np.fft.fft2(rng.standard_normal((n, n))) * mask2).real * 0.3
    grid = Grid3(n, lam=lam)
    k1d = grid.k1d.copy()
    k1d[n // 2] = 0.0
    kx2, ky2 = np.meshgrid(k1d, k1d, indexing="ij")
    ph = np.fft.fft2(psi)
    data3 = np.zeros((3, n, n, n))
    data3[0] = np.fft.ifft2(1j * ky2 * ph).real[:, :, None]
    data3[1] = -np.fft.ifft2(1j * kx2 * ph).real[:, :, None]
    data3[2] = phi[:, :, None]
    out3d = solve(SolverState(0.0, SpectralVectorField(grid, fftn(data3))), 0.2, mode="nonlinear", cfl=0.5)
    B = ifftn(out3d.Bh.data).real
    out2d = solve_2p5d(TwoPointFiveDState(n, lam, 0.0, psi, phi), 0.2, cfl=0.5)
    cross_err = float(np.max(np.abs(B[2, :, :, 0] - out2d.phi)))
    div_worst = max(div_worst, max_divergence(out3d.Bh))

    ok = prop_err < 1e-8 and drift < 1e-6 and cross_err < 1e-6 and div_worst < 1e-10
    report(
        "solver oracles",
        ok,
        f"propagator err {prop_err:.2e} (<1e-8), energy drift {drift:.2e} (<1e-6), "
        f"2.5-D err {cross_err:.2e} (<1e-6), divergence {div_worst:.2e} (<1e-10)",
    )


@pytest.mark.acceptance
def test_certificates():
    grid = Grid3(32, lam=4.0)
    spec = RaySampleSpec()  # the default grid

    uni = certify(4.0, E3, grid, CertifyTargets(), spec)
    expect_L = 3.0 * np.sqrt(2.0)
    uni_ok = (
        uni.M == 0.0
        and abs(uni.mu - 1.0) < 1e-12
        and uni.A_sampled == 0.0
        and abs(uni.L_sampled - expect_L) / expect_L < 0.02
    )

    bump = SumField([E3, GaussianCurlBump(amp=1e-3, direction=(0, 1, 0))])
    rep = certify(4.0, bump, grid, CertifyTargets(M=1.0, mu=0.5, A=1.0, R=1.0, L=10.0), spec)

    x, _, _ = grid.xmesh()
    base = sample_on_grid(E3, grid)
    dipped = base.data.copy()
    dipped[2] = 1.0 - np.exp(-(x**2) / 0.5)
    degen = certify(
        4.0, E3, grid, CertifyTargets(), RaySampleSpec(x3_resolution=2, refine_rounds=0),
        B0_sampled=RealVectorField(grid, dipped),
    )

    ok = uni_ok and rep.passed and not degen.passes["nondegeneracy"]
    report(
        "certificates",
        ok,
        f"uniform (M,mu,A,L)=({uni.M:g},{uni.mu:.6f},{uni.A_sampled:g},{uni.L_sampled:.4f}) "
        f"L target {expect_L:.4f} within 2%; bump passed={rep.passed}; degenerate nondeg "
        f"pass={degen.passes['nondegeneracy']}",
    )


@pytest.mark.acceptance
def test_hf_cv_and_composition():
    # high-frequency Calderon-Vaillancourt sweep: documented oscillatory symbol
    grid = Grid3(32, lam=0.25)
    from whistlerlab.experiments import _log_shell_profile

    M = 8.0
    x, _, _ = grid.xmesh()
    reports = []
    for shell in (3, 4, 5):
        c = (2.0 / 3.0) * (1.0 + 0.5 * np.sin(M * x))
        mult = lambda kv, shell=shell: _log_shell_profile(shell, np.sqrt(np.sum(kv**2, axis=0)))

        def func(xp, xip, shell=shell):
            xp = np.asarray(xp, dtype=float)
            r = np.sqrt(np.sum(np.asarray(xip, dtype=float) ** 2, axis=-1))
            return (2.0 / 3.0) * (1.0 + 0.5 * np.sin(M * xp[..., 0])) * _log_shell_profile(shell, r)

        a = SymbolFn(grid, 0.0, [SeparableTerm(c, mult)], func=func)
        reports.append(hf_cv_check(a, shell, k_cut=shell - 2, deriv_order=2))
    above = [r for r in reports if r.threshold_met]
    hf_ok = len(above) > 0 and all(r.ratio <= 10.0 for r in above)

    # composition residual slopes at order 2: expect slopes (1, 0) within 0.2
    grid64 = Grid3(64, lam=0.25)
    x64, _, _ = grid64.xmesh()
    ones = np.ones((grid64.n,) * 3)
    c = 1.0 + 0.5 * np.sin(x64 / grid64.lam)
    a2 = SymbolFn(grid64, 2.0, [SeparableTerm(ones, lambda kv: 1.0 + kv[0] ** 2 + kv[1] ** 2 + kv[2] ** 2)])
    b0 = SymbolFn(grid64, 0.0, [SeparableTerm(c, lambda kv: np.ones(kv.shape[1:]))])
    rep = composition_residual(a2, b0, [4, 5, 6])
    comp_ok = abs(rep.slope1 - 1.0) <= 0.2 and abs(rep.slope2 - 0.0) <= 0.2 and rep.slope1 - rep.slope2 >= 0.8

    ok = hf_ok and comp_ok
    report(
        "high-frequency CV + composition",
        ok,
        f"ratios above threshold {[f'{r.ratio:.2f}' for r in above]} (<=10); "
        f"slopes ({rep.slope1:.3f}, {rep.slope2:.3f}) vs (1, 0) within 0.2",
    )


@pytest.mark.acceptance
def test_norm_engine():
    grid = Grid3(16, lam=2.0)
    # LP telescoping on the lattice
    K = shell_top(grid)
    acc = sum(shell_multiplier(grid, k) for k in range(K + 1))
    telescope = float(np.max(np.abs(acc - 1.0)))
    # slab partition of unity
    pou = max(
        float(np.max(np.abs(slab_partition(grid, ell).chi.sum(axis=0) - 1.0)))
        for ell in range(slab_level_cap(grid) + 1)
    )
    # slow variance constants
    rng = np.random.default_rng(8)
    b = SpaceTimeField(grid, np.linspace(0, 1, 5), rng.standard_normal((5, 1, 16, 16, 16)))
    worst_c = 0.0
    for k, kp in [(0, 3), (2, 5), (4, 1)]:
        worst_c = max(worst_c, xk_norm(k, b) / (2.0 ** (abs(k - kp) / 2.0) * xk_norm(kp, b)))
        worst_c = max(worst_c, yk_norm(k, b) / (2.0 ** (abs(k - kp) / 2.0) * yk_norm(kp, b)))
    # translation quasi-invariance
    from whistlerlab.dyadic import ell1_hs_norm

    dh = fftn(rng.standard_normal((3, 16, 16, 16)))
    dh[:, grid.kabs > 2.0] = 0.0
    f = RealVectorField(grid, ifftn(dh).real)
    rolled = RealVectorField(grid, np.roll(f.data, grid.n // 8, axis=-1))
    ratio = ell1_hs_norm(1.0, f) / ell1_hs_norm(1.0, rolled)
    trans_c = max(ratio, 1.0 / ratio)
    ok = telescope < 1e-12 and pou < 1e-12 and worst_c <= 4.0 and trans_c <= 4.0
    report(
        "norm engine",
        ok,
        f"telescoping {telescope:.2e}, partition {pou:.2e}, slow-variance C {worst_c:.2f} (<=4), "
        f"translation C {trans_c:.2f} (<=4)",
    )


@pytest.mark.acceptance
def test_local_smoothing_constant_coefficients():
    t0 = time.time()
    grid = Grid3(128, lam=1.0)
    rep = measure_smoothing(None, [2, 3, 4, 5], grid, n_times=48)
    elapsed = time.time() - t0
    ok = abs(rep.slope) <= 0.1 and elapsed < 600.0
    ratios = [f"{r['le_ratio']:.4f}" for r in rep.rows]
    report(
        "local smoothing (constant coefficients)",
        ok,
        f"LE ratios {ratios}, slope {rep.slope:+.4f} in [-0.1, 0.1], {elapsed:.0f}s (<600s)",
    )

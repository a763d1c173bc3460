"""Quantitative data-class certification and the ray-based multiplier symbols.

Measures (M, mu, A, R, L, eps) for a background field against user targets.
All sup-over-rays quantities are sampled lower bounds of the true suprema;
the sampling spec rides along in the report, and refinement only ever adds
rays, so accumulated maxima are monotone in the ray count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .dyadic import ell1_hs_norm, phi0, smooth_cutoff_above, smooth_cutoff_below
from .fields import FieldEvaluator, sample_on_grid
from .grid import Grid3, RealVectorField, fftn, ifftn
from .rays import RayTrajectory, hamiltonian_rhs, integrate_rays
from .symbols import PhasePoint

__all__ = [
    "RaySampleSpec",
    "CertifyTargets",
    "CertificateReport",
    "size_bound",
    "nondegeneracy",
    "mizohata_constant",
    "asymptotic_uniformity",
    "nontrapping_length",
    "certify",
    "envelope",
    "f_out",
    "doi_multiplier",
    "renorm_psi",
    "commutator_symbol",
    "DEFAULT_CONSTANTS",
]

# C_f, C_med, C_0 of the multiplier constructions: smallest integer values
# passing the positivity probe on the uniform field.
DEFAULT_CONSTANTS = {"C_f": 1.0, "C_med": 1.0, "C_0": 1.0}


@dataclass(frozen=True)
class RaySampleSpec:
    """Start grid for sup-over-bicharacteristics sampling.

    x^3 stations cover [-2R, 2R] at spacing R/x3_resolution; transverse
    stations exploit approximate invariance of escape in (x^1, x^2);
    directions are the 26-point integer sphere grid with |xi(0)| = 1,
    refined adaptively near the running maximizer.
    """

    x3_resolution: int = 8
    transverse_stations: tuple = ((0.0, 0.0), (0.6, 0.3), (-0.4, 0.7))
    refine_rounds: int = 3
    refine_points: int = 24
    refine_shrink: float = 0.5
    t_max: float = 60.0
    tol: float = 1e-9
    escape_margin: float = 0.25  # escape threshold = (2 + margin) R

    def ray_count(self) -> int:
        n_x3 = 4 * self.x3_resolution + 1
        return n_x3 * len(self.transverse_stations) * 26 + self.refine_rounds * self.refine_points


def _sphere26() -> np.ndarray:
    dirs = []
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            for k in (-1, 0, 1):
                if (i, j, k) != (0, 0, 0):
                    v = np.array([i, j, k], dtype=float)
                    dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


def _cap_points(center: np.ndarray, radius: float, count: int) -> np.ndarray:
    """Golden-spiral points on the geodesic cap of the given radius."""
    center = center / np.linalg.norm(center)
    a = np.array([1.0, 0.0, 0.0]) if abs(center[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(center, a)
    u /= np.linalg.norm(u)
    v = np.cross(center, u)
    i = np.arange(count)
    r = radius * np.sqrt((i + 0.5) / count)
    th = np.pi * (1 + 5**0.5) * i
    pts = (
        np.cos(r)[:, None] * center[None]
        + np.sin(r)[:, None] * (np.cos(th)[:, None] * u[None] + np.sin(th)[:, None] * v[None])
    )
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _starts_for(spec: RaySampleSpec, R: float, dirs: np.ndarray, x3_stations=None) -> np.ndarray:
    if x3_stations is None:
        x3_stations = np.linspace(-2 * R, 2 * R, 4 * spec.x3_resolution + 1)
    starts = []
    for z in np.atleast_1d(x3_stations):
        for (x1, x2) in spec.transverse_stations:
            for d in dirs:
                starts.append([x1 * R, x2 * R, z, d[0], d[1], d[2]])
    return np.array(starts)


# ---------------------------------------------------------------------------
# Quadrature along sampled trajectories.
# ---------------------------------------------------------------------------

def _trapezoid_on_samples(t: np.ndarray, vals: np.ndarray) -> float:
    return float(np.trapezoid(vals, t))


def _quad_along(traj: RayTrajectory, fn, m: int = 8) -> float:
    """Composite-Simpson quadrature of fn(x, xi) along the trajectory.

    Each sample interval is subdivided m times with linear phase-space
    interpolation (exact where the flow is straight, which is exactly where
    the adaptive steps are large).
    """
    t, x, xi = traj.t, traj.x, traj.xi
    if len(t) < 2:
        return 0.0
    m = max(2, m + (m % 2))  # Simpson needs an even count
    frac = np.linspace(0.0, 1.0, m + 1)
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    dt = np.diff(t)  # (N-1,)
    xs = x[:-1, None, :] + frac[None, :, None] * np.diff(x, axis=0)[:, None, :]
    xis = xi[:-1, None, :] + frac[None, :, None] * np.diff(xi, axis=0)[:, None, :]
    vals = fn(xs.reshape(-1, 3), xis.reshape(-1, 3)).reshape(len(dt), m + 1)
    return float(np.sum(dt / (3.0 * m) * (vals @ w)))


def _slab_arclength(traj: RayTrajectory, B: FieldEvaluator, halfwidth: float) -> float:
    """integral of 1_{|x^3| < halfwidth} |Xdot| dt with segment clipping."""
    xdot, _ = hamiltonian_rhs(B, traj.sign, traj.x, traj.xi)
    speed = np.linalg.norm(xdot, axis=1)
    t = traj.t
    x3 = traj.x[:, 2]
    total = 0.0
    for i in range(len(t) - 1):
        t0, t1 = t[i], t[i + 1]
        z0, z1 = x3[i], x3[i + 1]
        v0, v1 = speed[i], speed[i + 1]
        in0 = abs(z0) < halfwidth
        in1 = abs(z1) < halfwidth
        if not in0 and not in1:
            continue
        f0, f1 = 0.0, 1.0
        if in0 != in1:
            # linear-in-t crossing of the nearest boundary
            zb = halfwidth if max(z0, z1) > halfwidth else -halfwidth
            frac = (zb - z0) / (z1 - z0)
            if in0:
                f1 = frac
            else:
                f0 = frac
        dt = (f1 - f0) * (t1 - t0)
        va = v0 + (v1 - v0) * f0
        vb = v0 + (v1 - v0) * f1
        total += 0.5 * (va + vb) * dt
    return total


def _mizohata_integral(traj: RayTrajectory, B: FieldEvaluator) -> float:
    def fn(xs, xis):
        grad = B.gradB(xs)
        gnorm = np.linalg.norm(grad.reshape(len(xs), 9), axis=1)
        return gnorm * np.linalg.norm(xis, axis=1)

    return _quad_along(traj, fn, m=4)


# ---------------------------------------------------------------------------
# The five measurements.
# ---------------------------------------------------------------------------

def size_bound(s: float, B0: RealVectorField) -> float:
    pert = B0.data.copy()
    pert[2] -= 1.0
    return ell1_hs_norm(s, RealVectorField(B0.grid, pert))


def nondegeneracy(B0: RealVectorField) -> float:
    """Grid min of |B0| minus a first-order interpolation safety margin."""
    mag = np.sqrt(np.sum(B0.data**2, axis=0))
    grid = B0.grid
    k = grid.deriv_kvec
    fh = fftn(B0.data)
    gmax = 0.0
    for a in range(3):
        gmax = max(gmax, float(np.max(np.abs(ifftn(1j * k[a] * fh).real))))
    margin = 0.5 * grid.spacing * gmax
    return float(mag.min() - margin)


@dataclass
class _RayScan:
    value: float
    best_start: np.ndarray | None
    unbounded: bool
    rays: int


def _scan_rays(B, R, spec, integrand, sign=+1):
    """Maximize a per-trajectory integral over the sampled start set, with
    adaptive direction refinement near the running maximizer."""
    halfwidth = (2.0 + spec.escape_margin) * R
    best = _RayScan(0.0, None, False, 0)

    max_step = R / 16.0  # |xi(0)| = 1 rays move at speed <= ~2|B|

    def run(starts):
        nonlocal best
        trajs = integrate_rays(
            B, sign, starts, spec.t_max, slab_halfwidth=halfwidth, tol=spec.tol, max_step=max_step
        )
        for st, traj in zip(starts, trajs):
            kinds = {e.kind for e in traj.events}
            if "time-limit" in kinds and not kinds & {"slab-exit-top", "slab-exit-bottom"}:
                best.unbounded = True
            val = integrand(traj)
            if val > best.value:
                best.value = val
                best.best_start = st
            best.rays += 1

    run(_starts_for(spec, R, _sphere26()))
    radius = np.pi / 6
    for _ in range(spec.refine_rounds):
        if best.best_start is None:
            break
        center = best.best_start[3:6]
        dirs = _cap_points(center, radius, spec.refine_points)
        starts = np.concatenate(
            [np.tile(best.best_start[:3], (len(dirs), 1)), dirs], axis=1
        )
        run(starts)
        radius *= spec.refine_shrink
    return best


def mizohata_constant(B: FieldEvaluator, R: float = 1.0, spec: RaySampleSpec | None = None):
    """Sampled sup over two-sided rays of integral |grad B0(X)| |Xi| dt."""
    spec = spec or RaySampleSpec()
    scan = _scan_rays(B, R, spec, lambda traj: _mizohata_integral(traj, B))
    return scan


def nontrapping_length(B: FieldEvaluator, R: float = 1.0, spec: RaySampleSpec | None = None):
    """Sampled sup of the slab-restricted arclength integral."""
    spec = spec or RaySampleSpec()
    scan = _scan_rays(B, R, spec, lambda traj: _slab_arclength(traj, B, 2.0 * R))
    return scan


def asymptotic_uniformity(s: float, B0: RealVectorField, R: float) -> float:
    if R < 1:
        raise ValueError("R must be >= 1")
    pert = B0.data.copy()
    pert[2] -= 1.0
    chi = smooth_cutoff_above(np.abs(B0.grid.x1d), R)
    pert = pert * chi[None, None, None, :]
    return ell1_hs_norm(s, RealVectorField(B0.grid, pert))


@dataclass(frozen=True)
class CertifyTargets:
    M: float = 1.0
    mu: float = 0.5
    A: float = 1.0
    R: float = 1.0
    L: float = 10.0
    eps: float = 0.25


@dataclass
class CertificateReport:
    s: float
    targets: CertifyTargets
    M: float = np.inf
    mu: float = -np.inf
    A_sampled: float = np.inf
    eps: float = np.inf
    L_sampled: float = np.inf
    unbounded: bool = False
    ray_count: int = 0
    sampling: dict = dc_field(default_factory=dict)
    passes: dict = dc_field(default_factory=dict)
    provenance: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.passes.values())

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "targets": self.targets.__dict__,
            "measured": {
                "M": self.M,
                "mu": self.mu,
                "A_sampled": self.A_sampled,
                "eps": self.eps,
                "L_sampled": self.L_sampled,
            },
            "unbounded": self.unbounded,
            "ray_count": self.ray_count,
            "sampling": self.sampling,
            "passes": self.passes,
            "passed": self.passed,
            "provenance": self.provenance,
        }


def certify(
    s: float,
    B: FieldEvaluator,
    grid: Grid3,
    targets: CertifyTargets = CertifyTargets(),
    spec: RaySampleSpec | None = None,
    B0_sampled: RealVectorField | None = None,
) -> CertificateReport:
    """Run the four measurements against Definition-4.2-style targets.

    Ray quantities are sampled suprema (lower bounds of the true sup), so a
    certificate certifies failure rigorously and success only up to the
    recorded sampling resolution.
    """
    spec = spec or RaySampleSpec()
    rep = CertificateReport(s=s, targets=targets)
    sample = B0_sampled if B0_sampled is not None else sample_on_grid(B, grid)

    rep.M = size_bound(s, sample)
    rep.mu = nondegeneracy(sample)
    rep.eps = asymptotic_uniformity(s, sample, targets.R)
    rep.provenance = {
        "M": "ell1_I H^s norm of the grid-sampled perturbation",
        "mu": "grid min |B| minus 0.5 h max|grad B| margin",
        "A_sampled": "max over sampled two-sided rays of the Mizohata integral (trapezoid on adaptive samples)",
        "eps": "smooth chi_{>R}(|x^3|) cutoff times the perturbation, ell1_I H^s",
        "L_sampled": "max over sampled rays of the slab arclength with segment clipping",
    }
    rep.sampling = {
        "x3_resolution": spec.x3_resolution,
        "transverse_stations": list(map(list, spec.transverse_stations)),
        "xi_grid": "26-point integer sphere grid, |xi(0)| = 1",
        "refine_rounds": spec.refine_rounds,
        "refine_points": spec.refine_points,
        "t_max": spec.t_max,
        "tol": spec.tol,
        "n": grid.n,
        "lam": grid.lam,
    }

    if rep.mu > 0:
        miz = mizohata_constant(B, targets.R, spec)
        lng = nontrapping_length(B, targets.R, spec)
        rep.A_sampled = miz.value
        rep.L_sampled = lng.value
        rep.unbounded = miz.unbounded or lng.unbounded
        rep.ray_count = miz.rays + lng.rays
    else:
        rep.unbounded = True

    rep.passes = {
        "size": bool(rep.M < targets.M),
        "nondegeneracy": bool(rep.mu > targets.mu),
        "mizohata": bool((not rep.unbounded) and rep.A_sampled < targets.A),
        "asymptotic_uniformity": bool(rep.eps < targets.eps),
        "nontrapping": bool((not rep.unbounded) and rep.L_sampled < targets.L),
    }
    return rep


# ---------------------------------------------------------------------------
# Multiplier symbols along rays.
# ---------------------------------------------------------------------------

@dataclass
class Envelope:
    z: np.ndarray
    F: np.ndarray
    k0: int

    def __call__(self, z):
        return np.interp(np.asarray(z, dtype=float), self.z, self.F)

    def integral(self) -> float:
        return float(np.trapezoid(self.F, self.z))


def envelope(Bbar: RealVectorField, k0: int) -> Envelope:
    """Positive envelope of |grad Bbar| in x^3: convolution of the per-plane
    sups with the <2^{k0} z>^{-100} 2^{k0} kernel.

    The kernel width 2^{-k0} is typically below the plane spacing, so the
    kernel is integrated exactly over each source cell (the plane sups are
    treated as piecewise constant)."""
    grid = Bbar.grid
    k = grid.deriv_kvec
    fh = fftn(Bbar.data)
    grad = np.stack([ifftn(1j * k[a] * fh).real for a in range(3)])
    gmag = np.sqrt(np.sum(grad**2, axis=(0, 1)))  # Frobenius over (a, comp)
    plane_sup = gmag.max(axis=(0, 1))
    z = grid.x1d
    dz = grid.spacing
    sub = np.linspace(-dz / 2, dz / 2, 33)
    # cell-integrated kernel: K[i, j] = int_{cell j} <2^k0 (z_i - z')>^-100 2^k0 dz'
    u = 2.0**k0 * (z[:, None, None] - (z[None, :, None] + sub[None, None, :]))
    kern_sub = (1.0 + u**2) ** -50 * 2.0**k0
    kern = np.trapezoid(kern_sub, sub, axis=2)
    return Envelope(z, kern @ plane_sup, k0)


@dataclass
class OutgoingWeight:
    z: np.ndarray
    vals: np.ndarray

    def __call__(self, z):
        return np.interp(np.asarray(z, dtype=float), self.z, self.vals)


def f_out(F: Envelope, R0: float, C_f: float | None = None, C_med: float | None = None) -> OutgoingWeight:
    """f_out(x^3) = 12 C_f int (1 - chi_{<R0}) F + 12 C_med int R0^{-1}(chi_{<8R0} - chi_{<R0})."""
    C_f = DEFAULT_CONSTANTS["C_f"] if C_f is None else C_f
    C_med = DEFAULT_CONSTANTS["C_med"] if C_med is None else C_med
    z = F.z
    integrand = 12.0 * C_f * (1.0 - smooth_cutoff_below(z, R0)) * F.F + 12.0 * C_med / R0 * (
        smooth_cutoff_below(z, 8.0 * R0) - smooth_cutoff_below(z, R0)
    )
    dz = z[1] - z[0]
    vals = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * dz)])
    return OutgoingWeight(z, vals)


def doi_multiplier(
    B: FieldEvaluator,
    R0: float,
    p: PhasePoint,
    sign: int = +1,
    t_max: float = 80.0,
    tol: float = 1e-9,
) -> float:
    """f_in(x, xi) = integral_{-inf}^0 chi_{<2R0}(X^3(t)) |Xi(t)| dt by
    backward ray quadrature, truncated at escape."""
    y0 = np.concatenate(p.arrays())
    xdot, _ = hamiltonian_rhs(B, sign, y0[:3], y0[3:])
    max_step = R0 / (8.0 * max(float(np.linalg.norm(xdot)), 1e-12))
    traj = integrate_rays(
        B,
        sign,
        y0[None],
        t_max,
        slab_halfwidth=4.0 * R0 * 1.05,
        tol=tol,
        direction="backward",
        max_step=max_step,
    )[0]
    if any(e.kind == "time-limit" for e in traj.events):
        warnings.warn("doi_multiplier: ray had not escaped by t_max; integral truncated")
    fn = lambda xs, xis: smooth_cutoff_below(xs[:, 2], 2.0 * R0) * np.linalg.norm(xis, axis=1)
    return _quad_along(traj, fn)


def commutator_symbol(B: FieldEvaluator, sigma: float, x: np.ndarray, xi: np.ndarray):
    """c^{sigma(1)}(x, xi) = -sigma d_a B^b xi_a xi_b |xi| / <xi>^2."""
    grad = B.gradB(x)
    quad = np.einsum("...ab,...a,...b->...", grad, xi, xi)
    nrm2 = np.sum(xi**2, axis=-1)
    return -sigma * quad * np.sqrt(nrm2) / (1.0 + nrm2)


def _psi_tilde(B, sigma, R, p: PhasePoint, t_max, tol) -> float:
    """Two-sided weighted integral of the commutator symbol along the ray."""
    total = 0.0
    y0 = np.concatenate(p.arrays())
    xdot, _ = hamiltonian_rhs(B, +1, y0[:3], y0[3:])
    max_step = R / (4.0 * max(float(np.linalg.norm(xdot)), 1e-12))
    for direction, sgn in (("backward", +0.5), ("forward", -0.5)):
        traj = integrate_rays(
            B,
            +1,
            y0[None],
            t_max,
            slab_halfwidth=32.0 * R * 1.05,
            tol=tol,
            direction=direction,
            max_step=max_step,
        )[0]
        if any(e.kind == "time-limit" for e in traj.events):
            warnings.warn("renorm_psi: ray had not escaped by t_max; integral truncated")
        fn = lambda xs, xis: smooth_cutoff_below(xs[:, 2], 16.0 * R) * commutator_symbol(B, sigma, xs, xis)
        total += sgn * _quad_along(traj, fn)
    return total


def _q_profile(z: float, R: float) -> float:
    """q(z) = int_0^z R^{-1}(chi_{(8R,16R)}(-z') + chi_{(8R,16R)}(z')) dz'."""

    def bump(u):
        # smooth bump: 1 on (1, 2), supported in (1/2, 4), scaled to (8R, 16R)
        v = np.abs(u) / (8.0 * R)
        return (1.0 - phi0(2.0 * v)) * phi0(v / 2.0)

    zz = abs(float(z))
    if zz == 0.0:
        return 0.0
    grid_z = np.linspace(0.0, zz, 513)
    vals = (bump(-grid_z) + bump(grid_z)) / R
    q = float(np.trapezoid(vals, grid_z))
    return q if z > 0 else -q


def renorm_psi(
    B: FieldEvaluator,
    sigma: float,
    R: float,
    sign: int,
    p: PhasePoint,
    A: float,
    C_0: float | None = None,
    t_max: float = 80.0,
    tol: float = 1e-9,
) -> float:
    """psi_{+-}(x, xi) = chi_{>1}(xi)(chi_{<16R}(x^3) psi~ + sign sigma C_0 A q(x^3))."""
    C_0 = DEFAULT_CONSTANTS["C_0"] if C_0 is None else C_0
    x, xi = p.arrays()
    cut = float(smooth_cutoff_above(np.linalg.norm(xi), 1.0))
    if cut == 0.0:
        return 0.0
    pt = _psi_tilde(B, sigma, R, p, t_max, tol)
    chi16 = float(smooth_cutoff_below(x[2], 16.0 * R))
    return cut * (chi16 * pt + sign * sigma * C_0 * A * _q_profile(x[2], R))

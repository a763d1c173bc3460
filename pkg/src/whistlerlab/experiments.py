"""Experiment runners behind the service endpoints and CLI subcommands.

Each runner consumes a validated config and produces a RunResult whose
artifacts are byte-deterministic for a given config (fixed float formats,
sorted JSON keys, no timestamps); every artifact embeds the config hash and
package version.
"""

from __future__ import annotations

import base64
import io
import json

import numpy as np

from . import __version__
from .certify import CertifyTargets, RaySampleSpec, certify
from .dyadic import ell1_hs_report
from .fields import sample_on_grid
from .grid import RealVectorField, SpectralVectorField, fftn, ifftn, leray_project, save_field
from .psdo import SeparableTerm, SymbolFn, composition_residual, hf_cv_check
from .rays import cone_angle, integrate_rays
from .service.models import (
    Artifact,
    CertifyConfig,
    NormsConfig,
    PsdoCheckConfig,
    RunResult,
    SmoothConfig,
    SolveConfig,
    TraceConfig,
    config_hash,
)
from .smoothing import measure_smoothing
from .solver import (
    BlowupError,
    SolverState,
    TwoPointFiveDState,
    field_energy,
    max_divergence,
    propagate_constant,
    solve,
    solve_2p5d,
)
from .symbols import angle_between, group_velocity

EVENT_CODES = {
    "": 0,
    "slab-exit-top": 1,
    "slab-exit-bottom": 2,
    "time-limit": 3,
    "frequency-blowup": 4,
}


def _json_artifact(name: str, payload: dict, hash_: str) -> Artifact:
    body = dict(payload)
    body["config_sha256"] = hash_
    body["version"] = __version__
    return Artifact(name=name, kind="json", text=json.dumps(body, sort_keys=True, indent=2) + "\n")


def _csv_artifact(name: str, header: list[str], rows: list[list], hash_: str) -> Artifact:
    buf = io.StringIO()
    buf.write(f"# config_sha256={hash_} version={__version__}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return Artifact(name=name, kind="csv", text=buf.getvalue())


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def _fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count)
    z = 1.0 - (2.0 * i + 1.0) / count
    r = np.sqrt(np.maximum(1.0 - z**2, 0.0))
    th = np.pi * (1 + 5**0.5) * i
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

def run_trace(cfg: TraceConfig) -> RunResult:
    h = config_hash(cfg)
    field, _ = cfg.field.build(cfg.grid.build())
    summary: dict = {"rays": 0, "events": {}}
    artifacts: list[Artifact] = []

    # cone-angle scan over the direction sphere (pointwise group velocities)
    max_angle = 0.0
    if cfg.sphere_samples > 0:
        dirs = _fibonacci_sphere(cfg.sphere_samples)
        v = group_velocity(cfg.sign, dirs)
        ang = angle_between(v, float(cfg.sign) * np.array([0.0, 0.0, 1.0]))
        max_angle = float(np.max(ang))
        summary["sphere_samples"] = cfg.sphere_samples

    starts = [np.asarray(row, dtype=float) for row in cfg.starts]
    if cfg.rays_from_sphere > 0:
        dirs = _fibonacci_sphere(cfg.rays_from_sphere)
        for d in dirs:
            starts.append(np.concatenate([np.zeros(3), d]))

    events_count: dict[str, int] = {}
    per_ray_angles: list[float] = []
    if starts:
        batch = np.stack(starts)
        trajs = integrate_rays(
            field,
            cfg.sign,
            batch,
            cfg.t_max,
            slab_halfwidth=cfg.slab_halfwidth,
            tol=cfg.tol,
            direction="forward",
            n_uniform=cfg.n_uniform,
        )
        for i, traj in enumerate(trajs):
            rep = cone_angle(traj, field)
            per_ray_angles.append(rep.max_angle)
            max_angle = max(max_angle, rep.max_angle)
            rows = []
            ev_at = {round(e.t, 12): e.kind for e in traj.events}
            Bx = field.B(traj.x)
            p_vals = np.sum(Bx * traj.xi, axis=1) * np.linalg.norm(traj.xi, axis=1)
            for j in range(len(traj.t)):
                kind = ev_at.get(round(traj.t[j], 12), "")
                rows.append(
                    [
                        traj.t[j],
                        *traj.x[j],
                        *traj.xi[j],
                        np.linalg.norm(traj.xi[j]),
                        p_vals[j],
                        EVENT_CODES.get(kind, 0),
                    ]
                )
            artifacts.append(
                _csv_artifact(
                    f"ray_{i:04d}.csv",
                    ["t", "x1", "x2", "x3", "xi1", "xi2", "xi3", "xi_norm", "p", "event_flag"],
                    rows,
                    h,
                )
            )
            for e in traj.events:
                events_count[e.kind] = events_count.get(e.kind, 0) + 1
        summary["rays"] = len(trajs)

    summary["events"] = events_count
    summary["max_cone_angle"] = max_angle
    summary["cone_bound"] = float(np.arctan(1.0 / (2.0 * np.sqrt(2.0))))
    summary["per_ray_max_angle"] = per_ray_angles

    # |B| slice on the x^2 = 0 plane, for ray-bundle underlays
    grid = cfg.grid.build()
    half = grid.box_length / 2.0
    axis = np.linspace(-half, half, 65)
    X1, X3 = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([X1, np.zeros_like(X1), X3], axis=-1)
    Bv = field.B(pts)
    slice_rows = []
    for i in range(65):
        for j in range(65):
            slice_rows.append([X1[i, j], X3[i, j], Bv[i, j, 0], Bv[i, j, 1], Bv[i, j, 2], float(np.linalg.norm(Bv[i, j]))])
    artifacts.append(_csv_artifact("field_slice.csv", ["x1", "x3", "B1", "B2", "B3", "Bmag"], slice_rows, h))
    artifacts.append(_json_artifact("trace_summary.json", summary, h))
    return RunResult(command="trace", config_sha256=h, version=__version__, summary=summary, artifacts=artifacts)


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def run_certify(cfg: CertifyConfig) -> RunResult:
    h = config_hash(cfg)
    grid = cfg.grid.build()
    field, sampled = cfg.field.build(grid)
    targets = CertifyTargets(**cfg.targets.model_dump())
    spec = RaySampleSpec(
        x3_resolution=cfg.rays.x3_resolution,
        refine_rounds=cfg.rays.refine_rounds,
        refine_points=cfg.rays.refine_points,
        t_max=cfg.rays.t_max,
        tol=cfg.rays.tol,
    )
    rep = certify(cfg.s, field, grid, targets, spec, B0_sampled=sampled)
    summary = rep.to_dict()
    artifacts = [_json_artifact("certificate.json", summary, h)]
    return RunResult(
        command="certify",
        config_sha256=h,
        version=__version__,
        summary=summary,
        artifacts=artifacts,
        numerical_failure=bool(rep.unbounded and rep.mu > 0),
        certificate_failed=not rep.passed,
    )


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _initial_data(cfg: SolveConfig, grid):
    rng = np.random.default_rng(cfg.data.seed)
    if cfg.data.kind == "random_divfree":
        data = rng.standard_normal((3, grid.n, grid.n, grid.n))
        dh = fftn(data)
        dh[:, 0, 0, 0] = 0.0
        dh[:, grid.kabs > cfg.data.band_fraction * grid.kmax] = 0.0
        dh = leray_project(SpectralVectorField(grid, dh)).data
        phys_max = float(np.max(np.abs(ifftn(dh).real)))
        return SpectralVectorField(grid, dh * (cfg.data.amp / max(phys_max, 1e-300)))
    if cfg.data.kind == "packet":
        from .smoothing import wavepacket_data

        b = wavepacket_data(grid, cfg.data.k)
        return SpectralVectorField(grid, b.data * cfg.data.amp)
    if cfg.data.kind == "bump_b":
        from .fields import GaussianCurlBump

        pert = sample_on_grid(GaussianCurlBump(amp=cfg.data.amp), grid)
        return leray_project(SpectralVectorField(grid, fftn(pert.data)))
    raise ValueError(cfg.data.kind)


def run_solve(cfg: SolveConfig) -> RunResult:
    h = config_hash(cfg)
    grid = cfg.grid.build()
    summary: dict = {"mode": cfg.mode, "n": grid.n, "lam": grid.lam, "T": cfg.T}
    artifacts: list[Artifact] = []

    try:
        if cfg.mode == "2p5d":
            rng = np.random.default_rng(cfg.data.seed)
            n = grid.n
            kx = np.fft.fftfreq(n) * n
            keep = np.abs(kx) <= 2
            mask2 = keep[:, None] & keep[None, :]
            psi = np.fft.ifft2(np.fft.fft2(rng.standard_normal((n, n))) * mask2).real * cfg.data.amp
            phi = 1.0 + np.fft.ifft2(np.fft.fft2(rng.standard_normal((n, n))) * mask2).real * cfg.data.amp
            state2 = TwoPointFiveDState(n, grid.lam, 0.0, psi, phi)
            out = solve_2p5d(state2, cfg.T, dt=cfg.dt, cfl=cfg.cfl)
            summary["psi_mean_drift"] = float(abs(out.psi.mean() - psi.mean()))
            summary["phi_mean_drift"] = float(abs(out.phi.mean() - phi.mean()))
            artifacts.append(_json_artifact("solve_summary.json", summary, h))
            return RunResult(command="solve", config_sha256=h, version=__version__, summary=summary, artifacts=artifacts)

        b0 = _initial_data(cfg, grid)
        background_vec = tuple(cfg.background.vector)
        if cfg.mode == "constant":
            bh = propagate_constant(b0, cfg.T)
            diag_rows = [[cfg.T, field_energy(bh), max_divergence(bh)]]
            final = bh
        else:
            if cfg.mode == "nonlinear":
                # evolve B = (uniform background vector) + b
                data = b0.data.copy()
                for c in range(3):
                    data[c, 0, 0, 0] += grid.n**1.5 * cfg.background.vector[c]
                state = SolverState(0.0, SpectralVectorField(grid, data))
                state = solve(state, cfg.T, dt=cfg.dt, cfl=cfg.cfl, mode="nonlinear", record_every=cfg.record_every)
            elif cfg.mode == "linearized":
                state = SolverState(0.0, b0)
                state = solve(
                    state,
                    cfg.T,
                    dt=cfg.dt,
                    cfl=cfg.cfl,
                    mode="linearized",
                    background=background_vec,
                    record_every=cfg.record_every,
                )
            elif cfg.mode == "diagonalized":
                final_h = _solve_diagonalized(cfg, grid, b0)
                diag_rows = [[cfg.T, field_energy(final_h), max_divergence(final_h)]]
                summary["final_energy"] = field_energy(final_h)
                artifacts.append(_csv_artifact("diagnostics.csv", ["t", "energy", "max_divergence"], diag_rows, h))
                artifacts.append(_json_artifact("solve_summary.json", summary, h))
                return RunResult(command="solve", config_sha256=h, version=__version__, summary=summary, artifacts=artifacts)
            else:
                raise ValueError(cfg.mode)
            diag_rows = [[d["t"], d["energy"], d["max_divergence"]] for d in state.diagnostics]
            final = state.Bh
    except BlowupError as exc:
        summary["blowup"] = str(exc)
        artifacts.append(_json_artifact("solve_summary.json", summary, h))
        return RunResult(
            command="solve",
            config_sha256=h,
            version=__version__,
            summary=summary,
            artifacts=artifacts,
            numerical_failure=True,
        )

    summary["final_energy"] = field_energy(final)
    summary["final_max_divergence"] = max_divergence(final)
    artifacts.append(_csv_artifact("diagnostics.csv", ["t", "energy", "max_divergence"], diag_rows, h))
    if cfg.snapshots > 0:
        phys = RealVectorField(grid, ifftn(final.data).real)
        import tempfile, os

        with tempfile.NamedTemporaryFile(delete=False) as fh:
            path = fh.name
        try:
            save_field(path, phys, extra={"config_sha256": h, "version": __version__, "t": cfg.T})
            with open(path, "rb") as fh:
                raw = fh.read()
        finally:
            os.unlink(path)
        artifacts.append(Artifact(name="final_field.bin", kind="binary", b64=base64.b64encode(raw).decode()))
    artifacts.append(_json_artifact("solve_summary.json", summary, h))
    return RunResult(command="solve", config_sha256=h, version=__version__, summary=summary, artifacts=artifacts)


def _solve_diagonalized(cfg: SolveConfig, grid, b0: SpectralVectorField) -> SpectralVectorField:
    """RK4 on the assembled diagonalized system for (b_+, b_-)."""
    from .solver import assemble_diag_rhs, cfl_dt, pi_pm_apply

    background, sampled = cfg.background.build(grid)
    Bbar = sampled if sampled is not None else sample_on_grid(background, grid)
    bp = pi_pm_apply(b0.data, grid, +1)
    bm = pi_pm_apply(b0.data, grid, -1)
    dt = cfg.dt or cfl_dt(grid, float(np.max(np.abs(Bbar.data))), cfg.cfl)
    steps = max(1, int(np.ceil(cfg.T / dt)))
    dt = cfg.T / steps

    def rhs(bp_, bm_):
        return assemble_diag_rhs(Bbar, bp_, bm_)

    for _ in range(steps):
        k1p, k1m = rhs(bp, bm)
        k2p, k2m = rhs(bp + 0.5 * dt * k1p, bm + 0.5 * dt * k1m)
        k3p, k3m = rhs(bp + 0.5 * dt * k2p, bm + 0.5 * dt * k2m)
        k4p, k4m = rhs(bp + dt * k3p, bm + dt * k3m)
        bp = bp + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        bm = bm + dt / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
    return SpectralVectorField(grid, bp + bm)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def run_norms(cfg: NormsConfig) -> RunResult:
    h = config_hash(cfg)
    grid = cfg.grid.build()
    field, sampled = cfg.field.build(grid)
    f = sampled if sampled is not None else sample_on_grid(field, grid)
    if cfg.subtract_background:
        data = f.data.copy()
        data[2] -= 1.0
        f = RealVectorField(grid, data)
    reports = {}
    for s in cfg.s_values:
        reports[f"s={s:g}"] = ell1_hs_report(s, f)
    summary = {
        "field": cfg.field.describe(),
        "totals": {key: rep["total"] for key, rep in reports.items()},
    }
    artifacts = [_json_artifact("norm_report.json", {"summary": summary, "reports": reports}, h)]
    return RunResult(command="norms", config_sha256=h, version=__version__, summary=summary, artifacts=artifacts)


# ---------------------------------------------------------------------------
# smooth
# ---------------------------------------------------------------------------

def run_smooth(cfg: SmoothConfig) -> RunResult:
    h = config_hash(cfg)
    grid = cfg.grid.build()
    if cfg.background is None:
        background = None
        bg_id = "uniform-e3"
        advisory = False
    else:
        ev, sampled = cfg.background.build(grid)
        background = sampled if sampled is not None else sample_on_grid(ev, grid)
        bg_id = cfg.background.describe()
        advisory = True  # non-uniform backgrounds are advisory unless certified upstream
    rep = measure_smoothing(
        background,
        cfg.ks,
        grid,
        T=cfg.T,
        travel_fraction=cfg.travel_fraction,
        n_times=cfg.n_times,
        cfl=cfg.cfl,
        background_id=bg_id,
        advisory=advisory,
    )
    rows = [[r["k"], r["T"], r["le_ratio"], r["linf_ratio"]] for r in rep.rows]
    summary = rep.to_dict()
    artifacts = [
        _csv_artifact("smoothing.csv", ["k", "T", "le_ratio", "linf_ratio"], rows, h),
        _json_artifact("smoothing_summary.json", summary, h),
    ]
    return RunResult(command="smooth", config_sha256=h, version=__version__, summary=summary, artifacts=artifacts)


# ---------------------------------------------------------------------------
# psdo-check
# ---------------------------------------------------------------------------

def _bracket_mult(order: float):
    def m(kv):
        return (1.0 + kv[0] ** 2 + kv[1] ** 2 + kv[2] ** 2) ** (order / 2.0)

    return m


def _log_shell_profile(k: int, r, sigma=0.6, octaves=3.0):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    u = np.log2(r[pos]) - k
    floor = np.exp(-(octaves**2) / (2 * sigma**2))
    out[pos] = np.maximum(np.exp(-(u**2) / (2 * sigma**2)) - floor, 0.0) / (1.0 - floor)
    return out


def run_psdo_check(cfg: PsdoCheckConfig) -> RunResult:
    h = config_hash(cfg)
    grid = cfg.grid.build()
    x, _, _ = grid.xmesh()
    summary: dict = {"which": cfg.which, "n": grid.n, "lam": grid.lam}
    rows = []
    if cfg.which == "composition":
        ones = np.ones((grid.n,) * 3)
        c = 1.0 + 0.5 * np.sin(x / grid.lam)
        a = SymbolFn(grid, cfg.order, [SeparableTerm(ones, _bracket_mult(cfg.order))])
        b = SymbolFn(grid, 0.0, [SeparableTerm(c, lambda kv: np.ones(kv.shape[1:]))])
        rep = composition_residual(a, b, cfg.shells, max_iters=cfg.max_iters, rtol=cfg.rtol)
        for k, r1, r2 in zip(rep.shells, rep.residual1, rep.residual2):
            rows.append([k, r1, r2, rep.slope1, rep.slope2])
        summary.update(
            {
                "slope1": rep.slope1,
                "slope2": rep.slope2,
                "expected_slope1": cfg.order - 1.0,
                "expected_slope2": cfg.order - 2.0,
            }
        )
        artifacts = [
            _csv_artifact("psdo_residuals.csv", ["shell", "residual1", "residual2", "slope1", "slope2"], rows, h),
            _json_artifact("psdo_summary.json", summary, h),
        ]
    else:
        M = cfg.oscillation
        reports = []
        for shell in cfg.shells:
            c = (2.0 / 3.0) * (1.0 + 0.5 * np.sin(M * x))
            mult = lambda kv, shell=shell: _log_shell_profile(shell, np.sqrt(np.sum(kv**2, axis=0)))

            def func(xp, xip, shell=shell):
                xp = np.asarray(xp, dtype=float)
                r = np.sqrt(np.sum(np.asarray(xip, dtype=float) ** 2, axis=-1))
                return (2.0 / 3.0) * (1.0 + 0.5 * np.sin(M * xp[..., 0])) * _log_shell_profile(shell, r)

            a = SymbolFn(grid, 0.0, [SeparableTerm(c, mult)], func=func)
            rep = hf_cv_check(a, shell, k_cut=shell - 2, deriv_order=2)
            reports.append(rep)
            rows.append([shell, rep.c00, rep.lambda_threshold, int(rep.threshold_met), rep.norm, rep.ratio])
        summary["shells_above_threshold"] = [r.shell for r in reports if r.threshold_met]
        summary["max_ratio_above_threshold"] = max(
            [r.ratio for r in reports if r.threshold_met], default=float("nan")
        )
        artifacts = [
            _csv_artifact(
                "psdo_hf_cv.csv", ["shell", "c00", "lambda_threshold", "threshold_met", "norm", "ratio"], rows, h
            ),
            _json_artifact("psdo_summary.json", summary, h),
        ]
    return RunResult(command="psdo-check", config_sha256=h, version=__version__, summary=summary, artifacts=artifacts)

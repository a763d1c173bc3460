"""Bicharacteristic integration for the whistler symbol.

A vectorized Dormand-Prince 5(4) driver advances batches of rays with
per-ray adaptive steps (each ray's step sequence is independent of the
batch it rides in, so batch composition never changes results).  Events
(slab exit, frequency blow-up, time limit) are located by bisection on
the 4th-order dense output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import FieldEvaluator
from .symbols import PhasePoint, angle_between

__all__ = [
    "RayEvent",
    "RayTrajectory",
    "hamiltonian_rhs",
    "integrate_ray",
    "integrate_rays",
    "variational_flow",
    "frequency_drift_check",
    "cone_angle",
    "ConeReport",
]

FREQ_LO, FREQ_HI = 1e-8, 1e8

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
# dense-output polynomial (Shampine), y(t0 + th) = y0 + h sum_i k_i sum_j P[i,j] t^{j+1}
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


@dataclass(frozen=True)
class RayEvent:
    kind: str  # slab-exit-top | slab-exit-bottom | time-limit | frequency-blowup
    t: float
    state: PhasePoint


@dataclass
class RayTrajectory:
    """Sampled bicharacteristic: strictly increasing t, (x, xi) samples."""

    sign: int
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    events: list[RayEvent] = field(default_factory=list)
    n_accepted: int = 0
    n_rejected: int = 0
    max_error: float = 0.0
    t_uniform: np.ndarray | None = None
    x_uniform: np.ndarray | None = None
    xi_uniform: np.ndarray | None = None

    def __post_init__(self) -> None:
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if np.any(np.linalg.norm(self.xi, axis=-1) == 0):
            raise ValueError("|xi| must stay positive")

    @property
    def final(self) -> PhasePoint:
        return PhasePoint(tuple(self.x[-1]), tuple(self.xi[-1]))


def hamiltonian_rhs(B: FieldEvaluator, sign: int, x: np.ndarray, xi: np.ndarray):
    """(Xdot, Xidot) of the +-p_B flow; batched over leading axes."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    nrm = np.linalg.norm(xi, axis=-1)
    Bv = B.B(x)
    bdotxi = np.sum(Bv * xi, axis=-1)
    xdot = sign * (Bv * nrm[..., None] + (bdotxi / nrm)[..., None] * xi)
    grad = B.gradB(x)
    xidot = -sign * np.einsum("...ab,...b->...a", grad, xi) * nrm[..., None]
    return xdot, xidot


def _rhs_flat(B: FieldEvaluator, sign: int, y: np.ndarray) -> np.ndarray:
    xdot, xidot = hamiltonian_rhs(B, sign, y[..., 0:3], y[..., 3:6])
    return np.concatenate([xdot, xidot], axis=-1)


def _linearization_matrix(B: FieldEvaluator, sign: int, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """6x6 coefficient matrix of the variational equation at (x, xi)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    nrm = np.linalg.norm(xi, axis=-1)
    Bv = B.B(x)
    grad = B.gradB(x)  # [..., a, b] = d_a B^b
    hess = B.hessB(x)  # [..., a, b, c] = d_a d_b B^c
    bdotxi = np.sum(Bv * xi, axis=-1)
    gxi = np.einsum("...ab,...b->...a", grad, xi)  # d_a B . xi
    eye = np.eye(3)

    # p = s B.xi |xi|
    # d2p/dxi_a dxi_b = s (B_a xi_b + B_b xi_a)/|xi| + s B.xi (delta_ab/|xi| - xi_a xi_b/|xi|^3)
    pxx = sign * np.einsum("...abc,...c->...ab", hess, xi) * nrm[..., None, None]
    pxxi = sign * (
        grad * nrm[..., None, None]
        + gxi[..., :, None] * xi[..., None, :] / nrm[..., None, None]
    )  # [..., a, alpha] = d_{x^a} d_{xi_alpha} p
    pxixi = sign * (
        (Bv[..., :, None] * xi[..., None, :] + xi[..., :, None] * Bv[..., None, :]) / nrm[..., None, None]
        + bdotxi[..., None, None]
        * (eye / nrm[..., None, None] - xi[..., :, None] * xi[..., None, :] / nrm[..., None, None] ** 3)
    )

    m = np.zeros(x.shape[:-1] + (6, 6))
    # Xdot'_alpha = d2p/dx^j dxi_alpha X'_j + d2p/dxi_j dxi_alpha Xi'_j
    m[..., 0:3, 0:3] = np.swapaxes(pxxi, -1, -2)
    m[..., 0:3, 3:6] = pxixi
    m[..., 3:6, 0:3] = -pxx
    m[..., 3:6, 3:6] = -pxxi
    return m


# ---------------------------------------------------------------------------
# Vectorized adaptive driver.
# ---------------------------------------------------------------------------

class _BatchResult:
    def __init__(self, m: int):
        self.ts = [[] for _ in range(m)]
        self.ys = [[] for _ in range(m)]
        self.events: list[list[tuple[str, float, np.ndarray]]] = [[] for _ in range(m)]
        self.n_acc = np.zeros(m, dtype=int)
        self.n_rej = np.zeros(m, dtype=int)
        self.max_err = np.zeros(m)
        self.uni_t: list[list[float]] = [[] for _ in range(m)]
        self.uni_y: list[list[np.ndarray]] = [[] for _ in range(m)]


def _dense_eval(y0: np.ndarray, h: float, K: np.ndarray, theta: float) -> np.ndarray:
    tp = np.array([theta, theta**2, theta**3, theta**4])
    return y0 + h * np.einsum("sd,s->d", K, _P @ tp)


def _integrate_batch(
    rhs,
    y0: np.ndarray,
    t_max: float,
    tol: float,
    slab_halfwidth: float | None,
    n_uniform: int,
    max_steps: int = 200_000,
    max_step: float | None = None,
) -> _BatchResult:
    m = y0.shape[0]
    res = _BatchResult(m)
    y = y0.astype(float).copy()
    t = np.zeros(m)
    xi0 = np.linalg.norm(y0[:, 3:6], axis=1)
    active = np.ones(m, dtype=bool)

    for i in range(m):
        res.ts[i].append(0.0)
        res.ys[i].append(y0[i].copy())
        if n_uniform:
            res.uni_t[i].append(0.0)
            res.uni_y[i].append(y0[i].copy())
    uni_times = np.linspace(0.0, t_max, n_uniform) if n_uniform else None
    uni_next = np.ones(m, dtype=int)  # index of next uniform sample to emit

    f = rhs(y)
    scale_x = np.maximum(np.linalg.norm(y[:, :3], axis=1), 1.0)
    speed = np.maximum(np.linalg.norm(f[:, :3], axis=1), 1e-12)
    h = np.minimum(1e-3 * scale_x / speed + 1e-12, t_max)
    if slab_halfwidth is not None:
        h = np.minimum(h, 0.1 * slab_halfwidth / speed)
    if max_step is not None:
        h = np.minimum(h, max_step)

    steps = 0
    while np.any(active) and steps < max_steps:
        steps += 1
        idx = np.flatnonzero(active)
        hi = np.minimum(h[idx], t_max - t[idx])
        yi = y[idx]

        K = np.empty((7, len(idx), y.shape[1]))
        K[0] = f[idx]
        for s in range(1, 7):
            acc = sum(a * K[j] for j, a in enumerate(_A[s]))
            K[s] = rhs(yi + hi[:, None] * acc)
        y5 = yi + hi[:, None] * np.einsum("s,smd->md", _B5, K)
        y4 = yi + hi[:, None] * np.einsum("s,smd->md", _B4, K)

        sc = tol + tol * np.maximum(np.abs(yi), np.abs(y5))
        err = np.sqrt(np.mean(((y5 - y4) / sc) ** 2, axis=1))
        err = np.maximum(err, 1e-16)
        accept = err <= 1.0

        fac = np.clip(0.9 * err ** -0.2, 0.2, 5.0)
        h[idx] = hi * fac
        if max_step is not None:
            h[idx] = np.minimum(h[idx], max_step)

        res.n_rej[idx[~accept]] += 1
        acc_idx = idx[accept]
        if len(acc_idx) == 0:
            continue
        res.n_acc[acc_idx] += 1
        res.max_err[acc_idx] = np.maximum(res.max_err[acc_idx], err[accept])

        t_new = t[acc_idx] + hi[accept]
        y_new = y5[accept]
        K_acc = K[:, accept, :]
        h_acc = hi[accept]

        f_new = rhs(y_new)  # FSAL stage for the next step

        for row, gi in enumerate(acc_idx):
            Ki = K_acc[:, row, :]
            y_old = y[gi]
            t_old = t[gi]
            hstep = h_acc[row]
            ev = _detect_event(
                y_old, y_new[row], t_old, t_new[row], hstep, Ki, xi0[gi], slab_halfwidth, t_max
            )
            # uniform samples from the dense output
            if uni_times is not None:
                stop_t = ev[1] if ev is not None else t_new[row]
                while uni_next[gi] < n_uniform and uni_times[uni_next[gi]] <= stop_t + 1e-15:
                    tu = uni_times[uni_next[gi]]
                    yv = _dense_eval(y_old, hstep, Ki, min(max((tu - t_old) / hstep, 0.0), 1.0))
                    res.uni_t[gi].append(float(tu))
                    res.uni_y[gi].append(yv)
                    uni_next[gi] += 1
            if ev is not None:
                kind, t_ev, y_ev = ev
                if t_ev > t_old + 1e-15:
                    res.ts[gi].append(float(t_ev))
                    res.ys[gi].append(y_ev)
                res.events[gi].append((kind, float(t_ev), y_ev))
                active[gi] = False
            else:
                res.ts[gi].append(float(t_new[row]))
                res.ys[gi].append(y_new[row])
                t[gi] = t_new[row]
                y[gi] = y_new[row]
                f[gi] = f_new[row]
    return res


def _detect_event(y_old, y_new, t_old, t_new, hstep, K, xi0, slab_halfwidth, t_max):
    """First event inside the accepted step, located on the dense output."""
    nrm_new = np.linalg.norm(y_new[3:6])
    if not (FREQ_LO * xi0 <= nrm_new <= FREQ_HI * xi0):
        return ("frequency-blowup", t_new, y_new)

    if slab_halfwidth is not None:
        x3_new = y_new[2]
        v3_new = _dense_deriv3(hstep, K, 1.0)
        if abs(x3_new) > slab_halfwidth and x3_new * v3_new > 0:
            # bisect |X^3(theta)| - slab_halfwidth on the dense output
            g = lambda th: abs(_dense_eval(y_old, hstep, K, th)[2]) - slab_halfwidth
            lo, hi_ = 0.0, 1.0
            if g(0.0) < 0:
                while (hi_ - lo) * hstep > 1e-10:
                    mid = 0.5 * (lo + hi_)
                    if g(mid) < 0:
                        lo = mid
                    else:
                        hi_ = mid
                th = hi_
            else:
                th = 1.0
            t_ev = t_old + th * hstep
            y_ev = _dense_eval(y_old, hstep, K, th)
            kind = "slab-exit-top" if y_ev[2] > 0 else "slab-exit-bottom"
            return (kind, t_ev, y_ev)

    if t_new >= t_max - 1e-14:
        return ("time-limit", t_max, y_new)
    return None


def _dense_deriv3(h, K, theta):
    # derivative of the dense output in theta, component x^3, divided by h
    tp = np.array([1.0, 2 * theta, 3 * theta**2, 4 * theta**3])
    return float(np.einsum("s,s->", _P @ tp, K[:, 2]))


def _traj_from_result(res: _BatchResult, i: int, sign: int, B: FieldEvaluator) -> RayTrajectory:
    t = np.asarray(res.ts[i])
    y = np.asarray(res.ys[i])
    events = [
        RayEvent(kind, tv, PhasePoint(tuple(yv[:3]), tuple(yv[3:6])))
        for kind, tv, yv in res.events[i]
    ]
    traj = RayTrajectory(
        sign=sign,
        t=t,
        x=y[:, 0:3],
        xi=y[:, 3:6],
        events=events,
        n_accepted=int(res.n_acc[i]),
        n_rejected=int(res.n_rej[i]),
        max_error=float(res.max_err[i]),
    )
    if res.uni_t[i]:
        traj.t_uniform = np.asarray(res.uni_t[i])
        yu = np.asarray(res.uni_y[i])
        traj.x_uniform = yu[:, 0:3]
        traj.xi_uniform = yu[:, 3:6]
    return traj


def _merge_two_sided(back: RayTrajectory, fwd: RayTrajectory, sign: int) -> RayTrajectory:
    t = np.concatenate([-back.t[::-1][:-1], fwd.t])
    x = np.concatenate([back.x[::-1][:-1], fwd.x])
    xi = np.concatenate([back.xi[::-1][:-1], fwd.xi])
    events = [RayEvent(e.kind, -e.t, e.state) for e in back.events] + fwd.events
    traj = RayTrajectory(
        sign=sign,
        t=t,
        x=x,
        xi=xi,
        events=sorted(events, key=lambda e: e.t),
        n_accepted=back.n_accepted + fwd.n_accepted,
        n_rejected=back.n_rejected + fwd.n_rejected,
        max_error=max(back.max_error, fwd.max_error),
    )
    if fwd.t_uniform is not None and back.t_uniform is not None:
        traj.t_uniform = np.concatenate([-back.t_uniform[::-1][:-1], fwd.t_uniform])
        traj.x_uniform = np.concatenate([back.x_uniform[::-1][:-1], fwd.x_uniform])
        traj.xi_uniform = np.concatenate([back.xi_uniform[::-1][:-1], fwd.xi_uniform])
    return traj


def integrate_rays(
    B: FieldEvaluator,
    sign: int,
    starts: np.ndarray,
    t_max: float,
    slab_halfwidth: float | None = None,
    tol: float = 1e-9,
    direction: str = "both",
    n_uniform: int = 0,
    max_step: float | None = None,
) -> list[RayTrajectory]:
    """Integrate a batch of bicharacteristics; starts has shape (m, 6).

    max_step caps the accepted step in t; quadratures along trajectories set
    it so sample spacing resolves their integrands even where the flow is
    straight and the error controller would take giant steps.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    if starts.shape[1] != 6:
        raise ValueError("starts must be (m, 6) = (x, xi) rows")
    if np.any(np.linalg.norm(starts[:, 3:6], axis=1) == 0):
        raise ValueError("|xi(0)| must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")

    fwd = bwd = None
    if direction in ("forward", "both"):
        rhs = lambda y: _rhs_flat(B, sign, y)
        fwd = _integrate_batch(rhs, starts, t_max, tol, slab_halfwidth, n_uniform, max_step=max_step)
    if direction in ("backward", "both"):
        rhs_b = lambda y: -_rhs_flat(B, sign, y)
        bwd = _integrate_batch(rhs_b, starts, t_max, tol, slab_halfwidth, n_uniform, max_step=max_step)

    out = []
    for i in range(starts.shape[0]):
        if direction == "forward":
            out.append(_traj_from_result(fwd, i, sign, B))
        elif direction == "backward":
            tr = _traj_from_result(bwd, i, sign, B)
            tr = RayTrajectory(
                sign=sign,
                t=-tr.t[::-1],
                x=tr.x[::-1],
                xi=tr.xi[::-1],
                events=[RayEvent(e.kind, -e.t, e.state) for e in tr.events],
                n_accepted=tr.n_accepted,
                n_rejected=tr.n_rejected,
                max_error=tr.max_error,
            )
            out.append(tr)
        else:
            out.append(
                _merge_two_sided(_traj_from_result(bwd, i, sign, B), _traj_from_result(fwd, i, sign, B), sign)
            )
    return out


def integrate_ray(
    B: FieldEvaluator,
    sign: int,
    start: PhasePoint,
    t_max: float,
    slab_halfwidth: float | None = None,
    tol: float = 1e-9,
    direction: str = "both",
    n_uniform: int = 0,
) -> RayTrajectory:
    y0 = np.concatenate(start.arrays())
    return integrate_rays(B, sign, y0[None], t_max, slab_halfwidth, tol, direction, n_uniform)[0]


# ---------------------------------------------------------------------------
# Variational flow.
# ---------------------------------------------------------------------------

def variational_flow(
    B: FieldEvaluator,
    sign: int,
    start: PhasePoint,
    t_max: float,
    tol: float = 1e-9,
    n_uniform: int = 0,
):
    """Integrate d/dt J = A(t) J along the ray, J(0) = I_6.

    Returns (trajectory, jacobians) where jacobians[i] = d(X,Xi)/d(x,xi)
    at trajectory.t[i].
    """

    def rhs(y):
        base = _rhs_flat(B, sign, y[:, :6])
        A = _linearization_matrix(B, sign, y[:, 0:3], y[:, 3:6])
        J = y[:, 6:].reshape(-1, 6, 6)
        dJ = np.einsum("mij,mjk->mik", A, J)
        return np.concatenate([base, dJ.reshape(-1, 36)], axis=1)

    y0 = np.concatenate([np.concatenate(start.arrays()), np.eye(6).ravel()])
    res = _integrate_batch(rhs, y0[None], t_max, tol, None, n_uniform)
    t = np.asarray(res.ts[0])
    y = np.asarray(res.ys[0])
    traj = RayTrajectory(
        sign=sign,
        t=t,
        x=y[:, 0:3],
        xi=y[:, 3:6],
        events=[RayEvent(k, tv, PhasePoint(tuple(yv[:3]), tuple(yv[3:6]))) for k, tv, yv in res.events[0]],
        n_accepted=int(res.n_acc[0]),
        n_rejected=int(res.n_rej[0]),
        max_error=float(res.max_err[0]),
    )
    jac = y[:, 6:].reshape(-1, 6, 6)
    return traj, jac


# ---------------------------------------------------------------------------
# Pointwise geometric checks along trajectories.
# ---------------------------------------------------------------------------

def frequency_drift_check(traj: RayTrajectory, B: FieldEvaluator) -> float:
    """Max |d|Xi|/dt + sign * D^{ab}(X) Xi_a Xi_b| using 4th-order differences
    on the trajectory's uniform samples."""
    if traj.t_uniform is None or len(traj.t_uniform) < 5:
        raise ValueError("trajectory needs >= 5 uniform samples (pass n_uniform)")
    t, x, xi = traj.t_uniform, traj.x_uniform, traj.xi_uniform
    h = t[1] - t[0]
    nrm = np.linalg.norm(xi, axis=1)
    # 5-point centered stencil on the interior
    dnum = (-nrm[4:] + 8 * nrm[3:-1] - 8 * nrm[1:-3] + nrm[:-4]) / (12 * h)
    from .symbols import deformation_tensor

    D = deformation_tensor(B, x[2:-2])
    quad = np.einsum("mab,ma,mb->m", D, xi[2:-2], xi[2:-2])
    return float(np.max(np.abs(dnum + traj.sign * quad)))


@dataclass(frozen=True)
class ConeReport:
    max_angle: float
    max_speed_ratio: float  # |B||Xi| / |Xdot|  (<= 1)
    max_freq_over_speed3: float | None  # |Xi| / (12 |Xdot^3|) where |B - e3| < 1/2
    max_horizontal_ratio: float | None  # 2 max(|Xdot^1|, |Xdot^2|) / |Xi|


def cone_angle(traj: RayTrajectory, B: FieldEvaluator) -> ConeReport:
    xdot, _ = hamiltonian_rhs(B, traj.sign, traj.x, traj.xi)
    Bv = B.B(traj.x)
    ang = angle_between(xdot, traj.sign * Bv)
    nrm = np.linalg.norm(traj.xi, axis=1)
    speed = np.linalg.norm(xdot, axis=1)
    ratio = np.linalg.norm(Bv, axis=1) * nrm / speed
    near = np.linalg.norm(Bv - np.array([0.0, 0.0, 1.0]), axis=1) < 0.5
    if np.any(near):
        freq3 = nrm[near] / (12.0 * np.abs(xdot[near, 2]))
        horiz = 2.0 * np.max(np.abs(xdot[near, 0:2]), axis=1) / nrm[near]
        extra = (float(np.max(freq3)), float(np.max(horiz)))
    else:
        extra = (None, None)
    return ConeReport(float(np.max(ang)), float(np.max(ratio)), extra[0], extra[1])

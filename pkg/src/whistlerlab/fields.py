"""Background magnetic fields and off-grid evaluation.

Two evaluator families share one interface (batched ``B``, ``gradB``,
``hessB`` over points of shape (..., 3)):

* closed-form analytic fields defined on all of R^3, used by the ray and
  certification machinery, and
* interpolants of grid-sampled fields: Fourier interpolation (exact for
  band-limited data, the default) or tricubic splines (faster, O(h^4)).

Conventions: gradB[..., a, b] = d_a B^b and hessB[..., a, b, c] = d_a d_b B^c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid3, RealVectorField, fftn, ifftn

__all__ = [
    "FieldEvaluator",
    "UniformField",
    "ShearField",
    "GaussianCurlBump",
    "CellularField",
    "SumField",
    "SpectralInterpolant",
    "ExtendedField",
    "sample_on_grid",
]


class FieldEvaluator:
    """Interface: batched evaluation of B and its first two derivatives."""

    def B(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradB(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessB(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __add__(self, other: "FieldEvaluator") -> "FieldEvaluator":
        return SumField([self, other])


@dataclass(frozen=True)
class UniformField(FieldEvaluator):
    vector: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def B(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        out[...] = self.vector
        return out

    def gradB(self, x):
        return np.zeros(np.asarray(x).shape[:-1] + (3, 3))

    def hessB(self, x):
        return np.zeros(np.asarray(x).shape[:-1] + (3, 3, 3))


@dataclass(frozen=True)
class ShearField(FieldEvaluator):
    """B = e3 (1 + amp sin(x^1 / scale)): divergence-free shear of the guide field."""

    amp: float = 0.1
    scale: float = 4.0

    def B(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., 2] = 1.0 + self.amp * np.sin(x[..., 0] / self.scale)
        return out

    def gradB(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 2] = self.amp * np.cos(x[..., 0] / self.scale) / self.scale
        return out

    def hessB(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3, 3, 3))
        out[..., 0, 0, 2] = -self.amp * np.sin(x[..., 0] / self.scale) / self.scale**2
        return out


@dataclass(frozen=True)
class GaussianCurlBump(FieldEvaluator):
    """curl(w e_dir) for a Gaussian envelope w: localized, exactly divergence-free.

    B_pert = grad(w) x dir, with w = amp exp(-sum (x_i - c_i)^2 / (2 sigma_i^2)).
    """

    amp: float = 1e-3
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sigma: tuple[float, float, float] = (1.0, 1.0, 1.0)
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def _w(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center)
        s = np.asarray(self.sigma)
        u = (x - c) / s
        w = self.amp * np.exp(-0.5 * np.sum(u**2, axis=-1))
        g = -(x - c) / s**2  # d_j w = w * g_j
        return w, g, s

    def B(self, x):
        w, g, _ = self._w(x)
        gradw = w[..., None] * g
        return np.cross(gradw, np.asarray(self.direction))

    def gradB(self, x):
        w, g, s = self._w(x)
        # d_a d_j w = w (g_a g_j - delta_aj / s_a^2)
        hessw = w[..., None, None] * (
            g[..., :, None] * g[..., None, :] - np.diag(1.0 / s**2)
        )
        d = np.asarray(self.direction)
        # B^b = eps_{bjk} d_j w d_k  =>  d_a B^b = eps_{bjk} (d_a d_j w) d_k
        eps = _levi_civita()
        return np.einsum("bjk,...aj,k->...ab", eps, hessw, d)

    def hessB(self, x):
        w, g, s = self._w(x)
        inv2 = 1.0 / s**2
        # d_a d_b d_j w = w (g_a g_b g_j - g_j delta_ab/s_a^2 - g_b delta_aj/s_a^2 - g_a delta_bj/s_b^2)
        third = np.zeros(w.shape + (3, 3, 3))
        for a in range(3):
            for b in range(3):
                for j in range(3):
                    term = g[..., a] * g[..., b] * g[..., j]
                    if a == b:
                        term = term - g[..., j] * inv2[a]
                    if a == j:
                        term = term - g[..., b] * inv2[a]
                    if b == j:
                        term = term - g[..., a] * inv2[b]
                    third[..., a, b, j] = w * term
        d = np.asarray(self.direction)
        eps = _levi_civita()
        return np.einsum("cjk,...abj,k->...abc", eps, third, d)


@dataclass(frozen=True)
class CellularField(FieldEvaluator):
    """Horizontal cellular field curl(psi e3) + bz e3 with psi = amp cos(x/lam) cos(y/lam).

    Projected characteristics circle the cell centers; with bz = 0 this is the
    non-certified trapping probe (|B| vanishes at cell corners).
    """

    amp: float = 1.0
    lam: float = 1.0
    bz: float = 0.0

    def B(self, x):
        x = np.asarray(x, dtype=float)
        a, L = self.amp, self.lam
        out = np.zeros(x.shape)
        out[..., 0] = -a / L * np.cos(x[..., 0] / L) * np.sin(x[..., 1] / L)
        out[..., 1] = a / L * np.sin(x[..., 0] / L) * np.cos(x[..., 1] / L)
        out[..., 2] = self.bz
        return out

    def gradB(self, x):
        x = np.asarray(x, dtype=float)
        a, L = self.amp, self.lam
        s1, c1 = np.sin(x[..., 0] / L), np.cos(x[..., 0] / L)
        s2, c2 = np.sin(x[..., 1] / L), np.cos(x[..., 1] / L)
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = a / L**2 * s1 * s2
        out[..., 1, 0] = -a / L**2 * c1 * c2
        out[..., 0, 1] = a / L**2 * c1 * c2
        out[..., 1, 1] = -a / L**2 * s1 * s2
        return out

    def hessB(self, x):
        x = np.asarray(x, dtype=float)
        a, L = self.amp, self.lam
        s1, c1 = np.sin(x[..., 0] / L), np.cos(x[..., 0] / L)
        s2, c2 = np.sin(x[..., 1] / L), np.cos(x[..., 1] / L)
        out = np.zeros(x.shape[:-1] + (3, 3, 3))
        out[..., 0, 0, 0] = a / L**3 * c1 * s2
        out[..., 0, 1, 0] = a / L**3 * s1 * c2
        out[..., 1, 0, 0] = a / L**3 * s1 * c2
        out[..., 1, 1, 0] = a / L**3 * c1 * s2
        out[..., 0, 0, 1] = -a / L**3 * s1 * c2
        out[..., 0, 1, 1] = -a / L**3 * c1 * s2
        out[..., 1, 0, 1] = -a / L**3 * c1 * s2
        out[..., 1, 1, 1] = -a / L**3 * s1 * c2
        return out


@dataclass(frozen=True)
class SumField(FieldEvaluator):
    parts: list

    def B(self, x):
        return sum(p.B(x) for p in self.parts)

    def gradB(self, x):
        return sum(p.gradB(x) for p in self.parts)

    def hessB(self, x):
        return sum(p.hessB(x) for p in self.parts)


def _levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    return eps


# ---------------------------------------------------------------------------
# Interpolants of grid-sampled fields.
# ---------------------------------------------------------------------------

class SpectralInterpolant(FieldEvaluator):
    """Off-grid evaluation of a sampled field.

    method "fourier": trigonometric interpolation via the field's nonzero
    modes (exact for band-limited fields); cost scales with the retained
    mode count, so coefficients below mode_tol * max are dropped.

    method "tricubic": cubic-spline interpolation of B and its spectrally
    computed first and second derivatives (documented O(h^4) error).
    """

    def __init__(self, f: RealVectorField, method: str = "fourier", mode_tol: float = 1e-14):
        self.grid = f.grid
        self.method = method
        n = f.grid.n
        fh = fftn(f.data)
        if method == "fourier":
            mag = np.max(np.abs(fh), axis=0)
            keep = mag > mode_tol * max(mag.max(), 1e-300)
            kvec = f.grid.kvec
            self._K = np.stack([kvec[a][keep] for a in range(3)], axis=1)  # (p, 3)
            self._C = fh[:, keep] * n ** (-1.5)  # reconstruction weights
        elif method == "tricubic":
            from scipy import ndimage

            k = f.grid.deriv_kvec
            arrays = {}
            arrays[()] = f.data
            grad = np.empty((3, 3, n, n, n))
            for a in range(3):
                grad[a] = ifftn(1j * k[a] * fh).real
            arrays[(0,)] = grad
            hess = np.empty((3, 3, 3, n, n, n))
            for a in range(3):
                for b in range(3):
                    hess[a, b] = ifftn(-k[a] * k[b] * fh).real
            self._splines = {
                "B": np.stack([ndimage.spline_filter(f.data[c], order=3, mode="grid-wrap") for c in range(3)]),
                "grad": np.stack(
                    [
                        [ndimage.spline_filter(grad[a, c], order=3, mode="grid-wrap") for c in range(3)]
                        for a in range(3)
                    ]
                ),
                "hess": np.stack(
                    [
                        [
                            [ndimage.spline_filter(hess[a, b, c], order=3, mode="grid-wrap") for c in range(3)]
                            for b in range(3)
                        ]
                        for a in range(3)
                    ]
                ),
            }
        else:
            raise ValueError(f"unknown interpolation method {method!r}")

    # -- fourier path ---------------------------------------------------

    def _phases(self, x: np.ndarray) -> np.ndarray:
        # the DFT phases are relative to the first sample point
        pts = np.asarray(x, dtype=float).reshape(-1, 3) - self.grid.x1d[0]
        return np.exp(1j * pts @ self._K.T)  # (m, p)

    def B(self, x):
        x = np.asarray(x, dtype=float)
        if self.method == "tricubic":
            return self._map(x, self._splines["B"])
        E = self._phases(x)
        vals = (E @ self._C.T).real
        return vals.reshape(x.shape)

    def gradB(self, x):
        x = np.asarray(x, dtype=float)
        if self.method == "tricubic":
            out = np.empty(x.shape[:-1] + (3, 3))
            for a in range(3):
                out[..., a, :] = self._map(x, self._splines["grad"][a])
            return out
        E = self._phases(x)
        out = np.empty((E.shape[0], 3, 3))
        for a in range(3):
            out[:, a, :] = ((E * (1j * self._K[:, a])) @ self._C.T).real
        return out.reshape(x.shape[:-1] + (3, 3))

    def hessB(self, x):
        x = np.asarray(x, dtype=float)
        if self.method == "tricubic":
            out = np.empty(x.shape[:-1] + (3, 3, 3))
            for a in range(3):
                for b in range(3):
                    out[..., a, b, :] = self._map(x, self._splines["hess"][a, b])
            return out
        E = self._phases(x)
        out = np.empty((E.shape[0], 3, 3, 3))
        for a in range(3):
            for b in range(3):
                out[:, a, b, :] = ((E * (-self._K[:, a] * self._K[:, b])) @ self._C.T).real
        return out.reshape(x.shape[:-1] + (3, 3, 3))

    # -- tricubic path ----------------------------------------------------

    def _map(self, x: np.ndarray, comps: np.ndarray) -> np.ndarray:
        from scipy import ndimage

        pts = np.asarray(x, dtype=float).reshape(-1, 3)
        g = self.grid
        coords = ((pts - g.x1d[0]) / g.spacing).T  # fractional indices
        out = np.empty((pts.shape[0], 3))
        for c in range(3):
            out[:, c] = ndimage.map_coordinates(
                comps[c], coords, order=3, mode="grid-wrap", prefilter=False
            )
        return out.reshape(x.shape)


class ExtendedField(FieldEvaluator):
    """Un-periodized extension of a grid interpolant: the perturbation is
    faded to e3 outside |x^3| > fade_start via a smooth cutoff, so rays can
    leave the box (certification runs on fields with < 1e-8 perturbation at
    the fade region).
    """

    def __init__(self, inner: FieldEvaluator, grid: Grid3, fade_start: float | None = None):
        self.inner = inner
        self.grid = grid
        self.fade_start = fade_start if fade_start is not None else 0.35 * grid.box_length
        self._e3 = UniformField()

    def _chi(self, z):
        from .dyadic import phi0

        return phi0(np.abs(z) / self.fade_start)

    def _chi_d(self, z, order):
        h = 1e-6 * self.fade_start
        if order == 1:
            return (self._chi(z + h) - self._chi(z - h)) / (2 * h)
        return (self._chi(z + h) - 2 * self._chi(z) + self._chi(z - h)) / h**2

    def _wrap(self, x):
        box = self.grid.box_length
        return (np.asarray(x, dtype=float) + box / 2.0) % box - box / 2.0

    def B(self, x):
        x = np.asarray(x, dtype=float)
        chi = self._chi(x[..., 2])[..., None]
        pert = self.inner.B(self._wrap(x)) - self._e3.B(x)
        return self._e3.B(x) + chi * pert

    def gradB(self, x):
        x = np.asarray(x, dtype=float)
        chi = self._chi(x[..., 2])[..., None, None]
        dchi = self._chi_d(x[..., 2], 1)
        xw = self._wrap(x)
        pert = self.inner.B(xw) - self._e3.B(x)
        out = chi * self.inner.gradB(xw)
        out[..., 2, :] += dchi[..., None] * pert
        return out

    def hessB(self, x):
        x = np.asarray(x, dtype=float)
        chi = self._chi(x[..., 2])[..., None, None, None]
        dchi = self._chi_d(x[..., 2], 1)
        d2chi = self._chi_d(x[..., 2], 2)
        xw = self._wrap(x)
        pert = self.inner.B(xw) - self._e3.B(x)
        gp = self.inner.gradB(xw)
        out = chi * self.inner.hessB(xw)
        out[..., 2, :, :] += dchi[..., None, None] * gp
        out[..., :, 2, :] += dchi[..., None, None] * gp
        out[..., 2, 2, :] += d2chi[..., None] * pert
        return out


def sample_on_grid(f: FieldEvaluator, grid: Grid3) -> RealVectorField:
    x, y, z = grid.xmesh()
    pts = np.stack([x, y, z], axis=-1)
    vals = f.B(pts)
    return RealVectorField(grid, np.moveaxis(vals, -1, 0).copy())

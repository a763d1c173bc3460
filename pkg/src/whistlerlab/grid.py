"""Periodic-box fields, spectral transforms, and vector-calculus primitives.

Everything downstream (norms, quantization, solvers) runs on a cubic
periodic box of side 2*pi*lam sampled at n points per axis.  The DFT is
unitary ("ortho" normalization) repo-wide so that discrete L^2 sums match
physical-space quadrature up to the cell volume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as _sfft


def fftn(a: np.ndarray) -> np.ndarray:
    """Unitary 3-D DFT over the last three axes (shared backend)."""
    return _sfft.fftn(a, axes=(-3, -2, -1), norm="ortho", workers=-1)


def ifftn(a: np.ndarray) -> np.ndarray:
    return _sfft.ifftn(a, axes=(-3, -2, -1), norm="ortho", workers=-1)

__all__ = [
    "Grid3",
    "RealVectorField",
    "SpectralVectorField",
    "fft_forward",
    "fft_inverse",
    "curl",
    "divergence",
    "gradient",
    "leray_project",
    "cross",
    "dealias",
    "l2_norm",
    "spectral_l2_norm",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic grid: n points per axis on a box of side 2*pi*lam.

    The wavenumber lattice is the integer lattice scaled by 1/lam; the
    per-axis Nyquist wavenumber n/(2*lam) is exposed as ``kmax``.
    """

    n: int
    lam: float = 4.0

    def __post_init__(self) -> None:
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    @property
    def box_length(self) -> float:
        return 2.0 * np.pi * self.lam

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def kmax(self) -> float:
        """Per-axis Nyquist wavenumber n/(2*lam)."""
        return self.n / (2.0 * self.lam)

    @cached_property
    def x1d(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.spacing

    @cached_property
    def k1d(self) -> np.ndarray:
        """Angular wavenumbers per axis, integer lattice / lam (FFT order)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    @cached_property
    def kvec(self) -> np.ndarray:
        """Wavenumber vectors, shape (3, n, n, n)."""
        k = self.k1d
        kx, ky, kz = np.meshgrid(k, k, k, indexing="ij")
        return np.stack([kx, ky, kz])

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(np.sum(self.kvec**2, axis=0))

    @cached_property
    def deriv_kvec(self) -> np.ndarray:
        """kvec with the unpaired Nyquist planes zeroed.

        Odd-order derivative multipliers must kill the Nyquist modes or a
        real field stops being real after differentiation.
        """
        k = self.k1d.copy()
        k[self.n // 2] = 0.0
        kx, ky, kz = np.meshgrid(k, k, k, indexing="ij")
        return np.stack([kx, ky, kz])

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask applied after physical-space products."""
        cut = (2.0 / 3.0) * self.kmax
        keep1d = np.abs(self.k1d) <= cut + 1e-12
        return (
            keep1d[:, None, None] & keep1d[None, :, None] & keep1d[None, None, :]
        )

    def xmesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.x1d
        return np.meshgrid(x, x, x, indexing="ij")


@dataclass(frozen=True)
class RealVectorField:
    """Sampled real vector field: data shape (3, n, n, n)."""

    grid: Grid3
    data: np.ndarray

    def __post_init__(self) -> None:
        n = self.grid.n
        if self.data.shape != (3, n, n, n):
            raise ValueError(f"expected data shape (3,{n},{n},{n}), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field samples must be finite")

    def __add__(self, other: "RealVectorField") -> "RealVectorField":
        return RealVectorField(self.grid, self.data + other.data)

    def __sub__(self, other: "RealVectorField") -> "RealVectorField":
        return RealVectorField(self.grid, self.data - other.data)

    def __mul__(self, c: float) -> "RealVectorField":
        return RealVectorField(self.grid, self.data * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SpectralVectorField:
    """Fourier coefficients of a vector field: data shape (3, n, n, n), FFT order."""

    grid: Grid3
    data: np.ndarray
    is_real: bool = True

    def __post_init__(self) -> None:
        n = self.grid.n
        if self.data.shape != (3, n, n, n):
            raise ValueError(f"expected data shape (3,{n},{n},{n}), got {self.data.shape}")

    def hermitian_defect(self) -> float:
        """Max |f(-k) - conj(f(k))|; zero for coefficients of a real field."""
        flipped = _reverse_modes(self.data)
        return float(np.max(np.abs(flipped.conj() - self.data)))

    def __add__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        return SpectralVectorField(self.grid, self.data + other.data, self.is_real and other.is_real)

    def __sub__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        return SpectralVectorField(self.grid, self.data - other.data, self.is_real and other.is_real)

    def __mul__(self, c: float) -> "SpectralVectorField":
        return SpectralVectorField(self.grid, self.data * c, self.is_real and not isinstance(c, complex))

    __rmul__ = __mul__


def _reverse_modes(a: np.ndarray) -> np.ndarray:
    """Index map k -> -k on the last three axes (FFT ordering)."""
    out = a
    for ax in (-3, -2, -1):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def fft_forward(f: RealVectorField) -> SpectralVectorField:
    """Unitary DFT per component."""
    return SpectralVectorField(f.grid, fftn(f.data))


def fft_inverse(fh: SpectralVectorField) -> RealVectorField:
    out = ifftn(fh.data)
    if fh.is_real:
        return RealVectorField(fh.grid, np.ascontiguousarray(out.real))
    return RealVectorField(fh.grid, np.ascontiguousarray(out.real))


def scalar_fft(u: np.ndarray) -> np.ndarray:
    return fftn(u)


def scalar_ifft(uh: np.ndarray) -> np.ndarray:
    return ifftn(uh)


def curl(fh: SpectralVectorField) -> SpectralVectorField:
    """Coefficientwise i k x fhat."""
    k = fh.grid.deriv_kvec
    d = fh.data
    out = 1j * np.stack([
        k[1] * d[2] - k[2] * d[1],
        k[2] * d[0] - k[0] * d[2],
        k[0] * d[1] - k[1] * d[0],
    ])
    return SpectralVectorField(fh.grid, out, fh.is_real)


def divergence(fh: SpectralVectorField) -> np.ndarray:
    """Coefficientwise i k . fhat; returns a spectral scalar array."""
    k = fh.grid.deriv_kvec
    return 1j * (k[0] * fh.data[0] + k[1] * fh.data[1] + k[2] * fh.data[2])


def gradient(uh: np.ndarray, grid: Grid3) -> SpectralVectorField:
    """Spectral gradient of a spectral scalar."""
    k = grid.deriv_kvec
    return SpectralVectorField(grid, 1j * k * uh[None], True)


def leray_project(fh: SpectralVectorField) -> SpectralVectorField:
    """fhat(k) -> fhat(k) - k (k.fhat)/|k|^2 for k != 0; k=0 mode untouched.

    The k=0 mode carries the uniform background e3 and must pass through.
    Uses the same Nyquist-zeroed lattice as curl/divergence so that the
    three operators form a consistent discrete calculus.
    """
    k = fh.grid.deriv_kvec
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    inv = np.zeros_like(k2)
    nz = k2 > 0
    inv[nz] = 1.0 / k2[nz]
    kdotf = k[0] * fh.data[0] + k[1] * fh.data[1] + k[2] * fh.data[2]
    out = fh.data - k * (kdotf * inv)[None]
    return SpectralVectorField(fh.grid, out, fh.is_real)


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of (3, ...) stacks in physical space."""
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def dealias(fh: SpectralVectorField) -> SpectralVectorField:
    return SpectralVectorField(fh.grid, fh.data * fh.grid.dealias_mask, fh.is_real)


def l2_norm(f: RealVectorField) -> float:
    """L^2(box) norm via physical-space quadrature."""
    return float(np.sqrt(np.sum(f.data**2) * f.grid.cell_volume))


def spectral_l2_norm(fh: SpectralVectorField) -> float:
    """Same norm evaluated via Parseval (unitary DFT)."""
    return float(np.sqrt(np.sum(np.abs(fh.data) ** 2) * fh.grid.cell_volume))


# ---------------------------------------------------------------------------
# Binary field file: one JSON header line, then raw little-endian float64 in
# C order, components concatenated.
# ---------------------------------------------------------------------------

def save_field(path, f: RealVectorField, extra: dict | None = None) -> None:
    header = {"n": f.grid.n, "lam": f.grid.lam, "components": 3, "dtype": "f64le"}
    if extra:
        header.update(extra)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for c in range(3):
            fh.write(np.ascontiguousarray(f.data[c], dtype="<f8").tobytes())


def load_field(path) -> tuple[RealVectorField, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        n = header["n"]
        ncomp = header["components"]
        if header.get("dtype", "f64le") != "f64le":
            raise ValueError(f"unsupported dtype {header['dtype']!r}")
        raw = fh.read(ncomp * n**3 * 8)
    data = np.frombuffer(raw, dtype="<f8").reshape(ncomp, n, n, n).copy()
    return RealVectorField(Grid3(n, header["lam"]), data), header

"""Request/response models shared by the HTTP service and the CLI client.

Every config is schema-validated before any compute; unknown keys are
rejected.  Defaults for grid sizes, tolerances, and ray grids live here, in
one place.
"""

from __future__ import annotations

import base64
import hashlib
import json
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..fields import (
    CellularField,
    FieldEvaluator,
    GaussianCurlBump,
    ShearField,
    SpectralInterpolant,
    SumField,
    UniformField,
)
from ..grid import Grid3


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FieldSpec(StrictModel):
    """Background magnetic field menu.

    kinds: uniform (vector), shear (amp, scale), bump (e3 + Gaussian curl
    bump), dip (|B| dips below 1), cellular (trapping probe), sampled_b64
    (base64 of the binary field file format).
    """

    kind: Literal["uniform", "shear", "bump", "dip", "cellular", "sampled_b64"] = "uniform"
    vector: tuple[float, float, float] = (0.0, 0.0, 1.0)
    amp: float = 1e-3
    scale: float = 4.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sigma: tuple[float, float, float] = (1.0, 1.0, 1.0)
    direction: tuple[float, float, float] = (0.0, 1.0, 0.0)
    bz: float = 0.0
    data_b64: Optional[str] = None

    def build(self, grid: Grid3 | None = None):
        """Returns (evaluator, sampled RealVectorField or None)."""
        if self.kind == "uniform":
            return UniformField(tuple(self.vector)), None
        if self.kind == "shear":
            return SumField([UniformField(), ShearField(amp=self.amp, scale=self.scale)]), None
        if self.kind == "bump":
            return (
                SumField(
                    [
                        UniformField(tuple(self.vector)),
                        GaussianCurlBump(
                            amp=self.amp,
                            center=tuple(self.center),
                            sigma=tuple(self.sigma),
                            direction=tuple(self.direction),
                        ),
                    ]
                ),
                None,
            )
        if self.kind == "dip":
            # uniform field minus a localized axial deficit: |B| dips to 1 - amp
            class _Dip(FieldEvaluator):
                def __init__(s, amp, sigma, center):
                    s.amp, s.sigma, s.center = amp, np.asarray(sigma), np.asarray(center)

                def _w(s, x):
                    u = (np.asarray(x, dtype=float) - s.center) / s.sigma
                    return np.exp(-0.5 * np.sum(u**2, axis=-1))

                def B(s, x):
                    x = np.asarray(x, dtype=float)
                    out = np.zeros(x.shape)
                    out[..., 2] = 1.0 - s.amp * s._w(x)
                    return out

                def gradB(s, x):
                    x = np.asarray(x, dtype=float)
                    w = s._w(x)
                    g = -(x - s.center) / s.sigma**2
                    out = np.zeros(x.shape[:-1] + (3, 3))
                    out[..., :, 2] = -s.amp * w[..., None] * g
                    return out

                def hessB(s, x):
                    raise NotImplementedError("dip field is for nondegeneracy demos only")

            return _Dip(self.amp, self.sigma, self.center), None
        if self.kind == "cellular":
            return CellularField(amp=self.amp, lam=self.scale, bz=self.bz), None
        if self.kind == "sampled_b64":
            if self.data_b64 is None:
                raise ValueError("sampled_b64 field needs data_b64")
            from ..grid import load_field
            import tempfile, os

            raw = base64.b64decode(self.data_b64)
            with tempfile.NamedTemporaryFile(delete=False) as fh:
                fh.write(raw)
                path = fh.name
            try:
                fld, _ = load_field(path)
            finally:
                os.unlink(path)
            from ..fields import ExtendedField

            interp = SpectralInterpolant(fld, method="fourier")
            return ExtendedField(interp, fld.grid), fld
        raise ValueError(f"unknown field kind {self.kind}")

    def describe(self) -> str:
        return self.kind


class GridSpec(StrictModel):
    n: int = 32
    lam: float = 4.0

    def build(self) -> Grid3:
        return Grid3(self.n, self.lam)


class GlobalOpts(StrictModel):
    seed: int = 0
    threads: int = 1


class TraceConfig(StrictModel):
    global_opts: GlobalOpts = GlobalOpts()
    field: FieldSpec = FieldSpec()
    grid: GridSpec = GridSpec()
    sign: Literal[1, -1] = 1
    starts: list[list[float]] = Field(default_factory=list)  # rows (x1..x3, xi1..xi3)
    sphere_samples: int = 100_000
    rays_from_sphere: int = 0
    t_max: float = 1.0
    slab_halfwidth: Optional[float] = None
    tol: float = 1e-9
    n_uniform: int = 0


class CertifyTargetsSpec(StrictModel):
    M: float = 1.0
    mu: float = 0.5
    A: float = 1.0
    R: float = 1.0
    L: float = 10.0
    eps: float = 0.25


class RaySpecOverrides(StrictModel):
    x3_resolution: int = 8
    refine_rounds: int = 3
    refine_points: int = 24
    t_max: float = 60.0
    tol: float = 1e-9


class CertifyConfig(StrictModel):
    global_opts: GlobalOpts = GlobalOpts()
    s: float = 4.0
    field: FieldSpec = FieldSpec(kind="bump")
    grid: GridSpec = GridSpec()
    targets: CertifyTargetsSpec = CertifyTargetsSpec()
    rays: RaySpecOverrides = RaySpecOverrides()
    strict: bool = False


class DataSpec(StrictModel):
    kind: Literal["random_divfree", "packet", "bump_b"] = "random_divfree"
    seed: int = 0
    band_fraction: float = 0.33
    amp: float = 1e-2
    k: int = 3


class SolveConfig(StrictModel):
    global_opts: GlobalOpts = GlobalOpts()
    mode: Literal["nonlinear", "linearized", "diagonalized", "constant", "2p5d"] = "nonlinear"
    grid: GridSpec = GridSpec(n=32, lam=2.0)
    T: float = 0.25
    dt: Optional[float] = None
    cfl: float = 1.0
    background: FieldSpec = FieldSpec()
    data: DataSpec = DataSpec()
    snapshots: int = 0
    record_every: int = 1


class NormsConfig(StrictModel):
    global_opts: GlobalOpts = GlobalOpts()
    grid: GridSpec = GridSpec()
    field: FieldSpec = FieldSpec(kind="bump")
    s_values: list[float] = Field(default_factory=lambda: [2.0, 4.0])
    subtract_background: bool = True


class SmoothConfig(StrictModel):
    global_opts: GlobalOpts = GlobalOpts()
    grid: GridSpec = GridSpec(n=128, lam=1.0)
    background: Optional[FieldSpec] = None  # None: uniform e3 exact propagator
    ks: list[int] = Field(default_factory=lambda: [2, 3, 4, 5])
    T: Optional[float] = None
    travel_fraction: float = 0.25
    n_times: int = 48
    cfl: float = 0.5


class PsdoCheckConfig(StrictModel):
    global_opts: GlobalOpts = GlobalOpts()
    which: Literal["hf_cv", "composition"] = "composition"
    grid: GridSpec = GridSpec(n=64, lam=0.25)
    shells: list[int] = Field(default_factory=lambda: [4, 5, 6])
    oscillation: float = 8.0  # x-frequency of the test coefficient
    order: float = 1.0  # multiplier order for composition sweeps
    max_iters: int = 400
    rtol: float = 1e-4


class Artifact(StrictModel):
    name: str
    kind: Literal["csv", "json", "binary"]
    text: Optional[str] = None
    b64: Optional[str] = None


class RunResult(StrictModel):
    command: str
    config_sha256: str
    version: str
    summary: dict
    artifacts: list[Artifact] = Field(default_factory=list)
    numerical_failure: bool = False
    certificate_failed: bool = False


def config_hash(cfg: BaseModel) -> str:
    payload = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]

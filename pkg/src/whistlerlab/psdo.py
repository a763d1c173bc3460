"""Discrete quantization, paraproducts, the paralinearization error, symbol
seminorms, and operator-norm experiments.

Symbols are represented as finite separable sums a(x, xi) = sum_j c_j(x)
m_j(xi) (every symbol this package builds has that shape), with an optional
pointwise callable for seminorm sampling.  Quantization acts on scalar
complex grid functions; the solver assembles its vector operators from the
same primitives.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import comb
from typing import Callable

import numpy as np

from .dyadic import lowpass_multiplier, shell_multiplier, shell_top
from .grid import Grid3, RealVectorField, cross, fftn, ifftn

__all__ = [
    "SeparableTerm",
    "SymbolFn",
    "quantize_left",
    "quantize_right",
    "quantize_para",
    "paraproduct",
    "paraproduct_cross",
    "paralin_error",
    "paralin_error_balanced",
    "LinOp",
    "MultiplierOp",
    "MultOp",
    "QuantizeOp",
    "ComposedOp",
    "SumOp",
    "ShellInputOp",
    "OpNormResult",
    "op_norm_estimate",
    "HfCvReport",
    "hf_cv_check",
    "CompositionReport",
    "composition_residual",
]


def _fft(u):
    return fftn(u)


def _ifft(u):
    return ifftn(u)


@dataclass
class SeparableTerm:
    """One c(x) m(xi) factor pair: coeff on the grid, multiplier as a callable
    of the wavenumber stack (3, n, n, n)."""

    coeff: np.ndarray
    mult: Callable[[np.ndarray], np.ndarray]


@dataclass
class SymbolFn:
    """Sampled symbol a(x, xi) of the given order.

    terms: separable representation used by the quantizer.
    func(x, xi): pointwise closed form (batched over leading axes of xi),
    used by the seminorm sampler and threshold estimates.
    """

    grid: Grid3
    order: float
    terms: list[SeparableTerm]
    func: Callable | None = None

    def __post_init__(self) -> None:
        self._mult_cache: dict[int, np.ndarray] = {}
        self._conj: SymbolFn | None = None

    def mult_on_grid(self, j: int) -> np.ndarray:
        if j not in self._mult_cache:
            self._mult_cache[j] = np.asarray(self.terms[j].mult(self.grid.kvec))
        return self._mult_cache[j]

    def conj(self) -> "SymbolFn":
        terms = [SeparableTerm(np.conj(t.coeff), _conj_mult(t.mult)) for t in self.terms]
        fn = None
        if self.func is not None:
            f = self.func
            fn = lambda x, xi: np.conj(f(x, xi))
        return SymbolFn(self.grid, self.order, terms, fn)

    def product(self, other: "SymbolFn", order: float | None = None) -> "SymbolFn":
        terms = [
            SeparableTerm(t.coeff * s.coeff, _prod_mult(t.mult, s.mult))
            for t in self.terms
            for s in other.terms
        ]
        fn = None
        if self.func is not None and other.func is not None:
            f, g = self.func, other.func
            fn = lambda x, xi: f(x, xi) * g(x, xi)
        return SymbolFn(self.grid, order if order is not None else self.order + other.order, terms, fn)

    def poisson_first(self, other: "SymbolFn") -> "SymbolFn":
        """i^{-1} d_xi(self) . d_x(other), the first composition correction."""
        grid = self.grid
        k = grid.deriv_kvec
        terms = []
        for t in self.terms:
            dm = _mult_grad(t.mult)
            for s in other.terms:
                dc = _ifft(1j * k * _fft(s.coeff)[None])
                for a in range(3):
                    terms.append(
                        SeparableTerm(
                            (-1j) * t.coeff * dc[a],
                            _prod_mult(dm[a], s.mult),
                        )
                    )
        return SymbolFn(grid, self.order + other.order - 2, terms, None)

    # -- sampled seminorm ------------------------------------------------

    def seminorm(self, N: int, x_samples: np.ndarray, xi_samples: np.ndarray, h_rel: float = 2.0**-20) -> float:
        """[a]_{S^m;N} approximated by a sampled sup with central differences.

        Central differences use step h_rel * scale per variable (xi steps
        scale with <xi>); orders above 2 are increasingly noisy and are
        reported as approximations only.
        """
        if self.func is None:
            raise ValueError("seminorm sampling needs the pointwise callable")
        total = 0.0
        for alpha, beta in _multi_indices(N):
            sup = self._deriv_sup(alpha, beta, x_samples, xi_samples, h_rel)
            total += sup
        return total

    def deriv_sup(self, alpha, beta, x_samples, xi_samples, h_rel: float = 2.0**-20) -> float:
        return self._deriv_sup(tuple(alpha), tuple(beta), x_samples, xi_samples, h_rel)

    def _deriv_sup(self, alpha, beta, x_samples, xi_samples, h_rel) -> float:
        f = self.func
        xs = np.asarray(x_samples, dtype=float)
        xis = np.asarray(xi_samples, dtype=float)
        bracket = np.sqrt(1.0 + np.sum(xis**2, axis=-1))
        hx = h_rel
        hxi = h_rel * bracket
        orders = tuple(alpha) + tuple(beta)

        def ev(shift_x, shift_xi):
            return f(xs + shift_x, xis + shift_xi)

        vals = _tensor_central_diff(ev, orders, hx, hxi, xs.shape, xis.shape)
        weight = bracket ** (sum(beta) - self.order)
        return float(np.max(np.abs(weight * vals)))


def _conj_mult(m):
    return lambda kv: np.conj(m(kv))


def _prod_mult(m1, m2):
    return lambda kv: np.asarray(m1(kv)) * np.asarray(m2(kv))


def _mult_grad(m, h_rel: float = 1e-6):
    """Central-difference gradient callables of a multiplier in xi."""

    def make(axis):
        def g(kv):
            kv = np.asarray(kv, dtype=float)
            scale = np.maximum(np.sqrt(np.sum(kv**2, axis=0)), 1.0)
            h = h_rel * scale
            kp = kv.copy()
            km = kv.copy()
            kp[axis] = kp[axis] + h
            km[axis] = km[axis] - h
            return (np.asarray(m(kp)) - np.asarray(m(km))) / (2.0 * h)

        return g

    return [make(a) for a in range(3)]


def _multi_indices(N: int):
    out = []
    for total in range(N + 1):
        for a1 in range(total + 1):
            for a2 in range(total - a1 + 1):
                for a3 in range(total - a1 - a2 + 1):
                    rem = total - a1 - a2 - a3
                    for b1 in range(rem + 1):
                        for b2 in range(rem - b1 + 1):
                            b3 = rem - b1 - b2
                            out.append(((a1, a2, a3), (b1, b2, b3)))
    return out


def _tensor_central_diff(ev, orders, hx, hxi, xshape, xishape):
    """Nested central differences: orders (o_x1..o_x3, o_xi1..o_xi3)."""

    def rec(var: int, shift_x, shift_xi):
        if var == 6:
            return ev(shift_x, shift_xi)
        o = orders[var]
        if o == 0:
            return rec(var + 1, shift_x, shift_xi)
        h = hx if var < 3 else hxi
        acc = 0.0
        for i in range(o + 1):
            w = (-1.0) ** i * comb(o, i)
            offset = (o / 2.0 - i) * h
            sx, sxi = shift_x, shift_xi
            if var < 3:
                sx = sx.copy()
                sx[..., var] = sx[..., var] + offset
            else:
                sxi = sxi.copy()
                sxi[..., var - 3] = sxi[..., var - 3] + offset
            acc = acc + w * rec(var + 1, sx, sxi)
        return acc / h**o

    sx0 = np.zeros(xshape)
    sxi0 = np.zeros(xishape)
    return rec(0, sx0, sxi0)


# ---------------------------------------------------------------------------
# Quantization.
# ---------------------------------------------------------------------------

def quantize_left(a: SymbolFn, u: np.ndarray) -> np.ndarray:
    """Op(a) u = sum_j c_j(x) (m_j(D) u)."""
    uh = _fft(u)
    out = np.zeros_like(uh)
    for j, t in enumerate(a.terms):
        out = out + t.coeff * _ifft(a.mult_on_grid(j) * uh)
    return out


def quantize_right(a: SymbolFn, u: np.ndarray) -> np.ndarray:
    """Op^(r)(a) u = sum_j m_j(D) (c_j(x) u)."""
    out = np.zeros_like(np.asarray(u, dtype=complex))
    for j, t in enumerate(a.terms):
        out = out + _ifft(a.mult_on_grid(j) * _fft(t.coeff * u))
    return out


def quantize_para(a: SymbolFn, u: np.ndarray) -> np.ndarray:
    """Paradifferential quantization: shellwise, with the x-dependence of the
    symbol low-passed to frequencies < shell/8 (the BS^m_{1,1} support box)."""
    grid = a.grid
    uh = _fft(u)
    K = shell_top(grid)
    out = np.zeros_like(uh)
    for k in range(K + 1):
        shell = shell_multiplier(grid, k) * uh
        if not np.any(shell):
            continue
        piece = _ifft(shell)
        low = lowpass_multiplier(grid, k - 3)  # 2^{k-3} = shell/8
        for j, t in enumerate(a.terms):
            cf = _ifft(low * _fft(t.coeff))
            out = out + cf * _ifft(a.mult_on_grid(j) * _fft(piece))
    return out


# ---------------------------------------------------------------------------
# Paraproducts and the paralinearization error.
# ---------------------------------------------------------------------------

def paraproduct(g: np.ndarray, u: np.ndarray, grid: Grid3, gap: int = 10) -> np.ndarray:
    """T_g u = sum_k P_{<k-gap} g P_k u (scalar inputs).

    The customary paradifferential gap is 10; on feasible grids that forces most low-pass
    factors to vanish (scale separation 2^10 does not fit), so the gap is a
    parameter.  Structural tests use a small gap; defaults stay faithful.
    """
    gh = _fft(g)
    uh = _fft(u)
    out = np.zeros_like(uh + gh)
    for k in range(shell_top(grid) + 1):
        low = lowpass_multiplier(grid, k - gap)
        if not np.any(low):
            continue
        out = out + _ifft(low * gh) * _ifft(shell_multiplier(grid, k) * uh)
    return out


def paraproduct_cross(A: np.ndarray, B: np.ndarray, grid: Grid3, gap: int = 10) -> np.ndarray:
    """T_A x B = sum_k P_{<k-gap} A x P_k B for (3, n, n, n) stacks."""
    Ah = _fft(A)
    Bh = _fft(B)
    out = np.zeros((3,) + (grid.n,) * 3)
    for k in range(shell_top(grid) + 1):
        low = lowpass_multiplier(grid, k - gap)
        if not np.any(low):
            continue
        out = out + cross(_ifft(low * Ah).real, _ifft(shell_multiplier(grid, k) * Bh).real)
    return out


def _curl_spec(Ah: np.ndarray, grid: Grid3) -> np.ndarray:
    k = grid.deriv_kvec
    return 1j * np.stack(
        [
            k[1] * Ah[2] - k[2] * Ah[1],
            k[2] * Ah[0] - k[0] * Ah[2],
            k[0] * Ah[1] - k[1] * Ah[0],
        ]
    )


def _curl_phys(A: np.ndarray, grid: Grid3) -> np.ndarray:
    return _ifft(_curl_spec(_fft(A), grid)).real


def paralin_error(b: RealVectorField, gap: int = 10, dealias: bool = True) -> RealVectorField:
    """G(b) = curl(b x curl b) - curl(T_b x curl b) + curl(T_{curl b} x b)."""
    grid = b.grid
    bh = _fft(b.data)
    wh = _curl_spec(bh, grid)
    w = _ifft(wh).real
    full = cross(b.data, w)
    para1 = _paraproduct_cross_spec(bh, wh, grid, gap)
    para2 = _paraproduct_cross_spec(wh, bh, grid, gap)
    total_h = _fft(full - para1 + para2)
    if dealias:
        total_h = total_h * grid.dealias_mask
    return RealVectorField(grid, _ifft(_curl_spec(total_h, grid)).real)


def _paraproduct_cross_spec(Ah, Bh, grid: Grid3, gap: int) -> np.ndarray:
    out = np.zeros((3,) + (grid.n,) * 3)
    for k in range(shell_top(grid) + 1):
        low = lowpass_multiplier(grid, k - gap)
        if not np.any(low):
            continue
        out = out + cross(_ifft(low * Ah).real, _ifft(shell_multiplier(grid, k) * Bh).real)
    return out


def paralin_error_balanced(b: RealVectorField, gap: int = 10, dealias: bool = True) -> RealVectorField:
    """The balanced-frequency form: curl sum_k P_{[k-gap,k+gap]} b x (curl P_k b)."""
    grid = b.grid
    bh = _fft(b.data)
    wh = _curl_spec(bh, grid)
    K = shell_top(grid)
    b_phys = _ifft(bh).real
    total = np.zeros_like(b.data)
    for k in range(K + 1):
        lo = max(0, k - gap)
        hi = min(K, k + gap)
        piece_w = _ifft(shell_multiplier(grid, k) * wh).real
        if lo == 0 and hi == K:
            band_b = b_phys  # the band telescopes to the identity on the lattice
        else:
            band = lowpass_multiplier(grid, hi + 1) - lowpass_multiplier(grid, lo)
            band_b = _ifft(band * bh).real
        total = total + cross(band_b, piece_w)
    total_h = _fft(total)
    if dealias:
        total_h = total_h * grid.dealias_mask
    return RealVectorField(grid, _ifft(_curl_spec(total_h, grid)).real)


# ---------------------------------------------------------------------------
# Operators and norm estimation.
# ---------------------------------------------------------------------------

class LinOp:
    """Linear operator on scalar complex grid functions with an exact adjoint."""

    def apply(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __matmul__(self, other: "LinOp") -> "LinOp":
        return ComposedOp([self, other])

    def __sub__(self, other: "LinOp") -> "LinOp":
        return SumOp([(1.0, self), (-1.0, other)])

    def __add__(self, other: "LinOp") -> "LinOp":
        return SumOp([(1.0, self), (1.0, other)])


@dataclass
class MultiplierOp(LinOp):
    mult: np.ndarray

    def apply(self, u):
        return _ifft(self.mult * _fft(u))

    def adjoint(self, u):
        return _ifft(np.conj(self.mult) * _fft(u))


@dataclass
class MultOp(LinOp):
    coeff: np.ndarray

    def apply(self, u):
        return self.coeff * u

    def adjoint(self, u):
        return np.conj(self.coeff) * u


@dataclass
class QuantizeOp(LinOp):
    symbol: SymbolFn

    def apply(self, u):
        return quantize_left(self.symbol, u)

    def adjoint(self, u):
        # Op(a)^* = Op^(r)(conj a)
        if self.symbol._conj is None:
            self.symbol._conj = self.symbol.conj()
        return quantize_right(self.symbol._conj, u)


@dataclass
class ComposedOp(LinOp):
    ops: list

    def apply(self, u):
        for op in reversed(self.ops):
            u = op.apply(u)
        return u

    def adjoint(self, u):
        for op in self.ops:
            u = op.adjoint(u)
        return u


@dataclass
class SumOp(LinOp):
    terms: list  # (weight, op)

    def apply(self, u):
        return sum(w * op.apply(u) for w, op in self.terms)

    def adjoint(self, u):
        return sum(np.conj(w) * op.adjoint(u) for w, op in self.terms)


def ShellInputOp(op: LinOp, grid: Grid3, k: int) -> LinOp:
    """Restrict the operator to shell-k inputs: op o P_k."""
    return ComposedOp([op, MultiplierOp(shell_multiplier(grid, k))])


@dataclass
class OpNormResult:
    value: float
    iterations: int
    restarts: int
    converged: bool


def _check_linear_and_adjoint(op: LinOp, grid: Grid3, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    shape = (grid.n,) * 3
    u = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    a, bcoef = 0.7, -1.3 + 0.4j
    lin = op.apply(a * u + bcoef * v) - a * op.apply(u) - bcoef * op.apply(v)
    scale = max(np.max(np.abs(op.apply(u))), 1e-30)
    if np.max(np.abs(lin)) > 1e-10 * scale:
        raise ValueError("operator failed the random-pair linearity check")
    lhs = np.vdot(v, op.apply(u))
    rhs = np.vdot(op.adjoint(v), u)
    if abs(lhs - rhs) > 1e-8 * max(abs(lhs), 1e-30):
        raise ValueError("operator adjoint is inconsistent")


def op_norm_estimate(
    op: LinOp,
    grid: Grid3,
    max_iters: int = 3000,
    restarts: int = 2,
    rtol: float = 1e-6,
    seed: int = 0,
    verify: bool = True,
) -> OpNormResult:
    """Largest singular value by power iteration on A^T A.

    Dual random starts (documented restart count) guard against unlucky
    initial vectors; non-convergence within the iteration cap is flagged.
    """
    if verify:
        _check_linear_and_adjoint(op, grid, seed)
    shape = (grid.n,) * 3
    best = 0.0
    total_iters = 0
    converged_any = False
    for r in range(restarts):
        rng = np.random.default_rng(seed + 1000 * r + 1)
        v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        v /= np.linalg.norm(v)
        lam_old = 0.0
        converged = False
        for it in range(max_iters):
            w = op.adjoint(op.apply(v))
            lam = float(np.real(np.vdot(v, w)))
            nw = np.linalg.norm(w)
            if nw == 0.0:
                lam, converged = 0.0, True
                break
            v = w / nw
            if it > 2 and abs(lam - lam_old) <= rtol * max(lam, 1e-300):
                converged = True
                break
            lam_old = lam
        total_iters += it + 1
        converged_any = converged_any or converged
        best = max(best, np.sqrt(max(lam, 0.0)))
    if not converged_any:
        warnings.warn("op_norm_estimate hit the iteration cap without converging")
    return OpNormResult(float(best), total_iters, restarts, converged_any)


# ---------------------------------------------------------------------------
# High-frequency Calderon-Vaillancourt check.
# ---------------------------------------------------------------------------

@dataclass
class HfCvReport:
    shell: int
    c00: float
    c_table: dict
    lambda_threshold: float
    threshold_met: bool
    k_cut: int
    norm: float
    ratio: float
    norm_result: OpNormResult


def hf_cv_check(
    a: SymbolFn,
    shell: int,
    k_cut: int,
    deriv_order: int = 2,
    x_samples: np.ndarray | None = None,
    xi_samples: np.ndarray | None = None,
    seed: int = 0,
) -> HfCvReport:
    """Measure ||Op(a) P_{>k_cut}|| against the sup bound of the symbol.

    The symbol is assumed supported in the dyadic shell 2^shell; c_{ab} are
    sampled sups of |d_x^a d_xi^b a| * lambda^{|b|}, and the threshold is
    lambda >= max (c_ab/c00)^{2/(|a|+|b|)} over 1 <= |a|+|b| <= deriv_order.
    """
    grid = a.grid
    lam = 2.0**shell
    if x_samples is None or xi_samples is None:
        rng = np.random.default_rng(seed)
        x_samples = rng.uniform(-grid.box_length / 2, grid.box_length / 2, (160, 3))
        dirs = rng.standard_normal((160, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = lam * 2.0 ** rng.uniform(-0.9, 0.9, 160)
        xi_samples = dirs * radii[:, None]
    # support sanity: the symbol must vanish well off the shell
    off = a.func(x_samples[:4], xi_samples[:4] * 64.0)
    if np.max(np.abs(off)) > 1e-10:
        warnings.warn("symbol support check failed: not shell-localized")

    c_table = {}
    for alpha, beta in _multi_indices(deriv_order):
        sup = _plain_deriv_sup(a, alpha, beta, x_samples, xi_samples)
        c_table[(alpha, beta)] = sup * lam ** sum(beta)
    c00 = c_table[((0, 0, 0), (0, 0, 0))]
    thr = 0.0
    for (alpha, beta), c in c_table.items():
        tot = sum(alpha) + sum(beta)
        if tot == 0:
            continue
        thr = max(thr, (c / max(c00, 1e-300)) ** (2.0 / tot))
    hp = MultiplierOp(1.0 - lowpass_multiplier(grid, k_cut + 1))
    res = op_norm_estimate(ComposedOp([QuantizeOp(a), hp]), grid, seed=seed)
    return HfCvReport(
        shell=shell,
        c00=float(c00),
        c_table={f"{a_}|{b_}": float(v) for (a_, b_), v in c_table.items()},
        lambda_threshold=float(thr),
        threshold_met=bool(lam >= thr),
        k_cut=k_cut,
        norm=res.value,
        ratio=res.value / max(c00, 1e-300),
        norm_result=res,
    )


def _plain_deriv_sup(a: SymbolFn, alpha, beta, xs, xis) -> float:
    """Sampled sup of |d^alpha_x d^beta_xi a| without the <xi> weight."""
    f = a.func
    xs = np.asarray(xs, dtype=float)
    xis = np.asarray(xis, dtype=float)
    hx = 2.0**-20
    hxi = 2.0**-20 * np.sqrt(1.0 + np.sum(xis**2, axis=-1))
    orders = tuple(alpha) + tuple(beta)

    def ev(shift_x, shift_xi):
        return f(xs + shift_x, xis + shift_xi)

    vals = _tensor_central_diff(ev, orders, hx, hxi, xs.shape, xis.shape)
    return float(np.max(np.abs(vals)))


# ---------------------------------------------------------------------------
# Composition residual sweep.
# ---------------------------------------------------------------------------

@dataclass
class CompositionReport:
    shells: list
    residual1: list
    residual2: list
    slope1: float
    slope2: float


def composition_residual(
    a: SymbolFn,
    b: SymbolFn,
    shells: list[int],
    seed: int = 0,
    max_iters: int = 400,
    rtol: float = 1e-4,
) -> CompositionReport:
    """||Op(a)Op(b) - Op(ab)|| and the second-order residual, restricted to
    shell-k inputs, with fitted log2 slopes across the sweep."""
    grid = a.grid
    A = QuantizeOp(a)
    Bop = QuantizeOp(b)
    AB = ComposedOp([A, Bop])
    prod = QuantizeOp(a.product(b))
    corr = QuantizeOp(a.poisson_first(b))
    r1_op = AB - prod
    r2_op = SumOp([(1.0, AB), (-1.0, prod), (-1.0, corr)])
    r1, r2 = [], []
    for k in shells:
        r1.append(
            op_norm_estimate(
                ShellInputOp(r1_op, grid, k), grid, seed=seed, verify=False, max_iters=max_iters, rtol=rtol
            ).value
        )
        r2.append(
            op_norm_estimate(
                ShellInputOp(r2_op, grid, k), grid, seed=seed, verify=False, max_iters=max_iters, rtol=rtol
            ).value
        )
    slope1 = _fit_slope(shells, r1)
    slope2 = _fit_slope(shells, r2)
    return CompositionReport(list(shells), r1, r2, slope1, slope2)


def _fit_slope(ks, vals) -> float:
    ks = np.asarray(ks, dtype=float)
    vals = np.asarray(vals, dtype=float)
    mask = vals > 0
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(ks[mask], np.log2(vals[mask]), 1)[0])

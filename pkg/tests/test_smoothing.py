import numpy as np
import pytest

from whistlerlab.dyadic import shell_multiplier
from whistlerlab.fields import CellularField, sample_on_grid
from whistlerlab.grid import Grid3, ifftn
from whistlerlab.smoothing import measure_smoothing, packet_carrier, wavepacket_data
from whistlerlab.solver import max_divergence


GRID = Grid3(64, lam=1.0)  # kmax = 32: shells up to k = 4 resolvable


def test_wavepacket_divergence_free():
    b0 = wavepacket_data(GRID, 3)
    assert max_divergence(b0) < 1e-12


def test_wavepacket_normalized():
    b0 = wavepacket_data(GRID, 3)
    assert np.sqrt(np.sum(np.abs(b0.data) ** 2) * GRID.cell_volume) == pytest.approx(1.0, abs=1e-12)


def test_wavepacket_shell_mass():
    for k in (2, 3, 4):
        b0 = wavepacket_data(GRID, k)
        band = sum(shell_multiplier(GRID, j) for j in range(k - 1, k + 2))
        mass = np.sum(np.abs(b0.data) ** 2 * band**2) * GRID.cell_volume
        assert mass >= 0.99


def test_wavepacket_slab_mass():
    k = 3
    b0 = wavepacket_data(GRID, k, slab_center=0.0)
    phys = ifftn(b0.data).real
    pm = np.sum(phys**2, axis=(0, 1, 2)) * GRID.spacing**2
    inside = np.abs(GRID.x1d) <= GRID.box_length / 4.0
    frac = (pm[inside].sum()) / pm.sum()
    assert frac >= 0.99


def test_wavepacket_rejects_unresolvable_shell():
    with pytest.raises(ValueError):
        wavepacket_data(GRID, 7)


def test_constant_coefficient_ratio_k_uniform():
    rep = measure_smoothing(None, [2, 3, 4], GRID, n_times=32)
    assert abs(rep.slope) <= 0.1
    for row in rep.rows:
        assert row["linf_ratio"] == pytest.approx(1.0, abs=1e-10)  # unitary propagator
        assert row["le_ratio"] > 0


def test_t_scaling_sanity():
    # halving T never increases the LE ratio by more than sqrt(2) + 0.1
    k = 3
    full = measure_smoothing(None, [k], GRID, n_times=32)
    speed = 2.0 * packet_carrier(k)
    T_half = 0.5 * full.rows[0]["T"]
    half = measure_smoothing(None, [k], GRID, T=T_half, n_times=32)
    assert half.rows[0]["le_ratio"] <= full.rows[0]["le_ratio"] * (np.sqrt(2) + 0.1)


def test_linf_growth_reported():
    rep = measure_smoothing(None, [2, 3], GRID, n_times=16)
    assert np.isfinite(rep.linf_growth_rate)
    assert rep.linf_growth_rate <= 1e-6  # unitary evolution: no growth


@pytest.mark.slow
def test_trapped_probe_reported_not_asserted():
    # non-certified cellular background with closed projected characteristics:
    # ratios are produced and finite; growth with k is reported, not asserted
    grid = Grid3(32, lam=1.0)
    bg = sample_on_grid(CellularField(amp=0.5, lam=1.0, bz=0.0), grid)
    rep = measure_smoothing(bg, [2, 3], grid, n_times=12, cfl=0.5, advisory=True, background_id="cellular-trap")
    assert rep.advisory
    for row in rep.rows:
        assert np.isfinite(row["le_ratio"]) and row["le_ratio"] > 0


def test_report_roundtrip():
    rep = measure_smoothing(None, [2, 3], GRID, n_times=8)
    d = rep.to_dict()
    assert d["background"] == "uniform-e3"
    assert len(d["rows"]) == 2


@pytest.mark.slow
def test_certified_background_linf_bounded():
    # energy-boundedness counterpart: for a certified small bump the Linf L2
    # ratio stays within exp(C T coef) with a modest fitted C
    from whistlerlab.fields import GaussianCurlBump, SumField, UniformField

    grid = Grid3(32, lam=1.0)
    bg = sample_on_grid(SumField([UniformField(), GaussianCurlBump(amp=0.01, sigma=(0.8, 0.8, 0.8))]), grid)
    rep = measure_smoothing(bg, [2, 3], grid, n_times=10, cfl=0.5, background_id="certified-bump")
    coef = 0.01  # first-order coefficient size ~ perturbation amplitude
    for row in rep.rows:
        assert row["linf_ratio"] <= np.exp(50.0 * coef * row["T"]) + 1e-6
    assert np.isfinite(rep.linf_growth_rate)

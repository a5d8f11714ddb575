import json
import math
from pathlib import Path

import numpy as np
import pytest

from flagmirror.errors import CheckFailure, DegenerateInput
from flagmirror.integrals import (
    bessel_reference,
    sample_points,
    saddle_approximation,
    saddle_check,
    span_fit,
    torus_integral,
)
from flagmirror.series import all_S, compute_s

GOLDEN = json.loads((Path(__file__).parent / "golden" / "bessel.json").read_text())["rows"]


@pytest.mark.parametrize("row", GOLDEN, ids=lambda r: f"q{r['q']}-h{r['hbar']}")
def test_bessel_golden(row):
    ref = float(row["value"])
    assert abs(bessel_reference(row["q"], row["hbar"]) - ref) < 1e-13 * ref
    val = torus_integral(1, [row["q"]], row["hbar"], grid=256)
    assert abs(val - ref) < 1e-12 * ref


def test_bessel_q0():
    assert bessel_reference(0.0) == 1


@pytest.mark.parametrize("numba", [True, False])
def test_grid_doubling(numba):
    a = torus_integral(1, [0.3], 1.0, grid=128, numba=numba)
    b = torus_integral(1, [0.3], 1.0, grid=256, numba=numba)
    assert abs(a - b) < 1e-12


def test_radius_independence():
    a = torus_integral(1, [0.3], 1.0, radii=[0.3], grid=256)
    b = torus_integral(1, [0.3], 1.0, radii=[1.0], grid=256)
    assert abs(a - b) < 1e-10


def test_numba_matches_numpy_n2():
    q = [0.1 * np.exp(0.4j), 0.1 * np.exp(-1.1j)]
    a = torus_integral(2, q, 0.9, grid=32, numba=True)
    b = torus_integral(2, q, 0.9, grid=32, numba=False)
    assert abs(a - b) < 1e-13


def test_torus_n2_equals_top_series():
    data = compute_s(2, 6)
    top = all_S(data)[-1]
    q = np.array([0.1 * np.exp(0.7j), 0.1 * np.exp(2.0j)])
    val = torus_integral(2, q, 1.1, grid=48)
    assert abs(val - top.evaluate(q, 1.1)) < 1e-10


def test_torus_input_validation():
    with pytest.raises(ValueError):
        torus_integral(1, [0.3], 1.0, grid=8)
    with pytest.raises(DegenerateInput):
        torus_integral(1, [0.0], 1.0)
    with pytest.raises(DegenerateInput):
        torus_integral(3, [0.1, 0.1, 0.1], 1.0)


def test_span_fit_n1():
    data = compute_s(1, 6)
    S = all_S(data)
    samples = sample_points(1, 4, seed=3)
    rep = span_fit(1, samples, S, grid=128)
    assert rep["residual"] < 1e-8
    assert np.allclose(rep["coefficients"], [[0, 0], [1, 0]], atol=1e-8)
    rep2 = span_fit(1, samples[::-1], S, grid=128)
    assert abs(rep2["residual"] - rep["residual"]) < 1e-12


def test_span_fit_needs_samples():
    with pytest.raises(ValueError):
        span_fit(1, sample_points(1, 3), all_S(compute_s(1, 2)))


def test_saddle_approximation_value():
    # I_0(z) ~ e^z / sqrt(2 pi z) with z = 2 sqrt(q) / h
    q, h = 0.25, 0.1
    z = 2 * math.sqrt(q) / h
    assert abs(saddle_approximation(q, h) - math.exp(z) / math.sqrt(2 * math.pi * z)) < 1e-9 * math.exp(z)


def test_saddle_check():
    rep = saddle_check(q=0.25)
    assert rep["residual"] < 0.01
    # deviation halves when h halves, once in the asymptotic regime
    assert all(1.6 <= r <= 2.4 for r in rep["halving_ratios"][-3:])


def test_saddle_rejects_bad_sequence():
    with pytest.raises(ValueError):
        saddle_check(hbars=[0.5, 1.0])
    with pytest.raises(CheckFailure):
        saddle_check(tol=1e-6)


def test_env_flag_selects_numpy(monkeypatch):
    from flagmirror import _kernels

    monkeypatch.setenv("FLAGMIRROR_NO_NUMBA", "1")
    assert not _kernels.use_numba()
    monkeypatch.setenv("FLAGMIRROR_NO_NUMBA", "0")
    assert _kernels.use_numba() == _kernels.HAS_NUMBA
    monkeypatch.delenv("FLAGMIRROR_NO_NUMBA")
    val = torus_integral(1, [0.3], 1.0, grid=64, numba=False)
    assert abs(val - bessel_reference(0.3)) < 1e-12

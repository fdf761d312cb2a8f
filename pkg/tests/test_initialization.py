import math

import numpy as np
import pytest

from odeco.analysis import sin_angle
from odeco.initialization import (
    default_slices,
    gap_diagnostic,
    hosvd_projection,
    initialize_general,
    initialize_incoherent,
)
from odeco.noise_lab import split_mode_p
from odeco.odeco_model import random_odeco, synthesize
from odeco.rng import derive_rng
from odeco.tensor_core import spectral_norm


def _best_sin(dec, vectors):
    return min(max(sin_angle(vectors[q], dec.factors[q][:, k]) for q in range(dec.p)) for k in range(dec.r))


def test_default_slices():
    assert default_slices(3, 30) == math.ceil(18 * math.log(30))


def test_hosvd_exact():
    dec = random_odeco([8, 9, 10], 3, [3.0, 2.0, 1.0], seed=0)
    proj = hosvd_projection(synthesize(dec), 0, 3)
    truth = dec.factors[0] @ dec.factors[0].T
    assert spectral_norm(proj.projector() - truth) <= 1e-10
    assert proj.warnings == []


def test_hosvd_noisy_envelope():
    d, r = 30, 3
    lam = 8 * d ** 0.75
    bound = 10 * (d ** 1.5 + lam * math.sqrt(d)) * math.log(d) / lam ** 2
    hits = 0
    for s in range(50):
        rng = derive_rng(1, s)
        dec = random_odeco([d] * 3, r, lam, seed=rng)
        proj = hosvd_projection(synthesize(dec) + rng.standard_normal((d,) * 3), 0, r)
        hits += spectral_norm(proj.projector() - dec.factors[0] @ dec.factors[0].T) <= bound
    assert hits >= 45


def test_hosvd_pure_noise_warns():
    proj = hosvd_projection(np.random.default_rng(2).standard_normal((10, 10, 10)), 0, 3)
    assert proj.rank == 3 and proj.warnings
    proj = hosvd_projection(np.zeros((4, 4, 4)), 0, 2)
    assert proj.rank == 0 and proj.warnings


def test_general_noiseless_exact():
    for s in range(5):
        dec = random_odeco([10] * 3, 3, np.random.default_rng(s).uniform(0.5, 3, 3), seed=derive_rng(3, s))
        L = 2 * 9 * math.ceil(math.log(10))
        res = initialize_general(synthesize(dec), 3, L, seed=s)
        assert _best_sin(dec, res.vectors) <= 1e-6
        for v in res.vectors:
            assert abs(np.linalg.norm(v) - 1) <= 1e-12


def test_selected_trial_dominates():
    dec = random_odeco([8] * 3, 2, seed=4)
    x = synthesize(dec) + 0.1 * np.random.default_rng(4).standard_normal((8,) * 3)
    res = initialize_general(x, 2, 15, seed=5)
    assert all(res.selected_trial.sigma >= t.sigma for t in res.trials if t.valid)


def test_general_deterministic():
    x = np.random.default_rng(6).standard_normal((6, 6, 6))
    a = initialize_general(x, 2, 5, seed=7)
    b = initialize_general(x, 2, 5, seed=7)
    assert all(np.array_equal(u, v) for u, v in zip(a.vectors, b.vectors))


def test_incoherent_noiseless_exact_order5():
    dec = random_odeco([6] * 5, 2, [2.0, 1.0], seed=8)
    assert _best_sin(dec, initialize_incoherent(synthesize(dec), 2, seed=9).vectors) <= 1e-6


def test_incoherent_noiseless_exact_p4():
    # with r >= 2 the mode-3 candidate mixes components whenever the
    # split halves of the last-mode factors are not orthogonal
    dec = random_odeco([12] * 4, 2, [2.0, 1.0], seed=10)
    res = initialize_incoherent(synthesize(dec), 2, seed=11)
    for v in res.vectors:
        assert abs(np.linalg.norm(v) - 1) <= 1e-12
    assert _best_sin(dec, res.vectors) <= 1e-6


def test_incoherent_rank_one_exact():
    dec = random_odeco([6] * 4, 1, 2.0, seed=12)
    assert _best_sin(dec, initialize_incoherent(synthesize(dec), 1, seed=13).vectors) <= 1e-6


def test_incoherent_needs_order4():
    with pytest.raises(ValueError):
        initialize_incoherent(np.ones((3, 3, 3)), 1)


def test_split_slice_noise_variance():
    d = 10
    ratios = []
    for s in range(20):
        rng = derive_rng(14, s)
        e = rng.standard_normal((d,) * 4)
        sp = split_mode_p(e, seed=rng)
        proj = hosvd_projection(sp.first, (0, 1), 2)
        w = proj.project(rng.standard_normal(d * d))
        m = np.tensordot(sp.second, w.reshape(d, d, order="F"), axes=([0, 1], [0, 1]))
        ratios.append(m.var() / (w @ w))
    assert abs(np.mean(ratios) - 1) <= 0.1


def test_gap_diagnostic_sentinels():
    assert gap_diagnostic(np.outer([1.0, 2.0], [3.0, 1.0])) == math.inf
    assert gap_diagnostic(np.diag([2.0, 1.0])) == pytest.approx(4.0)


def test_gap_rank_one_slices_are_infinite():
    dec = random_odeco([6] * 3, 1, 2.0, seed=15)
    res = initialize_general(synthesize(dec), 1, 4, seed=16)
    assert all(t.gap_ratio == math.inf for t in res.trials)


def test_gap_frequency_selected_vs_single_slice():
    d, r = 10, 2
    L = math.ceil(2 * 4 * math.log(10))
    full, single = 0, 0
    for s in range(100):
        dec = random_odeco([d] * 3, r, {"equal": 1.0}, seed=derive_rng(17, s))
        x = synthesize(dec)
        full += initialize_general(x, r, L, seed=s).selected_trial.gap_ratio >= 1.2
        single += initialize_general(x, r, 1, seed=s).selected_trial.gap_ratio >= 1.2
    assert full >= 98
    assert single < 100


def test_projection_accuracy_degrades_with_lambda():
    d, r = 20, 2
    medians = []
    for lam in (40.0, 20.0, 10.0, 5.0):
        errs = []
        for s in range(20):
            rng = derive_rng(18, s)
            dec = random_odeco([d] * 3, r, lam, seed=rng)
            proj = hosvd_projection(synthesize(dec) + rng.standard_normal((d,) * 3), 0, r)
            errs.append(spectral_norm(dec.factors[0] - proj.project(dec.factors[0])))
        medians.append(np.median(errs))
    assert all(a <= b for a, b in zip(medians, medians[1:]))

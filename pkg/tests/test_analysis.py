import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from odeco.analysis import (
    asymptotic_statistics,
    first_order_residual,
    match_components,
    match_score_matrix,
    perturbation_report,
    sin_angle,
)
from odeco.decomposition import decompose_with_deflation, oracle_initializer, perturbed_oracle_initializer
from odeco.noise_lab import error_functionals
from odeco.odeco_model import random_odeco, section3_example, synthesize
from odeco.rng import derive_rng
from odeco.tensor_core import random_unit_vector

unit_triples = st.integers(0, 2 ** 32 - 1).map(
    lambda s: [random_unit_vector(5, np.random.default_rng(s)) for _ in range(3)]
)


def _est(lambdas, factors):
    return SimpleNamespace(lambdas=np.asarray(lambdas, dtype=float), factors=tuple(factors))


def test_sin_angle_examples():
    a = np.array([1.0, 0.0])
    assert sin_angle(a, a) == 0
    assert sin_angle(a, np.array([1.0, 1.0]) / math.sqrt(2)) == pytest.approx(1 / math.sqrt(2))
    assert sin_angle(a, -a) == 0
    with pytest.raises(ValueError):
        sin_angle(a, np.array([2.0, 0.0]))


def test_sin_angle_resolves_tiny_angles():
    a = np.array([1.0, 0.0])
    b = np.array([math.cos(1e-10), math.sin(1e-10)])
    assert sin_angle(a, b) == pytest.approx(1e-10, rel=1e-6)


@given(unit_triples)
def test_sin_angle_pseudometric(vs):
    a, b, c = vs
    assert sin_angle(a, b) == pytest.approx(sin_angle(b, a), abs=1e-15)
    assert sin_angle(a, c) <= sin_angle(a, b) + sin_angle(b, c) + 1e-12
    assert sin_angle(a, -a) <= 1e-15


def test_match_identity():
    dec = random_odeco([5] * 3, 3, [3.0, 2.0, 1.0], seed=0)
    m = match_components(dec, dec)
    assert m.perm.tolist() == [0, 1, 2]
    assert m.sin_angles.max() <= 1e-15 and m.lambda_errors.max() <= 1e-15


@given(st.permutations([0, 1, 2, 3]), st.integers(0, 2 ** 32 - 1))
def test_match_invariant_to_permutation_and_even_sign_flips(perm, seed):
    rng = np.random.default_rng(seed)
    dec = random_odeco([6] * 3, 4, [4.0, 3.0, 2.0, 1.0], seed=rng)
    signs = np.ones((4, 3))
    for k in range(4):
        flips = rng.choice(3, size=2 * rng.integers(0, 2), replace=False)
        signs[k, flips] = -1
    est = _est(dec.lambdas[perm], [dec.factors[q][:, perm] * signs[:, q] for q in range(3)])
    m = match_components(dec, est)
    assert m.sin_angles.max() <= 1e-14 and m.lambda_errors.max() <= 1e-12
    assert [perm[i] for i in m.perm] == [0, 1, 2, 3]


def test_odd_sign_flip_shows_in_lambda():
    dec = random_odeco([5] * 3, 1, 2.0, seed=1)
    est = _est([2.0], [-dec.factors[0], dec.factors[1], dec.factors[2]])
    m = match_components(dec, est)
    assert m.lambda_hat[0] == pytest.approx(-2.0)


def test_match_agrees_with_brute_force():
    for s in range(20):
        rng = np.random.default_rng(s)
        truth = random_odeco([5] * 3, 3, 1.0, seed=rng)
        est = _est(np.ones(4), [np.column_stack([random_unit_vector(5, rng) for _ in range(4)]) for _ in range(3)])
        score = match_score_matrix(truth, est)
        best = max(sum(score[j, c[j]] for j in range(3)) for c in itertools.permutations(range(4), 3))
        assert match_components(truth, est).score == pytest.approx(best)


def test_assignment_beats_greedy():
    e = np.eye(3)
    truth = SimpleNamespace(lambdas=np.ones(2), factors=(e[:, :2],) * 3)
    a = np.array([0.6, 0.55, math.sqrt(1 - 0.36 - 0.3025)])
    b = np.array([0.55, 0.05, math.sqrt(1 - 0.3025 - 0.0025)])
    flat = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    other = np.column_stack([flat, flat])
    est = _est([1.0, 1.0], [np.column_stack([a, b]), other, other])
    score = match_score_matrix(truth, est)
    # greedy takes the largest entry (0, 0) first and is left with (1, 1)
    assert np.unravel_index(np.argmax(score), score.shape) == (0, 0)
    greedy = score[0, 0] + score[1, 1]
    m = match_components(truth, est)
    assert m.perm.tolist() == [1, 0]
    assert m.score == pytest.approx(score[0, 1] + score[1, 0]) and m.score > greedy


def test_match_rejects_short_estimate():
    dec = random_odeco([4] * 3, 2, seed=2)
    with pytest.raises(ValueError):
        match_components(dec, _est([1.0], [f[:, :1] for f in dec.factors]))


def test_zero_noise_report():
    dec = random_odeco([5] * 3, 2, [2.0, 1.0], seed=3)
    rep = perturbation_report(dec, dec, np.zeros((5, 5, 5)))
    assert not np.any(rep.lambda_ratio) and not np.any(rep.angle_ratio) and not np.any(rep.angle_ratio_eps1)


def test_worked_example_report():
    d = 101
    ex = section3_example(d, 10.0)
    rep = perturbation_report(ex.truth, ex.perturbed_truth, ex.X - ex.T, seed=0)
    vnorm = np.linalg.norm(ex.v)
    mode1 = rep.match.sin_angles[:, 0]
    assert np.all(np.abs(mode1 / vnorm - 1) <= 2.0 / d)
    assert np.all((rep.angle_ratio >= 0.5) & (rep.angle_ratio <= 1.5))


def test_equal_lambda_matrix_baseline_infinite():
    rng = np.random.default_rng(4)
    dec = random_odeco([8] * 3, 2, {"equal": 30.0}, seed=rng)
    e = rng.standard_normal((8,) * 3)
    est = decompose_with_deflation(synthesize(dec) + e, 2, oracle_initializer(dec))
    rep = perturbation_report(dec, est, e, seed=0)
    assert np.all(np.isfinite(rep.angle_ratio)) and np.all(np.isinf(rep.matrix_bound))


def test_report_scale_equivariance():
    rng = np.random.default_rng(5)
    dec = random_odeco([6] * 3, 2, [4.0, 3.0], seed=rng)
    e = 0.3 * rng.standard_normal((6,) * 3)
    for s in (0.1, 7.0):
        base_est = decompose_with_deflation(synthesize(dec) + e, 2, oracle_initializer(dec))
        scaled_est = decompose_with_deflation(synthesize(dec.scaled(s)) + s * e, 2, oracle_initializer(dec))
        r1 = perturbation_report(dec, base_est, e, seed=1)
        r2 = perturbation_report(dec.scaled(s), scaled_est, s * e, seed=1)
        for name in ("lambda_ratio", "angle_ratio", "angle_ratio_eps1", "relative_noise", "matrix_ratio"):
            assert np.allclose(getattr(r1, name), getattr(r2, name), rtol=1e-10, atol=1e-12), name


@pytest.mark.parametrize("d", [11, 51, 101])
def test_worked_example_first_order_exact(d):
    ex = section3_example(d, 10.0)
    fo = first_order_residual(ex.truth, ex.perturbed_truth, ex.X - ex.T, seed=0)
    assert fo.residuals[:, 0].max() <= 1e-10
    assert fo.residuals[:, 1].max() <= 1e-10
    assert fo.residuals[:, 2].max() <= 1e-10


def test_first_order_envelope():
    d, r = 30, 2
    scaled = []
    for s in range(15):
        rng = derive_rng(6, s)
        base = random_odeco([d] * 3, r, 1.0, seed=rng)
        e = rng.standard_normal((d,) * 3)
        diag = error_functionals(e, base, spectral_norm=False)
        lam = 50 * diag.eps1
        truth = base.scaled(lam)
        est = decompose_with_deflation(synthesize(truth) + e, r, perturbed_oracle_initializer(truth, 0.25, seed=s))
        fo = first_order_residual(truth, est, e, diagnostics=diag)
        scaled.append(fo.residuals.max() / ((diag.eps1 ** 2 + diag.eps1 * diag.eps2) / lam ** 2))
    assert np.median(scaled) <= 20


def test_asymptotic_zero_noise():
    d, lam = 9, 5.0
    dec = random_odeco([d] * 3, 1, lam, seed=7)
    a = asymptotic_statistics(dec, dec, np.zeros((d,) * 3))
    assert np.allclose(a.overlap_stat, (lam ** 2 / math.sqrt(d)) * (d - 1) / lam ** 2)
    assert np.all(np.abs(a.deviation) <= 1e-14)


def test_asymptotic_sigma2_gaussian():
    # one draw of sigma^2 has standard deviation ~0.5 at d=200; average over seeds
    d = 200
    sig = []
    for s in range(10):
        rng = derive_rng(8, s)
        dec = random_odeco([d] * 3, 1, 1.0, seed=rng)
        sig.append(asymptotic_statistics(dec, dec, rng.standard_normal((d,) * 3)).sigma2)
    assert 1.6 <= np.mean(sig) <= 2.4


def test_asymptotic_mean_deviation():
    d = 30
    lam = 20 * d ** 0.75
    devs = []
    for s in range(60):
        rng = derive_rng(9, s)
        truth = random_odeco([d] * 3, 1, lam, seed=rng)
        e = rng.standard_normal((d,) * 3)
        est = decompose_with_deflation(synthesize(truth) + e, 1, oracle_initializer(truth))
        devs.append(asymptotic_statistics(truth, est, e).deviation[0])
    target = (d - 1) / lam ** 2
    assert np.all(np.abs(np.mean(devs, axis=0) - target) <= 0.2 * target)


def test_linear_form_residuals_small():
    d = 30
    lam = 20 * d ** 0.75
    rng = np.random.default_rng(10)
    truth = random_odeco([d] * 3, 1, lam, seed=rng)
    e = rng.standard_normal((d,) * 3)
    est = decompose_with_deflation(synthesize(truth) + e, 1, oracle_initializer(truth))
    a = random_unit_vector(d, rng)
    a -= (a @ truth.factors[0][:, 0]) * truth.factors[0][:, 0]
    a /= np.linalg.norm(a)
    res = asymptotic_statistics(truth, est, e, test_dirs={(0, 0): a}).linear_residuals[(0, 0)]
    # leading fluctuation is of order 1 / lam; the residual is higher order
    assert abs(res[0]) <= 0.2 / lam * math.sqrt(d)
    with pytest.raises(ValueError):
        asymptotic_statistics(truth, est, e, test_dirs={(0, 0): truth.factors[0][:, 0]})

import numpy as np
import pytest

from odeco.analysis import match_components, sin_angle
from odeco.decomposition import (
    DegenerateContractionError,
    EstimatedDecomposition,
    FixedPointConfig,
    InitializationError,
    alignment_gap,
    assumption_diagnostics,
    decompose_with_deflation,
    deflate,
    noiseless_decompose,
    oracle_initializer,
    perturb_to_angle,
    perturbed_oracle_initializer,
    power_iteration,
    random_initializer,
)
from odeco.noise_lab import error_functionals
from odeco.odeco_model import random_odeco, section3_example, synthesize
from odeco.rng import derive_rng
from odeco.tensor_core import contract, outer_rank_one, random_unit_vector, spectral_norm_estimate


def test_noiseless_distinct_lambdas():
    for s in range(10):
        dec = random_odeco([10] * 3, 4, [4.0, 3.0, 2.0, 1.0], seed=derive_rng(1, s))
        est = noiseless_decompose(synthesize(dec), 4, seed=s)
        assert match_components(dec, est).sin_angles.max() <= 1e-8


def test_noiseless_rank_one():
    rng = np.random.default_rng(0)
    vs = [random_unit_vector(6, rng) for _ in range(3)]
    t = outer_rank_one(2.0, vs)
    est = noiseless_decompose(t, 1, FixedPointConfig(sweeps=10), seed=1)
    assert est.r == 1 and est.traces[0].iterations_used <= 10
    assert np.linalg.norm(t - outer_rank_one(est.lambdas[0], est.component(0))) <= 1e-10


def test_noiseless_equal_lambdas():
    for s in range(50):
        dec = random_odeco([8] * 3, 2, {"equal": 2.0}, seed=derive_rng(2, s))
        est = noiseless_decompose(synthesize(dec), 2, seed=s)
        assert match_components(dec, est).sin_angles.max() <= 1e-6


def test_power_iteration_fixed_point():
    dec = random_odeco([7] * 3, 3, [3.0, 2.0, 1.0], seed=3)
    tr = power_iteration(synthesize(dec), dec.component(1), iters=5)
    for it in tr.iterates:
        for a, b in zip(it, dec.component(1)):
            assert sin_angle(a, b) <= 1e-14


def test_power_iteration_worked_example_mode2_exact():
    ex = section3_example(21, 10.0)
    k = 4
    rng = np.random.default_rng(4)
    start = [perturb_to_angle(u, 0.25, rng) for u in ex.perturbed_truth.component(k)]
    tr = power_iteration(ex.X, start, iters=50)
    assert np.allclose(np.abs(tr.final[1]), np.eye(21)[k], atol=1e-15)


def test_power_iteration_noisy_envelope():
    d, r = 30, 2
    for s in range(10):
        rng = derive_rng(5, s)
        base = random_odeco([d] * 3, r, 1.0, seed=rng)
        e = rng.standard_normal((d,) * 3)
        e1 = error_functionals(e, base, spectral_norm=False).eps1
        truth = base.scaled(20 * e1)
        start = [perturb_to_angle(u, 0.25, rng) for u in truth.component(0)]
        tr = power_iteration(synthesize(truth) + e, start, iters=100)
        err = max(sin_angle(a, b) for a, b in zip(tr.final, truth.component(0)))
        assert err <= 10 * e1 / truth.lambdas[0]


def test_power_iteration_degenerate():
    i = np.eye(3)
    t = outer_rank_one(1.0, [i[0]] * 3)
    with pytest.raises(DegenerateContractionError):
        power_iteration(t, [i[1], i[1], i[1]], iters=3)


def test_power_iteration_unit_norms_and_monotone_alignment():
    dec = random_odeco([10] * 3, 3, [3.0, 2.0, 1.5], seed=6)
    t = synthesize(dec)
    rng = np.random.default_rng(7)
    for _ in range(5):
        tr = power_iteration(t, [random_unit_vector(10, rng) for _ in range(3)], iters=30)
        ratios = []
        for it in tr.iterates:
            for u in it:
                assert abs(np.linalg.norm(u) - 1) <= 1e-12
            v1, v2 = alignment_gap(dec, it, skip_first=False)
            ratios.append(v1 / v2)
        ratios = [x for x in ratios if x < 1e12]  # beyond this the runner-up is rounding noise
        assert all(b >= a * (1 - 1e-12) for a, b in zip(ratios, ratios[1:]))


def test_power_iteration_quadratic_rate():
    dec = random_odeco([10] * 3, 3, [3.0, 2.0, 1.5], seed=8)
    t = synthesize(dec)
    rng = np.random.default_rng(9)
    k_emp = 0.0
    for _ in range(10):
        tr = power_iteration(t, [random_unit_vector(10, rng) for _ in range(3)], iters=30)
        k = int(np.argmax([abs(tr.final[0] @ dec.factors[0][:, j]) for j in range(3)]))
        sins = [max(sin_angle(it[q], dec.factors[q][:, k], check=False) for q in range(3)) for it in tr.iterates]
        for a, b in zip(sins, sins[1:]):
            if 1e-6 < a <= 0.1:
                k_emp = max(k_emp, b / a ** 2)
    print(f"empirical quadratic constant K = {k_emp:.3g}")
    assert k_emp <= 10


def test_deflate_examples():
    dec = random_odeco([6] * 3, 3, [3.0, 2.0, 1.0], seed=10)
    t = synthesize(dec)
    one = outer_rank_one(2.0, dec.component(0))
    assert np.max(np.abs(deflate(one, dec.component(0))[0])) <= 1e-15
    rng = np.random.default_rng(11)
    vs = [random_unit_vector(6, rng) for _ in range(3)]
    left, _ = deflate(rng.standard_normal((6, 6, 6)), vs)
    assert abs(float(contract(left, vs))) <= 1e-12
    rest, w = deflate(t, dec.component(0))
    assert w == pytest.approx(3.0)
    assert abs(spectral_norm_estimate(rest, seed=0) - 2.0) <= 1e-8
    for k in range(1, 3):
        rest, _ = deflate(rest, dec.component(k))
    assert np.linalg.norm(rest) <= 1e-10 * np.linalg.norm(t)


@pytest.mark.parametrize("lam", [[1.0, 1.0, 1.0], [5.0, 1.0, 0.01]])
def test_oracle_deflation_exact(lam):
    dec = random_odeco([7] * 3, 3, lam, seed=12)
    est = decompose_with_deflation(synthesize(dec), 3, oracle_initializer(dec))
    m = match_components(dec, est)
    assert m.sin_angles.max() <= 1e-12 and m.lambda_errors.max() <= 1e-12


def test_perturbed_oracle_deflation_envelope():
    d, r = 30, 3
    for s in range(10):
        rng = derive_rng(13, s)
        base = random_odeco([d] * 3, r, {"geometric": [1.0, 0.7]}, seed=rng)
        e = rng.standard_normal((d,) * 3)
        e1 = error_functionals(e, base, spectral_norm=False).eps1
        truth = base.scaled(40 * e1)
        est = decompose_with_deflation(synthesize(truth) + e, r, perturbed_oracle_initializer(truth, 0.25, seed=s))
        m = match_components(truth, est)
        assert np.all(m.max_sin <= 10 * e1 / truth.lambdas)


def test_overspecified_rank_leaves_no_signal():
    dec = random_odeco([6] * 3, 2, [3.0, 2.0], seed=14)
    est = decompose_with_deflation(synthesize(dec), 4, random_initializer(15), iters=200)
    big = np.argsort(-np.abs(est.lambdas))
    assert np.all(np.abs(est.lambdas[big[2:]]) <= 1e-8 * 3.0)


def test_initializer_failure_recorded():
    def failing(x, j):
        raise InitializationError("no slice")

    dec = random_odeco([5] * 3, 1, 3.0, seed=16)
    est = decompose_with_deflation(synthesize(dec), 1, failing, fallback_seed=0)
    assert "initializer failed" in est.notes[0]


def test_perturb_to_angle_exact():
    u = np.eye(5)[0]
    assert sin_angle(u, perturb_to_angle(u, 0.25, 0)) == pytest.approx(0.25, abs=1e-14)


def test_estimate_round_trip():
    dec = random_odeco([4, 5, 6], 2, [2.0, 1.0], seed=17)
    est = decompose_with_deflation(synthesize(dec), 2, oracle_initializer(dec))
    d = est.to_dict(include_traces=True)
    back = EstimatedDecomposition.from_dict(d)
    assert np.array_equal(back.lambdas, est.lambdas)
    assert all(np.array_equal(a, b) for a, b in zip(back.factors, est.factors))
    assert "traces" in d


def test_assumption_diagnostics_zero_noise():
    dec = random_odeco([5] * 3, 2, seed=18)
    rep = assumption_diagnostics(np.zeros((5, 5, 5)), dec)
    assert rep.eps0_eps1 == rep.eps1_r14 == rep.spectral_norm_est == 0
    assert not np.any(rep.a2_first) and not np.any(rep.a2_second)


def test_assumption_a2_ratio_envelope():
    for s in range(20):
        rng = derive_rng(19, s)
        dec = random_odeco([20] * 3, 3, seed=rng)
        rep = assumption_diagnostics(rng.standard_normal((20,) * 3), dec, seed=s)
        assert np.all(rep.a2_first_ratio <= 3)


def test_assumption_a1_flags_weak_signal():
    rng = np.random.default_rng(20)
    dec = random_odeco([10] * 3, 4, 1.0, seed=rng)
    e = rng.standard_normal((10,) * 3)
    e1 = error_functionals(e, dec, spectral_norm=False).eps1
    weak = assumption_diagnostics(e, dec.scaled(0.5 * e1 * 4 ** 0.25))
    strong = assumption_diagnostics(e, dec.scaled(2.0 * e1 * 4 ** 0.25))
    assert weak.a1_flags["eps1_r14"] and not strong.a1_flags["eps1_r14"]


def test_alignment_gap():
    dec = random_odeco([5] * 3, 2, [3.0, 1.0], seed=21)
    v1, v2 = alignment_gap(dec, dec.component(0))
    assert v1 == pytest.approx(3.0) and v2 <= 1e-14
    assert alignment_gap(random_odeco([4] * 3, 1, 2.0, seed=22), [np.ones(4) / 2] * 3)[1] == 0.0

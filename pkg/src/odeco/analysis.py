"""Error metrics, component matching and the perturbation/asymptotic evaluators.

Estimates are duck-typed: anything with ``lambdas`` (length ``r``) and
``factors`` (``p`` matrices with ``r`` unit columns) works, which covers
both :class:`OdecoDecomposition` and ``EstimatedDecomposition``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .noise_lab import NoiseDiagnostics, error_functionals
from .odeco_model import OdecoDecomposition, synthesize
from .tensor_core import contract, matricize, svd

UNIT_TOL = 1e-8


def sin_angle(a: np.ndarray, b: np.ndarray, check: bool = True) -> float:
    """Sine of the angle between two unit vectors; sign-invariant.

    Computed as ``||b - <a, b> a||`` which stays accurate near zero where
    ``sqrt(1 - <a, b>**2)`` bottoms out around 1e-8.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if check:
        for v in (a, b):
            if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
                raise ValueError(f"sin_angle expects unit vectors, got norm {np.linalg.norm(v):.3e}")
    s = float(np.linalg.norm(b - (a @ b) * a))
    return min(max(s, 0.0), 1.0)


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


@dataclass
class ComponentMatch:
    """Assignment of estimated components to true ones.

    ``perm[j]`` is the estimate index matched to true component ``j``.
    ``signs[j, q]`` flips that estimate's mode-``q`` vector to a
    nonnegative overlap with the truth. ``lambda_hat`` is the matched
    estimated weight with those signs applied.
    """

    perm: np.ndarray
    signs: np.ndarray
    sin_angles: np.ndarray
    lambda_hat: np.ndarray
    lambda_errors: np.ndarray
    score: float

    @property
    def max_sin(self) -> np.ndarray:
        return self.sin_angles.max(axis=1)

    def summary(self) -> dict:
        return {
            "max_sin": float(self.sin_angles.max(initial=0.0)),
            "median_component_max_sin": float(np.median(self.max_sin)) if self.max_sin.size else 0.0,
            "max_lambda_error": float(self.lambda_errors.max(initial=0.0)),
            "perm": self.perm.tolist(),
        }


def match_score_matrix(truth, est) -> np.ndarray:
    """``S[j, i] = prod_q |<u_j^(q), uhat_i^(q)>|``."""
    s = np.ones((truth.lambdas.size, np.asarray(est.lambdas).size))
    for u, uh in zip(truth.factors, est.factors):
        s *= np.abs(np.asarray(u).T @ np.asarray(uh))
    return s


def match_components(truth, est) -> ComponentMatch:
    """Optimal assignment on the product-overlap score, then sign fixing.

    Extra estimated components beyond the true rank are left unmatched.
    """
    r_true = truth.lambdas.size
    r_est = np.asarray(est.lambdas).size
    if r_est < r_true:
        raise ValueError(f"estimate has {r_est} components, truth has {r_true}")
    score = match_score_matrix(truth, est)
    rows, cols = linear_sum_assignment(score, maximize=True)
    perm = np.empty(r_true, dtype=int)
    perm[rows] = cols

    p = len(truth.factors)
    signs = np.ones((r_true, p))
    sins = np.zeros((r_true, p))
    lam_hat = np.zeros(r_true)
    for j in range(r_true):
        i = perm[j]
        for q in range(p):
            u = truth.factors[q][:, j]
            uh = est.factors[q][:, i]
            signs[j, q] = 1.0 if u @ uh >= 0 else -1.0
            sins[j, q] = sin_angle(u, uh)
        lam_hat[j] = float(est.lambdas[i]) * np.prod(signs[j])
    return ComponentMatch(
        perm=perm,
        signs=signs,
        sin_angles=sins,
        lambda_hat=lam_hat,
        lambda_errors=np.abs(truth.lambdas - lam_hat),
        score=float(score[np.arange(r_true), perm].sum()),
    )


def _ratio(num: float, den: float, zero_tol: float = 1e-12) -> float:
    # 0/0 counts as 0 (exact recovery without noise); x/0 as +inf
    if den == 0.0:
        return 0.0 if abs(num) <= zero_tol else float("inf")
    return num / den


@dataclass
class PerturbationReport:
    """Empirical constants of the gap-free bounds, plus the matrix baseline.

    ``lambda_ratio[k] = |lambda_k - lambda_hat| / ||E||`` and
    ``angle_ratio[k] = max_q sin * lambda_k / ||E||``; ``angle_ratio_eps1``
    uses ``eps1`` in place of ``||E||``. ``matrix_bound[k, q]`` is the
    gap-dependent bound ``2 ||Mat_q(E)|| / gap_k`` (``inf`` at zero gap) and
    ``matrix_sin[k, q]`` the error of the k-th left singular vector of
    ``Mat_q(X)``.
    """

    spectral_norm_est: float
    frobenius: float
    eps1: float
    lambda_ratio: np.ndarray
    angle_ratio: np.ndarray
    angle_ratio_eps1: np.ndarray
    relative_noise: np.ndarray
    matrix_bound: np.ndarray
    matrix_sin: np.ndarray
    matrix_ratio: np.ndarray
    match: ComponentMatch = field(repr=False)


def singular_gaps(lambdas: np.ndarray) -> np.ndarray:
    """``min(lambda_{k-1} - lambda_k, lambda_k - lambda_{k+1})`` with ``lambda_0 = inf`` and ``lambda_{r+1} = 0``."""
    lam = np.asarray(lambdas, dtype=float)
    padded = np.concatenate([[np.inf], lam, [0.0]])
    return np.minimum(padded[:-2] - padded[1:-1], padded[1:-1] - padded[2:])


def perturbation_report(
    truth: OdecoDecomposition,
    est,
    e: np.ndarray,
    match: ComponentMatch | None = None,
    diagnostics: NoiseDiagnostics | None = None,
    seed=0,
) -> PerturbationReport:
    e = np.asarray(e, dtype=float)
    match = match or match_components(truth, est)
    diagnostics = diagnostics or error_functionals(e, truth, seed=seed)
    norm = diagnostics.spectral_norm_est
    lam = truth.lambdas
    r, p = truth.r, truth.p

    lambda_ratio = np.array([_ratio(match.lambda_errors[k], norm) for k in range(r)])
    angle_ratio = np.array([_ratio(match.max_sin[k] * lam[k], norm) for k in range(r)])
    angle_ratio_eps1 = np.array([_ratio(match.max_sin[k] * lam[k], diagnostics.eps1) for k in range(r)])
    relative_noise = np.array([norm / lam[k] if lam[k] > 0 else float("inf") for k in range(r)])

    gaps = singular_gaps(lam)
    x = synthesize(truth) + e
    matrix_bound = np.zeros((r, p))
    matrix_sin = np.zeros((r, p))
    for q in range(p):
        mat_norm = float(svd(matricize(e, q))[1][0])
        left = svd(matricize(x, q))[0]
        for k in range(r):
            matrix_bound[k, q] = 2.0 * mat_norm / gaps[k] if gaps[k] > 0 else float("inf")
            matrix_sin[k, q] = sin_angle(truth.factors[q][:, k], left[:, k])
    with np.errstate(divide="ignore", invalid="ignore"):
        matrix_ratio = np.where(np.isinf(matrix_bound), 0.0, matrix_sin / matrix_bound)
    return PerturbationReport(
        spectral_norm_est=norm,
        frobenius=diagnostics.frobenius,
        eps1=diagnostics.eps1,
        lambda_ratio=lambda_ratio,
        angle_ratio=angle_ratio,
        angle_ratio_eps1=angle_ratio_eps1,
        relative_noise=relative_noise,
        matrix_bound=matrix_bound,
        matrix_sin=matrix_sin,
        matrix_ratio=matrix_ratio,
        match=match,
    )


@dataclass
class FirstOrderReport:
    """Distance of each estimate from its first-order prediction.

    ``residuals[k, q] = sin(uhat, normalize(u + E x_{s != q} u / lambda_k))``.
    ``theorem_envelope[k] = (2 + n/lambda_k) * ((1 + eps) n / lambda_k)**(p-1)``
    with ``n`` the noise-norm estimate, and
    ``power_envelope[k] = (eps1**2 + eps1*eps2) / lambda_k**2`` (unit
    constant). Envelopes are NaN where ``n >= lambda_k``.
    """

    residuals: np.ndarray
    theorem_envelope: np.ndarray
    power_envelope: np.ndarray
    match: ComponentMatch = field(repr=False)

    @property
    def max_residual(self) -> np.ndarray:
        return self.residuals.max(axis=1)


def first_order_prediction(truth: OdecoDecomposition, e: np.ndarray, k: int, q: int) -> np.ndarray:
    u = truth.component(k)
    return u[q] + contract(e, u, skip=(q,)) / truth.lambdas[k]


def first_order_residual(
    truth: OdecoDecomposition,
    est,
    e: np.ndarray,
    match: ComponentMatch | None = None,
    diagnostics: NoiseDiagnostics | None = None,
    eps: float = 0.1,
    seed=0,
) -> FirstOrderReport:
    e = np.asarray(e, dtype=float)
    match = match or match_components(truth, est)
    diagnostics = diagnostics or error_functionals(e, truth, seed=seed)
    r, p = truth.r, truth.p
    res = np.zeros((r, p))
    for k in range(r):
        i = match.perm[k]
        for q in range(p):
            pred = _normalize(first_order_prediction(truth, e, k, q))
            res[k, q] = sin_angle(est.factors[q][:, i], pred)
    n = diagnostics.spectral_norm_est
    lam = truth.lambdas
    valid = n < lam
    theorem_env = np.where(valid, (2 + n / lam) * ((1 + eps) * n / lam) ** (p - 1), np.nan)
    e1, e2 = diagnostics.eps1, diagnostics.eps2
    power_env = np.where(valid, (e1 ** 2 + e1 * e2) / lam ** 2, np.nan)
    return FirstOrderReport(res, theorem_env, power_env, match)


@dataclass
class AsymptoticStat:
    """Per-component, per-mode overlap statistics.

    ``deviation[k, q] = 1 - <u, uhat>**2``; ``overlap_stat`` is
    ``(lambda_k**2 / sqrt(d)) * (<u, uhat>**2 - (1 - (d - 1) / lambda_k**2))``;
    ``sigma2`` is the sample variance over ``i`` of ``E_i**2`` with
    ``E_i = E x_q e_i x_{s != q} u^(s)``. ``linear_residuals[(k, q)]`` holds
    one residual per supplied test direction.
    """

    deviation: np.ndarray
    overlap_stat: np.ndarray
    sigma2: np.ndarray
    remainder_dominated: np.ndarray
    linear_residuals: dict = field(default_factory=dict)


def asymptotic_statistics(
    truth: OdecoDecomposition,
    est,
    e: np.ndarray,
    test_dirs: dict | None = None,
    match: ComponentMatch | None = None,
) -> AsymptoticStat:
    e = np.asarray(e, dtype=float)
    match = match or match_components(truth, est)
    r, p = truth.r, truth.p
    dev = np.zeros((r, p))
    stat = np.zeros((r, p))
    sigma2 = np.zeros((r, p))
    dominated = np.zeros((r, p), dtype=bool)
    linear = {}
    for k in range(r):
        lam = truth.lambdas[k]
        i = match.perm[k]
        u = truth.component(k)
        for q in range(p):
            d = truth.dims[q]
            uh = est.factors[q][:, i]
            overlap2 = float(u[q] @ uh) ** 2
            dev[k, q] = 1.0 - overlap2
            stat[k, q] = lam ** 2 / np.sqrt(d) * (overlap2 - (1.0 - (d - 1) / lam ** 2))
            ei = contract(e, u, skip=(q,))
            sigma2[k, q] = float(np.var(ei ** 2, ddof=1)) if d > 1 else 0.0
            dominated[k, q] = (d - 1) / lam ** 2 > 0.5
            if test_dirs and (k, q) in test_dirs:
                dirs = np.atleast_2d(np.asarray(test_dirs[(k, q)], dtype=float))
                if np.max(np.abs(dirs @ u[q])) > 1e-10:
                    raise ValueError(f"test directions for {(k, q)} are not orthogonal to the component")
                # estimate sign-aligned first, which absorbs the sign factor on <a, u>
                aligned = match.signs[k, q] * uh
                linear[(k, q)] = np.array([
                    a @ aligned
                    - (a @ u[q]) / (1.0 - d / lam ** 2)
                    - float(contract(e, [a if s == q else u[s] for s in range(p)])) / lam
                    for a in dirs
                ])
    return AsymptoticStat(dev, stat, sigma2, dominated, linear)

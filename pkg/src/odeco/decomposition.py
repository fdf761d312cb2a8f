"""Odeco estimation: fixed-point decomposition, power iteration and deflation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analysis import sin_angle
from .noise_lab import error_functionals
from .odeco_model import OdecoDecomposition, haar_orthonormal
from .rng import as_rng
from .tensor_core import contract, gram_schmidt, multilinear_form, outer_rank_one, random_unit_vector, svd

log = logging.getLogger(__name__)

NONTRIVIAL_INIT_SIN = 0.25


class DegenerateContractionError(RuntimeError):
    """A power-iteration contraction vanished (orthogonal start or empty slice)."""


class InitializationError(RuntimeError):
    pass


def default_iters(d: int, eps1: float | None = None) -> int:
    """``max(30, ceil(3 log(1 + eps1 * d)))`` with ``eps1 ~ sqrt(d)`` when unknown."""
    proxy = math.sqrt(d) if eps1 is None else eps1
    return max(30, math.ceil(3 * math.log(1 + proxy * d)))


@dataclass
class PowerIterationTrace:
    """Iterates of one power-iteration run.

    ``iterates[t]`` is the list of per-mode unit vectors after sweep ``t``
    (``iterates[0]`` is the start). ``norms[t - 1, q]`` is the contraction
    norm before normalizing mode ``q`` in sweep ``t``.
    """

    iterates: list[list[np.ndarray]]
    norms: np.ndarray
    converged: bool
    iterations_used: int

    @property
    def final(self) -> list[np.ndarray]:
        return self.iterates[-1]


def power_iteration(
    x: np.ndarray,
    init: Sequence[np.ndarray],
    iters: int | None = None,
    tol: float = 1e-13,
    keep_iterates: bool = True,
) -> PowerIterationTrace:
    """Alternating power iteration from ``init``.

    Mode ``q`` is refreshed from the contraction of ``x`` with the newest
    vectors of every other mode (modes before ``q`` already updated in the
    current sweep). Stops early once no mode moves by more than ``tol`` in
    sine angle. Signs are left as produced.
    """
    x = np.asarray(x, dtype=float)
    p = x.ndim
    if len(init) != p:
        raise ValueError(f"need {p} start vectors, got {len(init)}")
    u = [np.asarray(v, dtype=float) / np.linalg.norm(v) for v in init]
    if iters is None:
        iters = default_iters(max(x.shape))
    if iters < 1:
        raise ValueError("iters must be >= 1")

    history = [list(u)]
    norms = []
    converged = False
    for _ in range(iters):
        sweep_norms = np.zeros(p)
        moved = 0.0
        for q in range(p):
            v = contract(x, u, skip=(q,))
            n = float(np.linalg.norm(v))
            if n == 0.0:
                raise DegenerateContractionError(f"contraction for mode {q} vanished")
            new = v / n
            moved = max(moved, sin_angle(u[q], new, check=False))
            u[q] = new
            sweep_norms[q] = n
        norms.append(sweep_norms)
        if keep_iterates:
            history.append(list(u))
        else:
            history = [history[0], list(u)]
        if moved < tol:
            converged = True
            break
    return PowerIterationTrace(history, np.array(norms), converged, len(norms))


def deflate(x: np.ndarray, vectors: Sequence[np.ndarray]) -> tuple[np.ndarray, float]:
    """Remove ``<x, u_1 o ... o u_p> u_1 o ... o u_p`` from ``x``.

    The weight is recomputed from ``x`` itself. Returns the deflated
    tensor and that weight.
    """
    weight = multilinear_form(x, vectors)
    return x - outer_rank_one(weight, vectors), weight


def alignment_gap(truth: OdecoDecomposition, vectors: Sequence[np.ndarray], skip_first: bool = True) -> tuple[float, float]:
    """Largest and second-largest of ``lambda_k prod_q |<u^(q), u_k^(q)>|``.

    With ``skip_first`` the product runs over modes ``q >= 1`` only, which is
    the quantity that governs how fast the fixed-point iteration started
    at ``vectors`` locks onto the leading component. Returns ``(v1, v2)``;
    ``v2`` is 0 for rank one.
    """
    start = 1 if skip_first else 0
    vals = np.array([
        truth.lambdas[k] * np.prod([abs(vectors[q] @ truth.factors[q][:, k]) for q in range(start, truth.p)])
        for k in range(truth.r)
    ])
    vals = np.sort(vals)[::-1]
    return float(vals[0]), float(vals[1]) if vals.size > 1 else 0.0


@dataclass
class EstimatedDecomposition:
    """Estimated components in extraction order.

    ``lambdas[j]`` is the weight ``<X_j, uhat_j^(1) o ...>`` taken from the
    tensor being deflated at extraction time; factor columns are unit
    vectors. ``notes`` maps component index to anything worth reporting
    (initializer fallbacks, for instance).
    """

    lambdas: np.ndarray
    factors: tuple[np.ndarray, ...]
    traces: list[PowerIterationTrace] = field(default_factory=list, repr=False)
    residual: np.ndarray | None = field(default=None, repr=False)
    unrecovered: list[int] = field(default_factory=list)
    init_vectors: list[list[np.ndarray]] = field(default_factory=list, repr=False)
    notes: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.factors)

    @property
    def r(self) -> int:
        return int(np.asarray(self.lambdas).size)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def component(self, j: int) -> list[np.ndarray]:
        return [f[:, j] for f in self.factors]

    def sorted_by_weight(self) -> "EstimatedDecomposition":
        order = np.argsort(-np.abs(self.lambdas), kind="stable")
        return EstimatedDecomposition(
            np.asarray(self.lambdas)[order],
            tuple(f[:, order] for f in self.factors),
            [self.traces[i] for i in order] if self.traces else [],
            self.residual,
            list(self.unrecovered),
            [self.init_vectors[i] for i in order] if self.init_vectors else [],
            dict(self.notes),
        )

    def to_dict(self, include_traces: bool = False) -> dict:
        out = {
            "p": self.p,
            "r": self.r,
            "dims": list(self.dims),
            "lambdas": np.asarray(self.lambdas).tolist(),
            "factors": [f.T.tolist() for f in self.factors],
            "unrecovered": list(self.unrecovered),
            "notes": {str(k): v for k, v in self.notes.items()},
        }
        if include_traces:
            out["traces"] = [
                {
                    "converged": tr.converged,
                    "iterations_used": tr.iterations_used,
                    "norms": tr.norms.tolist(),
                    "iterates": [[v.tolist() for v in it] for it in tr.iterates],
                }
                for tr in self.traces
            ]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatedDecomposition":
        r = int(d["r"])
        factors = tuple(np.asarray(cols, dtype=float).reshape(r, dim).T
                        for cols, dim in zip(d["factors"], d["dims"]))
        return cls(np.asarray(d["lambdas"], dtype=float), factors,
                   unrecovered=list(d.get("unrecovered", [])))


# ---------------------------------------------------------------------------
# Noiseless decomposition by alternating fixed-point iteration


@dataclass
class FixedPointConfig:
    """Settings for :func:`noiseless_decompose`.

    ``sweeps`` is the number of fixed-point sweeps per component per
    round. A candidate is accepted once a sweep moves no mode by more than
    ``tol`` and its contraction norm is above ``norm_floor`` times the
    tensor's Frobenius norm. ``recovery_threshold`` bounds the overlap
    with already recovered components in every mode; larger overlap marks
    the candidate as a duplicate.
    """

    sweeps: int = 50
    max_rounds: int = 20
    recovery_threshold: float = 0.1
    tol: float = 1e-12
    norm_floor: float = 1e-10

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0 < self.recovery_threshold < 1:
            raise ValueError("recovery_threshold must lie in (0, 1)")


def _project_out(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for _ in range(2):
        for b in basis:
            v = v - (b @ v) * b
    return v


def noiseless_decompose(
    t: np.ndarray,
    r: int,
    cfg: FixedPointConfig | None = None,
    seed=None,
) -> EstimatedDecomposition:
    """Decompose an (approximately) odeco tensor from a random Stiefel start.

    Each pending component runs ``cfg.sweeps`` fixed-point sweeps starting
    from its column of a uniformly random orthonormal frame, projected off
    every component recovered so far. Candidates that converge are
    accepted; the others carry their current iterate into the next round.
    Recovered vectors are Gram-Schmidt orthonormalized per mode at the end.
    Components still pending after ``cfg.max_rounds`` are listed in
    ``unrecovered``.
    """
    cfg = cfg or FixedPointConfig()
    t = np.asarray(t, dtype=float)
    p = t.ndim
    if r > min(t.shape):
        raise ValueError(f"rank {r} exceeds the smallest dimension {min(t.shape)}")
    rng = as_rng(seed)
    frames = [haar_orthonormal(d, r, rng) for d in t.shape]
    current = {k: [frames[q][:, k] for q in range(p)] for k in range(r)}
    floor = cfg.norm_floor * float(np.linalg.norm(t))

    found: list[list[np.ndarray]] = []
    traces: list[PowerIterationTrace] = []
    pending = list(range(r))
    rounds = 0
    while pending and rounds < cfg.max_rounds:
        rounds += 1
        still = []
        for k in pending:
            start = []
            for q in range(p):
                v = _project_out(current[k][q], [c[q] for c in found])
                nv = np.linalg.norm(v)
                if nv < 1e-8:
                    v = _project_out(random_unit_vector(t.shape[q], rng), [c[q] for c in found])
                    nv = np.linalg.norm(v)
                start.append(v / nv)
            try:
                tr = power_iteration(t, start, iters=cfg.sweeps, tol=cfg.tol, keep_iterates=False)
            except DegenerateContractionError:
                still.append(k)
                current[k] = [random_unit_vector(d, rng) for d in t.shape]
                continue
            cand = tr.final
            weak = tr.norms[-1].min() < floor
            duplicate = any(
                min(abs(c[q] @ cand[q]) for q in range(p)) > cfg.recovery_threshold for c in found
            )
            if tr.converged and not weak and not duplicate:
                found.append(cand)
                traces.append(tr)
            else:
                still.append(k)
                current[k] = cand if not weak else [random_unit_vector(d, rng) for d in t.shape]
        pending = still

    if found:
        factors = []
        for q in range(p):
            block, _ = gram_schmidt(np.column_stack([c[q] for c in found]))
            factors.append(block)
        factors = tuple(factors)
        lambdas = np.array([multilinear_form(t, [f[:, j] for f in factors]) for j in range(len(found))])
    else:
        factors = tuple(np.zeros((d, 0)) for d in t.shape)
        lambdas = np.zeros(0)
    if pending:
        log.warning("noiseless_decompose: %d component(s) unrecovered after %d rounds", len(pending), rounds)
    return EstimatedDecomposition(
        lambdas, factors, traces=traces, unrecovered=sorted(pending), notes={"rounds": rounds}
    )


# ---------------------------------------------------------------------------
# Power iteration with deflation

Initializer = Callable[[np.ndarray, int], Sequence[np.ndarray]]


def decompose_with_deflation(
    x: np.ndarray,
    r: int,
    initializer: Initializer,
    iters: int | None = None,
    tol: float = 1e-13,
    keep_residual: bool = False,
    fallback_seed=None,
) -> EstimatedDecomposition:
    """Extract ``r`` components by initialize, power-iterate, deflate.

    ``initializer(x_j, j)`` receives the current deflated tensor and the
    0-based component index and returns ``p`` start vectors. If it raises
    :class:`InitializationError`, the failure is recorded in ``notes`` and
    a random start is used instead.
    """
    x = np.asarray(x, dtype=float)
    if r > min(x.shape):
        raise ValueError(f"rank {r} exceeds the smallest dimension {min(x.shape)}")
    if iters is None:
        iters = default_iters(max(x.shape))
    rng = as_rng(fallback_seed)
    current = x.copy()
    lambdas = []
    columns = []
    traces = []
    inits = []
    notes = {}
    for j in range(r):
        try:
            start = [np.asarray(v, dtype=float) for v in initializer(current, j)]
        except InitializationError as exc:
            notes[j] = f"initializer failed: {exc}; used a random start"
            start = [random_unit_vector(d, rng) for d in x.shape]
        inits.append(start)
        tr = power_iteration(current, start, iters=iters, tol=tol)
        current, weight = deflate(current, tr.final)
        lambdas.append(weight)
        columns.append(tr.final)
        traces.append(tr)
    factors = tuple(np.column_stack([c[q] for c in columns]) for q in range(x.ndim))
    return EstimatedDecomposition(
        np.array(lambdas),
        factors,
        traces=traces,
        residual=current if keep_residual else None,
        init_vectors=inits,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Oracle and random start strategies (tests, baselines, experiments)


def oracle_initializer(truth: OdecoDecomposition) -> Initializer:
    """Start component ``j`` at the true component ``j``."""

    def init(x_current, j):
        return truth.component(j)

    return init


def perturb_to_angle(u: np.ndarray, angle_sin: float, rng) -> np.ndarray:
    """Unit vector at sine angle exactly ``angle_sin`` from unit ``u``."""
    rng = as_rng(rng)
    w = rng.standard_normal(u.size)
    w -= (w @ u) * u
    w /= np.linalg.norm(w)
    return math.sqrt(1 - angle_sin ** 2) * u + angle_sin * w


def perturbed_oracle_initializer(truth: OdecoDecomposition, angle_sin: float = NONTRIVIAL_INIT_SIN, seed=None) -> Initializer:
    """Start every mode of component ``j`` at sine angle ``angle_sin`` from the truth."""
    rng = as_rng(seed)

    def init(x_current, j):
        return [perturb_to_angle(u, angle_sin, rng) for u in truth.component(j)]

    return init


def random_initializer(seed=None) -> Initializer:
    """Uniform random unit starts; baseline only."""
    rng = as_rng(seed)

    def init(x_current, j):
        return [random_unit_vector(d, rng) for d in x_current.shape]

    return init


# ---------------------------------------------------------------------------
# Noise assumptions as computable diagnostics


@dataclass
class AssumptionReport:
    """Raw quantities behind the noise assumptions.

    A1 compares ``lambda_min`` with ``eps0*eps1``, ``eps1 * r**0.25`` and the
    noise-norm estimate (``a1_flags`` marks each term exceeding
    ``lambda_min / C``). For every mode ``q``, ``a2_first[q]`` is the
    spectral norm of ``[E_j^(q,q') u_j^(q')]_j`` and ``a2_second[q]`` that
    of ``[E_j^(q,q') E_j^(q,q')^T u_j^(q)]_j``, each minimized over
    ``q' != q``. Ratios are taken against ``eps1`` and ``eps1**2``.
    """

    lambda_min: float
    eps0_eps1: float
    eps1_r14: float
    spectral_norm_est: float
    a1_flags: dict
    a2_first: np.ndarray
    a2_second: np.ndarray
    a2_first_ratio: np.ndarray
    a2_second_ratio: np.ndarray
    eps1: float


def assumption_diagnostics(e: np.ndarray, truth: OdecoDecomposition, constant: float = 1.0, seed=0) -> AssumptionReport:
    e = np.asarray(e, dtype=float)
    diag = error_functionals(e, truth, seed=seed)
    p, r = e.ndim, truth.r
    first = np.full(p, np.inf)
    second = np.full(p, np.inf)
    for q in range(p):
        for q2 in range(p):
            if q2 == q:
                continue
            cols1, cols2 = [], []
            for j in range(r):
                u = truth.component(j)
                lo, hi = min(q, q2), max(q, q2)
                m = contract(e, u, skip=(lo, hi))
                if q > q2:
                    m = m.T  # rows indexed by mode q
                cols1.append(m @ u[q2])
                cols2.append(m @ (m.T @ u[q]))
            first[q] = min(first[q], float(svd(np.column_stack(cols1))[1][0]))
            second[q] = min(second[q], float(svd(np.column_stack(cols2))[1][0]))
    lam_min = float(truth.lambdas.min())
    terms = {
        "eps0_eps1": diag.eps0 * diag.eps1,
        "eps1_r14": diag.eps1 * r ** 0.25,
        "spectral_norm": diag.spectral_norm_est,
    }
    flags = {k: lam_min < constant * v for k, v in terms.items()}
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(diag.eps1 > 0, first / diag.eps1, 0.0)
        r2 = np.where(diag.eps1 > 0, second / diag.eps1 ** 2, 0.0)
    return AssumptionReport(
        lambda_min=lam_min,
        eps0_eps1=terms["eps0_eps1"],
        eps1_r14=terms["eps1_r14"],
        spectral_norm_est=diag.spectral_norm_est,
        a1_flags=flags,
        a2_first=first,
        a2_second=second,
        a2_first_ratio=r1,
        a2_second_ratio=r2,
        eps1=diag.eps1,
    )


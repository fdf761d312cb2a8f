"""Odeco decompositions: container, synthesis and instance generators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .rng import as_rng
from .tensor_core import khatri_rao, outer_rank_one

ORTHONORMAL_TOL = 1e-8


@dataclass(eq=False)
class OdecoDecomposition:
    """Weights ``lambdas`` and per-mode column-orthonormal factors.

    The tensor is ``sum_k lambdas[k] * U0[:, k] o U1[:, k] o ...``.
    Weights are kept positive and sorted nonincreasing; ties keep the
    given order.
    """

    lambdas: np.ndarray
    factors: tuple[np.ndarray, ...]
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float).ravel()
        self.factors = tuple(np.asarray(f, dtype=float) for f in self.factors)
        r = self.lambdas.size
        if len(self.factors) < 2:
            raise ValueError("need at least two factor matrices")
        for f in self.factors:
            if f.ndim != 2 or f.shape[1] != r:
                raise ValueError(f"factor of shape {f.shape} does not have {r} columns")
        if r > min(f.shape[0] for f in self.factors):
            raise ValueError(f"rank {r} exceeds the smallest dimension {self.dims}")
        if self.check:
            if np.any(self.lambdas <= 0):
                raise ValueError("lambdas must be positive")
            for q, f in enumerate(self.factors):
                err = np.max(np.abs(f.T @ f - np.eye(r))) if r else 0.0
                if err > ORTHONORMAL_TOL:
                    raise ValueError(f"factor {q} is not column-orthonormal (error {err:.2e})")
        order = np.argsort(-self.lambdas, kind="stable")
        self.lambdas = self.lambdas[order]
        self.factors = tuple(f[:, order] for f in self.factors)

    @property
    def p(self) -> int:
        return len(self.factors)

    @property
    def r(self) -> int:
        return self.lambdas.size

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def component(self, j: int) -> list[np.ndarray]:
        return [f[:, j] for f in self.factors]

    def matricized_right_factor(self, mode: int) -> np.ndarray:
        """``V`` with ``matricize(T, mode) = U_mode diag(lambdas) V^T``."""
        others = [f for q, f in enumerate(self.factors) if q != mode]
        # matricize puts the first remaining mode fastest; khatri_rao puts the last one fastest
        return khatri_rao(*reversed(others))

    def scaled(self, s: float) -> "OdecoDecomposition":
        return OdecoDecomposition(self.lambdas * s, self.factors, check=self.check)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "r": self.r,
            "dims": list(self.dims),
            "lambdas": self.lambdas.tolist(),
            # one list per column
            "factors": [f.T.tolist() for f in self.factors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OdecoDecomposition":
        factors = [np.asarray(cols, dtype=float).reshape(int(d["r"]), dim).T
                   for cols, dim in zip(d["factors"], d["dims"])]
        dec = cls(np.asarray(d["lambdas"], dtype=float), tuple(factors))
        if dec.p != int(d["p"]):
            raise ValueError("p does not match the number of factors")
        return dec


def synthesize(dec: OdecoDecomposition) -> np.ndarray:
    """Dense tensor of a decomposition, accumulated one rank-one term at a time."""
    t = np.zeros(dec.dims)
    for j in range(dec.r):
        t += outer_rank_one(dec.lambdas[j], dec.component(j))
    return t


def resolve_lambdas(spec, r: int) -> np.ndarray:
    """Turn a weight specification into ``r`` weights.

    Accepted forms: a number (all equal), a sequence of ``r`` numbers, or a
    dict with one of ``{"equal": lam}``, ``{"geometric": [lam_max, ratio]}``,
    ``{"explicit": [...]}``.
    """
    if isinstance(spec, dict):
        if len(spec) != 1:
            raise ValueError(f"lambda spec must have exactly one key: {spec}")
        (kind, value), = spec.items()
        if kind == "equal":
            return np.full(r, float(value))
        if kind == "geometric":
            lam_max, ratio = value
            return float(lam_max) * float(ratio) ** np.arange(r)
        if kind == "explicit":
            return resolve_lambdas(list(value), r)
        raise ValueError(f"unknown lambda spec kind {kind!r}")
    if np.isscalar(spec):
        return np.full(r, float(spec))
    lam = np.asarray(spec, dtype=float).ravel()
    if lam.size != r:
        raise ValueError(f"expected {r} lambdas, got {lam.size}")
    return lam


def haar_orthonormal(d: int, r: int, rng) -> np.ndarray:
    """Haar-distributed ``d x r`` column-orthonormal matrix (QR with sign fix)."""
    rng = as_rng(rng)
    q, rmat = np.linalg.qr(rng.standard_normal((d, r)))
    signs = np.sign(np.diag(rmat))
    signs[signs == 0] = 1.0
    return q * signs


def random_odeco(dims: Sequence[int], r: int, lambdas=1.0, seed=None) -> OdecoDecomposition:
    """Random odeco decomposition with Haar factors."""
    dims = [int(d) for d in dims]
    if r > min(dims):
        raise ValueError(f"rank {r} exceeds the smallest dimension of {dims}")
    rng = as_rng(seed)
    lam = resolve_lambdas(lambdas, r)
    factors = tuple(haar_orthonormal(d, r, rng) for d in dims)
    return OdecoDecomposition(lam, factors)


class Section3Example(NamedTuple):
    T: np.ndarray
    X: np.ndarray
    truth: OdecoDecomposition
    perturbed_truth: OdecoDecomposition
    v: np.ndarray


def section3_example(d: int, lam: float) -> Section3Example:
    """Pair of ``d x d x d`` odeco tensors differing by ``lam * sum_k v o e_k o e_k``.

    ``T = lam * sum_{k<d} e_k o e_k o e_k`` and
    ``X = lam * sum_{k<d} (e_k + v) o e_k o e_k`` with
    ``v = e_d / sqrt(d-1) - (e_1 + ... + e_{d-1}) / (d-1)``.
    The vectors ``e_k + v`` happen to be orthonormal, so ``X`` is odeco too.
    """
    if d < 3:
        raise ValueError("d must be at least 3")
    eye = np.eye(d)
    v = np.zeros(d)
    v[: d - 1] = -1.0 / (d - 1)
    v[d - 1] = 1.0 / np.sqrt(d - 1)

    basis = eye[:, : d - 1]
    shifted = basis + v[:, None]
    lambdas = np.full(d - 1, float(lam))
    T = np.zeros((d, d, d))
    X = np.zeros((d, d, d))
    for k in range(d - 1):
        T[k, k, k] = lam
        X[:, k, k] = lam * shifted[:, k]
    truth = OdecoDecomposition(lambdas, (basis, basis.copy(), basis.copy()))
    perturbed = OdecoDecomposition(lambdas.copy(), (shifted, basis.copy(), basis.copy()))
    return Section3Example(T, X, truth, perturbed, v)


@dataclass
class IncoherenceReport:
    max_abs_entry_per_mode: np.ndarray

    def incoherent_modes(self, threshold: float) -> list[int]:
        return [q for q, m in enumerate(self.max_abs_entry_per_mode) if m <= threshold]


def incoherence(dec: OdecoDecomposition) -> IncoherenceReport:
    return IncoherenceReport(np.array([np.max(np.abs(f)) for f in dec.factors]))

"""Noise ensembles, the contraction error functionals, and mode splitting."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .odeco_model import OdecoDecomposition
from .rng import as_rng
from .tensor_core import (
    contract,
    leading_singular_vectors,
    outer_rank_one,
    random_unit_vector,
    rank_one_approximation,
)

FAMILIES = ("gaussian", "student_t", "rank_one_spike")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise family and parameters.

    ``student_t`` draws are rescaled to variance ``sigma**2``. Degrees of
    freedom must exceed 8 (finite eighth moment) unless ``allow_heavy`` is
    set, and must exceed 4 in any case.
    """

    family: str = "gaussian"
    sigma: float = 1.0
    df: float | None = None
    spike: float = 0.0
    allow_heavy: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.family == "student_t":
            if self.df is None:
                raise ValueError("student_t noise needs df")
            if self.df <= 4:
                raise ValueError(f"df={self.df} has no finite fourth moment")
            if self.df <= 8 and not self.allow_heavy:
                raise ValueError(f"df={self.df} has no finite eighth moment; pass allow_heavy=True")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "sigma": self.sigma,
            "df": self.df,
            "spike": self.spike,
            "allow_heavy": self.allow_heavy,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(**d)


def sample_noise(dims: Sequence[int], spec: NoiseSpec, rng=None) -> np.ndarray:
    """Draw a noise tensor; uses ``spec.seed`` when no generator is passed."""
    rng = as_rng(spec.seed if rng is None else rng)
    dims = tuple(int(d) for d in dims)
    if spec.family == "gaussian":
        return spec.sigma * rng.standard_normal(dims)
    if spec.family == "student_t":
        scale = spec.sigma * np.sqrt((spec.df - 2.0) / spec.df)
        return scale * rng.standard_t(spec.df, size=dims)
    vectors = [random_unit_vector(d, rng) for d in dims]
    return outer_rank_one(spec.spike, vectors)


@dataclass
class NoiseDiagnostics:
    """Error functionals of a noise tensor relative to true components.

    ``eps0``: largest full contraction with a true component.
    ``eps1``: largest norm of the noise contracted on all but one mode.
    ``eps2``: largest spectral norm of the noise contracted on all but two modes.
    ``spectral_norm_est``: lower estimate of the operator norm, warm-started
    at the ``eps2`` maximizer so that ``eps2 <= spectral_norm_est``.
    Per-component arrays have length ``r``.
    """

    eps0: float
    eps1: float
    eps2: float
    spectral_norm_est: float
    frobenius: float
    eps0_per_component: np.ndarray = field(repr=False)
    eps1_per_component: np.ndarray = field(repr=False)
    eps2_per_component: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "eps0": self.eps0,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "spectral_norm_est": self.spectral_norm_est,
            "frobenius": self.frobenius,
        }


def eps1_value(e: np.ndarray, truth: OdecoDecomposition) -> float:
    """Only ``eps1``; cheaper than :func:`error_functionals`."""
    best = 0.0
    for j in range(truth.r):
        u = truth.component(j)
        for k in range(e.ndim):
            best = max(best, float(np.linalg.norm(contract(e, u, skip=(k,)))))
    return best


def error_functionals(
    e: np.ndarray,
    truth: OdecoDecomposition,
    spectral_norm: bool = True,
    seed=0,
    restarts: int | None = None,
    iters: int = 100,
) -> NoiseDiagnostics:
    e = np.asarray(e, dtype=float)
    if e.shape != truth.dims:
        raise ValueError(f"noise dims {e.shape} do not match decomposition dims {truth.dims}")
    p, r = e.ndim, truth.r
    eps0 = np.zeros(r)
    eps1 = np.zeros(r)
    eps2 = np.zeros(r)
    best_pair = (-1.0, None)
    for j in range(r):
        u = truth.component(j)
        eps0[j] = abs(float(contract(e, u)))
        for k in range(p):
            eps1[j] = max(eps1[j], float(np.linalg.norm(contract(e, u, skip=(k,)))))
        for k1, k2 in itertools.combinations(range(p), 2):
            s, left, right = leading_singular_vectors(contract(e, u, skip=(k1, k2)))
            if s > eps2[j]:
                eps2[j] = s
            if s > best_pair[0]:
                start = list(u)
                start[k1], start[k2] = left, right
                best_pair = (s, start)

    norm_est = float("nan")
    if spectral_norm:
        inits = [best_pair[1]] if best_pair[1] is not None else []
        norm_est, _ = rank_one_approximation(e, restarts, iters, seed, inits=inits)
    return NoiseDiagnostics(
        eps0=float(eps0.max(initial=0.0)),
        eps1=float(eps1.max(initial=0.0)),
        eps2=float(eps2.max(initial=0.0)),
        spectral_norm_est=float(norm_est),
        frobenius=float(np.linalg.norm(e)),
        eps0_per_component=eps0,
        eps1_per_component=eps1,
        eps2_per_component=eps2,
    )


class ModeSplit(NamedTuple):
    first: np.ndarray
    second: np.ndarray
    first_index: np.ndarray
    second_index: np.ndarray


def split_mode_p(x: np.ndarray, seed=None, mode: int | None = None) -> ModeSplit:
    """Split the last mode's slices into two halves by fair coin flips.

    Draws where every slice lands on one side are redrawn. Returns both
    sub-tensors with the retained (sorted) slice indices.
    """
    x = np.asarray(x)
    mode = x.ndim - 1 if mode is None else mode
    d = x.shape[mode]
    if d < 2:
        raise ValueError("the split mode needs at least two slices")
    rng = as_rng(seed)
    while True:
        side = rng.random(d) < 0.5
        if 0 < side.sum() < d:
            break
    first_idx = np.flatnonzero(side)
    second_idx = np.flatnonzero(~side)
    return ModeSplit(
        np.take(x, first_idx, axis=mode),
        np.take(x, second_idx, axis=mode),
        first_idx,
        second_idx,
    )

"""Warm starts from HOSVD projections and random Gaussian slicing.

Two initializers are provided. :func:`initialize_general` slices the
tensor along the first mode with ``P1 theta`` where ``P1`` projects onto the
top-``r`` left singular space of ``Mat_0(X)``. :func:`initialize_incoherent`
(order >= 4) splits the last mode into two halves, estimates the pair
projection ``P12`` from one half and slices the other half along the first
two modes. Both repeat the slicing ``L`` times and keep the trial with the
largest leading singular value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .decomposition import InitializationError, Initializer
from .noise_lab import split_mode_p
from .rng import as_rng, derive_rng
from .tensor_core import contract, matricize, matricize_pair, mode_multiply, svd

log = logging.getLogger(__name__)

GAP_RATIO_TARGET = 1.2


def default_slices(r: int, d: int) -> int:
    """``ceil(2 r^2 log d)``."""
    return max(1, math.ceil(2 * r * r * math.log(d)))


@dataclass
class ProjectionEstimate:
    """Top-``r`` left singular basis of a one- or two-mode unfolding.

    The projector ``basis @ basis.T`` is never formed; use :meth:`project`.
    """

    modes: tuple[int, ...]
    basis: np.ndarray
    singular_values: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.T @ v)

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


def hosvd_projection(x: np.ndarray, modes, r: int, gap_warn: float = 1.05) -> ProjectionEstimate:
    """Projection onto the top-``r`` left singular vectors of ``Mat_modes(x)``.

    ``modes`` is a single mode or an increasing pair. If fewer than ``r``
    nonzero singular values exist the available columns are returned; a
    warning is also attached when ``s_r <= gap_warn * s_{r+1}``, i.e. the
    unfolding shows no gap after ``r`` (typical for pure noise).
    """
    x = np.asarray(x, dtype=float)
    if np.ndim(modes) == 0:
        modes = (int(modes),)
        m = matricize(x, modes[0])
    else:
        modes = tuple(int(k) for k in modes)
        m = matricize_pair(x, modes)
    if r > m.shape[0]:
        raise ValueError(f"rank {r} exceeds the unfolding's row dimension {m.shape[0]}")
    u, s, _ = svd(m)
    warnings = []
    tiny = s[0] * 1e-12 if s.size and s[0] > 0 else 0.0
    available = int(np.sum(s > tiny)) if s.size and s[0] > 0 else 0
    if available < r:
        warnings.append(f"only {available} of {r} singular directions are nonzero")
    elif s.size > r and s[r - 1] <= gap_warn * s[r]:
        warnings.append(f"no singular gap after {r}: s_r={s[r - 1]:.4g}, s_r+1={s[r]:.4g}")
    for w in warnings:
        log.info("hosvd_projection %s: %s", modes, w)
    keep = min(r, available)
    return ProjectionEstimate(modes, u[:, :keep], s, warnings)


def gap_diagnostic(m: np.ndarray) -> float:
    """``(s_1 / s_2)**2`` of a sliced unfolding; ``inf`` if it has rank one."""
    s = svd(np.asarray(m, dtype=float))[1]
    if s.size < 2 or s[1] <= s[0] * 1e-14:
        return float("inf")
    return float((s[0] / s[1]) ** 2)


@dataclass
class SliceTrial:
    """One random slice: its Gaussian direction, leading singular value and candidates."""

    index: int
    theta: np.ndarray = field(repr=False)
    sigma: float
    gap_ratio: float
    vectors: list[np.ndarray] | None = field(repr=False)
    valid: bool = True


@dataclass
class InitResult:
    vectors: list[np.ndarray]
    trials: list[SliceTrial] = field(repr=False)
    selected: int
    projection: ProjectionEstimate = field(repr=False)
    warnings: list[str] = field(default_factory=list)

    @property
    def selected_trial(self) -> SliceTrial:
        return self.trials[self.selected]


def _base_seed(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return int(as_rng(seed).integers(2 ** 63))


def _leading_left(m: np.ndarray) -> np.ndarray:
    return svd(m)[0][:, 0]


def _select(trials: list[SliceTrial]) -> int:
    valid = [t for t in trials if t.valid]
    if not valid:
        raise InitializationError("every slicing trial was degenerate")
    # max sigma; ties go to the smallest index
    best = max(valid, key=lambda t: (t.sigma, -t.index))
    return best.index


def initialize_general(x: np.ndarray, r: int, L: int | None = None, seed=None) -> InitResult:
    """Random slicing along the first mode through the HOSVD projection."""
    x = np.asarray(x, dtype=float)
    p = x.ndim
    d = x.shape[0]
    L = default_slices(r, max(x.shape)) if L is None else L
    if L < 1:
        raise ValueError("L must be >= 1")
    base = _base_seed(seed)
    proj = hosvd_projection(x, 0, r)
    if proj.rank == 0:
        raise InitializationError("first-mode unfolding is zero")

    trials = []
    for l in range(L):
        theta = derive_rng(base, l).standard_normal(d)
        sliced = mode_multiply(x, 0, proj.project(theta))
        _, s, _ = svd(matricize(sliced, 0))
        sigma = float(s[0])
        gap = float("inf") if s.size < 2 or s[1] <= s[0] * 1e-14 else float((s[0] / s[1]) ** 2)
        if sigma == 0.0:
            trials.append(SliceTrial(l, theta, 0.0, gap, None, valid=False))
            continue
        vectors: list[np.ndarray | None] = [None] * p
        for q in range(1, p):
            vectors[q] = _leading_left(matricize(sliced, q - 1))
        v = contract(x, vectors, skip=(0,))
        nv = np.linalg.norm(v)
        if nv == 0.0:
            trials.append(SliceTrial(l, theta, sigma, gap, None, valid=False))
            continue
        vectors[0] = v / nv
        trials.append(SliceTrial(l, theta, sigma, gap, vectors))
    best = _select(trials)
    return InitResult(list(trials[best].vectors), trials, best, proj, list(proj.warnings))


def initialize_incoherent(
    x: np.ndarray,
    r: int,
    L: int | None = None,
    seed=None,
    incoherence_threshold: float | None = None,
) -> InitResult:
    """Sample-split random slicing for order >= 4.

    The last mode is split by coin flips; the pair projection on modes
    (0, 1) comes from the first half and the slicing uses the second half.
    The last-mode vector is finally recomputed against the full tensor.
    A warning is attached when the returned last-mode vector has an entry
    above ``incoherence_threshold`` (default ``1 / log d``), a visible proxy
    for the incoherence the method relies on.
    """
    x = np.asarray(x, dtype=float)
    p = x.ndim
    if p < 4:
        raise ValueError("the sample-split initializer needs order >= 4")
    d = max(x.shape)
    L = default_slices(r, d) if L is None else L
    if L < 1:
        raise ValueError("L must be >= 1")
    base = _base_seed(seed)
    split = split_mode_p(x, derive_rng(base, 2 ** 31))
    x2 = split.second
    proj = hosvd_projection(split.first, (0, 1), r)
    if proj.rank == 0:
        raise InitializationError("pair unfolding of the first half is zero")
    d0, d1 = x.shape[0], x.shape[1]

    trials = []
    for l in range(L):
        theta = derive_rng(base, l).standard_normal(d0 * d1)
        w = proj.project(theta).reshape(d0, d1, order="F")
        sliced = np.tensordot(x2, w, axes=([0, 1], [0, 1]))
        _, s, _ = svd(matricize(sliced, 0))
        sigma = float(s[0])
        gap = float("inf") if s.size < 2 or s[1] <= s[0] * 1e-14 else float((s[0] / s[1]) ** 2)
        if sigma == 0.0:
            trials.append(SliceTrial(l, theta, 0.0, gap, None, valid=False))
            continue
        half: list[np.ndarray | None] = [None] * p
        for q in range(2, p):
            half[q] = _leading_left(matricize(sliced, q - 2))
        m = contract(x2, half, skip=(0, 1))
        u, sm, vmat = svd(m)
        if sm[0] == 0.0:
            trials.append(SliceTrial(l, theta, sigma, gap, None, valid=False))
            continue
        vectors = [u[:, 0], vmat[:, 0], *half[2 : p - 1], None]
        v = contract(x, vectors, skip=(p - 1,))
        nv = np.linalg.norm(v)
        if nv == 0.0:
            trials.append(SliceTrial(l, theta, sigma, gap, None, valid=False))
            continue
        vectors[p - 1] = v / nv
        trials.append(SliceTrial(l, theta, sigma, gap, vectors))
    best = _select(trials)
    warnings = list(proj.warnings)
    threshold = 1.0 / math.log(x.shape[-1]) if incoherence_threshold is None else incoherence_threshold
    peak = float(np.max(np.abs(trials[best].vectors[-1])))
    if peak > threshold:
        msg = f"last-mode estimate has entry {peak:.3f} > {threshold:.3f}; incoherence may fail"
        log.info(msg)
        warnings.append(msg)
    return InitResult(list(trials[best].vectors), trials, best, proj, warnings)


def general_initializer(r: int, L: int | None = None, seed=None) -> Initializer:
    """Deflation-ready wrapper: component ``j`` slices the deflated tensor for rank ``r - j``."""
    base = _base_seed(seed)

    def init(x_current, j):
        n_slices = default_slices(r, max(x_current.shape)) if L is None else L
        return initialize_general(x_current, r - j, n_slices, seed=derive_rng(base, j)).vectors

    return init


def incoherent_initializer(r: int, L: int | None = None, seed=None) -> Initializer:
    base = _base_seed(seed)

    def init(x_current, j):
        n_slices = default_slices(r, max(x_current.shape)) if L is None else L
        return initialize_incoherent(x_current, r - j, n_slices, seed=derive_rng(base, j)).vectors

    return init

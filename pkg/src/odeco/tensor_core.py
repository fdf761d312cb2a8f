"""Dense tensor primitives.

Tensors are plain :class:`numpy.ndarray` objects of order 2 to 6 holding
real floats. Modes are 0-based. Whenever a tensor is flattened (the
columns of a matricization, the binary file format) the first mode varies
fastest, i.e. Fortran order, so ``matricize(t, 0)`` is a pure reshape of
the Fortran-ordered data.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

MIN_ORDER = 2
MAX_ORDER = 6


def as_tensor(data, dims: Sequence[int] | None = None) -> np.ndarray:
    """Build a validated float tensor.

    If ``dims`` is given, ``data`` is read as a flat array in first-mode-
    fastest order and reshaped accordingly.
    """
    arr = np.asarray(data, dtype=float)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if arr.size != int(np.prod(dims)):
            raise ValueError(f"data length {arr.size} does not match dims {dims}")
        arr = arr.reshape(dims, order="F")
    check_tensor(arr)
    return arr


def check_tensor(t: np.ndarray) -> None:
    if not MIN_ORDER <= t.ndim <= MAX_ORDER:
        raise ValueError(f"tensor order must be in [{MIN_ORDER}, {MAX_ORDER}], got {t.ndim}")
    if any(d < 1 for d in t.shape):
        raise ValueError(f"all dimensions must be positive, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor has non-finite entries")


def _check_mode(t: np.ndarray, mode: int) -> None:
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for order-{t.ndim} tensor")


def matricize(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding.

    Row index is ``i_mode``; the column index runs over the remaining
    modes in increasing order with the first remaining mode fastest.
    """
    t = np.asarray(t)
    _check_mode(t, mode)
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1, order="F")


def dematricize(m: np.ndarray, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`matricize`."""
    dims = tuple(dims)
    rest = [d for i, d in enumerate(dims) if i != mode]
    t = np.asarray(m).reshape([dims[mode], *rest], order="F")
    return np.moveaxis(t, 0, mode)


def matricize_pair(t: np.ndarray, modes: tuple[int, int]) -> np.ndarray:
    """Unfold two modes into the rows.

    Row ``i + d_{k1} * j`` holds index ``(i_{k1}, i_{k2}) = (i, j)``; the
    columns follow the single-mode convention over the remaining modes.
    For a third-order tensor and modes ``(0, 1)`` this is exactly
    ``matricize(t, 2).T``.
    """
    t = np.asarray(t)
    k1, k2 = modes
    _check_mode(t, k1)
    _check_mode(t, k2)
    if not k1 < k2:
        raise ValueError(f"mode pair must be increasing, got {modes}")
    moved = np.moveaxis(t, (k1, k2), (0, 1))
    return moved.reshape(t.shape[k1] * t.shape[k2], -1, order="F")


def pair_vector(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-space vector of ``u o v`` under the :func:`matricize_pair` row order."""
    return np.outer(u, v).ravel(order="F")


def mode_multiply(t: np.ndarray, mode: int, m: np.ndarray) -> np.ndarray:
    """Mode product ``t x_mode m``.

    A 2-d ``m`` of shape ``(J, d_mode)`` replaces dimension ``d_mode`` by
    ``J``. A 1-d ``m`` contracts the mode away, lowering the order by one.
    """
    t = np.asarray(t, dtype=float)
    m = np.asarray(m, dtype=float)
    _check_mode(t, mode)
    if m.shape[-1] != t.shape[mode]:
        raise ValueError(
            f"matrix has {m.shape[-1]} columns, mode {mode} has dimension {t.shape[mode]}"
        )
    if m.ndim == 1:
        return np.tensordot(t, m, axes=([mode], [0]))
    out = np.tensordot(m, t, axes=([1], [mode]))
    return np.moveaxis(out, 0, mode)


def contract(t: np.ndarray, vectors: Sequence[np.ndarray | None], skip: Sequence[int] = ()) -> np.ndarray:
    """Contract every mode not listed in ``skip`` with its vector.

    ``vectors`` has one entry per mode; entries at skipped modes are
    ignored and may be ``None``. The remaining axes are the skipped modes
    in increasing order; with no skipped modes the result is a 0-d array.
    """
    t = np.asarray(t, dtype=float)
    if len(vectors) != t.ndim:
        raise ValueError(f"need {t.ndim} vectors, got {len(vectors)}")
    skip = set(skip)
    out = t
    # highest mode first so lower axis positions stay valid
    for q in reversed(range(t.ndim)):
        if q in skip:
            continue
        out = np.tensordot(out, vectors[q], axes=([q], [0]))
    return out


def multilinear_form(t: np.ndarray, vectors: Sequence[np.ndarray]) -> float:
    return float(contract(t, vectors))


def outer_rank_one(weight: float, vectors: Sequence[np.ndarray]) -> np.ndarray:
    """``weight * u1 o u2 o ... o up``."""
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    if any(v.ndim != 1 for v in vectors):
        raise ValueError("outer_rank_one expects 1-d vectors")
    return float(weight) * reduce(np.multiply.outer, vectors)


def inner(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def random_unit_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def rank_one_approximation(
    t: np.ndarray,
    restarts: int | None = None,
    iters: int = 100,
    seed=None,
    tol: float = 1e-12,
    inits: Sequence[Sequence[np.ndarray]] = (),
) -> tuple[float, list[np.ndarray]]:
    """Best rank-one correlation found by alternating power iteration.

    Each run alternates ``u_q <- t x_{s != q} u_s / ||.||`` over the modes.
    Every update can only increase ``|<t, u_1 o ... o u_p>|``, so a run
    started from one of ``inits`` never ends below that start's value.
    Returns the best value and its unit vectors.
    """
    t = np.asarray(t, dtype=float)
    p = t.ndim
    if restarts is None:
        restarts = 10 * p
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)

    starts = [[np.asarray(v, dtype=float) for v in s] for s in inits]
    starts += [[random_unit_vector(d, rng) for d in t.shape] for _ in range(restarts)]

    best_val = 0.0
    best_vecs = [np.eye(d)[0] for d in t.shape]
    if not np.any(t):
        return 0.0, best_vecs
    for u in starts:
        val = abs(multilinear_form(t, u))
        prev = val
        for _ in range(iters):
            norm = 0.0
            for q in range(p):
                v = contract(t, u, skip=(q,))
                norm = float(np.linalg.norm(v))
                if norm == 0.0:
                    break
                u[q] = v / norm
            if norm == 0.0:
                break
            val = norm
            if abs(val - prev) <= tol * val:
                break
            prev = val
        if val > best_val:
            best_val = val
            best_vecs = [w.copy() for w in u]
    return best_val, best_vecs


def spectral_norm_estimate(
    t: np.ndarray,
    restarts: int | None = None,
    iters: int = 100,
    seed=None,
    tol: float = 1e-12,
    inits: Sequence[Sequence[np.ndarray]] = (),
) -> float:
    """Lower estimate of the operator norm ``sup <t, u_1 o ... o u_p>``.

    Runs :func:`rank_one_approximation` from ``restarts`` (default ``10 p``)
    uniformly random unit starts plus any ``inits``. Exact for rank-one
    tensors and, with high probability, for odeco and low-rank-plus-noise
    tensors at the default restart count.
    """
    return rank_one_approximation(t, restarts, iters, seed, tol, inits)[0]


def gram_schmidt(a: np.ndarray, tol: float = 1e-8) -> tuple[np.ndarray, list[int]]:
    """Orthonormalize columns left to right (modified Gram-Schmidt, two passes).

    Returns the orthonormalized matrix and the indices of columns whose
    residual fell below ``tol`` times their initial norm. Those columns are
    zeroed rather than re-randomized.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("gram_schmidt expects a matrix")
    rows, cols = a.shape
    if cols > rows:
        raise ValueError(f"cannot orthonormalize {cols} columns in dimension {rows}")
    q = a.copy()
    degenerate: list[int] = []
    for j in range(cols):
        col = q[:, j].copy()
        norm0 = np.linalg.norm(a[:, j])
        for _ in range(2):
            for i in range(j):
                if i in degenerate:
                    continue
                col -= (q[:, i] @ col) * q[:, i]
        norm = np.linalg.norm(col)
        if norm0 == 0.0 or norm < tol * norm0:
            degenerate.append(j)
            q[:, j] = 0.0
        else:
            q[:, j] = col / norm
    return q, degenerate


def svd(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``m = U diag(s) V^T`` with ``s`` nonincreasing.

    Returns ``V`` itself (not its transpose).
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("svd expects a matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("svd input has non-finite entries")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u, s, vt.T


def spectral_norm(m: np.ndarray) -> float:
    """Matrix operator norm (vectors use the Euclidean norm)."""
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        return float(np.linalg.norm(m))
    if m.size == 0:
        return 0.0
    return float(svd(m)[1][0])


def leading_singular_vectors(m: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    u, s, v = svd(m)
    return float(s[0]), u[:, 0], v[:, 0]


def khatri_rao(*matrices: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product ``A (.) B (.) ...``.

    Column ``k`` is ``kron(A[:, k], B[:, k], ...)`` with the last factor's
    index varying fastest.
    """
    if not matrices:
        raise ValueError("need at least one matrix")
    mats = [np.asarray(m, dtype=float) for m in matrices]
    cols = mats[0].shape[1]
    if any(m.ndim != 2 or m.shape[1] != cols for m in mats):
        raise ValueError("khatri_rao factors must be matrices with equal column counts")

    def _pair(a, b):
        return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], cols)

    return reduce(_pair, mats)

"""Row-stochastic matrix algebra.

Validation with exact renormalization, the max-min Lyapunov function,
the mean/perpendicular split of a state vector, the basis change that
block-triangularizes every row-stochastic matrix at once, left products of
matrix sequences and sampled ergodicity diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    NegativeEntryError,
    NonSquareError,
    RowSumDeviationError,
    SingularBasisError,
)

NEGATIVE_TOL = 1e-12
ROW_SUM_TOL = 1e-9
ERGODIC_THRESHOLD = 1e-8

VERDICT_ERGODIC = "apparently_ergodic"
VERDICT_NON_ERGODIC = "apparently_non_ergodic"
VERDICT_INCONCLUSIVE = "inconclusive"


_GRID = 2.0**52


def _exact_rows(p: np.ndarray) -> np.ndarray:
    # Snap entries to multiples of 2**-52 with integer row totals of 2**52.
    # Every partial sum is then representable, so P @ e == e holds exactly
    # whatever the summation order.  Positive entries stay positive.
    units = np.rint(p * _GRID).astype(np.int64)
    units[(p > 0) & (units == 0)] = 1
    deficit = np.int64(2**52) - units.sum(axis=1)
    cols = np.argmax(units, axis=1)
    units[np.arange(p.shape[0]), cols] += deficit
    return units.astype(float) / _GRID


class RowStochasticMatrix:
    """A validated, immutable n x n row-stochastic matrix.

    Construct through :func:`validate_stochastic` (or directly, which calls
    it).  The underlying array is read-only; ``np.asarray(P)`` and ``P @ x``
    both work.
    """

    __slots__ = ("_entries",)

    def __init__(self, raw):
        self._entries = _validated_array(raw)

    @classmethod
    def _trusted(cls, arr: np.ndarray) -> "RowStochasticMatrix":
        obj = cls.__new__(cls)
        arr = np.array(arr, dtype=float)
        arr.setflags(write=False)
        obj._entries = arr
        return obj

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def n(self) -> int:
        return self._entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._entries
        return self._entries.astype(dtype)

    def __matmul__(self, other):
        return self._entries @ np.asarray(other)

    def __rmatmul__(self, other):
        return np.asarray(other) @ self._entries

    def __eq__(self, other):
        if isinstance(other, RowStochasticMatrix):
            return np.array_equal(self._entries, other._entries)
        return NotImplemented

    def __hash__(self):
        return hash(self._entries.tobytes())

    def __repr__(self):
        return f"RowStochasticMatrix(n={self.n}, entries={self._entries.tolist()!r})"

    def tolist(self) -> list:
        return self._entries.tolist()

    def to_json(self) -> str:
        return json.dumps(self.tolist())

    @classmethod
    def from_json(cls, text: str) -> "RowStochasticMatrix":
        return validate_stochastic(json.loads(text))


def _validated_array(raw) -> np.ndarray:
    arr = np.array(raw, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise NonSquareError(f"expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    if arr.min() < -NEGATIVE_TOL:
        i, j = np.unravel_index(np.argmin(arr), arr.shape)
        raise NegativeEntryError(f"entry ({i}, {j}) = {arr[i, j]!r} is negative")
    arr = np.where(arr < 0.0, 0.0, arr)
    sums = arr.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowSumDeviationError(f"row {i} sums to {sums[i]!r}")
    arr = _exact_rows(arr / sums[:, None])
    arr.setflags(write=False)
    return arr


def validate_stochastic(raw) -> RowStochasticMatrix:
    """Validate ``raw`` and return it as a :class:`RowStochasticMatrix`.

    Entries down to ``-1e-12`` are clamped to zero; each row must sum to one
    within ``1e-9`` and is then renormalized so that ``P @ e == e`` holds
    exactly in floating point.

    Raises
    ------
    NonSquareError, NegativeEntryError, RowSumDeviationError
    """
    if isinstance(raw, RowStochasticMatrix):
        return raw
    return RowStochasticMatrix(raw)


def is_row_stochastic(a, tol: float = 1e-9) -> bool:
    a = np.asarray(a, dtype=float)
    return bool(
        a.ndim == 2
        and a.shape[0] == a.shape[1]
        and a.min() >= -tol
        and np.all(np.abs(a.sum(axis=1) - 1.0) <= tol)
    )


def lyapunov_v(x) -> float:
    """Spread ``max(x) - min(x)``; zero exactly on consensus vectors."""
    x = np.asarray(x, dtype=float)
    return float(x.max() - x.min())


@dataclass(frozen=True)
class ConsensusDecomposition:
    """``x = mean * e + perp`` with ``perp`` orthogonal to ``e``."""

    mean: float
    perp: np.ndarray

    @property
    def dist(self) -> float:
        """Euclidean distance of ``x`` to the consensus line."""
        return float(np.linalg.norm(self.perp))

    def reconstruct(self) -> np.ndarray:
        return self.mean + self.perp


def decompose(x) -> ConsensusDecomposition:
    x = np.asarray(x, dtype=float)
    mean = float(x.mean())
    perp = x - mean
    # second pass removes the residual mean left by rounding
    perp = perp - perp.mean()
    return ConsensusDecomposition(mean, perp)


def dist_to_consensus(x) -> float:
    return decompose(x).dist


def default_basis(n: int) -> np.ndarray:
    """Columns ``e_1 - e_j`` for ``j = 2..n``, an integer basis of e-perp."""
    v = np.zeros((n, n - 1))
    v[0, :] = 1.0
    v[np.arange(1, n), np.arange(n - 1)] = -1.0
    return v


@dataclass(frozen=True)
class TriangularForm:
    """``T^{-1} P T = [[1, c], [0, Q]]`` for ``T = [e, v_2, ..., v_n]``."""

    T: np.ndarray
    c: np.ndarray
    Q: np.ndarray

    @property
    def block(self) -> np.ndarray:
        n = self.T.shape[0]
        out = np.zeros((n, n))
        out[0, 0] = 1.0
        out[0, 1:] = self.c
        out[1:, 1:] = self.Q
        return out

    def reconstruct(self) -> np.ndarray:
        return self.T @ self.block @ np.linalg.inv(self.T)


def transformation(n: int, basis=None) -> np.ndarray:
    """Return ``T = [e, v_2, ..., v_n]`` for a basis of e-perp (default :func:`default_basis`)."""
    v = default_basis(n) if basis is None else np.asarray(basis, dtype=float)
    if v.shape != (n, n - 1):
        raise ValueError(f"basis must have shape ({n}, {n - 1}), got {v.shape}")
    if not np.allclose(v.sum(axis=0), 0.0, atol=1e-12 * max(1.0, np.abs(v).max())):
        raise ValueError("basis vectors must lie in the orthogonal complement of e")
    T = np.column_stack([np.ones(n), v])
    if np.linalg.matrix_rank(T) < n:
        raise SingularBasisError("basis vectors are not linearly independent")
    return T


def triangularize(P, basis=None) -> TriangularForm:
    """Block-triangularize a row-stochastic matrix.

    Parameters
    ----------
    P : RowStochasticMatrix or array_like
    basis : (n, n-1) array_like, optional
        Columns spanning e-perp.  Defaults to ``e_1 - e_j``.
    """
    P = np.asarray(validate_stochastic(P))
    n = P.shape[0]
    T = transformation(n, basis)
    M = np.linalg.solve(T, P @ T)
    if n > 1:
        lower = np.abs(M[1:, 0]).max()
        if lower > 1e-9 or abs(M[0, 0] - 1.0) > 1e-9:
            raise ArithmeticError(f"block structure lost (lower-left {lower:.3e})")
    return TriangularForm(T=T, c=M[0, 1:].copy(), Q=M[1:, 1:].copy())


def _matrix_at(seq, k: int) -> np.ndarray:
    if hasattr(seq, "matrix"):
        return np.asarray(seq.matrix(k))
    return np.asarray(seq(k))


@dataclass(frozen=True)
class LeftProduct:
    """``value = P(k-1) ... P(k0)``; the identity when ``k == k0``."""

    k: int
    k0: int
    value: np.ndarray


def left_product(seq, k: int, k0: int = 0) -> LeftProduct:
    """Left product of a matrix sequence over steps ``k0, ..., k-1``.

    ``seq`` is anything with a ``matrix(k)`` method (such as
    :class:`~fbconsensus.sequences.MatrixSequenceSpec`) or a callable
    ``k -> matrix``.
    """
    if k < k0 or k0 < 0:
        raise ValueError(f"need k >= k0 >= 0, got k={k}, k0={k0}")
    phi = None
    for j in range(k0, k):
        P = _matrix_at(seq, j)
        phi = P.copy() if phi is None else P @ phi
    if phi is None:
        n = _matrix_at(seq, k0).shape[0]
        phi = np.eye(n)
    return LeftProduct(k=k, k0=k0, value=phi)


def row_difference_norm(phi) -> float:
    """``max_ij ||(e_j - e_i)^T phi||_inf``: the largest column spread."""
    phi = np.asarray(phi)
    return float((phi.max(axis=0) - phi.min(axis=0)).max())


def dobrushin_coefficient(P) -> float:
    """``1/2 max_ij sum_l |p_il - p_jl|``; below one iff P is scrambling."""
    P = np.asarray(P)
    diff = np.abs(P[:, None, :] - P[None, :, :]).sum(axis=2)
    return float(0.5 * diff.max())


def _fit_exponential(k: np.ndarray, d: np.ndarray, floor: float):
    """Fit ``d_k ~ M r^k`` by log-linear least squares on the final half of
    the leading run of points above ``floor``.  Returns ``(M, r)``."""
    above = d > floor
    if not above[0]:
        return float("nan"), float("nan")
    stop = len(d) if above.all() else int(np.argmin(above))
    if stop < 2:
        return float(d[0]), 0.0
    lo = stop // 2
    kk, dd = k[lo:stop], d[lo:stop]
    if len(kk) < 2:
        kk, dd = k[:stop], d[:stop]
    slope, intercept = np.polyfit(kk, np.log(dd), 1)
    return float(np.exp(intercept)), float(np.exp(slope))


@dataclass(frozen=True)
class TailDiagnostics:
    tail_start: int
    row_diff_series: np.ndarray
    contraction_coefficients: np.ndarray
    fitted_M: float
    fitted_r: float
    verdict: str
    fit_basis: str = "limit_distance"

    def to_dict(self) -> dict:
        def clean(v):
            return None if not np.isfinite(v) else float(v)

        return {
            "tail_start": self.tail_start,
            "row_diff_series": [float(v) for v in self.row_diff_series],
            "contraction_coefficients": [float(v) for v in self.contraction_coefficients],
            "fitted_M": clean(self.fitted_M),
            "fitted_r": clean(self.fitted_r),
            "verdict": self.verdict,
            "fit_basis": self.fit_basis,
        }


@dataclass(frozen=True)
class ErgodicityReport:
    """Sampled ergodicity diagnostics of the tails of a matrix sequence.

    A finite-horizon diagnostic, not a proof: the verdict thresholds the
    row-difference norm of the tail product at the horizon.
    """

    horizon: int
    tails: tuple
    norm: str = "induced_inf"
    threshold: float = ERGODIC_THRESHOLD

    def tail(self, k0: int) -> TailDiagnostics:
        for t in self.tails:
            if t.tail_start == k0:
                return t
        raise KeyError(k0)

    def verdict(self, k0: int = 0) -> str:
        return self.tail(k0).verdict

    @property
    def all_ergodic(self) -> bool:
        return all(t.verdict == VERDICT_ERGODIC for t in self.tails)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "norm": self.norm,
            "threshold": self.threshold,
            "tails": [t.to_dict() for t in self.tails],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _tail_diagnostics(seq, horizon: int, k0: int, threshold: float) -> TailDiagnostics:
    n = _matrix_at(seq, k0).shape[0]
    phis = np.empty((horizon + 1, n, n))
    phis[0] = np.eye(n)
    coeffs = np.empty(horizon)
    for j in range(horizon):
        P = _matrix_at(seq, k0 + j)
        coeffs[j] = dobrushin_coefficient(P)
        phis[j + 1] = P @ phis[j]
    row_diff = (phis.max(axis=1) - phis.min(axis=1)).max(axis=1)
    final = row_diff[-1]

    # Distance to the horizon product stands in for the distance to the limit;
    # it is trusted only where it dominates the limit's own uncertainty.
    dist = np.abs(phis[:-1] - phis[-1]).sum(axis=2).max(axis=1)
    floor = max(1e-12, 100.0 * n * final)
    M, r = _fit_exponential(np.arange(horizon, dtype=float), dist, floor)
    basis = "limit_distance"
    if not np.isfinite(r) and row_diff[0] > 1e-12 and final > 1e-12:
        # horizon product still far from its limit: row spreads decay at the same rate
        M, r = _fit_exponential(np.arange(horizon + 1, dtype=float), row_diff, 1e-12)
        basis = "row_difference"

    if final < threshold:
        verdict = VERDICT_ERGODIC
    elif final >= 0.99 * row_diff[horizon // 2]:
        verdict = VERDICT_NON_ERGODIC
    else:
        verdict = VERDICT_INCONCLUSIVE
    return TailDiagnostics(
        tail_start=k0,
        row_diff_series=row_diff,
        contraction_coefficients=coeffs,
        fitted_M=M,
        fitted_r=r,
        verdict=verdict,
        fit_basis=basis,
    )


def ergodicity_report(
    seq,
    horizon: int,
    tail_starts: Iterable[int] = (0,),
    threshold: float = ERGODIC_THRESHOLD,
) -> ErgodicityReport:
    """Sample the ergodicity of ``seq`` over ``horizon`` steps per tail start.

    For each tail start ``k0`` the report holds the row-difference norm of
    ``P(k-1)...P(k0)`` for ``k = k0..k0+horizon``, the Dobrushin coefficient
    of every factor, a fit of ``(M, r)`` to the induced infinity-norm distance
    from the horizon product and a verdict.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    tails = tuple(_tail_diagnostics(seq, horizon, int(k0), threshold) for k0 in tail_starts)
    return ErgodicityReport(horizon=horizon, tails=tails, threshold=threshold)

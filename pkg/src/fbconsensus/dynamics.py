"""Consensus under scalar feedback and its induced scalar (Lure) system.

The full system is ``x(k+1) = P(k) x(k) + G(x(k)) e``; on the consensus line
``x = y e`` it reduces to ``y(k+1) = h(y(k))`` with ``h(y) = y + G(y e)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NoConvergenceError, NoSignChangeError, NonFiniteError
from .stochastic import decompose, lyapunov_v

FORMS = ("output_regulation", "optimizer_gradient", "custom_table")
DIVERGENCE_LIMIT = 1e12

STATUS_OK = "ok"
STATUS_NON_FINITE = "non_finite"


def _fd_gradient(func: Callable, x: np.ndarray) -> np.ndarray:
    h = 1e-6 * (1.0 + np.linalg.norm(x))
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (func(xp) - func(xm)) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class FeedbackSpec:
    """The scalar feedback map ``G: R^n -> R``.

    Forms
    -----
    output_regulation
        ``G(x) = mu * (r - g(x))``; ``dg`` is an optional analytic gradient.
    optimizer_gradient
        ``G(x) = -mu * sum_i f_i'(x_i)`` for a utility family exposing
        ``gradient(x)`` and optionally ``curvature(x)``.
    custom_table
        Either a table ``(knots, values)`` interpolated at the mean of ``x``
        (constant outside the knots, hence bounded), or an arbitrary callable
        ``func`` with optional gradient ``dfunc``.

    Only the scalar ``G(x)`` is ever broadcast; per-agent terms stay inside.
    """

    form: str
    n: int
    mu: float = 1.0
    r: float = 0.0
    g: Optional[Callable] = None
    dg: Optional[Callable] = None
    utilities: object = None
    knots: Optional[tuple] = None
    values: Optional[tuple] = None
    func: Optional[Callable] = None
    dfunc: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown feedback form {self.form!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.form == "output_regulation" and self.g is None:
            raise ValueError("output_regulation needs an output map g")
        if self.form == "optimizer_gradient" and self.utilities is None:
            raise ValueError("optimizer_gradient needs a utility family")
        if self.form == "custom_table":
            if self.func is None:
                if self.knots is None or self.values is None:
                    raise ValueError("custom_table needs (knots, values) or func")
                knots = tuple(float(v) for v in self.knots)
                values = tuple(float(v) for v in self.values)
                if len(knots) != len(values) or len(knots) < 2:
                    raise ValueError("table needs >= 2 knots matching values")
                if any(b <= a for a, b in zip(knots, knots[1:])):
                    raise ValueError("knots must be strictly increasing")
                object.__setattr__(self, "knots", knots)
                object.__setattr__(self, "values", values)

    # constructors -----------------------------------------------------

    @classmethod
    def output_regulation(cls, n, mu, r, g, dg=None, label="") -> "FeedbackSpec":
        return cls(form="output_regulation", n=n, mu=mu, r=r, g=g, dg=dg, label=label)

    @classmethod
    def table(cls, n, knots, values, label="") -> "FeedbackSpec":
        return cls(form="custom_table", n=n, knots=tuple(knots), values=tuple(values), label=label)

    @classmethod
    def from_callable(cls, n, func, dfunc=None, label="") -> "FeedbackSpec":
        return cls(form="custom_table", n=n, func=func, dfunc=dfunc, label=label)

    @classmethod
    def zero(cls, n) -> "FeedbackSpec":
        return cls.from_callable(n, lambda x: 0.0, lambda x: np.zeros(len(x)), label="zero")

    # evaluation -------------------------------------------------------

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.form == "output_regulation":
            return float(self.mu * (self.r - self.g(x)))
        if self.form == "optimizer_gradient":
            return float(-self.mu * np.sum(self.utilities.gradient(x)))
        if self.func is not None:
            return float(self.func(x))
        return float(np.interp(x.mean(), self.knots, self.values))

    @property
    def has_analytic_derivative(self) -> bool:
        if self.form == "output_regulation":
            return self.dg is not None
        if self.form == "optimizer_gradient":
            return getattr(self.utilities, "has_curvature", False)
        return self.func is None or self.dfunc is not None

    def derivative(self, x) -> np.ndarray:
        """Row vector ``DG(x)``; analytic when available, else central differences."""
        x = np.asarray(x, dtype=float)
        if self.form == "output_regulation" and self.dg is not None:
            return -self.mu * np.asarray(self.dg(x), dtype=float)
        if self.form == "optimizer_gradient" and self.has_analytic_derivative:
            return -self.mu * np.asarray(self.utilities.curvature(x), dtype=float)
        if self.form == "custom_table":
            if self.dfunc is not None:
                return np.asarray(self.dfunc(x), dtype=float)
            if self.func is None:
                return self._table_slope(x.mean()) * np.full(x.size, 1.0 / x.size)
        return self.fd_derivative(x)

    def fd_derivative(self, x) -> np.ndarray:
        return _fd_gradient(self, np.asarray(x, dtype=float))

    def _table_slope(self, m: float) -> float:
        knots, values = self.knots, self.values
        if m <= knots[0] or m >= knots[-1]:
            return 0.0
        i = int(np.searchsorted(knots, m, side="right")) - 1
        return (values[i + 1] - values[i]) / (knots[i + 1] - knots[i])

    def lure(self) -> "LureSystem":
        return LureSystem(self)


@dataclass(frozen=True)
class LureSystem:
    """The scalar map ``h(y) = y + G(y e)`` induced on the consensus line."""

    feedback: FeedbackSpec

    def consensus(self, y: float) -> np.ndarray:
        return np.full(self.feedback.n, float(y))

    def h(self, y: float) -> float:
        return float(y) + self.feedback(self.consensus(y))

    __call__ = h

    def dh(self, y: float) -> float:
        """``h'(y) = 1 + DG(y e) e``."""
        return 1.0 + float(np.sum(self.feedback.derivative(self.consensus(y))))

    def fd_dh(self, y: float, step: float | None = None) -> float:
        s = 1e-6 * (1.0 + abs(y)) if step is None else step
        return (self.h(y + s) - self.h(y - s)) / (2.0 * s)


# simulation -----------------------------------------------------------


def step(P, x, G: FeedbackSpec) -> np.ndarray:
    """One step ``P x + G(x) e``.

    Raises
    ------
    NonFiniteError
        When the feedback or the new state is not finite.
    """
    x = np.asarray(x, dtype=float)
    Pm = np.asarray(P)
    if Pm.shape != (x.size, x.size):
        raise ValueError(f"matrix shape {Pm.shape} does not match state size {x.size}")
    with np.errstate(over="ignore", invalid="ignore"):
        fb = G(x)
        new = Pm @ x + fb
    if not (math.isfinite(fb) and np.all(np.isfinite(new))):
        raise NonFiniteError("state or feedback overflowed")
    return new


def _fmt(v) -> str:
    return repr(float(v))


@dataclass
class Trajectory:
    """Time-indexed record of a simulation.

    Row ``j`` holds step ``k0 + j``: the state, its mean, spread ``V``,
    Euclidean distance to the consensus line and the feedback ``G(x)``
    applied at that step.  ``status`` is ``"ok"`` or ``"non_finite"``; a
    diverged run is truncated at the first state beyond ``1e12``.
    """

    k: np.ndarray
    x: np.ndarray
    mean: np.ndarray
    V: np.ndarray
    dist_E: np.ndarray
    feedback: np.ndarray
    status: str = STATUS_OK

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def diverged(self) -> bool:
        return self.status != STATUS_OK

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def __len__(self):
        return len(self.k)

    def error_to(self, y_star: float) -> np.ndarray:
        """``||x(k) - y* e||_inf`` per record."""
        return np.abs(self.x - y_star).max(axis=1)

    def csv_header(self) -> list:
        return ["k"] + [f"x_{i + 1}" for i in range(self.n)] + [
            "mean",
            "V",
            "dist_E",
            "feedback",
            "status",
        ]

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.csv_header())
        last = len(self.k) - 1
        for j in range(len(self.k)):
            status = self.status if j == last else STATUS_OK
            w.writerow(
                [str(int(self.k[j]))]
                + [_fmt(v) for v in self.x[j]]
                + [_fmt(self.mean[j]), _fmt(self.V[j]), _fmt(self.dist_E[j]), _fmt(self.feedback[j]), status]
            )

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def read_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        n = len(header) - 6
        arr = np.array([[float(v) for v in r[:-1]] for r in body])
        return cls(
            k=arr[:, 0].astype(int),
            x=arr[:, 1 : 1 + n],
            mean=arr[:, 1 + n],
            V=arr[:, 2 + n],
            dist_E=arr[:, 3 + n],
            feedback=arr[:, 4 + n],
            status=body[-1][-1],
        )


def _record(x, G):
    d = decompose(x)
    with np.errstate(over="ignore", invalid="ignore"):
        fb = G(x)
    return d.mean, lyapunov_v(x), d.dist, fb


def simulate(seq, G: FeedbackSpec, x0, K: int, k0: int = 0) -> Trajectory:
    """Simulate ``K`` steps of the feedback consensus system from ``x(k0) = x0``.

    ``seq`` provides ``matrix(k)`` (a :class:`MatrixSequenceSpec`) or is a
    callable ``k -> P``.  Divergence ends the run early and is reported through
    ``Trajectory.status`` rather than raised.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    x = np.array(x0, dtype=float)
    if x.ndim != 1 or x.size != G.n:
        raise ValueError(f"initial state must be a vector of length {G.n}")
    get = seq.matrix if hasattr(seq, "matrix") else seq
    xs = np.empty((K + 1, x.size))
    obs = np.empty((K + 1, 4))
    xs[0] = x
    obs[0] = _record(x, G)
    status = STATUS_OK
    last = K
    for j in range(K):
        try:
            x = step(get(k0 + j), x, G)
        except NonFiniteError:
            status, last = STATUS_NON_FINITE, j
            break
        xs[j + 1] = x
        obs[j + 1] = _record(x, G)
        if np.abs(x).max() > DIVERGENCE_LIMIT:
            status, last = STATUS_NON_FINITE, j + 1
            break
    sl = slice(0, last + 1)
    return Trajectory(
        k=np.arange(k0, k0 + last + 1),
        x=xs[sl],
        mean=obs[sl, 0],
        V=obs[sl, 1],
        dist_E=obs[sl, 2],
        feedback=obs[sl, 3],
        status=status,
    )


@dataclass
class LureTrajectory:
    y: np.ndarray
    status: str = STATUS_OK

    @property
    def diverged(self) -> bool:
        return self.status != STATUS_OK

    def __len__(self):
        return len(self.y)


def simulate_lure(G: FeedbackSpec, y0: float, K: int) -> LureTrajectory:
    """Iterate ``y(k+1) = h(y(k))`` for ``K`` steps."""
    if K < 0:
        raise ValueError("K must be >= 0")
    h = LureSystem(G)
    ys = [float(y0)]
    status = STATUS_OK
    for _ in range(K):
        with np.errstate(over="ignore", invalid="ignore"):
            y = h(ys[-1])
        if not math.isfinite(y):
            status = STATUS_NON_FINITE
            break
        ys.append(y)
        if abs(y) > DIVERGENCE_LIMIT:
            status = STATUS_NON_FINITE
            break
    return LureTrajectory(np.array(ys), status)


def find_fixed_point(G: FeedbackSpec, bracket, max_iter: int = 200) -> float:
    """Fixed point ``y*`` of ``h``, i.e. a root of ``y -> G(y e)`` in ``bracket``.

    Bisection narrows the bracket, then secant steps polish the root until
    ``|G(y* e)| < 1e-12 (1 + |y*|)``.  Only continuity of ``G`` is needed.

    Raises
    ------
    NoSignChangeError
        ``G`` has the same strict sign at both bracket ends.
    NoConvergenceError
        The tolerance was not reached in ``max_iter`` iterations.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo > hi:
        lo, hi = hi, lo

    def phi(y):
        return G(np.full(G.n, y))

    def ok(y, f):
        return abs(f) < 1e-12 * (1.0 + abs(y))

    flo, fhi = phi(lo), phi(hi)
    if ok(lo, flo):
        return lo
    if ok(hi, fhi):
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoSignChangeError(f"G(y e) does not change sign on [{lo}, {hi}]")

    best, fbest = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = phi(mid)
        if abs(fmid) < abs(fbest):
            best, fbest = mid, fmid
        if ok(mid, fmid):
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
        if hi - lo <= 1e-9 * (1.0 + abs(mid)):
            break
    # secant polish from the narrowed bracket
    a, fa, b, fb = lo, flo, hi, fhi
    for _ in range(max_iter):
        if fb == fa:
            break
        c = b - fb * (b - a) / (fb - fa)
        fc = phi(c)
        if abs(fc) < abs(fbest):
            best, fbest = c, fc
        if ok(c, fc):
            return c
        a, fa, b, fb = b, fb, c, fc
    if ok(best, fbest):
        return best
    raise NoConvergenceError(f"fixed point search stalled at y={best!r}, G={fbest!r}")

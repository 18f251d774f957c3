"""Distributed optimisation through consensus under gradient-sum feedback.

Each agent holds a private strictly convex utility ``f_i``; the network
agrees on the minimiser of ``sum_i f_i`` over the consensus line by running

    x(k+1) = P(k) x(k) - mu * sum_i f_i'(x_i(k)) e

where only the aggregate gradient sum is broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import FeedbackSpec, Trajectory, simulate
from .errors import BracketExpansionFailedError
from .sequences import TopologySchedule, from_topology, substream

UNIT_MARGIN = 1e-6


@dataclass(frozen=True)
class UtilityFamily:
    """Per-agent convex utilities with slope bounds.

    ``d_min[i] <= (f_i'(a) - f_i'(b)) / (a - b) <= d_max[i]`` with
    ``d_min[i] > 0``.  Build through :meth:`quadratic`, :meth:`log_cosh` or
    :meth:`custom`.
    """

    kind: str
    d_min: np.ndarray
    d_max: np.ndarray
    values: tuple = ()
    derivatives: tuple = ()
    second_derivatives: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        d_min = np.asarray(self.d_min, dtype=float)
        d_max = np.asarray(self.d_max, dtype=float)
        if d_min.shape != d_max.shape or d_min.ndim != 1 or d_min.size == 0:
            raise ValueError("d_min and d_max must be equal-length nonempty vectors")
        if np.any(d_min <= 0) or np.any(d_max < d_min):
            raise ValueError("slope bounds must satisfy 0 < d_min <= d_max")
        object.__setattr__(self, "d_min", d_min)
        object.__setattr__(self, "d_max", d_max)

    @property
    def n(self) -> int:
        return self.d_min.size

    @property
    def has_curvature(self) -> bool:
        return self.kind == "quadratic" or self.second_derivatives is not None

    # constructors -----------------------------------------------------

    @classmethod
    def quadratic(cls, a, b, c=None) -> "UtilityFamily":
        """``f_i(x) = a_i x^2 + b_i x + c_i`` with every ``a_i > 0``."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        c = np.zeros_like(a) if c is None else np.asarray(c, dtype=float)
        if not (a.shape == b.shape == c.shape) or a.ndim != 1:
            raise ValueError("a, b and c must be vectors of equal length")
        if np.any(a <= 0):
            raise ValueError("quadratic utilities need a_i > 0")
        return cls(kind="quadratic", d_min=2 * a, d_max=2 * a, params={"a": a, "b": b, "c": c})

    @classmethod
    def log_cosh(cls, a, b, s, t) -> "UtilityFamily":
        """Smooth non-quadratic family ``a x^2 + b x + s log cosh(x - t)``.

        Curvature ``2a + s sech^2(x - t)`` lies in ``[2a, 2a + s]`` for ``s >= 0``.
        """
        a, b, s, t = (np.asarray(v, dtype=float) for v in (a, b, s, t))
        if np.any(s < 0):
            raise ValueError("s must be nonnegative")

        def make(i):
            ai, bi, si, ti = a[i], b[i], s[i], t[i]

            def f(x):
                u = x - ti
                # log cosh(u) = |u| + log1p(exp(-2|u|)) - log 2, overflow safe
                return ai * x * x + bi * x + si * (abs(u) + np.log1p(np.exp(-2 * abs(u))) - np.log(2.0))

            def df(x):
                return 2 * ai * x + bi + si * np.tanh(x - ti)

            def d2f(x):
                return 2 * ai + si / np.cosh(x - ti) ** 2

            return f, df, d2f

        fs = [make(i) for i in range(a.size)]
        return cls(
            kind="custom",
            d_min=2 * a,
            d_max=2 * a + s,
            values=tuple(f for f, _, _ in fs),
            derivatives=tuple(df for _, df, _ in fs),
            second_derivatives=tuple(d2 for _, _, d2 in fs),
            params={"a": a, "b": b, "s": s, "t": t},
        )

    @classmethod
    def custom(cls, values, derivatives, d_min, d_max, second_derivatives=None) -> "UtilityFamily":
        if len(values) != len(derivatives):
            raise ValueError("need one derivative per utility")
        return cls(
            kind="custom",
            d_min=d_min,
            d_max=d_max,
            values=tuple(values),
            derivatives=tuple(derivatives),
            second_derivatives=None if second_derivatives is None else tuple(second_derivatives),
        )

    # evaluation -------------------------------------------------------

    def gradient(self, x) -> np.ndarray:
        """Vector ``(f_1'(x_1), ..., f_n'(x_n))``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return 2 * self.params["a"] * x + self.params["b"]
        return np.array([df(xi) for df, xi in zip(self.derivatives, x)])

    def curvature(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return 2 * self.params["a"] * np.ones_like(x)
        if self.second_derivatives is None:
            raise ValueError("family has no analytic second derivatives")
        return np.array([d2(xi) for d2, xi in zip(self.second_derivatives, x)])

    def gradient_sum(self, y: float) -> float:
        return float(np.sum(self.gradient(np.full(self.n, float(y)))))

    def total(self, y: float) -> float:
        """``sum_i f_i(y)``, the objective restricted to the consensus line."""
        if self.kind == "quadratic":
            p = self.params
            return float(np.sum(p["a"] * y * y + p["b"] * y + p["c"]))
        return float(sum(f(y) for f in self.values))


@dataclass(frozen=True)
class MuBound:
    """Exclusive upper end of the admissible gain range ``0 < mu < upper``."""

    upper: float

    def admits(self, mu: float) -> bool:
        return 0.0 < mu < self.upper


def mu_bound(fam: UtilityFamily) -> MuBound:
    return MuBound(upper=2.0 / float(np.sum(fam.d_max)))


def optimal_consensus(fam: UtilityFamily, max_expand: int = 200) -> float:
    """Unique root ``y*`` of ``sum_i f_i'(y)``, the optimal consensus value.

    Bisection on a bracket doubled outward from ``[-1, 1]`` until the
    gradient sum changes sign.

    Raises
    ------
    BracketExpansionFailedError
        No sign change was found (only possible for ill-posed custom families).
    """
    s = fam.gradient_sum
    lo, hi = -1.0, 1.0
    flo, fhi = s(lo), s(hi)
    for _ in range(max_expand):
        if flo <= 0.0 <= fhi:
            break
        if flo > 0:
            hi, fhi = lo, flo
            lo *= 2.0
            flo = s(lo)
        else:
            lo, flo = hi, fhi
            hi *= 2.0
            fhi = s(hi)
        if not (np.isfinite(flo) and np.isfinite(fhi)):
            break
    else:
        raise BracketExpansionFailedError("gradient sum never changed sign")
    if not flo <= 0.0 <= fhi:
        raise BracketExpansionFailedError("gradient sum never changed sign")
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        fm = s(mid)
        if fm == 0.0:
            return mid
        if fm < 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return lo if abs(flo) <= abs(fhi) else hi


def closed_form_quadratic(fam: UtilityFamily) -> float:
    """``-sum b_i / (2 sum a_i)`` for a quadratic family."""
    if fam.kind != "quadratic":
        raise ValueError("closed form only exists for quadratic families")
    return float(-np.sum(fam.params["b"]) / (2.0 * np.sum(fam.params["a"])))


def build_feedback(fam: UtilityFamily, mu: float) -> FeedbackSpec:
    """Gradient-sum feedback ``G(x) = -mu sum_i f_i'(x_i)``.

    Admissibility of ``mu`` is not enforced so that unstable gains can be
    studied; check with :func:`mu_bound`.
    """
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu!r}")
    return FeedbackSpec(form="optimizer_gradient", n=fam.n, mu=float(mu), utilities=fam, label="optimizer")


def random_quadratic_family(seed: int, n: int, low: float = 0.0, high: float = 1.0) -> UtilityFamily:
    """Quadratic family with ``a_i, b_i, c_i`` uniform in the open range ``(low, high)``."""
    rng = substream(seed, "utilities")
    lo, hi = low + UNIT_MARGIN, high - UNIT_MARGIN
    a, b, c = (rng.uniform(lo, hi, size=n) for _ in range(3))
    return UtilityFamily.quadratic(a, b, c)


@dataclass
class Fig2Result:
    trajectory: Trajectory
    family: UtilityFamily
    report: dict


def run_fig2_experiment(
    seed: int = 0,
    n: int = 20,
    mu: float = 0.01,
    horizon: int = 10000,
    period: int = 5,
    eta: float = 0.01,
    connectivity: str = "uniformly_strongly_connected",
    weighting: str = "equal_neighbor",
    x0_box=(-1.0, 1.0),
) -> Fig2Result:
    """Twenty agents with random quadratic utilities on a time-varying graph.

    Utility coefficients, topology and initial state come from independent
    named substreams of ``seed``.
    """
    from .analysis import rate_fit
    from .errors import NotConvergedError

    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    fam = random_quadratic_family(seed, n)
    seq = from_topology(TopologySchedule(n=n, period=period, connectivity=connectivity, eta=eta), weighting, seed)
    x0 = substream(seed, "x0").uniform(x0_box[0], x0_box[1], size=n)
    G = build_feedback(fam, mu)
    traj = simulate(seq, G, x0, horizon)
    y_star = optimal_consensus(fam)
    err = traj.error_to(y_star)
    try:
        fit = rate_fit(traj, y_star)
        rho = fit.rho
    except NotConvergedError:
        rho = None
    bound = mu_bound(fam)
    report = {
        "seed": seed,
        "n": n,
        "mu": mu,
        "mu_upper": bound.upper,
        "mu_admissible": bound.admits(mu),
        "y_star": y_star,
        "y_star_closed_form": closed_form_quadratic(fam),
        "final_consensus_error": float(err[-1]),
        "final_V": float(traj.V[-1]),
        "V_series": traj.V.tolist(),
        "fitted_rho": rho,
        "status": traj.status,
    }
    return Fig2Result(trajectory=traj, family=fam, report=report)

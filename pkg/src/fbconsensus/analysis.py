"""Numerical checks of the stability hypotheses and linearisation quantities.

Constants here are estimated by sampling a user-supplied ``G``; they are
lower bounds on the true constants, and each report carries its sample count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .dynamics import STATUS_OK, FeedbackSpec, LureSystem, Trajectory, find_fixed_point
from .errors import (
    DerivativeUnavailableError,
    NoConvergenceError,
    NoSignChangeError,
    NotConvergedError,
)
from .stochastic import transformation, triangularize, validate_stochastic

CONTRACTION_MARGIN = 1e-9
CONVERGED_TOL = 1e-6


def _jsonable(d: dict) -> dict:
    out = {}
    for key, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, (np.floating, float)):
            v = float(v) if np.isfinite(v) else None
        elif isinstance(v, np.bool_):
            v = bool(v)
        out[key] = v
    return out


@dataclass(frozen=True)
class ContractionReport:
    """Sampled contraction constant of ``h`` and the boundedness hypothesis.

    ``beta`` is ``(1 + c)/(1 - c) |y*|``; the decrement ``|h(y)| <= |y| - gamma``
    is asserted for ``|y| >= hypothesis_radius = beta + 1`` with
    ``gamma = 1 - c_hat``, and checked directly on the sampled grid.
    """

    c_hat: float
    is_contraction: bool
    y_star: Optional[float]
    beta: Optional[float]
    gamma: Optional[float]
    hypothesis_radius: Optional[float]
    grid_points_checked: int
    violations: int
    samples: int
    interval: tuple

    @property
    def hypothesis_holds(self) -> bool:
        return self.is_contraction and self.violations == 0

    def to_dict(self) -> dict:
        d = _jsonable(asdict(self))
        d["interval"] = list(self.interval)
        return d


def contraction_check(G: FeedbackSpec, interval, samples: int = 2001, seed: int = 0) -> ContractionReport:
    """Estimate the Lipschitz constant of ``h(y) = y + G(y e)`` on ``interval``.

    ``c_hat`` is the largest difference quotient over adjacent points of a
    uniform grid of ``samples`` points and over as many random pairs.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if samples < 2 or not lo < hi:
        raise ValueError("need samples >= 2 and lo < hi")
    h = LureSystem(G)
    grid = np.linspace(lo, hi, samples)
    hv = np.array([h(y) for y in grid])
    quot = np.abs(np.diff(hv)) / np.diff(grid)
    rng = np.random.default_rng(seed)
    a = rng.uniform(lo, hi, samples)
    b = rng.uniform(lo, hi, samples)
    keep = np.abs(a - b) > 1e-9 * (hi - lo)
    a, b = a[keep], b[keep]
    ha = np.array([h(y) for y in a])
    hb = np.array([h(y) for y in b])
    quot = np.concatenate([quot, np.abs(ha - hb) / np.abs(a - b)])
    c_hat = float(quot.max())
    is_contraction = c_hat < 1.0 - CONTRACTION_MARGIN

    y_star = beta = gamma = radius = None
    checked = violations = 0
    if is_contraction:
        # a contraction's fixed point lies within |h(y0) - y0| / (1 - c) of y0
        y0 = 0.5 * (lo + hi)
        reach = abs(h(y0) - y0) / (1.0 - c_hat)
        span = 1.01 * reach + 1e-9 * (1.0 + abs(y0))
        try:
            y_star = find_fixed_point(G, (y0 - span, y0 + span))
        except (NoSignChangeError, NoConvergenceError):
            y_star = None
        if y_star is not None:
            beta = (1.0 + c_hat) / (1.0 - c_hat) * abs(y_star)
            gamma = 1.0 - c_hat
            radius = beta + 1.0
            far = np.abs(grid) >= radius
            checked = int(far.sum())
            slack = 1e-12 * (1.0 + np.abs(grid[far]))
            violations = int(np.sum(np.abs(hv[far]) > np.abs(grid[far]) - gamma + slack))
    return ContractionReport(
        c_hat=c_hat,
        is_contraction=is_contraction,
        y_star=y_star,
        beta=beta,
        gamma=gamma,
        hypothesis_radius=radius,
        grid_points_checked=checked,
        violations=violations,
        samples=samples,
        interval=(lo, hi),
    )


@dataclass(frozen=True)
class LinearizationReport:
    """Linearisation of the full system at ``y* e``.

    ``transformed`` is ``T^{-1} J T``: its first column is ``(lambda, 0, ...)``
    and its lower-right block is the ``Q`` block of ``P``.
    """

    y_star: float
    lam: float
    jacobian: np.ndarray
    transformed: np.ndarray
    q_spectral_radius: float

    @property
    def Q(self) -> np.ndarray:
        return self.transformed[1:, 1:]

    def to_dict(self) -> dict:
        return {
            "y_star": self.y_star,
            "lambda": self.lam,
            "jacobian": self.jacobian.tolist(),
            "transformed": self.transformed.tolist(),
            "q_spectral_radius": self.q_spectral_radius,
        }


def linearize(P, G: FeedbackSpec, y_star: float) -> LinearizationReport:
    """Jacobian ``P + e DG(y* e)`` and the feedback eigenvalue ``lambda``.

    Raises
    ------
    DerivativeUnavailableError
        ``DG`` cannot be evaluated (non-finite) at ``y* e``.
    """
    P = np.asarray(validate_stochastic(P))
    n = P.shape[0]
    x = np.full(n, float(y_star))
    try:
        dg = np.asarray(G.derivative(x), dtype=float).reshape(n)
    except (ValueError, ArithmeticError) as exc:
        raise DerivativeUnavailableError(str(exc)) from exc
    if not np.all(np.isfinite(dg)):
        raise DerivativeUnavailableError(f"DG is not finite at y* = {y_star!r}")
    lam = 1.0 + float(dg.sum())
    J = P + np.outer(np.ones(n), dg)
    T = transformation(n)
    M = np.linalg.solve(T, J @ T)
    if n > 1 and np.abs(M[1:, 0]).max() > 1e-8:
        raise ArithmeticError("transformed Jacobian lost its block structure")
    if abs(M[0, 0] - lam) > 1e-8:
        raise ArithmeticError("transformed Jacobian corner does not match lambda")
    rho_q = float(np.abs(np.linalg.eigvals(M[1:, 1:])).max()) if n > 1 else 0.0
    return LinearizationReport(y_star=float(y_star), lam=lam, jacobian=J, transformed=M, q_spectral_radius=rho_q)


@dataclass(frozen=True)
class LipschitzEstimate:
    epsilon: float
    L_hat: float
    sample_count: int
    box: tuple

    def to_dict(self) -> dict:
        d = _jsonable(asdict(self))
        d["box"] = list(self.box)
        return d


def _band_points(rng, n, epsilon, box, m):
    means = rng.uniform(box[0], box[1], m)
    raw = rng.standard_normal((m, n))
    raw -= raw.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = epsilon * rng.uniform(0.0, 1.0, (m, 1)) ** (1.0 / max(n - 1, 1))
    return means[:, None] + raw / norms * radii


def lipschitz_near_consensus(G: FeedbackSpec, epsilon: float, box, samples: int = 2000, seed: int = 0) -> LipschitzEstimate:
    """Largest sampled ``|G(u) - G(v)| / ||u - v||`` over ``u, v`` within
    ``epsilon`` of the consensus line, means in ``box``.

    Half the pairs are independent; the other half are close pairs, which
    probe local slopes.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = G.n
    rng = np.random.default_rng(seed)
    half = max(samples // 2, 1)
    u = _band_points(rng, n, epsilon, box, half)
    v = _band_points(rng, n, epsilon, box, half)
    u2 = _band_points(rng, n, epsilon, box, samples - half)
    step = 1e-3 * (1.0 + abs(box[1] - box[0])) * rng.standard_normal(u2.shape)
    v2 = u2 + step
    # pull the perturbed point back into the band
    perp = v2 - v2.mean(axis=1, keepdims=True)
    pn = np.linalg.norm(perp, axis=1, keepdims=True)
    scale = np.minimum(1.0, epsilon / np.where(pn == 0, 1.0, pn))
    v2 = v2.mean(axis=1, keepdims=True) + perp * scale
    U = np.vstack([u, u2])
    W = np.vstack([v, v2])
    dist = np.linalg.norm(U - W, axis=1)
    keep = dist > 0
    gu = np.array([G(p) for p in U[keep]])
    gw = np.array([G(p) for p in W[keep]])
    L = float((np.abs(gu - gw) / dist[keep]).max()) if keep.any() else 0.0
    return LipschitzEstimate(epsilon=float(epsilon), L_hat=L, sample_count=int(keep.sum()), box=(float(box[0]), float(box[1])))


@dataclass(frozen=True)
class RateFit:
    """``||x(k) - y* e||_inf ~ C rho^k`` fitted on the post-transient half."""

    C: float
    rho: float
    points: int

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def write_sidecar(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def rate_fit(traj: Trajectory, y_star: float, floor: float | None = None) -> RateFit:
    """Fit the exponential decay of a converged trajectory toward ``y* e``.

    Points below a round-off ``floor`` are dropped; a run that sits at the
    fixed point from the start gives ``C = rho = 0``.

    Raises
    ------
    NotConvergedError
        The run diverged or ends farther than ``1e-6`` from ``y* e``.
    """
    err = traj.error_to(y_star)
    if traj.status != STATUS_OK or not np.all(np.isfinite(err)) or err[-1] >= CONVERGED_TOL:
        raise NotConvergedError(f"final error {err[-1]!r} (status {traj.status})")
    if floor is None:
        floor = 1e-13 * (1.0 + abs(y_star) + float(np.abs(traj.x[0]).max()))
    above = err > floor
    if not above[0]:
        return RateFit(C=0.0, rho=0.0, points=0)
    stop = len(err) if above.all() else int(np.argmin(above))
    if stop < 2:
        return RateFit(C=float(err[0]), rho=0.0, points=1)
    lo = stop // 2
    if stop - lo < 2:
        lo = 0
    k = np.arange(lo, stop, dtype=float)
    slope, intercept = np.polyfit(k, np.log(err[lo:stop]), 1)
    return RateFit(C=float(np.exp(intercept)), rho=float(np.exp(slope)), points=stop - lo)

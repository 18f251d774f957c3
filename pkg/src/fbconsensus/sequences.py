"""Deterministic, seeded generators of row-stochastic matrix sequences.

Every generator is stateless: ``generate(spec, k)`` depends only on the sequence
(including its seed) and ``k``, so matrices can be queried in any order and
from any number of threads.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, InfeasibleScheduleError
from .stochastic import RowStochasticMatrix, validate_stochastic

KINDS = ("constant", "periodic", "graph_random", "switched")
CONNECTIVITY = ("uniformly_strongly_connected", "ring", "star", "random_spanning")
WEIGHTINGS = ("equal_neighbor", "lazy_metropolis")
SWITCHING = ("uniform_random", "round_robin", "adversarial_script")

DEFAULT_PERIOD = 5
DEFAULT_ETA = 0.01


def substream(seed: int, name: str, *key: int) -> np.random.Generator:
    """Independent generator for a named stream of a master seed.

    ``substream(seed, "topology", w)`` always yields the same draws, and
    different names never share state.
    """
    tag = zlib.crc32(name.encode())
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), tag, *key]))


@dataclass(frozen=True)
class SwitchedSet:
    """A finite (hence compact) set of matrices and a switching rule."""

    matrices: tuple
    switching: str = "uniform_random"
    script: tuple = ()

    def __post_init__(self):
        mats = tuple(validate_stochastic(m) for m in self.matrices)
        if not mats:
            raise ValueError("switched set must be nonempty")
        if len({m.n for m in mats}) != 1:
            raise ValueError("all matrices in a switched set must share one dimension")
        if self.switching not in SWITCHING:
            raise ValueError(f"unknown switching rule {self.switching!r}")
        script = tuple(int(i) for i in self.script)
        if self.switching == "adversarial_script":
            if not script:
                raise ValueError("adversarial_script switching needs a nonempty script")
            if min(script) < 0 or max(script) >= len(mats):
                raise ValueError("script index out of range")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "script", script)


@dataclass(frozen=True)
class TopologySchedule:
    """Communication topology schedule for ``n`` agents.

    The graph is redrawn once per window of ``period`` steps.  For
    ``uniformly_strongly_connected`` the edges of a strongly connected
    skeleton are scattered across the steps of the window, so single steps
    may be disconnected while every window's union is strongly connected.
    ``eta`` is the activation probability of each extra random edge per step.
    """

    n: int
    period: int = DEFAULT_PERIOD
    connectivity: str = "uniformly_strongly_connected"
    eta: float = DEFAULT_ETA


@dataclass(frozen=True)
class MatrixSequenceSpec:
    """Declarative description of a sequence ``{P(k)}``.

    Use the constructors :meth:`constant`, :meth:`periodic`,
    :meth:`switched` and :func:`from_topology` rather than filling fields
    by hand.
    """

    kind: str
    n: int
    seed: int = 0
    matrices: tuple = ()
    period: int = DEFAULT_PERIOD
    connectivity: Optional[str] = None
    weighting: Optional[str] = None
    eta: float = DEFAULT_ETA
    switching: Optional[str] = None
    script: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        mats = tuple(validate_stochastic(m) for m in self.matrices)
        if any(m.n != self.n for m in mats):
            raise ValueError("matrix dimension does not match n")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "script", tuple(int(i) for i in self.script))
        if self.kind in ("constant", "periodic", "switched") and not mats:
            raise ValueError(f"{self.kind} sequence needs at least one matrix")
        if self.kind == "switched":
            # validates switching rule and script
            SwitchedSet(mats, self.switching or "uniform_random", self.script)
        if self.kind == "graph_random":
            if self.connectivity not in CONNECTIVITY:
                raise ValueError(f"unknown connectivity {self.connectivity!r}")
            if self.weighting not in WEIGHTINGS:
                raise ValueError(f"unknown weighting {self.weighting!r}")

    # constructors -----------------------------------------------------

    @classmethod
    def constant(cls, P, seed: int = 0) -> "MatrixSequenceSpec":
        P = validate_stochastic(P)
        return cls(kind="constant", n=P.n, seed=seed, matrices=(P,))

    @classmethod
    def periodic(cls, matrices: Sequence, seed: int = 0) -> "MatrixSequenceSpec":
        mats = tuple(validate_stochastic(m) for m in matrices)
        return cls(kind="periodic", n=mats[0].n, seed=seed, matrices=mats)

    @classmethod
    def switched(cls, switched_set: SwitchedSet, seed: int = 0) -> "MatrixSequenceSpec":
        return cls(
            kind="switched",
            n=switched_set.matrices[0].n,
            seed=seed,
            matrices=switched_set.matrices,
            switching=switched_set.switching,
            script=switched_set.script,
        )

    # access -----------------------------------------------------------

    def matrix(self, k: int) -> RowStochasticMatrix:
        return generate(self, k)

    def __call__(self, k: int) -> RowStochasticMatrix:
        return generate(self, k)

    def with_seed(self, seed: int) -> "MatrixSequenceSpec":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": self.seed, "n": self.n}
        if self.kind == "graph_random":
            d.update(
                period=self.period,
                connectivity=self.connectivity,
                weighting=self.weighting,
                eta=self.eta,
            )
        else:
            d["matrices"] = [m.tolist() for m in self.matrices]
        if self.kind == "switched":
            d["switching"] = self.switching
            if self.script:
                d["script"] = list(self.script)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "MatrixSequenceSpec":
        try:
            kind = d["kind"]
            seed = int(d.get("seed", 0))
            if kind == "graph_random":
                sched = TopologySchedule(
                    n=int(d["n"]),
                    period=int(d.get("period", DEFAULT_PERIOD)),
                    connectivity=d.get("connectivity", "uniformly_strongly_connected"),
                    eta=float(d.get("eta", DEFAULT_ETA)),
                )
                return from_topology(sched, d.get("weighting", "equal_neighbor"), seed)
            mats = tuple(validate_stochastic(m) for m in d["matrices"])
            n = int(d.get("n", mats[0].n))
            return cls(
                kind=kind,
                n=n,
                seed=seed,
                matrices=mats,
                switching=d.get("switching", "uniform_random" if kind == "switched" else None),
                script=tuple(d.get("script", ())),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigError(f"invalid sequence spec: {exc!r}") from exc

    @classmethod
    def from_json(cls, text: str) -> "MatrixSequenceSpec":
        return cls.from_dict(json.loads(text))


def generate(spec: MatrixSequenceSpec, k: int) -> RowStochasticMatrix:
    """Return ``P(k)`` for ``spec``; a pure function of ``(spec, k)``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if spec.kind == "constant":
        return spec.matrices[0]
    if spec.kind == "periodic":
        return spec.matrices[k % len(spec.matrices)]
    if spec.kind == "switched":
        return spec.matrices[switch_index(spec, k)]
    return _graph_matrix(spec, k)


@lru_cache(maxsize=1 << 16)
def _graph_matrix(spec: MatrixSequenceSpec, k: int) -> RowStochasticMatrix:
    # many runs over one sequence (sweeps, initial-condition batches) reuse P(k)
    return _weights(step_adjacency(spec, k), spec.weighting)


def switch_index(spec: MatrixSequenceSpec, k: int) -> int:
    m = len(spec.matrices)
    if spec.switching == "round_robin":
        return k % m
    if spec.switching == "adversarial_script":
        # the last scripted index is held forever
        return spec.script[min(k, len(spec.script) - 1)]
    return int(substream(spec.seed, "switching", k).integers(m))


# topology -------------------------------------------------------------


def _skeleton(n: int, connectivity: str, rng: np.random.Generator) -> list:
    """Directed edges ``(i, j)``: agent ``i`` listens to agent ``j``."""
    if connectivity == "ring":
        return [(i, (i + 1) % n) for i in range(n)]
    if connectivity == "star":
        return [(0, j) for j in range(1, n)] + [(j, 0) for j in range(1, n)]
    # random recursive tree, both directions: strongly connected, shallow
    order = rng.permutation(n)
    edges = []
    for pos in range(1, n):
        child = int(order[pos])
        parent = int(order[rng.integers(pos)])
        edges.append((child, parent))
        edges.append((parent, child))
    return edges


@lru_cache(maxsize=4096)
def _window_plan(n: int, period: int, connectivity: str, eta: float, seed: int, window: int):
    """Skeleton edges of a window and the step offset each is assigned to."""
    if connectivity in ("ring", "star"):
        edges = _skeleton(n, connectivity, None)
        return tuple(edges), tuple([-1] * len(edges))
    rng = substream(seed, "topology", window)
    edges = _skeleton(n, connectivity, rng)
    if connectivity == "uniformly_strongly_connected":
        slots = rng.integers(period, size=len(edges))
    else:
        slots = np.full(len(edges), -1)
    return tuple(edges), tuple(int(s) for s in slots)


def step_adjacency(spec: MatrixSequenceSpec, k: int) -> np.ndarray:
    """Boolean adjacency of step ``k`` (self-loops included)."""
    n, period = spec.n, spec.period
    window, offset = divmod(k, period)
    edges, slots = _window_plan(n, period, spec.connectivity, spec.eta, spec.seed, window)
    adj = np.eye(n, dtype=bool)
    for (i, j), s in zip(edges, slots):
        if s < 0 or s == offset:
            adj[i, j] = True
    if spec.connectivity in ("uniformly_strongly_connected", "random_spanning") and spec.eta > 0:
        extra = substream(spec.seed, "extra_edges", k).random((n, n)) < spec.eta
        adj |= extra
    return adj


def window_union(spec: MatrixSequenceSpec, window: int) -> np.ndarray:
    start = window * spec.period
    union = np.zeros((spec.n, spec.n), dtype=bool)
    for k in range(start, start + spec.period):
        union |= step_adjacency(spec, k)
    return union


def is_strongly_connected(adj) -> bool:
    """Depth-first reachability from node 0 along edges and reversed edges."""
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]

    def reach(a):
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            i = stack.pop()
            for j in np.nonzero(a[i])[0]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        return seen.all()

    return reach(adj) and reach(adj.T)


def _weights(adj: np.ndarray, weighting: str) -> RowStochasticMatrix:
    n = adj.shape[0]
    nbr = adj & ~np.eye(n, dtype=bool)
    deg = nbr.sum(axis=1)
    if weighting == "equal_neighbor":
        W = adj / (1.0 + deg)[:, None]
    else:
        # lazy Metropolis: half the mass stays on the diagonal
        pair = np.maximum(deg[:, None], deg[None, :])
        W = np.where(nbr, 1.0 / (2.0 * np.maximum(pair, 1)), 0.0)
        W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return validate_stochastic(W)


def from_topology(
    sched: TopologySchedule,
    weighting: str = "equal_neighbor",
    seed: int = 0,
    verify_windows: int = 64,
) -> MatrixSequenceSpec:
    """Build a ``graph_random`` sequence from a topology schedule.

    ``equal_neighbor`` gives every listened-to neighbor and the agent itself
    weight ``1 / (1 + degree)``.  The first ``verify_windows`` windows are
    checked for a strongly connected union by graph traversal.

    Raises
    ------
    InfeasibleScheduleError
        If the connectivity class cannot be realised for ``sched``.
    """
    if sched.n < 2:
        raise InfeasibleScheduleError(f"{sched.connectivity} needs n >= 2, got {sched.n}")
    if sched.period < 1:
        raise InfeasibleScheduleError("period must be >= 1")
    if sched.connectivity not in CONNECTIVITY:
        raise InfeasibleScheduleError(f"unknown connectivity class {sched.connectivity!r}")
    if not 0.0 <= sched.eta <= 1.0:
        raise InfeasibleScheduleError("eta must lie in [0, 1]")
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}")
    spec = MatrixSequenceSpec(
        kind="graph_random",
        n=sched.n,
        seed=seed,
        period=sched.period,
        connectivity=sched.connectivity,
        weighting=weighting,
        eta=sched.eta,
    )
    for w in range(verify_windows):
        if not is_strongly_connected(window_union(spec, w)):
            raise InfeasibleScheduleError(f"window {w} union is not strongly connected")
    return spec


def ergodic_counterexample(n: int = 3) -> MatrixSequenceSpec:
    """``P(0) = (1/n) e e^T`` followed by identities.

    Strongly ergodic from ``k0 = 0`` but not uniformly so: every tail
    starting at ``k0 >= 1`` is constant at the identity.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    avg = np.full((n, n), 1.0 / n)
    return MatrixSequenceSpec.switched(SwitchedSet((avg, np.eye(n)), "adversarial_script", (0, 1)))

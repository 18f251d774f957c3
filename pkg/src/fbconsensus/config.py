"""Experiment configuration: JSON in, library objects out.

A config names a feedback system, a matrix sequence, an initial state and a
horizon.  All randomness derives from the single top-level ``seed`` through
named substreams (``topology``, ``utilities``, ``x0``).

Example::

    {
      "name": "fig2", "seed": 0, "n": 20, "horizon": 10000,
      "system": {"form": "optimizer_gradient", "mu": 0.01,
                 "utilities": {"kind": "quadratic", "range": [0, 1]}},
      "sequence": {"kind": "graph_random", "connectivity": "uniformly_strongly_connected",
                   "period": 5, "eta": 0.01, "weighting": "equal_neighbor"},
      "x0": {"box": [-1, 1]},
      "analyses": ["ergodicity", "contraction", "linearize", "rate_fit"]
    }

``topology`` (for a graph sequence) and top-level ``mu`` + ``utilities`` (for
the optimizer system) are accepted as shorthands.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .dynamics import FeedbackSpec
from .errors import ConfigError
from .optimizer import UtilityFamily, build_feedback, mu_bound, random_quadratic_family
from .sequences import MatrixSequenceSpec, substream

ANALYSES = ("ergodicity", "contraction", "linearize", "rate_fit")
_NAME_RE = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    horizon: int
    system: FeedbackSpec
    sequence: MatrixSequenceSpec
    x0: np.ndarray
    analyses: tuple
    family: UtilityFamily | None = None
    verify: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.system.n


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing key {key!r}")
    return d[key]


def _vector(v, n, what):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (n,):
        raise ConfigError(f"{what} must have length {n}, got shape {arr.shape}")
    return arr


def _family(spec: dict, n: int, seed: int) -> UtilityFamily:
    kind = spec.get("kind", "quadratic")
    if kind == "quadratic":
        if "params" in spec:
            p = spec["params"]
            return UtilityFamily.quadratic(
                _vector(p["a"], n, "a"), _vector(p["b"], n, "b"), _vector(p.get("c", [0.0] * n), n, "c")
            )
        lo, hi = spec.get("range", [0.0, 1.0])
        return random_quadratic_family(seed, n, float(lo), float(hi))
    if kind == "log_cosh":
        p = _require(spec, "params", "utilities")
        return UtilityFamily.log_cosh(*(_vector(p[k], n, k) for k in ("a", "b", "s", "t")))
    raise ConfigError(f"unknown utility kind {kind!r}")


def _output_map(spec, n):
    kind = spec.get("kind", "sum") if isinstance(spec, dict) else spec
    if kind == "sum":
        return (lambda x: float(np.sum(x))), (lambda x: np.ones(len(x)))
    if kind == "mean":
        return (lambda x: float(np.mean(x))), (lambda x: np.full(len(x), 1.0 / len(x)))
    if kind == "linear":
        w = _vector(spec["weights"], n, "weights")
        return (lambda x: float(w @ x)), (lambda x: w.copy())
    raise ConfigError(f"unknown output map {kind!r}")


def _system(raw: dict, n: int, seed: int):
    sysd = raw.get("system")
    if sysd is None:
        if "utilities" not in raw:
            raise ConfigError("config needs a 'system' (or 'utilities' + 'mu')")
        sysd = {"form": "optimizer_gradient", "utilities": raw["utilities"]}
        for key in ("mu", "mu_factor"):
            if key in raw:
                sysd[key] = raw[key]
    form = _require(sysd, "form", "system")
    if form == "optimizer_gradient":
        fam = _family(_require(sysd, "utilities", "system"), n, seed)
        if "mu_factor" in sysd:
            mu = float(sysd["mu_factor"]) * mu_bound(fam).upper
        else:
            mu = float(_require(sysd, "mu", "system"))
        return build_feedback(fam, mu), fam
    if form == "output_regulation":
        g, dg = _output_map(sysd.get("g", "sum"), n)
        return FeedbackSpec.output_regulation(n, float(sysd["mu"]), float(sysd["r"]), g, dg), None
    if form == "custom_table":
        return FeedbackSpec.table(n, _require(sysd, "knots", "system"), _require(sysd, "values", "system")), None
    raise ConfigError(f"unknown system form {form!r}")


def _sequence(raw: dict, n: int, seed: int) -> MatrixSequenceSpec:
    seqd = raw.get("sequence")
    if seqd is None:
        if "topology" not in raw:
            raise ConfigError("config needs a 'sequence' (or 'topology')")
        seqd = dict(raw["topology"], kind="graph_random")
    seqd = dict(seqd)
    seqd.setdefault("seed", seed)
    seqd.setdefault("n", n)
    if seqd.get("kind") == "constant" and "matrix" in seqd:
        seqd["matrices"] = [seqd.pop("matrix")]
    spec = MatrixSequenceSpec.from_dict(seqd)
    if spec.n != n:
        raise ConfigError(f"sequence dimension {spec.n} does not match n = {n}")
    return spec


def _initial_state(raw: dict, n: int, seed: int) -> np.ndarray:
    x0 = raw.get("x0", {"box": [-1.0, 1.0]})
    if isinstance(x0, dict):
        lo, hi = _require(x0, "box", "x0")
        return substream(seed, "x0").uniform(float(lo), float(hi), size=n)
    return _vector(x0, n, "x0")


def _infer_n(raw: dict) -> int:
    if "n" in raw:
        return int(raw["n"])
    x0 = raw.get("x0")
    if isinstance(x0, list):
        return len(x0)
    seqd = raw.get("sequence", {})
    mats = seqd.get("matrices") or ([seqd["matrix"]] if "matrix" in seqd else None)
    if mats:
        return len(mats[0])
    raise ConfigError("cannot infer the agent count n; add an 'n' key")


def build_config(raw: dict, seed: int | None = None, horizon: int | None = None, **overrides) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a parsed JSON dict.

    ``seed`` and ``horizon`` override the file; other keyword overrides
    (``mu``, ``n``) patch the raw dict before building.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = int(seed)
        if isinstance(raw.get("sequence"), dict):
            raw["sequence"].pop("seed", None)
    if horizon is not None:
        raw["horizon"] = int(horizon)
    if "n" in overrides:
        raw["n"] = int(overrides["n"])
    if "mu" in overrides:
        if "system" in raw:
            raw["system"]["mu"] = float(overrides["mu"])
            raw["system"].pop("mu_factor", None)
        else:
            raw["mu"] = float(overrides["mu"])
            raw.pop("mu_factor", None)
    try:
        name = str(raw.get("name", "experiment"))
        if not _NAME_RE.match(name):
            raise ConfigError(f"name {name!r} is not filesystem safe")
        s = int(raw.get("seed", 0))
        hz = int(_require(raw, "horizon", "config"))
        if hz < 0:
            raise ConfigError("horizon must be >= 0")
        n = _infer_n(raw)
        G, fam = _system(raw, n, s)
        seq = _sequence(raw, n, s)
        x0 = _initial_state(raw, n, s)
        analyses = tuple(raw.get("analyses", ()))
        unknown = set(analyses) - set(ANALYSES)
        if unknown:
            raise ConfigError(f"unknown analyses {sorted(unknown)}")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return ExperimentConfig(
        name=name,
        seed=s,
        horizon=hz,
        system=G,
        sequence=seq,
        x0=x0,
        analyses=analyses,
        family=fam,
        verify=dict(raw.get("verify", {})),
        raw=raw,
    )


def load_raw(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc


def load_config(path, **kw) -> ExperimentConfig:
    return build_config(load_raw(path), **kw)


def bundled_raw(name: str = "fig2") -> dict:
    text = resources.files("fbconsensus").joinpath("configs", f"{name}.json").read_text()
    return json.loads(text)

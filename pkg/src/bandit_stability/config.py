"""YAML experiment files.

A file describes one experiment. The ``policy`` key picks the pipeline:
an index policy name runs a replicated ensemble, a batched name
(``etc_batched``, ``ucb_batched``, ``thompson_batched``) runs the batched
pipeline, and ``concentration`` runs the maximal-inequality table::

    name: moss_demo
    policy: moss
    K: 2
    T: 10000
    replications: 5000
    seed: 7
    arms:                     # optional, default K identical N(0, sigma)
      - {family: gaussian, mean: 0.0, sigma: 1.0}
      - {family: gaussian, mean: 0.0, sigma: 1.0}

Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .batched import BATCHED_NAMES, BatchedSpec
from .concentration import DriftProcessSpec
from .diagnostics import DEFAULT_DELTAS, HIST_BINS, KNOWN, EnsembleConfig
from .env import ConfigurationError, RewardModel
from .policies import POLICY_CODES, PolicySpec

CONCENTRATION = "concentration"
ENSEMBLE = "ensemble"
BATCHED = "batched"

DEFAULTS = {
    "K": 2,
    "T": 10_000,
    "replications": 5000,
    "seed": 0,
    "level": 0.95,
    "variance_mode": KNOWN,
    "bins": HIST_BINS,
    "sigma": 1.0,
    "epsilon": 0.1,
}

_COMMON = {"name", "policy", "seed", "replications"}
_ENSEMBLE_KEYS = _COMMON | {
    "K", "T", "arms", "sigma", "level", "variance_mode", "bins", "deltas", "checkpoints",
    "epsilon", "kl_family", "kl_sigma", "kl_interval", "arm",
}
_BATCHED_KEYS = _ENSEMBLE_KEYS | {"pi_max", "pi_min", "limit_samples"}
_CONCENTRATION_KEYS = _COMMON | {"N", "alpha", "beta", "sigma", "gamma", "c_tilde", "lambdas"}

DEFAULT_LIMIT_SAMPLES = 1_000_000
DEFAULT_LAMBDAS = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_CONCENTRATION_R = 100_000


@dataclass
class Experiment:
    """A parsed experiment: ``config`` is an :class:`EnsembleConfig` (whose
    policy may be a :class:`BatchedSpec`) or a :class:`DriftProcessSpec`.

    ``echo`` is the fully defaulted key-value form, written to manifests.
    """

    name: str
    kind: str
    config: Any
    echo: dict
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    replications: int = 0
    limit_samples: int = DEFAULT_LIMIT_SAMPLES
    seed: int = 0

    @property
    def policy_name(self) -> str:
        return CONCENTRATION if self.kind == CONCENTRATION else self.echo["policy"]

    def with_seed(self, seed: int) -> "Experiment":
        doc = dict(self.echo)
        doc["seed"] = int(seed)
        return from_mapping(doc)


def _num(doc: dict, key: str, cast=float, lo=None, hi=None, lo_open=False, hi_open=False):
    val = doc[key]
    if val is None or isinstance(val, bool):
        raise ConfigurationError(f"{key}: missing value")
    try:
        out = cast(val)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: expected a number, got {val!r}") from None
    if cast is int and out != val:
        raise ConfigurationError(f"{key}: expected an integer, got {val!r}")
    if isinstance(out, float) and not math.isfinite(out):
        raise ConfigurationError(f"{key}: must be finite")
    if lo is not None and (out <= lo if lo_open else out < lo):
        raise ConfigurationError(f"{key}: {out} is out of range")
    if hi is not None and (out >= hi if hi_open else out > hi):
        raise ConfigurationError(f"{key}: {out} is out of range")
    return out


def _check_keys(doc: dict, allowed: set[str]) -> None:
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigurationError(f"{extra[0]}: unknown configuration key")


def _arms(doc: dict, K: int, sigma: float) -> list[RewardModel]:
    arms = doc.get("arms")
    if arms is None:
        return [RewardModel.gaussian(0.0, sigma) for _ in range(K)]
    if not isinstance(arms, list) or len(arms) != K:
        raise ConfigurationError(f"arms: expected a list of K={K} arm descriptions")
    out = []
    for i, a in enumerate(arms):
        if not isinstance(a, dict) or "mean" not in a:
            raise ConfigurationError(f"arms[{i}]: needs at least a 'mean'")
        try:
            out.append(RewardModel(a.get("family", "gaussian"), float(a["mean"]), float(a.get("sigma", sigma))))
        except ConfigurationError as exc:
            raise ConfigurationError(f"arms[{i}]: {exc}") from None
    return out


def _ensemble(doc: dict, batched: bool) -> Experiment:
    _check_keys(doc, _BATCHED_KEYS if batched else _ENSEMBLE_KEYS)
    for k, v in DEFAULTS.items():
        doc.setdefault(k, v)
    if "T" in doc and doc["T"] is None:
        raise ConfigurationError("T: horizon is missing")
    K = _num(doc, "K", int, lo=2)
    T = _num(doc, "T", int, lo=K)
    R = _num(doc, "replications", int, lo=1)
    level = _num(doc, "level", float, lo=0.0, hi=1.0, lo_open=True, hi_open=True)
    sigma = _num(doc, "sigma", float, lo=0.0, lo_open=True)
    bins = _num(doc, "bins", int, lo=1)
    eps = _num(doc, "epsilon", float, lo=0.0, lo_open=True)
    deltas = tuple(float(d) for d in doc.setdefault("deltas", list(DEFAULT_DELTAS)))
    if any(d < 0 for d in deltas):
        raise ConfigurationError("deltas: must be nonnegative")
    arms = _arms(doc, K, sigma)
    name = doc["policy"]
    if batched:
        if K != 2:
            raise ConfigurationError("K: batched policies take exactly 2 arms")
        doc.setdefault("pi_max", 0.9)
        doc.setdefault("pi_min", 0.1)
        doc.setdefault("limit_samples", DEFAULT_LIMIT_SAMPLES)
        if eps > 1:
            raise ConfigurationError(f"epsilon: {eps} is out of range")
        policy = BatchedSpec.from_name(name, T, epsilon=eps, pi_max=_num(doc, "pi_max"),
                                       pi_min=_num(doc, "pi_min"), sigma=sigma)
        checkpoints = tuple(doc.setdefault("checkpoints", []))
    else:
        kw = {"epsilon": eps, "arm": int(doc.get("arm", 0))}
        if "kl_family" in doc:
            kw["kl_family"] = doc["kl_family"]
            if doc["kl_family"] == "bernoulli":
                kw["kl_interval"] = (0.0, 1.0)
        if "kl_sigma" in doc:
            kw["kl_sigma"] = _num(doc, "kl_sigma", lo=0.0, lo_open=True)
        if "kl_interval" in doc:
            kw["kl_interval"] = tuple(float(x) for x in doc["kl_interval"])
        policy = PolicySpec(name, **kw)
        checkpoints = doc.get("checkpoints")
        if checkpoints is None:
            checkpoints = [T // (2 * K)] if T % (2 * K) == 0 else []
        doc["checkpoints"] = checkpoints = [int(c) for c in checkpoints]
    cfg = EnsembleConfig(
        policy=policy, rewards=arms, T=T, replications=R, base_seed=int(doc["seed"]),
        checkpoints=tuple(checkpoints), level=level, variance_mode=doc["variance_mode"],
        deltas=deltas, bins=bins,
    )
    doc.setdefault("name", name)
    return Experiment(str(doc["name"]), BATCHED if batched else ENSEMBLE, cfg, doc,
                      replications=R, limit_samples=int(doc.get("limit_samples", DEFAULT_LIMIT_SAMPLES)),
                      seed=int(doc["seed"]))


def _concentration(doc: dict) -> Experiment:
    _check_keys(doc, _CONCENTRATION_KEYS)
    if doc.get("N") is None:
        raise ConfigurationError("N: scale of the concentration window is missing")
    doc.setdefault("alpha", 1 / 16)
    doc.setdefault("beta", 1.0)
    doc.setdefault("sigma", DEFAULTS["sigma"])
    doc.setdefault("gamma", 1.0)
    doc.setdefault("c_tilde", 1.0)
    doc.setdefault("seed", 0)
    doc.setdefault("replications", DEFAULT_CONCENTRATION_R)
    doc.setdefault("lambdas", list(DEFAULT_LAMBDAS))
    doc.setdefault("name", CONCENTRATION)
    spec = DriftProcessSpec(
        N=_num(doc, "N", int, lo=1), alpha=_num(doc, "alpha"), beta=_num(doc, "beta"),
        sigma=_num(doc, "sigma"), gamma=_num(doc, "gamma"), c_tilde=_num(doc, "c_tilde", lo=0, lo_open=True),
    )
    lambdas = tuple(float(l) for l in doc["lambdas"])
    if not lambdas or any(not l > 0 for l in lambdas):
        raise ConfigurationError("lambdas: need a nonempty list of positive values")
    R = _num(doc, "replications", int, lo=1000)
    return Experiment(str(doc["name"]), CONCENTRATION, spec, doc, lambdas=lambdas,
                      replications=R, seed=_num(doc, "seed", int, lo=0))


def from_mapping(raw: dict) -> Experiment:
    if not isinstance(raw, dict):
        raise ConfigurationError("config: expected a key-value document")
    doc = dict(raw)
    policy = doc.get("policy")
    if policy is None:
        raise ConfigurationError("policy: missing")
    try:
        seed = int(doc.get("seed", 0))
    except (TypeError, ValueError):
        raise ConfigurationError(f"seed: expected an unsigned 64-bit integer, got {doc.get('seed')!r}") from None
    if not 0 <= seed < 2**64:
        raise ConfigurationError(f"seed: {seed} is not an unsigned 64-bit integer")
    if policy == CONCENTRATION:
        return _concentration(doc)
    if policy in BATCHED_NAMES:
        return _ensemble(doc, batched=True)
    if policy in POLICY_CODES:
        return _ensemble(doc, batched=False)
    raise ConfigurationError(f"policy: unknown policy {policy!r}")


def parse_config(path: str | Path) -> Experiment:
    """Read and validate an experiment file, filling in defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config: {path} is not valid YAML: {exc}") from None
    return from_mapping(raw or {})


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def reference_grid(policy: str, seed: int = 0) -> Experiment:
    """The reproduction setting: two identical N(0, 1) arms, T = 10000, R = 5000."""
    return from_mapping({"policy": policy, "K": 2, "T": 10_000, "replications": 5000, "seed": seed})

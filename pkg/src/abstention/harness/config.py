"""Experiment configuration and loading of the objects it refers to."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..core import InvalidInputError, check_abstain_cost
from ..hypothesis import FiniteClass, LinearClass, ThresholdFamily
from ..shift import DiscreteDistribution

KINDS = ("classification_shift", "adversarial", "regression", "generalization", "pq_metrics")


@dataclass
class ExperimentConfig:
    """One experiment; JSON documents map onto these fields one to one.

    ``hypothesis`` is ``{"family": "threshold"}``, ``{"family": "finite", "path": ...}``
    or ``{"family": "linear", "dim": d}``. ``P`` and ``Q`` are distribution
    documents (``{"support", "pmf"}``), ``{"path": ...}`` references, or left
    empty to use the built-in ``scenario``. For regression, ``pipeline=False``
    only checks version-space membership and the fresh-sample radius.
    """

    kind: str
    n: int = 200
    c: float = 0.5
    trials: int = 100
    seed: int = 0
    delta: float | None = None
    hypothesis: dict = field(default_factory=lambda: {"family": "threshold"})
    scenario: str = "same"
    P: dict | None = None
    Q: dict | None = None
    target: dict | None = None
    gamma: float = 0.0
    policy: str = "targeted"
    noise: float = 0.1
    method: str | None = None
    domain_size: int = 100
    support_size: int = 24
    shift_tv: float = 0.3
    pipeline: bool = True
    out: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 2:
            raise InvalidInputError("n must be at least 2")
        if self.trials < 1:
            raise InvalidInputError("trials must be at least 1")
        check_abstain_cost(self.c)
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidInputError("gamma must lie in [0, 1]")
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise InvalidInputError("delta must lie in (0, 1)")
        if self.policy not in ("targeted", "resample"):
            raise InvalidInputError(f"unknown adversary policy {self.policy!r}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InvalidInputError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise InvalidInputError(f"cannot read config {path}: {err}") from None
        cfg = cls.from_dict(doc)
        cfg._base = path.parent
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def _resolve(path, base):
    path = Path(path)
    if not path.is_absolute() and base is not None:
        path = Path(base) / path
    return path


def load_class(spec: dict, base=None):
    family = spec.get("family", "threshold")
    if family == "threshold":
        return ThresholdFamily(bool(spec.get("two_sided", False)))
    if family == "finite":
        if "path" in spec:
            return FiniteClass.load(_resolve(spec["path"], base))
        return FiniteClass.from_json(spec)
    if family == "linear":
        return LinearClass(int(spec.get("dim", 2)))
    raise InvalidInputError(f"unknown hypothesis family {family!r}")


def load_distribution(spec: dict | None, base=None) -> DiscreteDistribution | None:
    if spec is None:
        return None
    if "path" in spec:
        return DiscreteDistribution.load(_resolve(spec["path"], base))
    return DiscreteDistribution.from_json(spec)


def trial_seeds(master: int, trials: int) -> list[int]:
    """Independent 64-bit seeds, one per trial, split from the master seed."""
    children = np.random.SeedSequence(master).spawn(trials)
    return [int(ch.generate_state(1, np.uint64)[0]) for ch in children]


def trial_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for one trial."""
    return np.random.Generator(np.random.Philox(seed))

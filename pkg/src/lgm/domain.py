"""Core data model shared by the engine, the oracle and the command line."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any

import numpy as np

from .errors import (
    BadConfig,
    BadValue,
    EmptyDataset,
    MissingValue,
    NoEvents,
    NonPositiveTime,
    UnknownRegion,
)
from .graph import RegionGraph

FAMILIES = ("logit", "weibull")
EFFECTS = ("none", "iid", "leroux")
HYPER_NAMES = ("tau", "phi", "alpha")
INTERCEPT = "(Intercept)"


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PriorSet:
    beta_precision: float = 0.001
    intercept_precision: float = 0.0
    tau_uniform: bool = True
    logit_phi_mean: float = 0.0
    logit_phi_precision: float = 0.1
    pc_alpha_rate: float = 5.0

    def __post_init__(self):
        for name in ("beta_precision", "intercept_precision", "logit_phi_precision"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise BadConfig(f"{name} must be a finite value >= 0, got {v!r}")
        if not self.pc_alpha_rate > 0:
            raise BadConfig(f"pc_alpha_rate must be > 0, got {self.pc_alpha_rate!r}")
        if not self.tau_uniform:
            raise BadConfig("only the improper uniform prior on tau is supported")


@dataclass(frozen=True)
class GridSettings:
    step: float = 0.75
    drop: float = 6.0
    max_points: int = 2000

    def __post_init__(self):
        if not self.step > 0:
            raise BadConfig(f"grid step must be > 0, got {self.step!r}")
        if not self.drop > 0:
            raise BadConfig(f"grid drop threshold must be > 0, got {self.drop!r}")
        if self.max_points < 1:
            raise BadConfig("max_points must be positive")


@dataclass(frozen=True)
class ModelSpec:
    """Model family, covariates, random effect and inference settings.

    ``fixed`` pins hyperparameters (natural scale: ``tau``, ``phi``,
    ``alpha``) instead of integrating over them. Pinning ``phi = 1`` on a
    Leroux effect gives the intrinsic CAR model with a sum-to-zero constraint.
    """

    family: str
    covariate_names: tuple[str, ...] = ()
    effect: str = "none"
    priors: PriorSet = field(default_factory=PriorSet)
    grid: GridSettings = field(default_factory=GridSettings)
    seed: int = 0
    fixed: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise BadConfig(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.effect not in EFFECTS:
            raise BadConfig(f"effect must be one of {EFFECTS}, got {self.effect!r}")
        names = tuple(self.covariate_names)
        if len(set(names)) != len(names):
            raise BadConfig(f"covariate names must be distinct: {names}")
        if INTERCEPT in names:
            raise BadConfig("the intercept is implicit; do not list it as a covariate")
        object.__setattr__(self, "covariate_names", names)
        fixed = dict(self.fixed)
        for k, v in fixed.items():
            if k not in HYPER_NAMES:
                raise BadConfig(f"cannot pin unknown hyperparameter {k!r}")
            if k == "phi" and not 0.0 <= v <= 1.0:
                raise BadConfig(f"pinned phi must lie in [0, 1], got {v!r}")
            if k in ("tau", "alpha") and not v > 0:
                raise BadConfig(f"pinned {k} must be > 0, got {v!r}")
        if "phi" in fixed and self.effect != "leroux":
            raise BadConfig("phi can only be pinned for a leroux effect")
        if "tau" in fixed and self.effect == "none":
            raise BadConfig("tau can only be pinned when a random effect is present")
        if "alpha" in fixed and self.family != "weibull":
            raise BadConfig("alpha can only be pinned for the weibull family")
        object.__setattr__(self, "fixed", MappingProxyType(fixed))

    @property
    def hyper_names(self) -> tuple[str, ...]:
        """Active (integrated) hyperparameters in grid order."""
        names = []
        if self.effect in ("iid", "leroux"):
            names.append("tau")
        if self.effect == "leroux":
            names.append("phi")
        if self.family == "weibull":
            names.append("alpha")
        return tuple(n for n in names if n not in self.fixed)

    @property
    def fixed_names(self) -> tuple[str, ...]:
        return (INTERCEPT,) + self.covariate_names

    @property
    def constrained(self) -> bool:
        return self.effect == "leroux" and self.fixed.get("phi") == 1.0

    def describe(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "covariates": list(self.covariate_names),
            "effect": self.effect,
            "fixed": dict(self.fixed),
            "priors": dict(vars(self.priors)),
            "grid": dict(vars(self.grid)),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Dataset:
    family: str
    covariate_names: tuple[str, ...]
    covariates: np.ndarray
    region: np.ndarray
    region_ids: tuple[str, ...]
    y: np.ndarray | None = None
    time: np.ndarray | None = None
    event: np.ndarray | None = None
    time_scale: float = 1.0

    @property
    def n(self) -> int:
        return int(self.region.shape[0])

    @property
    def J(self) -> int:
        return len(self.region_ids)

    def design(self) -> np.ndarray:
        """Covariate matrix with the implicit intercept column prepended."""
        return np.column_stack([np.ones(self.n), self.covariates])


@dataclass(frozen=True)
class LatentField:
    beta: np.ndarray
    gamma: np.ndarray

    @property
    def m(self) -> int:
        return self.beta.size + self.gamma.size

    def vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])


@dataclass(frozen=True)
class HyperPoint:
    """One hyperparameter configuration on the internal scale.

    Internal coordinates are ``log tau``, ``logit phi`` and ``alpha_prime``
    (with ``alpha = exp(0.1 alpha_prime)``), in ``ModelSpec.hyper_names`` order.
    """

    theta: np.ndarray
    log_post: float
    weight: float = 0.0
    index: tuple[int, ...] = ()


@dataclass(frozen=True)
class Marginal:
    support: np.ndarray
    density: np.ndarray
    mean: float
    sd: float
    quantiles: Mapping[float, float]

    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.support))


@dataclass(frozen=True)
class ScorePair:
    score: float
    effective_params: float
    mc_draws: int
    seed: int


@dataclass
class FitResult:
    spec: ModelSpec
    fixed_marginals: dict[str, Marginal]
    random_summaries: dict[str, np.ndarray]
    hyper_marginals: dict[str, Marginal]
    hyper_grid: list[HyperPoint]
    components: list  # GaussianApprox per grid point, same order as hyper_grid
    region_ids: tuple[str, ...]
    time_scale: float = 1.0
    aft_marginals: dict[str, Marginal] = field(default_factory=dict)
    latent_mean: np.ndarray | None = None
    latent_sd: np.ndarray | None = None
    dic: ScorePair | None = None
    waic: ScorePair | None = None


def _as_columns(raw) -> dict[str, Sequence]:
    if isinstance(raw, Mapping):
        return {str(k): v for k, v in raw.items()}
    rows = list(raw)
    if not rows:
        return {}
    keys = list(rows[0].keys())
    return {k: [r.get(k) for r in rows] for k in keys}


def _missing(v) -> bool:
    if v is None:
        return True
    if isinstance(v, str):
        return v.strip() == "" or v.strip().lower() in ("na", "nan")
    try:
        return math.isnan(v)
    except TypeError:
        return False


def _float_column(values, name) -> np.ndarray:
    try:
        fast = np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        fast = None
    if fast is not None and fast.ndim == 1 and np.all(np.isfinite(fast)):
        return fast.copy()
    # slow path pinpoints the offending row
    out = np.empty(len(values), dtype=float)
    for i, v in enumerate(values):
        if _missing(v):
            raise MissingValue(i, name)
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            raise BadValue(i, name, v) from None
        if not math.isfinite(out[i]):
            raise BadValue(i, name, v)
    return out


def _binary_column(values, name) -> np.ndarray:
    col = _float_column(values, name)
    bad = np.flatnonzero((col != 0.0) & (col != 1.0))
    if bad.size:
        raise BadValue(int(bad[0]), name, values[int(bad[0])])
    return col.astype(np.int8)


def _validate_existing(ds: Dataset, spec: ModelSpec, graph: RegionGraph) -> Dataset:
    if ds.n == 0:
        raise EmptyDataset()
    if ds.family != spec.family or ds.covariate_names != spec.covariate_names:
        raise BadConfig("dataset family/covariates do not match the model")
    if tuple(ds.region_ids) != tuple(graph.ids):
        raise BadConfig("dataset region index space differs from the graph")
    if ds.family == "weibull":
        scale = float(ds.time.max())
        bad = np.flatnonzero(~(ds.time > 0))
        if bad.size:
            raise NonPositiveTime(int(bad[0]), float(ds.time[bad[0]]))
        if not ds.event.any():
            raise NoEvents()
        return Dataset(
            ds.family, ds.covariate_names, ds.covariates, ds.region, ds.region_ids,
            time=_frozen(ds.time / scale), event=ds.event,
            time_scale=ds.time_scale * scale,
        )
    return ds


def validate_dataset(raw, spec: ModelSpec, graph: RegionGraph) -> Dataset:
    """Check raw tabular records and build a :class:`Dataset`.

    ``raw`` is a column mapping, a sequence of row mappings (e.g. from
    :class:`csv.DictReader`) or an existing Dataset. Required columns are
    ``region``, every covariate, and ``y`` (logit) or ``time`` and ``event``
    (weibull). Survival times are divided by their maximum; the divisor is kept
    in ``time_scale``.
    """
    if isinstance(raw, Dataset):
        return _validate_existing(raw, spec, graph)

    cols = _as_columns(raw)
    if not cols or all(len(v) == 0 for v in cols.values()):
        raise EmptyDataset()
    outcome = ("y",) if spec.family == "logit" else ("time", "event")
    needed = ("region",) + spec.covariate_names + outcome
    n = len(next(iter(cols.values())))
    for name in needed:
        if name not in cols:
            raise MissingValue(0, name)
    if n == 0:
        raise EmptyDataset()

    region = np.empty(n, dtype=np.int64)
    for i, r in enumerate(cols["region"]):
        if _missing(r):
            raise MissingValue(i, "region")
        j = graph.index.get(str(r).strip())
        if j is None:
            raise UnknownRegion(i, r)
        region[i] = j

    if spec.covariate_names:
        X = np.column_stack([_float_column(cols[c], c) for c in spec.covariate_names])
    else:
        X = np.zeros((n, 0))

    common = dict(
        family=spec.family,
        covariate_names=spec.covariate_names,
        covariates=_frozen(X),
        region=_frozen(region, np.int64),
        region_ids=tuple(graph.ids),
    )
    if spec.family == "logit":
        return Dataset(y=_frozen(_binary_column(cols["y"], "y"), np.int8), **common)

    time = _float_column(cols["time"], "time")
    bad = np.flatnonzero(~(time > 0))
    if bad.size:
        raise NonPositiveTime(int(bad[0]), float(time[bad[0]]))
    event = _binary_column(cols["event"], "event")
    if not event.any():
        raise NoEvents()
    scale = float(time.max())
    return Dataset(
        time=_frozen(time / scale), event=_frozen(event, np.int8), time_scale=scale, **common
    )

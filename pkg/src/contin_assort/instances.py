"""Named problem instances: the bimodal test case and the lower-bound family."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import BadIndexSetError, ConfigError
from .model import Instance, PreferenceFunction, ProfitCurve

SIGMA = 0.3
DELTA = 0.5
# Terms with |n| > 10 in the periodic Gaussian sums are below exp(-21^2 / 0.18),
# far under double precision, so the truncation is exact in floating point.
SERIES_TERMS = 10


class _Bimodal:
    """``0.1 + 0.2(2+x)(1-x) + (2/7) N(0.33, 0.1) + (1/5) N(0.8, 0.1)``."""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (0.1 + 0.2 * (2 + x) * (1 - x)
                + (2 / 7) * norm.pdf(x, 0.33, 0.1) + (1 / 5) * norm.pdf(x, 0.8, 0.1))


def bimodal_preference() -> PreferenceFunction:
    return PreferenceFunction.from_callable(_Bimodal(), name="bimodal")


def make_bimodal_instance(c: float = 1.0) -> Instance:
    """Bimodal preference with identity profit curve."""
    return Instance(bimodal_preference(), ProfitCurve.identity(), c)


def bump(x):
    """Normal density with mean 0 and standard deviation 0.3."""
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2 * SIGMA**2)) / (SIGMA * math.sqrt(2 * math.pi))


def _periodic_sum(shift: float, scale: float) -> float:
    n = np.arange(-SERIES_TERMS, SERIES_TERMS + 1)
    return float(np.sum(np.exp(-((2 * n - shift) ** 2) / scale))) / (SIGMA * math.sqrt(2 * math.pi))


# L and H constants of the lower-bound construction
L_CONST = _periodic_sum(1.0, 2 * SIGMA**2)
H_CONST = _periodic_sum(0.0, 2 * SIGMA**2)
P_CONST = float(norm.cdf(1 / SIGMA) - norm.cdf(-1 / SIGMA))


class _Baseline:
    def __init__(self, s, c):
        self.s, self.c = s, c
        self.w = ProfitCurve.hyperbolic(s, DELTA)

    def __call__(self, x):
        return self.s / (self.c * (self.w(x) - self.s))


class _Bumped:
    def __init__(self, lb: "LowerBoundInstance"):
        self.lb = lb

    def __call__(self, x):
        return self.lb.v_I(x)


@dataclass(frozen=True)
class LowerBoundInstance:
    """Baseline ``v0`` with bumps on the bins in ``I`` (1-based)."""

    c: float
    K: int
    I: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 0.0 < self.c <= 0.25:
            raise ConfigError("lower-bound instances need 0 < c <= 1/4")
        if self.K < 2:
            raise ConfigError("K must be at least 2")
        I = tuple(sorted(int(i) for i in self.I))
        object.__setattr__(self, "I", I)
        if len(I) != self.K or len(set(I)) != len(I):
            raise BadIndexSetError(f"need {self.K} distinct bins, got {I}")
        if I and (I[0] < 1 or I[-1] > self.n_bins):
            raise BadIndexSetError(f"bins must lie in 1..{self.n_bins}")

    @property
    def s(self) -> float:
        return 0.8 * self.c

    @property
    def delta(self) -> float:
        return DELTA

    @property
    def sigma(self) -> float:
        return SIGMA

    @property
    def n_bins(self) -> int:
        return int(math.floor(self.K / self.c + 1e-12))

    @property
    def beta(self) -> float:
        return L_CONST * self.c / self.K

    def bin(self, i: int) -> tuple[float, float]:
        return self.c * (i - 1) / self.K, self.c * i / self.K

    def phi(self, i: int, x):
        return 2 * self.K * np.asarray(x, dtype=float) / self.c - 2 * i + 1

    def tau(self, i: int, x):
        return self.c / self.K * bump(self.phi(i, x))

    def profit(self) -> ProfitCurve:
        return ProfitCurve.hyperbolic(self.s, DELTA)

    def v0(self, x):
        return _Baseline(self.s, self.c)(x)

    def eps_I(self, x):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape)
        for i in self.I:
            total = total + self.tau(i, x)
        return total - self.beta

    def v_I(self, x):
        return self.v0(x) * (1.0 + self.eps_I(x))

    def bump_union(self):
        return [self.bin(i) for i in self.I]

    def instance(self) -> Instance:
        v = PreferenceFunction.from_callable(_Bumped(self), name=f"v_I{list(self.I)}")
        return Instance(v, self.profit(), self.c)


def make_lower_bound_instance(c: float, K: int, I) -> Instance:
    return LowerBoundInstance(c, K, tuple(I)).instance()


def make_baseline_instance(c: float) -> Instance:
    """The unperturbed ``v0`` for which every volume-``c`` set is optimal."""
    if not 0.0 < c <= 0.25:
        raise ConfigError("baseline instances need 0 < c <= 1/4")
    s = 0.8 * c
    v = PreferenceFunction.from_callable(_Baseline(s, c), name="v0")
    return Instance(v, ProfitCurve.hyperbolic(s, DELTA), c)


def _read_grid_csv(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except (ValueError, IndexError):
                continue  # header row
    if len(rows) < 2:
        raise ConfigError(f"grid file {path} needs at least two rows")
    arr = np.array(rows)
    return arr[:, 0], arr[:, 1]


def build_instance(spec: dict, c: float | None = None) -> Instance:
    """Instance from a JSON-style description.

    ``{"name": "bimodal"}``, ``{"name": "lower_bound", "c": .., "K": .., "I": [..]}``,
    ``{"name": "baseline", "c": ..}``, ``{"name": "constant", "value": ..}`` or
    ``{"name": "grid", "path": ..}``.  ``"profit"`` selects ``identity`` (default)
    or ``{"affine": [lo, hi]}`` for the non lower-bound kinds.
    """
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("instance spec must be an object with a 'name'")
    name = spec["name"]
    cap = spec.get("c", 1.0) if c is None else c
    try:
        cap = float(cap)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad capacity {cap!r}") from exc
    if name == "lower_bound":
        return make_lower_bound_instance(cap, int(spec.get("K", 2)), spec.get("I", ()))
    if name == "baseline":
        return make_baseline_instance(cap)
    if name == "bimodal":
        v = bimodal_preference()
    elif name == "constant":
        v = PreferenceFunction.constant(float(spec.get("value", 1.0)))
    elif name == "grid":
        if "path" not in spec:
            raise ConfigError("grid instance needs a 'path'")
        try:
            x, y = _read_grid_csv(spec["path"])
        except OSError as exc:
            raise ConfigError(f"cannot read grid file: {exc}") from exc
        v = PreferenceFunction.from_grid(x, y)
    else:
        raise ConfigError(f"unknown instance {name!r}")
    profit = spec.get("profit", "identity")
    if profit == "identity":
        w = ProfitCurve.identity()
    elif isinstance(profit, dict) and "affine" in profit:
        lo, hi = profit["affine"]
        w = ProfitCurve.affine(float(lo), float(hi))
    else:
        raise ConfigError(f"unknown profit curve {profit!r}")
    if not 0.0 <= cap <= 1.0:
        raise ConfigError(f"capacity must lie in [0, 1], got {cap}")
    return Instance(v, w, cap)

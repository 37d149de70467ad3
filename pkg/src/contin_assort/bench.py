"""Seeded multi-replication experiments, regret summaries and rate fits."""
from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ContinAssortError, DegenerateFitError, MismatchedHorizonsError
from .instances import build_instance
from .kde import TestPlan
from .policies import (BanditConfig, KdepConfig, SapConfig, discretize, run_discrete_bandit,
                       run_kdep, sap_batch)
from .solver import solve

SCHEMA_VERSION = 1
POLICIES = ("SAP", "KDEP", "UCB", "TS")
THREADS_ENV = "CONTIN_ASSORT_THREADS"


@dataclass
class ExperimentConfig:
    instance: dict = field(default_factory=lambda: {"name": "bimodal"})
    policy: dict = field(default_factory=lambda: {"name": "SAP"})
    horizons: list = field(default_factory=lambda: [1000])
    reps: int = 100
    seed: int = 0
    schema_version: int = SCHEMA_VERSION
    # SAP only: read every horizon off one run per replication
    nested: bool = False

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {self.schema_version}")
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ConfigError("reps must be a positive integer")
        try:
            self.horizons = [int(T) for T in self.horizons]
        except (TypeError, ValueError) as exc:
            raise ConfigError("horizons must be integers") from exc
        if not self.horizons or any(T < 1 for T in self.horizons):
            raise ConfigError("horizons must be positive")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ConfigError("horizons must be strictly increasing")
        if not isinstance(self.policy, dict) or str(self.policy.get("name", "")).upper() not in POLICIES:
            raise ConfigError(f"policy name must be one of {POLICIES}")
        if not isinstance(self.instance, dict) or "name" not in self.instance:
            raise ConfigError("instance must be an object with a 'name'")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if not isinstance(self.nested, bool):
            raise ConfigError("nested must be true or false")
        if self.nested and str(self.policy.get("name", "")).upper() != "SAP":
            raise ConfigError("nested horizons need an anytime policy (SAP)")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {"instance", "policy", "horizons", "reps", "seed", "schema_version", "nested"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(d)

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def replication_rng(seed: int, horizon: int, rep: int) -> np.random.Generator:
    """Stream keyed on ``(seed, horizon, rep)``; new horizons leave old streams alone."""
    return np.random.default_rng(np.random.SeedSequence([seed, horizon, rep]))


def path_rng(seed: int, rep: int) -> np.random.Generator:
    """Horizon-free stream for nested runs; its prefixes do not depend on the length drawn."""
    return np.random.default_rng(np.random.SeedSequence([seed, rep]))


@dataclass
class RegretSummary:
    """Mean cumulative regret, standard error and replication count per horizon."""

    horizons: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    reps: np.ndarray
    single_rep: bool = False  # stderr is reported as 0 when only one replication ran
    failures: list = field(default_factory=list)

    @property
    def mrse(self) -> float:
        """Maximum relative standard error over horizons."""
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(self.mean > 0, self.stderr / self.mean, 0.0)
        return float(np.max(rel)) if rel.size else 0.0

    @classmethod
    def from_samples(cls, horizons, samples, failures=()) -> "RegretSummary":
        mean, se, n = [], [], []
        for s in samples:
            s = np.asarray(s, dtype=float)
            n.append(s.size)
            mean.append(float(np.mean(s)) if s.size else float("nan"))
            se.append(float(np.std(s, ddof=1) / math.sqrt(s.size)) if s.size > 1 else 0.0)
        n = np.asarray(n, dtype=int)
        return cls(np.asarray(horizons, dtype=int), np.asarray(mean), np.asarray(se), n,
                   bool(np.all(n <= 1)), list(failures))

    def to_csv(self, path, config_digest: str = ""):
        with open(path, "w") as fh:
            fh.write(f"# config_hash={config_digest}\n")
            fh.write("T,mean_regret,stderr,reps\n")
            for T, m, s, r in zip(self.horizons, self.mean, self.stderr, self.reps):
                fh.write(f"{int(T)},{float(m)!r},{float(s)!r},{int(r)}\n")

    def to_dat(self, path, config_digest: str = ""):
        write_dat(path, self.horizons, self.mean, ("T", "mean"), config_digest)


def write_dat(path, xs, ys, names=("x", "y"), config_digest: str = ""):
    """Two-column whitespace-separated data with a commented header."""
    with open(path, "w") as fh:
        fh.write(f"# {names[0]} {names[1]}  config_hash={config_digest}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{x!r} {float(y)!r}\n" if isinstance(x, float) else f"{x} {float(y)!r}\n")


def read_summary_csv(path) -> RegretSummary:
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("T,") or not line.strip():
                continue
            rows.append([float(v) for v in line.strip().split(",")])
    if not rows:
        raise ConfigError(f"no data rows in {path}")
    arr = np.array(rows)
    return RegretSummary(arr[:, 0].astype(int), arr[:, 1], arr[:, 2], arr[:, 3].astype(int),
                         bool(np.all(arr[:, 3] <= 1)))


# --------------------------------------------------------------------------
# Running experiments
# --------------------------------------------------------------------------


def _policy_runner(cfg_dict: dict):
    """Build the instance once and return ``run(T, reps) -> (totals, failures)``."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    inst = build_instance(cfg.instance)
    pol = dict(cfg.policy)
    name = str(pol.pop("name")).upper()
    rho_star = solve(inst).rho_star

    if name == "SAP":
        if inst.c < 1.0:
            raise ConfigError("SAP runs on uncapacitated instances (c = 1)")
        sap = SapConfig(**{k: float(v) for k, v in pol.items()})
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            sap.check(inst)

        def run(T, reps):
            u = np.stack([replication_rng(cfg.seed, T, r).random(T) for r in reps])
            regret, _, _ = sap_batch(inst, sap, u, rho_star)
            return list(regret.sum(axis=1)), []

        def run_nested(horizons, reps):
            T = max(horizons)
            u = np.stack([path_rng(cfg.seed, r).random(T) for r in reps])
            cum = np.cumsum(sap_batch(inst, sap, u, rho_star)[0], axis=1)
            return [(list(cum[:, H - 1]), []) for H in horizons]

        run.nested = run_nested
        return run

    if name == "KDEP":
        if not 0.0 < inst.c < 1.0:
            raise ConfigError("KDEP needs 0 < c < 1")
        plan = TestPlan(inst.c)
        explore = pol.get("explore")

        def run(T, reps):
            totals, failures = [], []
            kcfg = KdepConfig(T, plan, explore)
            for r in reps:
                try:
                    _, tr, _ = run_kdep(inst, kcfg, replication_rng(cfg.seed, T, r), rho_star, record=False)
                    totals.append(tr.total)
                except ContinAssortError as exc:
                    failures.append((T, r, str(exc)))
            return totals, failures

        return run

    N = int(pol.pop("N", 10))
    K = pol.pop("K", None)
    bins = discretize(inst, N, None if K is None else int(K))
    bcfg = BanditConfig(name, **pol)

    def run(T, reps):
        totals = []
        for r in reps:
            _, tr = run_discrete_bandit(name, bins, bins.K, T, inst, replication_rng(cfg.seed, T, r),
                                        rho_star, bcfg, record=False)
            totals.append(tr.total)
        return totals, []

    return run


def _run_horizon(args):
    cfg_dict, T = args
    run = _policy_runner(cfg_dict)
    return run(T, range(cfg_dict["reps"]))


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> RegretSummary:
    """Cumulative regret at every horizon over ``cfg.reps`` seeded replications.

    Replications that raise a package error are dropped and listed in
    ``failures``.  With ``workers > 1`` horizons run in separate processes;
    results are collected in horizon order so output does not depend on
    scheduling.  ``cfg.nested`` runs each SAP replication once to the
    largest horizon and reports prefix sums, so the means are cumulative
    along common sample paths and non-decreasing in ``T``.
    """
    workers = thread_cap() if workers is None else max(1, workers)
    cfg_dict = cfg.to_dict()
    tasks = [(cfg_dict, T) for T in cfg.horizons]
    if cfg.nested:
        results = _policy_runner(cfg_dict).nested(cfg.horizons, range(cfg.reps))
    elif workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_run_horizon, tasks))
    else:
        run = _policy_runner(cfg_dict)
        results = [run(T, range(cfg.reps)) for T in cfg.horizons]
    samples = [r[0] for r in results]
    failures = [f for r in results for f in r[1]]
    return RegretSummary.from_samples(cfg.horizons, samples, failures)


# --------------------------------------------------------------------------
# Rate fits and worst case
# --------------------------------------------------------------------------

LOG = "LOG"
TWO_THIRDS = "TWO_THIRDS"


def fit_rate(summary: RegretSummary, model: str = LOG):
    """Least-squares ``gamma`` in ``regret ~ gamma g(T)`` through the origin.

    ``g`` is ``log T`` or ``T^(2/3)``.  Returns ``(gamma, residuals)``.
    """
    T = np.asarray(summary.horizons, dtype=float)
    y = np.asarray(summary.mean, dtype=float)
    if T.size < 2 or np.all(T == T[0]):
        raise DegenerateFitError("need at least two distinct horizons")
    if model == LOG:
        g = np.log(T)
    elif model == TWO_THIRDS:
        g = T ** (2.0 / 3.0)
    else:
        raise ValueError(f"unknown model {model!r}")
    denom = float(np.dot(g, g))
    if denom == 0.0:
        raise DegenerateFitError("regressor is identically zero")
    gamma = float(np.dot(g, y) / denom)
    return gamma, y - gamma * g


def sign_changes(residuals) -> int:
    s = np.sign(np.asarray(residuals, dtype=float))
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))


def worst_case_regret(summaries) -> RegretSummary:
    """Pointwise maximum of mean regret over instances sharing a horizon grid."""
    summaries = list(summaries)
    if not summaries:
        raise ValueError("need at least one summary")
    H = np.asarray(summaries[0].horizons)
    for s in summaries[1:]:
        if not np.array_equal(np.asarray(s.horizons), H):
            raise MismatchedHorizonsError("summaries use different horizons")
    means = np.vstack([s.mean for s in summaries])
    pick = np.argmax(means, axis=0)
    cols = np.arange(H.size)
    stderr = np.vstack([s.stderr for s in summaries])[pick, cols]
    reps = np.vstack([s.reps for s in summaries])[pick, cols]
    return RegretSummary(H.copy(), means[pick, cols], stderr, reps,
                         all(s.single_rep for s in summaries),
                         [f for s in summaries for f in s.failures])

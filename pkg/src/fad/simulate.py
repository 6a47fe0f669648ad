"""Synthetic factor-model data and FAD/EM head-to-head experiments."""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import DataSet
from .profile import canonical_rotation
from .selection import compare_fits, relative_error_gamma, relative_error_LLt, relative_error_R, select_q

__all__ = [
    "SimConfig",
    "FactorTruth",
    "ExperimentReport",
    "PRESETS",
    "preset",
    "invgamma_params",
    "sample_uniquenesses",
    "generate",
    "run_experiment",
    "write_experiment",
    "jsonable",
]

PSI_LAWS = ("uniform", "invgamma")


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``psi_law="uniform"`` draws uniquenesses from U(0.2, 0.8);
    ``psi_law="invgamma"`` draws them from an inverse gamma law with mean 1
    and variance ``psi_var`` (0 gives the constant 1).
    """

    n: int = 100
    p: int = 1000
    q_true: int = 3
    psi_law: str = "uniform"
    psi_var: float = 0.0
    replicates: int = 1
    seed: int = 0
    k_max: int = 6
    methods: tuple = ("fad", "em")

    def __post_init__(self):
        if self.n < 2 or self.p < 2:
            raise ValueError("need n >= 2 and p >= 2")
        if not 0 <= self.q_true < min(self.n, self.p):
            raise ValueError("q_true must lie in [0, min(n, p))")
        if self.psi_law not in PSI_LAWS:
            raise ValueError(f"psi_law must be one of {PSI_LAWS}")
        if self.psi_var < 0:
            raise ValueError("psi_var must be non-negative")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not 1 <= self.k_max <= min(self.n, self.p) - 1:
            raise ValueError("k_max out of range")
        bad = set(self.methods) - {"fad", "em"}
        if bad or not self.methods:
            raise ValueError(f"unknown methods {sorted(bad)}")
        object.__setattr__(self, "methods", tuple(self.methods))


PRESETS = {
    "tiny": SimConfig(n=60, p=40, q_true=2, k_max=3),
    "paper-small": SimConfig(n=100, p=1000, q_true=3, k_max=6),
    "paper-medium": SimConfig(n=225, p=3375, q_true=5, k_max=10),
    "paper-large": SimConfig(n=400, p=8000, q_true=3, k_max=6),
    "high-noise": SimConfig(n=200, p=1000, q_true=3, psi_law="invgamma", psi_var=1.0, k_max=6),
    "voxel-160": SimConfig(n=160, p=24547, q_true=2, k_max=4, methods=("fad",)),
}


def preset(name, **overrides):
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides)


@dataclass(frozen=True)
class FactorTruth:
    """Generating parameters; ``lambda_`` is in canonical form so ``gamma`` is diagonal."""

    lambda_: np.ndarray
    psi: np.ndarray

    @property
    def gamma(self):
        return self.lambda_.T @ (self.lambda_ / self.psi[:, None])

    @property
    def corr_loadings(self):
        """``L`` with ``R = L L^T + diag(1 - rowsum(L^2))``."""
        d = np.sum(self.lambda_**2, axis=1) + self.psi
        return self.lambda_ / np.sqrt(d)[:, None]

    @property
    def corr_uniquenesses(self):
        return self.psi / (np.sum(self.lambda_**2, axis=1) + self.psi)


def invgamma_params(var):
    """Shape and scale of the inverse gamma law with mean 1 and variance ``var``."""
    if var <= 0:
        raise ValueError("variance must be positive")
    return 2.0 + 1.0 / var, 1.0 + 1.0 / var


def sample_uniquenesses(rng, p, law="uniform", var=0.0):
    if law == "uniform":
        return rng.uniform(0.2, 0.8, size=p)
    if var == 0:
        return np.ones(p)
    a, b = invgamma_params(var)
    return b / rng.gamma(a, size=p)


def generate(cfg, rep=0):
    """Draw replicate ``rep`` of ``cfg``; returns ``(DataSet, FactorTruth)``.

    Observations are sampled as ``Z L^T + eps`` with ``Z`` standard normal
    and ``eps ~ N(0, Psi)``, so no p x p matrix is ever formed.
    """
    rng = np.random.default_rng([cfg.seed, rep])
    psi = sample_uniquenesses(rng, cfg.p, cfg.psi_law, cfg.psi_var)
    lam = rng.standard_normal((cfg.p, cfg.q_true))
    if cfg.q_true > 0:
        lam, _ = canonical_rotation(lam, psi)
    Y = rng.standard_normal((cfg.n, cfg.p))
    Y *= np.sqrt(psi)
    if cfg.q_true > 0:
        Y += rng.standard_normal((cfg.n, cfg.q_true)) @ lam.T
    return DataSet.from_array(Y, copy=False), FactorTruth(lam, psi)


@dataclass
class ExperimentReport:
    config: SimConfig
    replicates: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    fit_reports: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return jsonable(
            {
                "config": asdict(self.config),
                "aggregates": self.aggregates,
                "failures": self.failures,
                "replicates": self.replicates,
            }
        )


def _run_replicate(cfg, rep, fit_cfg, em_cfg, deterministic):
    data, truth = generate(cfg, rep)
    rec = {"replicate": rep, "q_selected": {}, "fits": {}, "truth_errors": {}}
    at_truth = {}
    reports = []
    for method in cfg.methods:
        q_best, reps = select_q(data, cfg.k_max, method, fit_cfg, em_cfg)
        if deterministic:
            for r in reps:
                r.wall_time_seconds = 0.0
        reports.extend(reps)
        rec["q_selected"][method] = q_best
        rec["fits"][method] = [r.summary() for r in reps]
        if 1 <= cfg.q_true <= cfg.k_max and reps[cfg.q_true - 1].ok:
            r = reps[cfg.q_true - 1]
            at_truth[method] = r
            rec["truth_errors"][method] = {
                "d_R": relative_error_R(r.lambda_hat, r.psi_hat, truth.lambda_, truth.psi),
                "d_Gamma": relative_error_gamma(r.lambda_hat, r.psi_hat, truth.lambda_, truth.psi),
                "d_LLt": relative_error_LLt(r.lambda_hat, r.psi_hat, truth.lambda_, truth.psi),
            }
    if "fad" in at_truth and "em" in at_truth:
        cmp = compare_fits(at_truth["fad"], at_truth["em"])
        rec["cross"] = cmp.cross
        rec["speed_ratio"] = cmp.speed_ratio
    return rec, reports


def _quartiles(values):
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=np.float64)
    if v.size == 0:
        return None
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3), "count": int(v.size)}


def _aggregate(cfg, records):
    agg = {"replicates_ok": len(records)}
    for method in cfg.methods:
        hits = [r["q_selected"][method] == cfg.q_true for r in records]
        m = {"bic_hit_rate": float(np.mean(hits)) if hits else None}
        for key in ("d_R", "d_Gamma", "d_LLt"):
            m[key] = _quartiles([r["truth_errors"].get(method, {}).get(key) for r in records])
        agg[method] = m
    if set(cfg.methods) == {"fad", "em"}:
        agg["speed_ratio"] = _quartiles([r.get("speed_ratio") for r in records])
    return agg


def run_experiment(cfg, fit_cfg=None, em_cfg=None, threads=1, deterministic=False):
    """Run every replicate of ``cfg`` and aggregate errors, timings and BIC hit rates.

    Replicate ``r`` uses its own RNG stream, so results do not depend on
    ``threads`` or on which other replicates are run. Failed replicates are
    recorded in ``failures`` and excluded from the aggregates.
    """

    def one(rep):
        try:
            return _run_replicate(cfg, rep, fit_cfg, em_cfg, deterministic), None
        except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            return None, {"replicate": rep, "error": f"{type(exc).__name__}: {exc}"}

    reps = range(cfg.replicates)
    if threads > 1 and cfg.replicates > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, reps))
    else:
        outcomes = [one(r) for r in reps]
    out = ExperimentReport(config=cfg)
    for ok, err in outcomes:
        if err is not None:
            out.failures.append(err)
        else:
            rec, reports = ok
            out.replicates.append(rec)
            out.fit_reports.extend(reports)
    out.aggregates = _aggregate(cfg, out.replicates)
    out.aggregates["replicates_failed"] = len(out.failures)
    return out


def jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_experiment(report, out_dir, extra=None):
    """Write ``report.json``, ``errors.csv`` and ``timings.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"schema": 1}
    doc.update(extra or {})
    doc.update(report.to_dict())
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2) + "\n")

    with open(out_dir / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "method", "q_selected", "d_R", "d_Gamma", "d_LLt"])
        for rec in report.replicates:
            for method, q_sel in rec["q_selected"].items():
                e = rec["truth_errors"].get(method, {})
                w.writerow([rec["replicate"], method, q_sel] + [repr(float(e.get(k, float("nan")))) for k in ("d_R", "d_Gamma", "d_LLt")])

    with open(out_dir / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "method", "k", "wall_time_seconds", "iterations", "converged", "loglik", "bic"])
        for rec in report.replicates:
            for method, fits in rec["fits"].items():
                for f in fits:
                    w.writerow(
                        [rec["replicate"], method, f["q"], repr(float(f["wall_time_seconds"])), f["iterations"], int(f["converged"]), repr(float(f["loglik"])), repr(float(f["bic"]))]
                    )
    return out_dir

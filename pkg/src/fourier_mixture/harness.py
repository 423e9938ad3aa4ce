"""Seeded experiment batches and their reports."""
import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .deconv import theory_budgets
from .errors import ConfigError, MixtureError, ParameterError
from .model import ConstantsConfig, MixtureParams, hausdorff, sample_mixture
from .pipeline import LearnConfig, learn_mixture
from .rng import derive_seed, stream

STAGES = ("spikes", "refine")
METRICS = ("wall_s", "k_found", "hausdorff", "success")

BUDGET_DEFAULTS = {
    "n": 20000,
    "m": 1500,
    "spacing_div": None,
    "radius_div": None,
    "runs": None,
    "frame_retries": None,
    "refine_iters": 50,
    "max_lattice": 4_000_000,
    "delta_bar_target": 1.0,
    "boost_C": 0.5,
}


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def generate_centers(rng, k0, d, separation, max_tries=100_000):
    """Rejection-sample k0 centers in a cube, pairwise at least ``separation`` apart."""
    half = separation * max(1.0, k0 ** (1.0 / d)) * 0.8
    out = []
    tries = 0
    while len(out) < k0:
        c = rng.uniform(-half, half, d)
        if all(np.linalg.norm(c - o) >= separation for o in out):
            out.append(c)
        tries += 1
        if tries % 1000 == 0:
            half *= 1.1
        if tries > max_tries:
            raise ParameterError("could not place separated centers")
    return np.array(out)


@dataclass(frozen=True)
class ExperimentConfig:
    """A batch of seeded trials.

    Either ``mixture`` (a fixed MixtureParams document) or ``generator``
    (``d``, ``k0``, ``separation`` in units of sigma*sqrt(d), ``weights``
    ``"uniform"`` or a list, ``sigma``) describes the ground truth.
    """

    mixture: dict = None
    generator: dict = None
    budgets: dict = field(default_factory=dict)
    constants: ConstantsConfig = field(default_factory=ConstantsConfig)
    seed: int = 0
    trials: int = 1
    mode: str = "practice"
    c0: float = 1.0
    acceptance: bool = False

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError("unknown field", key)
        mode = doc.get("mode", "practice")
        if mode not in ("practice", "theory"):
            raise ConfigError(f"must be 'practice' or 'theory', got {mode!r}", "mode")
        budgets = dict(BUDGET_DEFAULTS)
        for key, val in (doc.get("budgets") or {}).items():
            if key not in BUDGET_DEFAULTS:
                raise ConfigError("unknown budget", f"budgets.{key}")
            if val is not None and not (isinstance(val, (int, float)) and val > 0):
                raise ConfigError("must be positive", f"budgets.{key}")
            budgets[key] = val
        try:
            constants = ConstantsConfig.from_dict(doc.get("constants") or {})
        except ParameterError as exc:
            raise ConfigError(str(exc), "constants") from None
        for key in ("seed", "trials"):
            v = doc.get(key, 0 if key == "seed" else 1)
            if not isinstance(v, int) or v < 0 or (key == "trials" and v < 1):
                raise ConfigError("must be a non-negative integer" if key == "seed"
                                  else "must be a positive integer", key)
        mixture, generator = doc.get("mixture"), doc.get("generator")
        if (mixture is None) == (generator is None):
            raise ConfigError("exactly one of mixture and generator is required", "mixture")
        if mixture is not None:
            try:
                MixtureParams.from_dict(mixture)
            except ParameterError as exc:
                raise ConfigError(str(exc), "mixture") from None
        else:
            generator = cls._check_generator(generator, doc)
        c0 = doc.get("c0", 1.0)
        if not (isinstance(c0, (int, float)) and c0 > 0):
            raise ConfigError("must be positive", "c0")
        return cls(mixture, generator, budgets, constants, doc.get("seed", 0),
                   doc.get("trials", 1), mode, float(c0), bool(doc.get("acceptance", False)))

    @staticmethod
    def _check_generator(gen, doc):
        if not isinstance(gen, dict):
            raise ConfigError("must be an object", "generator")
        out = {"weights": "uniform", "sigma": 1.0}
        out.update(gen)
        for key in ("d", "k0"):
            if not isinstance(out.get(key), int) or out[key] < 1:
                raise ConfigError("must be a positive integer", f"generator.{key}")
        if not (isinstance(out.get("separation"), (int, float)) and out["separation"] > 0):
            raise ConfigError("must be positive", "generator.separation")
        if not (isinstance(out["sigma"], (int, float)) and out["sigma"] > 0):
            raise ConfigError("must be positive", "generator.sigma")
        w = out["weights"]
        if w != "uniform":
            if not isinstance(w, list) or len(w) != out["k0"] or min(w) <= 0 or abs(sum(w) - 1) > 1e-9:
                raise ConfigError("must be 'uniform' or k0 positive weights summing to 1",
                                  "generator.weights")
        if doc.get("acceptance") and out["separation"] < 2 * doc.get("c0", 1.0):
            raise ConfigError("acceptance runs need separation >= 2*c0", "generator.separation")
        return out

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self):
        return {
            "mixture": self.mixture,
            "generator": self.generator,
            "budgets": dict(self.budgets),
            "constants": self.constants.to_dict(),
            "seed": self.seed,
            "trials": self.trials,
            "mode": self.mode,
            "c0": self.c0,
            "acceptance": self.acceptance,
        }

    def config_hash(self):
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()

    def ground_truth(self, trial):
        if self.mixture is not None:
            return MixtureParams.from_dict(self.mixture)
        g = self.generator
        d, k0, sigma = g["d"], g["k0"], float(g["sigma"])
        rng = stream(self.seed, "mixture", trial)
        centers = generate_centers(rng, k0, d, g["separation"] * math.sqrt(d) * sigma)
        w = np.full(k0, 1.0 / k0) if g["weights"] == "uniform" else np.array(g["weights"])
        return MixtureParams(d, centers, w / w.sum(), sigma)

    def separation(self):
        if self.generator is not None:
            return float(self.generator["separation"])
        p = MixtureParams.from_dict(self.mixture)
        if p.k0 < 2:
            return 2.0 * self.c0
        from .model import min_separation
        return min_separation(p.centers) / (p.sigma * math.sqrt(p.d))

    def learn_config(self, params, seed):
        b = self.budgets
        return LearnConfig(
            weights=tuple(params.weights), sigma=params.sigma, delta_big=self.separation(),
            constants=self.constants, mode=self.mode, m=int(b["m"]),
            delta_bar_target=b["delta_bar_target"], spacing_div=b["spacing_div"],
            radius_div=b["radius_div"], runs=b["runs"], boost_C=b["boost_C"],
            frame_retries=b["frame_retries"], refine_iters=int(b["refine_iters"]),
            max_lattice=int(b["max_lattice"]), seed=seed)


@dataclass
class Report:
    """Per-trial records plus batch summary of one experiment."""

    config: dict
    config_hash: str
    records: list
    trials: list
    summary: dict
    budgets: dict

    def to_dict(self):
        return {"config": self.config, "config_hash": self.config_hash, "records": self.records,
                "trials": self.trials, "summary": self.summary, "budgets": self.budgets}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["config"], doc["config_hash"], doc["records"], doc["trials"],
                   doc["summary"], doc["budgets"])

    def without_timing(self):
        """Copy with every wall-clock value removed (for determinism checks)."""
        recs = [{**r, "metrics": {k: v for k, v in r["metrics"].items() if k != "wall_s"}}
                for r in self.records]
        trials = [{k: v for k, v in t.items() if k != "wall_s"} for t in self.trials]
        return Report(self.config, self.config_hash, recs, trials, dict(self.summary), self.budgets)

    def success_rate(self):
        return self.summary.get("success_rate")


def _stage_metrics(wall, centers, truth, delta_abs):
    if centers is None:
        return {"wall_s": wall, "k_found": 0, "hausdorff": None, "success": 0}
    err = hausdorff(centers, truth)
    return {"wall_s": wall, "k_found": int(centers.shape[0]), "hausdorff": err,
            "success": int(err <= delta_abs)}


def run_experiment(config, progress=None):
    """Run every trial of ``config`` and collect a :class:`Report`.

    Pipeline failures are recorded per trial and count as unsuccessful.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    records, trials = [], []
    n = int(config.budgets["n"])
    for t in range(config.trials):
        seed_t = derive_seed(config.seed, "trial", t)
        truth = config.ground_truth(t)
        delta_abs = config.constants.delta_acc * truth.sigma * math.sqrt(truth.d)
        samples = sample_mixture(truth, n, seed_t).unlabeled()
        t0 = time.perf_counter()
        status, err_msg, seeds, final = "ok", None, None, None
        timing = {}
        try:
            res = learn_mixture(samples, config.learn_config(truth, seed_t))
            seeds = np.array(res.report["seeds"])
            final = res.centers
            timing = res.report["timing"]
        except MixtureError as exc:
            status, err_msg = "error", str(exc)
        wall = time.perf_counter() - t0
        spike_wall = timing.get("split", 0.0) + timing.get("spikes", 0.0) if timing else wall
        refine_wall = timing.get("refine", 0.0)
        for stage, cents, w in (("spikes", seeds, spike_wall), ("refine", final, refine_wall)):
            records.append({"trial": t, "stage": stage,
                            "metrics": _stage_metrics(w, cents, truth.centers, delta_abs)})
        trials.append({"trial": t, "status": status, "error": err_msg, "delta": delta_abs,
                       "wall_s": wall})
        if progress is not None:
            progress(t, records[-1])
    finals = [r["metrics"] for r in records if r["stage"] == "refine"]
    errs = [m["hausdorff"] for m in finals if m["hausdorff"] is not None]
    summary = {
        "trials": config.trials,
        "successes": sum(m["success"] for m in finals),
        "success_rate": sum(m["success"] for m in finals) / config.trials,
        "errors": sum(1 for t in trials if t["status"] != "ok"),
        "median_hausdorff": float(np.median(errs)) if errs else None,
        "max_hausdorff": float(np.max(errs)) if errs else None,
    }
    budgets = budget_table(config)
    return Report(config.to_dict(), config.config_hash(), records, trials, summary, budgets)


def budget_table(config, k=None):
    """Budgets actually used next to the theory-mode values (as decimal strings)."""
    if k is None:
        if config.generator is not None:
            k = config.generator["k0"]
        else:
            k = len(config.mixture["weights"])
    out = {"k": k, "practice": {key: config.budgets[key] for key in ("n", "m")}}
    if k >= 2:
        m_th, n_th = theory_budgets(k, config.constants)
        out["theory"] = {"m": str(m_th), "n": str(n_th)}
    return out


def emit_report(report, format, path):
    """Write ``report`` as canonical JSON or as ``trial,stage,metric,value`` CSV rows."""
    try:
        if format == "json":
            with open(path, "w") as fh:
                fh.write(json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False))
                fh.write("\n")
        elif format == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["trial", "stage", "metric", "value"])
                for rec in report.records:
                    for name in METRICS:
                        val = rec["metrics"].get(name)
                        w.writerow([rec["trial"], rec["stage"], name,
                                    "" if val is None else repr(val)])
        else:
            raise ConfigError(f"unknown format {format!r}", "format")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc


def read_report(path):
    with open(path) as fh:
        return Report.from_dict(json.load(fh))

"""Timing benchmark and seed-repeated accuracy comparison.

Bench spec JSON (``version`` 1)::

    {"version": 1,
     "data": {"synthetic": {"generator": "cavity", "params": {"n_space": 6000}}},
     "subspace": 0,                      # subspace whose points are sub-sampled
     "fractions": [0.1, 0.2, 0.4, 0.8, 1.0],
     "kinds": ["esgp", "egp"],
     "samples": {"esgp": 10, "egp": 2},  # MH proposals per timed block
     "repetitions": 1,
     "inducing": [{"resolution": [20, 30]}, {"training": true}],
     "kernel": {...}, "step": 0.01, "seed": 0}

Only the proposal loop is timed; the initial objective evaluation is not.
The reported slope is the least-squares fit of ``log(seconds per sample)``
against ``log(N)`` over the per-fraction medians.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .data import read_json
from .exceptions import ConfigError
from .mcmc import MHConfig, make_objective, mh_run
from .metrics import evaluate
from .pipeline import RunConfig, load_data, prepare, run

BENCH_FRACTIONS = (0.1, 0.2, 0.4, 0.8, 1.0)


@dataclass
class BenchSpec:
    data: dict
    subspace: int = 0
    fractions: tuple = BENCH_FRACTIONS
    kinds: tuple = ("esgp", "egp")
    samples: dict = None
    repetitions: int = 1
    inducing: list = None
    kernel: dict = None
    step: float = 0.01
    seed: int = 0
    sod_method: str = "random-permutation"
    base_dir: str = "."

    def __post_init__(self):
        self.fractions = tuple(float(f) for f in self.fractions)
        if len(self.fractions) < 2 or not all(0 < f <= 1 for f in self.fractions):
            raise ConfigError("bench needs at least two fractions in (0, 1]")
        if int(self.repetitions) < 1:
            raise ConfigError("repetitions must be >= 1")
        self.samples = {k: 5 for k in self.kinds} | dict(self.samples or {})

    @classmethod
    def load(cls, path, fractions=None):
        doc = read_json(path)
        if not isinstance(doc, dict) or doc.get("version", 1) != 1:
            raise ConfigError("bench spec must be a version 1 JSON object")
        doc = {k: v for k, v in doc.items() if k != "version"}
        if fractions is not None:
            doc["fractions"] = fractions
        try:
            return cls(**doc, base_dir=os.path.dirname(os.path.abspath(path)))
        except TypeError as exc:
            raise ConfigError(f"bad bench spec: {exc}") from exc

    def run_config(self, kind, fraction, n_subspaces):
        sod = [None] * n_subspaces
        sod[self.subspace] = {"fraction": fraction}
        return RunConfig(model=kind, seed=self.seed, data=self.data, kernel=self.kernel,
                         sod=sod, sod_method=self.sod_method,
                         inducing=self.inducing if kind == "esgp" else None,
                         base_dir=self.base_dir)


def loglog_slope(n, seconds):
    return float(np.polyfit(np.log(n), np.log(seconds), 1)[0])


def run_bench(spec, log=None):
    """Time fixed-size MH blocks per model kind and training fraction.

    Returns ``(rows, summary, slopes)``: raw timings, per-fraction medians and
    the fitted log-log slope per kind.
    """
    probe = RunConfig(model="egp", seed=spec.seed, data=spec.data, base_dir=spec.base_dir)
    dataset = load_data(probe)
    if not 0 <= spec.subspace < dataset.inputs.n_subspaces:
        raise ConfigError(f"bench subspace {spec.subspace} out of range")
    rows, summary, slopes = [], [], {}
    for kind in spec.kinds:
        ns, medians = [], []
        for frac in spec.fractions:
            prep = prepare(spec.run_config(kind, frac, dataset.inputs.n_subspaces), dataset)
            objective = make_objective(kind, prep.inputs, prep.y, prep.kernel, prep.inducing)
            k = int(spec.samples[kind])
            per = []
            for rep in range(int(spec.repetitions)):
                cfg = MHConfig(epochs=1, samples_per_epoch=k, step=spec.step, seed=spec.seed,
                               chain=rep, initial=prep.theta0)
                trace = mh_run(objective, cfg)
                per.append(trace.epoch_seconds[0] / k)
                rows.append({"kind": kind, "fraction": frac, "n": prep.inputs.N,
                             "repetition": rep, "samples": k,
                             "seconds": trace.epoch_seconds[0], "seconds_per_sample": per[-1]})
            ns.append(prep.inputs.N)
            medians.append(float(np.median(per)))
            summary.append({"kind": kind, "fraction": frac, "n": prep.inputs.N,
                            "median_seconds_per_sample": medians[-1]})
            if log:
                log(f"{kind} fraction={frac} N={prep.inputs.N} "
                    f"seconds/sample={medians[-1]:.4g}")
        slopes[kind] = loglog_slope(ns, medians)
    return rows, summary, slopes


def _write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def write_bench(out_dir, rows, summary, slopes):
    os.makedirs(out_dir, exist_ok=True)
    _write_rows(os.path.join(out_dir, "timing.csv"), rows)
    _write_rows(os.path.join(out_dir, "summary.csv"), summary)
    _write_rows(os.path.join(out_dir, "slopes.csv"),
                [{"kind": k, "slope": v} for k, v in slopes.items()])


# ------------------------------------------------------------------ compare


def config_label(config):
    if config.label:
        return str(config.label)
    return f"{config.model}"


def run_compare(configs, seeds, log=None):
    """Train and score every config under seeds ``0 .. seeds-1``.

    Every config needs held-out test data. Returns long-format rows sorted by
    config order then seed.
    """
    if len(configs) < 2:
        raise ConfigError("compare needs at least two configs")
    if int(seeds) < 1:
        raise ConfigError("seeds must be >= 1")
    rows = []
    cache = {}
    for ci, config in enumerate(configs):
        key = repr(sorted(config.data.items())) + config.base_dir
        if key not in cache:
            cache[key] = load_data(config)
        dataset = cache[key]
        if dataset.test_X is None:
            raise ConfigError(f"config {ci} has no test data")
        for seed in range(int(seeds)):
            result = run(config, seed=seed, dataset=dataset)
            mean, var = result.model.predict(dataset.test_X)
            report = evaluate(dataset.test_y, mean, var + result.model.hyp.noise_var)
            rows.append({"config": ci, "label": config_label(config), "model": config.model,
                         "seed": seed, "rmse": report.rmse, "msll": report.msll,
                         "objective": result.model.objective})
            if log:
                log(f"{config_label(config)} {config.model} seed={seed} "
                    f"rmse={report.rmse:.4g} msll={report.msll:.4g}")
    return rows


def summarize(rows):
    """Per-config min, quartiles and max of RMSE and MSLL."""
    out = []
    for ci in sorted({r["config"] for r in rows}):
        sel = [r for r in rows if r["config"] == ci]
        for metric in ("rmse", "msll"):
            v = np.array([r[metric] for r in sel])
            q = np.percentile(v, [0, 25, 50, 75, 100])
            out.append({"config": ci, "label": sel[0]["label"], "model": sel[0]["model"],
                        "metric": metric, "min": q[0], "q1": q[1], "median": q[2],
                        "q3": q[3], "max": q[4], "seeds": len(sel)})
    return out


def write_compare(out_dir, rows):
    os.makedirs(out_dir, exist_ok=True)
    _write_rows(os.path.join(out_dir, "compare.csv"), rows)
    _write_rows(os.path.join(out_dir, "compare_summary.csv"), summarize(rows))

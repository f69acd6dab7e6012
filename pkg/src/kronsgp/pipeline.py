"""Run configurations, end-to-end training and the model file format.

Run config JSON (``version`` 1); relative paths resolve against the config's
directory::

    {"version": 1,
     "model": "esgp",                       # or "egp"
     "seed": 0,
     "data": {"descriptor": "descriptor.json", "data": "data.csv",
              "test": "test.csv"},          # or {"synthetic": {...}}
     "kernel": {"version": 1, "factors": [...]},      # optional
     "initial": {"signal_std": 1.0, "leaf_params": [[0.1], [0.02], [1.0, 2.3]],
                 "noise_std": 0.05},        # optional, or {"log": [...]}
     "sod": [{"count": 33}, {"fraction": 0.5}, null],  # optional, per subspace
     "sod_method": "random-permutation",
     "inducing": [{"resolution": [33], "placement": "random"},
                  {"points": [[0.0], [1.0]]},
                  {"training": true}],      # esgp only, per subspace
     "mh": {"epochs": 2, "samples_per_epoch": 50, "step": 0.05},
     "label": "13x33"}

Model file JSON (``version`` 1) holds everything needed to rebuild the model
from the training data: model kind, kernel, log-hyperparameters, SoD indices,
inducing grid, objective value, seed and data paths. It carries no timings,
so identical configs produce identical files.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .data import (
    SyntheticFieldSpec,
    build_inducing,
    generate_synthetic,
    load_dataset,
    read_descriptor,
    read_json,
    read_table,
    select_sod,
)
from .esgp import InducingGrid, InducingSubspace
from .estimators import default_kernel, initial_hyperparameters
from .exceptions import ConfigError
from .kernels import Hyperparameters, ProductKernel, pack, unpack
from .mcmc import MHConfig, finalize, train

MODEL_KINDS = ("egp", "esgp")
SOD_STREAM = 1
INDUCING_STREAM = 101


@dataclass
class RunConfig:
    model: str
    seed: int
    data: dict
    kernel: dict = None
    initial: dict = None
    sod: list = None
    sod_method: str = "random-permutation"
    inducing: list = None
    mh: dict = field(default_factory=dict)
    label: str = None
    base_dir: str = "."

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ConfigError("an integer seed is required")
        if not isinstance(self.data, dict):
            raise ConfigError("'data' must be an object")
        if "synthetic" not in self.data:
            for key in ("descriptor", "data"):
                if key not in self.data:
                    raise ConfigError(f"data section needs {key!r} (or 'synthetic')")
                if not os.path.isfile(self.path(key)):
                    raise ConfigError(f"data file {self.path(key)} does not exist")
        if self.model == "egp" and self.inducing is not None:
            raise ConfigError("inducing points only apply to esgp")
        self.mh_config(self.seed)

    @classmethod
    def from_dict(cls, doc, base_dir="."):
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a JSON object")
        if doc.get("version", 1) != 1:
            raise ConfigError(f"unsupported config version {doc.get('version')!r}")
        known = {"version", "model", "seed", "data", "kernel", "initial", "sod", "sod_method",
                 "inducing", "mh", "label"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "model" not in doc or "seed" not in doc:
            raise ConfigError("config needs 'model' and 'seed'")
        args = {k: v for k, v in doc.items() if k != "version"}
        return cls(**args, base_dir=base_dir)

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path), os.path.dirname(os.path.abspath(path)))

    def path(self, key):
        return os.path.normpath(os.path.join(self.base_dir, self.data[key]))

    def mh_config(self, seed):
        try:
            return MHConfig(epochs=int(self.mh.get("epochs", 100)),
                            samples_per_epoch=int(self.mh.get("samples_per_epoch", 1000)),
                            step=self.mh.get("step", 0.05), seed=int(seed))
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"bad 'mh' section: {exc}") from exc

    def with_seed(self, seed):
        doc = {k: getattr(self, k) for k in ("model", "data", "kernel", "initial", "sod",
                                             "sod_method", "inducing", "mh", "label")}
        return RunConfig(seed=int(seed), base_dir=self.base_dir, **doc)


@dataclass
class Dataset:
    names: list
    inputs: object
    y: np.ndarray
    test_X: np.ndarray = None
    test_y: np.ndarray = None


def load_data(config):
    """Training data (and held-out test data, if configured)."""
    if "synthetic" in config.data:
        ds = generate_synthetic(SyntheticFieldSpec.from_dict(config.data["synthetic"]))
        return Dataset(ds.descriptor.dim_names, ds.inputs, ds.y, ds.test_inputs.expand(),
                       ds.test_truth)
    desc = read_descriptor(config.path("descriptor"))
    inputs, y = load_dataset(config.path("descriptor"), config.path("data"))
    out = Dataset(desc.dim_names, inputs, y)
    if "test" in config.data:
        _, table = read_table(config.path("test"), desc.dim_names + [desc.observation])
        out.test_X, out.test_y = table[:, :-1], table[:, -1]
    return out


def _per_subspace(entries, n, what):
    if entries is None:
        return [None] * n
    if not isinstance(entries, list) or len(entries) != n:
        raise ConfigError(f"'{what}' needs one entry per subspace ({n})")
    return entries


def sod_indices(config, inputs, seed):
    out = []
    for i, (entry, pts) in enumerate(zip(_per_subspace(config.sod, inputs.n_subspaces, "sod"),
                                         inputs.subspaces)):
        n = pts.shape[0]
        if entry is None:
            out.append(None)
            continue
        if "count" in entry:
            count = int(entry["count"])
        elif "fraction" in entry:
            frac = float(entry["fraction"])
            if not 0 < frac <= 1:
                raise ConfigError(f"SoD fraction {frac} outside (0, 1]")
            count = max(1, int(round(frac * n)))
        else:
            raise ConfigError(f"SoD entry needs 'count' or 'fraction': {entry!r}")
        idx = select_sod(pts, count, entry.get("method", config.sod_method), seed,
                         SOD_STREAM + i)
        out.append(None if count == n else idx)
    return out


def inducing_grid(config, inputs, seed):
    if config.model != "esgp":
        return None
    grid = []
    entries = _per_subspace(config.inducing, inputs.n_subspaces, "inducing")
    for i, (entry, pts) in enumerate(zip(entries, inputs.subspaces)):
        if entry is None or entry.get("training"):
            grid.append(InducingSubspace(points=pts))
        elif "resolution" in entry:
            bounds = entry.get("bounds") or np.column_stack([pts.min(0), pts.max(0)]).tolist()
            grid.append(build_inducing(entry["resolution"], bounds,
                                       entry.get("placement", "uniform"), seed,
                                       INDUCING_STREAM + i))
        else:
            grid.append(InducingSubspace.from_dict(entry))
    return InducingGrid(grid)


def kernel_of(config, inputs):
    if config.kernel is None:
        return default_kernel(inputs.columns)
    return ProductKernel.from_dict(config.kernel)


def initial_theta(config, kernel, inputs, y):
    init = config.initial
    if init is None:
        return pack(initial_hyperparameters(kernel, inputs.expand(), y))
    try:
        if "log" in init:
            theta = np.asarray(init["log"], dtype=float)
            unpack(theta, kernel)
            return theta
        return pack(Hyperparameters(float(init["signal_std"]),
                                    tuple(tuple(p) for p in init["leaf_params"]),
                                    float(init["noise_std"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'initial' section: {exc}") from exc


@dataclass
class Prepared:
    kernel: ProductKernel
    inputs: object
    y: np.ndarray
    sod: list
    inducing: InducingGrid
    theta0: np.ndarray


def prepare(config, dataset, seed=None):
    """Apply SoD selection and build the inducing grid for one seed."""
    seed = config.seed if seed is None else seed
    kernel = kernel_of(config, dataset.inputs)
    if kernel.input_dim != dataset.inputs.dim:
        raise ConfigError(f"kernel covers {kernel.input_dim} inputs, data has {dataset.inputs.dim}")
    kernel.check_factorizes(dataset.inputs.columns)
    sod = sod_indices(config, dataset.inputs, seed)
    inputs = dataset.inputs.subset(sod)
    y = dataset.inputs.subset_values(dataset.y, sod)
    inducing = inducing_grid(config, inputs, seed)
    return Prepared(kernel, inputs, y, sod, inducing, initial_theta(config, kernel, inputs, y))


@dataclass
class RunResult:
    config: RunConfig
    dataset: Dataset
    prepared: Prepared
    model: object
    trace: object
    seed: int

    def document(self):
        return model_document(self.config, self.prepared, self.model, self.seed)


def run(config, seed=None, dataset=None, callback=None):
    """Train one model end to end."""
    seed = config.seed if seed is None else int(seed)
    dataset = load_data(config) if dataset is None else dataset
    prep = prepare(config, dataset, seed)
    mh = config.mh_config(seed)
    mh.initial = prep.theta0
    model, trace = train(prep.inputs, prep.y, config.model, prep.kernel, mh, prep.inducing,
                         callback)
    return RunResult(config, dataset, prep, model, trace, seed)


def _data_section(config):
    if "synthetic" in config.data:
        return {"synthetic": config.data["synthetic"]}
    return {k: config.path(k) for k in ("descriptor", "data")}


def model_document(config, prep, model, seed):
    return {
        "version": 1,
        "tool": f"kronsgp {__version__}",
        "model": config.model,
        "seed": int(seed),
        "data": _data_section(config),
        "kernel": prep.kernel.to_dict(),
        "slot_names": list(prep.kernel.slot_names),
        "log_hyperparameters": [float(v) for v in model.theta],
        "sod": [None if s is None else [int(i) for i in s] for s in prep.sod],
        "inducing": None if prep.inducing is None else prep.inducing.to_dict(),
        "objective": float(model.objective),
    }


def dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_model(path, doc):
    with open(path, "w") as fh:
        fh.write(dumps(doc))


@dataclass
class LoadedModel:
    doc: dict
    names: list
    model: object


def load_model(path):
    """Rebuild a trained model from its file and the referenced training data."""
    doc = read_json(path)
    try:
        if doc.get("version") != 1:
            raise ConfigError(f"unsupported model file version {doc.get('version')!r}")
        kind = doc["model"]
        kernel = ProductKernel.from_dict(doc["kernel"])
        theta = np.asarray(doc["log_hyperparameters"], dtype=float)
        data = doc["data"]
        if "synthetic" in data:
            ds = generate_synthetic(SyntheticFieldSpec.from_dict(data["synthetic"]))
            names, inputs, y = ds.descriptor.dim_names, ds.inputs, ds.y
        else:
            names = read_descriptor(data["descriptor"]).dim_names
            inputs, y = load_dataset(data["descriptor"], data["data"])
        sod = doc["sod"]
        inducing = None if doc["inducing"] is None else InducingGrid.from_dict(doc["inducing"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"malformed model file {path}: {exc}") from exc
    if len(sod) != inputs.n_subspaces:
        raise ConfigError("model file SoD list does not match the data's subspaces")
    sub = inputs.subset(sod)
    model = finalize(kind, sub, inputs.subset_values(y, sod), kernel, theta, inducing)
    return LoadedModel(doc, names, model)

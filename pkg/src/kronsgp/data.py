"""Dataset descriptors, long-format CSV I/O, subset and inducing-point builders,
and synthetic stand-ins for flow-field data.

Descriptor JSON (``version`` 1)::

    {"version": 1,
     "subspaces": [{"name": "space", "dims": ["x", "y"], "structured": false},
                   {"name": "lid", "dims": ["u_wall"], "structured": true}],
     "observation": "u",
     "ordering": "..."}

Optional ``"size"`` entries per subspace are checked against the data. The
data CSV has a mandatory header naming every dimension and the observation
column (any column order), one row per composite point, values written with
17 significant digits.
"""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .exceptions import ConfigError
from .esgp import InducingSubspace
from .inputs import ProductInputs, decompose
from .mcmc import make_rng

ORDERING = ("composite points are ordered with subspace 1 slowest; distinct coordinate "
            "tuples of each subspace are sorted lexicographically")


@dataclass
class DatasetDescriptor:
    subspaces: list
    observation: str = "y"
    ordering: str = ORDERING

    def __post_init__(self):
        names = [d for s in self.subspaces for d in s["dims"]]
        if not self.subspaces or not names:
            raise ConfigError("descriptor needs at least one subspace with dimensions")
        if len(set(names)) != len(names):
            raise ConfigError(f"dimension names must be unique: {names}")
        if self.observation in names:
            raise ConfigError("observation column clashes with a dimension name")

    @property
    def dim_names(self):
        return [d for s in self.subspaces for d in s["dims"]]

    @property
    def columns(self):
        cols, start = [], 0
        for s in self.subspaces:
            cols.append(tuple(range(start, start + len(s["dims"]))))
            start += len(s["dims"])
        return cols

    def to_dict(self):
        return {"version": 1, "subspaces": self.subspaces, "observation": self.observation,
                "ordering": self.ordering}

    @classmethod
    def from_dict(cls, doc):
        try:
            subs = [
                {"name": str(s.get("name", f"subspace{i}")),
                 "dims": [str(d) for d in s["dims"]],
                 "structured": bool(s.get("structured", True)),
                 **({"size": int(s["size"])} if "size" in s else {})}
                for i, s in enumerate(doc["subspaces"])
            ]
            return cls(subs, str(doc.get("observation", "y")), str(doc.get("ordering", ORDERING)))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed dataset descriptor: {exc}") from exc


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_descriptor(path):
    return DatasetDescriptor.from_dict(read_json(path))


def read_table(path, columns=None):
    """Read a headed numeric CSV into ``(header, array)``.

    With ``columns`` given, returns only those columns in that order.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [r for r in reader if r]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except StopIteration:
        raise ConfigError(f"{path} is empty; a header row is mandatory") from None
    data = np.empty((len(rows), len(header)))
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ConfigError(f"{path} line {i + 2}: expected {len(header)} fields, got {len(r)}")
        try:
            data[i] = [float(v) for v in r]
        except ValueError as exc:
            raise ConfigError(f"{path} line {i + 2}: {exc}") from exc
    if columns is None:
        return header, data
    missing = [c for c in columns if c not in header]
    if missing:
        raise ConfigError(f"{path} lacks columns {missing}; header is {header}")
    idx = [header.index(c) for c in columns]
    return list(columns), data[:, idx]


def write_table(path, header, data):
    data = np.asarray(data, dtype=float)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_dataset(descriptor_path, data_path):
    """Load a long-format dataset and recover its product structure.

    Returns
    -------
    inputs : ProductInputs
    y : ndarray
        Observations in the global ordering.
    """
    desc = read_descriptor(descriptor_path)
    _, table = read_table(data_path, desc.dim_names + [desc.observation])
    d = len(desc.dim_names)
    # line numbers for provenance (header is line 1)
    inputs, y, _ = decompose(table[:, :d], table[:, d], desc.columns,
                             row_labels=np.arange(table.shape[0]) + 2)
    for s, n in zip(desc.subspaces, inputs.sizes):
        if "size" in s and s["size"] != n:
            raise ConfigError(f"subspace {s['name']!r} declares {s['size']} points, found {n}")
    return inputs, y


def write_dataset(descriptor, inputs, y, descriptor_path, data_path):
    write_json(descriptor_path, descriptor.to_dict())
    X = inputs.expand()
    write_table(data_path, descriptor.dim_names + [descriptor.observation],
                np.column_stack([X, np.asarray(y, dtype=float)]))


# ---------------------------------------------------------------- selection


def lhs_sample(count, lower, upper, rng):
    """Continuous Latin hypercube sample of ``count`` points in a box."""
    lower, upper = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
    unit = qmc.LatinHypercube(d=lower.size, seed=rng).random(count)
    return lower + unit * (upper - lower)


def lhs_design(points, count, seed=0, stream=0):
    """The continuous LHS sample that ``latin-hypercube-nearest`` snaps to data."""
    points = _cloud(points)
    return lhs_sample(count, points.min(axis=0), points.max(axis=0), make_rng(seed, stream))


def _cloud(points):
    points = np.asarray(points, dtype=float)
    return points[:, None] if points.ndim == 1 else points


def select_sod(points, count, method="random-permutation", seed=0, stream=0):
    """Pick ``count`` of the rows of ``points``; returns sorted indices.

    ``random-permutation`` draws a uniform subset without replacement.
    ``latin-hypercube-nearest`` snaps each sample of :func:`lhs_design`, in
    order, to its nearest not-yet-claimed data point. ``stream`` selects an
    independent random stream for the same seed.
    """
    points = _cloud(points)
    n = points.shape[0]
    count = int(count)
    if not 1 <= count <= n:
        raise ConfigError(f"subset size {count} outside [1, {n}]")
    if method not in ("random-permutation", "randperm", "latin-hypercube-nearest", "lhs"):
        raise ConfigError(f"unknown subset method {method!r}")
    if count == n:
        return np.arange(n)
    if method in ("random-permutation", "randperm"):
        return np.sort(make_rng(seed, stream).permutation(n)[:count])
    tree = cKDTree(points)
    claimed = np.zeros(n, dtype=bool)
    chosen = []
    for s in lhs_design(points, count, seed, stream):
        k = 1
        while True:
            _, idx = tree.query(s, k=min(k, n))
            idx = np.atleast_1d(idx)
            free = idx[~claimed[idx]]
            if free.size:
                chosen.append(free[0])
                claimed[free[0]] = True
                break
            k *= 2
    return np.sort(np.asarray(chosen, dtype=int))


def build_inducing(resolution, bounds, placement="uniform", seed=0, stream=0):
    """Inner-grid inducing subspace with ``resolution[j]`` knots on axis ``j``.

    ``uniform`` spaces knots linearly over ``bounds[j]``; ``random`` draws them
    uniformly; ``lhs`` draws one knot per equal-width bin. Knots are sorted.
    """
    resolution = [int(r) for r in np.atleast_1d(resolution)]
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if len(resolution) != bounds.shape[0]:
        raise ConfigError(f"{len(resolution)} resolutions for {bounds.shape[0]} bounds")
    if any(r < 1 for r in resolution):
        raise ConfigError("resolutions must be >= 1")
    if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 0] >= bounds[:, 1]):
        raise ConfigError(f"degenerate inducing bounds {bounds.tolist()}")
    rng = make_rng(seed, stream)
    axes = []
    for r, (lo, hi) in zip(resolution, bounds):
        if placement == "uniform":
            knots = np.linspace(lo, hi, r) if r > 1 else np.array([0.5 * (lo + hi)])
        elif placement == "random":
            knots = np.sort(rng.uniform(lo, hi, r))
        elif placement == "lhs":
            knots = np.sort(lo + (rng.permutation(r) + rng.random(r)) / r * (hi - lo))
        else:
            raise ConfigError(f"unknown inducing placement {placement!r}")
        axes.append(knots)
    return InducingSubspace(axes=axes)


# ---------------------------------------------------------------- synthetic


def wake_field(x, y, t, amplitude=1.0, decay=0.001, wavelength=0.1, speed=0.043):
    """Travelling wave ``A exp(-y^2/decay) sin(2 pi (x - speed t) / wavelength)``."""
    return amplitude * np.exp(-y ** 2 / decay) * np.sin(2 * np.pi * (x - speed * t) / wavelength)


def cavity_profile(x, y):
    """Recirculation shape ``16 x^2 (1-x)^2 (3 y^2 - 2 y)`` on the unit square.

    Equals ``16 x^2 (1-x)^2`` along the lid ``y = 1`` and reverses direction
    below ``y = 2/3``.
    """
    return 16.0 * x ** 2 * (1 - x) ** 2 * (3 * y ** 2 - 2 * y)


CAVITY_TRAINING_SPEEDS = (0.02, 0.04, 0.08, 0.2, 0.64, 1.0, 1.5)
CAVITY_TEST_SPEEDS = (0.7, 0.9)

WAKE_DEFAULTS = {
    "nx": 60, "ny": 25, "nt": 40, "dt": 0.1,
    "x_range": [0.0, 0.4], "y_range": [-0.06, 0.06],
    "amplitude": 1.0, "decay": 0.001, "wavelength": 0.1, "speed": 0.043,
    "x_stretch": 1.0, "test_nt": 10,
}
CAVITY_DEFAULTS = {
    "n_space": 1000, "speeds": list(CAVITY_TRAINING_SPEEDS),
    "test_speeds": list(CAVITY_TEST_SPEEDS), "n_test_space": 500,
}


@dataclass
class SyntheticFieldSpec:
    """Closed-form synthetic dataset.

    ``generator`` is ``"wake"`` (structured x, y, t grid; travelling wave, see
    :func:`wake_field`) or ``"cavity"`` (unstructured spatial cloud times lid
    speeds; ``u = u_wall * cavity_profile(x, y)``).
    """

    generator: str
    params: dict = field(default_factory=dict)
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.generator not in ("wake", "cavity"):
            raise ConfigError(f"unknown generator {self.generator!r}")
        defaults = WAKE_DEFAULTS if self.generator == "wake" else CAVITY_DEFAULTS
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown {self.generator} parameters {sorted(unknown)}")
        if not np.isfinite(self.noise_std) or self.noise_std < 0:
            raise ConfigError("noise_std must be finite and >= 0")
        make_rng(self.seed)

    @property
    def resolved(self):
        defaults = WAKE_DEFAULTS if self.generator == "wake" else CAVITY_DEFAULTS
        return {**defaults, **self.params}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(doc["generator"], dict(doc.get("params", {})),
                       float(doc.get("noise_std", 0.0)), int(doc.get("seed", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed synthetic spec: {exc}") from exc

    def to_dict(self):
        return {"generator": self.generator, "params": self.params,
                "noise_std": self.noise_std, "seed": self.seed}


@dataclass
class SyntheticDataset:
    descriptor: DatasetDescriptor
    inputs: ProductInputs
    y: np.ndarray
    truth: np.ndarray
    test_inputs: ProductInputs
    test_truth: np.ndarray


def _wake(p, rng):
    lo, hi = p["x_range"]
    s = np.linspace(0.0, 1.0, int(p["nx"])) ** float(p["x_stretch"])
    x = lo + (hi - lo) * s
    y = np.linspace(*p["y_range"], int(p["ny"]))
    t = np.arange(int(p["nt"])) * float(p["dt"])
    t_test = (int(p["nt"]) + np.arange(int(p["test_nt"]))) * float(p["dt"])
    desc = DatasetDescriptor(
        [{"name": "x", "dims": ["x"], "structured": True},
         {"name": "y", "dims": ["y"], "structured": True},
         {"name": "t", "dims": ["t"], "structured": True}],
        observation="u")
    kw = {k: float(p[k]) for k in ("amplitude", "decay", "wavelength", "speed")}
    train = ProductInputs([x, y, t])
    test = ProductInputs([x, y, t_test])
    f = lambda inp: wake_field(*inp.expand().T, **kw)  # noqa: E731
    return desc, train, f(train), test, f(test)


def _cavity(p, rng):
    space = rng.uniform(0.0, 1.0, (int(p["n_space"]), 2))
    test_space = rng.uniform(0.0, 1.0, (int(p["n_test_space"]), 2))
    desc = DatasetDescriptor(
        [{"name": "space", "dims": ["x", "y"], "structured": False},
         {"name": "lid", "dims": ["u_wall"], "structured": True}],
        observation="u")
    # sort rows so written files already follow the canonical ordering
    space = space[np.lexsort(space.T[::-1])]
    test_space = test_space[np.lexsort(test_space.T[::-1])]
    train = ProductInputs([space, np.sort(np.asarray(p["speeds"], dtype=float))])
    test = ProductInputs([test_space, np.sort(np.asarray(p["test_speeds"], dtype=float))])

    def f(inp):
        X = inp.expand()
        return X[:, 2] * cavity_profile(X[:, 0], X[:, 1])

    return desc, train, f(train), test, f(test)


def generate_synthetic(spec):
    """Build a :class:`SyntheticDataset`; deterministic for a given spec."""
    rng = make_rng(spec.seed)
    build = _wake if spec.generator == "wake" else _cavity
    desc, train, truth, test, test_truth = build(spec.resolved, rng)
    noise = rng.standard_normal(truth.size) * spec.noise_std if spec.noise_std > 0 else 0.0
    return SyntheticDataset(desc, train, truth + noise, truth, test, test_truth)


def write_synthetic(spec, out_dir):
    """Write descriptor, noisy data, noise-free truth and held-out test files.

    Returns a dict of written paths and row counts.
    """
    ds = generate_synthetic(spec)
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, f) for k, f in [
        ("descriptor", "descriptor.json"), ("data", "data.csv"),
        ("truth", "truth.csv"), ("test", "test.csv"), ("spec", "synthetic.json")]}
    write_dataset(ds.descriptor, ds.inputs, ds.y, paths["descriptor"], paths["data"])
    header = ds.descriptor.dim_names + [ds.descriptor.observation]
    write_table(paths["truth"], header, np.column_stack([ds.inputs.expand(), ds.truth]))
    write_table(paths["test"], header, np.column_stack([ds.test_inputs.expand(), ds.test_truth]))
    write_json(paths["spec"], spec.to_dict())
    return {"paths": paths, "rows": ds.inputs.N, "test_rows": ds.test_inputs.N}

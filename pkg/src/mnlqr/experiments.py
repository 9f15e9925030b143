"""Experiment configurations, reference systems and Monte-Carlo sweeps.

Each (N, repeat) cell draws from its own stream
``SeedSequence(seed, spawn_key=(N_index, repeat))`` of numpy's PCG64, so
results do not depend on the number of workers or on scheduling order.
"""
import copy
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, Diverged, EmptyInput, MnlqrError, NotConverged
from .identify import (operator_relative_error,
                       second_moment_ambiguity, structured_ambiguity,
                       structured_moment, trivial_ambiguity)
from .model import ModeTensor, model_free_basis, translation_matrix
from .simulate import (UniformBall, WithUnitFirst, gen_repeated_init,
                       gen_rollout, gen_single_trajectory)
from .synthesis import (LqrSpec, dr_synthesize, relative_suboptimality,
                        riccati_fixed_point, structured_ce_synthesize)

METRICS = ("w_err", "op_rel_err", "beta_w", "rel_subopt", "mu_err", "beta_mu", "feasible")
SWEEP_VERSION = "mnlqr-sweep v1"
SWEEP_HEADER = (
    f"# {SWEEP_VERSION}; columns experiment_id,N,repeat_index,metric_name,value; "
    "bands are the 0.45/0.55 quantiles (linear interpolation) around the median; "
    "infeasible repeats have feasible=0, no rel_subopt row, and are excluded from quantiles; "
    "the '<id>/trivial' row uses the prior-only set W_bar = r_w^2 I")


# reference systems

def toy_truth():
    """Toy system with three modes and a ball disturbance shifted along the third mode."""
    A = [np.array([[1.0, 0.0], [0.0, 0.0]]),
         np.array([[0.0, 1.0], [0.0, 0.0]]),
         np.array([[0.0, 0.0], [0.0, 1.0]])]
    B = [np.zeros((2, 1)), np.zeros((2, 1)), np.array([[0.0], [1.0]])]
    return ModeTensor.from_modes(A, B)


def structured_truth():
    """Structured example with a deterministic slice and three random modes."""
    A = [np.array([[1.0, 0.02], [0.0, 0.992]]),
         np.array([[0.0, 0.0], [0.0, -0.03]]),
         np.array([[0.0, -0.03], [0.0, 0.0]]),
         np.zeros((2, 2))]
    B = [np.array([[0.0], [0.02]]), np.zeros((2, 1)), np.zeros((2, 1)),
         np.array([[0.0], [0.01]])]
    return ModeTensor.from_modes(A, B, structured=True)


def default_lqr(nx, nu, r=10.0):
    return {"Q": np.eye(nx).tolist(), "R": (r * np.eye(nu)).tolist(), "X0": np.eye(nx).tolist()}


def example_config(name):
    """Built-in configurations: toy, toy-model-free, toy-rollout, toy-single, structured."""
    if name.startswith("toy"):
        V = toy_truth()
        cfg = {
            "experiment_id": name,
            "system": {"truth": V.to_json(), "model": "true",
                       "disturbance": {"kind": "uniform_ball", "center": [0.0, 0.0, 0.1],
                                       "radius": 0.25}},
            "sweep": [int(np.floor(v + 1e-9)) for v in np.logspace(1, 4, 10)],
            "repeats": 100,
            "delta": 0.05,
            "lqr": default_lqr(2, 1),
            "generation": {"method": "repeated_init"},
            "seed": 0,
        }
        if name == "toy-model-free":
            cfg["system"]["model"] = "model_free"
        elif name == "toy-rollout":
            cfg["generation"] = {"method": "rollout", "x0": [1.0, 1.0], "K": [[-0.5, -0.2]],
                                 "delta_radius": 35.0, "T": 25}
        elif name == "toy-single":
            cfg["generation"] = {"method": "single_trajectory", "x0": [1.0, 1.0],
                                 "K": [[-0.5, -0.2]], "delta_radius": 35.0}
        elif name != "toy":
            raise ConfigInvalid("name", f"unknown example {name!r}")
        return cfg
    if name == "structured":
        return {
            "experiment_id": name,
            "system": {"truth": structured_truth().to_json(), "model": "true",
                       "disturbance": {"kind": "uniform_ball", "center": [0.0, 0.0, 0.0],
                                       "radius": 0.05}},
            "sweep": [int(np.floor(v + 1e-9)) for v in np.logspace(1, 4, 10)],
            "repeats": 100,
            "delta": 0.05,
            "lqr": default_lqr(2, 1, r=1.0),
            "generation": {"method": "repeated_init"},
            "seed": 0,
        }
    raise ConfigInvalid("name", f"unknown example {name!r}")


# configuration

_TOP = {"experiment_id", "system", "sweep", "repeats", "delta", "lqr", "generation",
        "seed", "output_path", "beta_scale"}
_SYSTEM = {"truth", "model", "disturbance"}
_DIST = {"kind", "center", "radius"}
_GEN = {"repeated_init": {"method"},
        "rollout": {"method", "x0", "K", "delta_radius", "T"},
        "single_trajectory": {"method", "x0", "K", "delta_radius"}}


def _keys(obj, allowed, path, required=()):
    if not isinstance(obj, dict):
        raise ConfigInvalid(path, "expected an object")
    extra = set(obj) - set(allowed)
    if extra:
        raise ConfigInvalid(f"{path}.{sorted(extra)[0]}" if path else sorted(extra)[0],
                            "unknown key")
    for k in required:
        if k not in obj:
            raise ConfigInvalid(f"{path}.{k}" if path else k, "missing")


def _array(value, path, shape=None):
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigInvalid(path, "not a numeric array") from None
    if shape is not None and a.shape != shape:
        raise ConfigInvalid(path, f"expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigInvalid(path, "non-finite entries")
    return a


@dataclass(eq=False)
class Experiment:
    """Validated experiment configuration with derived quantities."""

    experiment_id: str
    truth: ModeTensor
    model: ModeTensor
    disturbance: object
    sweep: list
    repeats: int
    delta: float
    lqr: LqrSpec
    generation: dict
    seed: int
    output_path: str = None
    beta_scale: float = 1.0
    raw: dict = field(default=None, repr=False)

    @property
    def translation(self):
        return translation_matrix(self.model, self.truth)

    @property
    def w_true(self):
        """True second moment in the model basis (random part for structured models)."""
        T = self.translation
        W = T @ self.disturbance.second_moment() @ T.T
        W = 0.5 * (W + W.T)
        return W[1:, 1:] if self.model.structured else W

    @property
    def w_full_true(self):
        T = self.translation
        W = T @ self.disturbance.second_moment() @ T.T
        return 0.5 * (W + W.T)

    @property
    def mu_true(self):
        return (self.translation @ self.disturbance.mean)[1:]

    @property
    def r_w(self):
        """Norm bound of the (random part of the) disturbance in the model basis."""
        T = self.translation
        if self.model.structured:
            return float(np.linalg.norm(T[1:, 1:], 2) * self.disturbance.inner.norm_bound)
        return float(np.linalg.norm(T, 2) * self.disturbance.norm_bound)


def parse_config(cfg):
    """Validate a JSON-like config dict; raises `ConfigInvalid` with the field path."""
    _keys(cfg, _TOP, "", required=("system", "sweep", "repeats", "delta", "lqr"))
    _keys(cfg["system"], _SYSTEM, "system", required=("truth", "disturbance"))
    sysc = cfg["system"]
    try:
        truth = ModeTensor.from_json(sysc["truth"])
    except (MnlqrError, ValueError, TypeError, KeyError) as exc:
        raise ConfigInvalid("system.truth", str(exc)) from None
    model_spec = sysc.get("model", "true")
    if model_spec == "true":
        model = truth
    elif model_spec == "model_free":
        if truth.structured:
            raise ConfigInvalid("system.model", "model-free basis needs an unstructured truth")
        model = model_free_basis(truth.nx, truth.nu)
    else:
        try:
            model = ModeTensor.from_json(model_spec)
        except (MnlqrError, ValueError, TypeError, KeyError) as exc:
            raise ConfigInvalid("system.model", str(exc)) from None
    d = sysc["disturbance"]
    _keys(d, _DIST, "system.disturbance", required=("kind", "center", "radius"))
    if d["kind"] != "uniform_ball":
        raise ConfigInvalid("system.disturbance.kind", "only 'uniform_ball' is supported")
    center = _array(d["center"], "system.disturbance.center")
    radius = float(d["radius"])
    if radius < 0:
        raise ConfigInvalid("system.disturbance.radius", "must be nonnegative")
    dist = UniformBall(center, radius)
    if truth.structured:
        dist = WithUnitFirst(dist)
    if dist.dim != truth.nw:
        raise ConfigInvalid("system.disturbance.center",
                            f"dimension {dist.dim} does not match the truth (nw={truth.nw})")
    try:
        translation_matrix(model, truth)
    except MnlqrError as exc:
        raise ConfigInvalid("system.model", str(exc)) from None

    sweep = cfg["sweep"]
    if (not isinstance(sweep, list) or not sweep
            or not all(isinstance(n, int) and n > 0 for n in sweep)
            or sorted(set(sweep)) != sweep):
        raise ConfigInvalid("sweep", "must be a nonempty ascending list of positive integers")
    repeats = cfg["repeats"]
    if not isinstance(repeats, int) or repeats < 1:
        raise ConfigInvalid("repeats", "must be a positive integer")
    delta = cfg["delta"]
    if not isinstance(delta, (int, float)) or not 0 < delta < 1:
        raise ConfigInvalid("delta", "must lie in (0, 1)")
    _keys(cfg["lqr"], {"Q", "R", "X0"}, "lqr", required=("Q", "R", "X0"))
    try:
        lqr = LqrSpec(_array(cfg["lqr"]["Q"], "lqr.Q", (truth.nx, truth.nx)),
                      _array(cfg["lqr"]["R"], "lqr.R", (truth.nu, truth.nu)),
                      _array(cfg["lqr"]["X0"], "lqr.X0", (truth.nx, truth.nx)))
    except ConfigInvalid:
        raise
    except MnlqrError as exc:
        raise ConfigInvalid("lqr", str(exc)) from None
    gen = cfg.get("generation", {"method": "repeated_init"})
    if not isinstance(gen, dict) or gen.get("method") not in _GEN:
        raise ConfigInvalid("generation.method", f"must be one of {sorted(_GEN)}")
    _keys(gen, _GEN[gen["method"]], "generation", required=tuple(_GEN[gen["method"]]))
    if gen["method"] != "repeated_init":
        _array(gen["x0"], "generation.x0", (truth.nx,))
        _array(gen["K"], "generation.K", (truth.nu, truth.nx))
        if float(gen["delta_radius"]) < 0:
            raise ConfigInvalid("generation.delta_radius", "must be nonnegative")
    if gen["method"] == "rollout" and (not isinstance(gen["T"], int) or gen["T"] < 2):
        raise ConfigInvalid("generation.T", "must be an integer >= 2")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigInvalid("seed", "must be a nonnegative integer")
    beta_scale = cfg.get("beta_scale", 1.0)
    if not isinstance(beta_scale, (int, float)) or beta_scale < 0:
        raise ConfigInvalid("beta_scale", "must be nonnegative")
    return Experiment(str(cfg.get("experiment_id", "experiment")), truth, model, dist,
                      list(sweep), repeats, float(delta), lqr, dict(gen), seed,
                      cfg.get("output_path"), float(beta_scale), copy.deepcopy(cfg))


def load_config(path):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as exc:
        raise ConfigInvalid("<file>", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("<file>", f"invalid JSON: {exc}") from None
    return parse_config(cfg)


# single repeats

def cell_rng(seed, n_index, repeat):
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(n_index, repeat))))


def generate(exp, N, rng):
    """Dataset of N transitions from the true system, expressed for the model."""
    g = exp.generation
    r_w = exp.r_w
    if g["method"] == "repeated_init":
        return gen_repeated_init(exp.truth, exp.disturbance, None, N, rng, r_w=r_w)
    if g["method"] == "rollout":
        return gen_rollout(exp.truth, exp.disturbance, g["x0"], g["K"], float(g["delta_radius"]),
                           g["T"], N, rng, r_w=r_w)
    return gen_single_trajectory(exp.truth, exp.disturbance, g["x0"], g["K"],
                                 float(g["delta_radius"]), N, rng, r_w=r_w)


def identify_cell(exp, N, rng):
    """Metrics of one identification repeat as ``{metric: value}``."""
    data = generate(exp, N, rng)
    M = exp.model
    out = {}
    if M.structured:
        amb = structured_ambiguity(M, data, exp.delta)
        s = amb.structured
        out["mu_err"] = float(np.linalg.norm(s.mu_hat - exp.mu_true))
        out["beta_mu"] = s.beta_mu
        W_full = structured_moment(s.mu_hat, s.sigma_hat)
        out["op_rel_err"] = operator_relative_error(M, W_full, exp.w_full_true)
    else:
        amb = second_moment_ambiguity(M, data, exp.delta)
        out["op_rel_err"] = operator_relative_error(M, amb.w_hat, exp.w_true)
    out["w_err"] = float(np.linalg.norm(amb.w_hat - exp.w_true, 2))
    out["beta_w"] = amb.beta_w
    return out


def synthesize_cell(exp, N, rng, optimal=None):
    """Metrics of one identification + synthesis repeat."""
    data = generate(exp, N, rng)
    M = exp.model
    W_true = exp.w_full_true
    out = {}
    try:
        if M.structured:
            amb = structured_ambiguity(M, data, exp.delta)
            res = structured_ce_synthesize(M, amb, exp.lqr)
        else:
            amb = second_moment_ambiguity(M, data, exp.delta)
            if exp.beta_scale != 1.0:
                amb = type(amb)(amb.w_hat, amb.beta_w * exp.beta_scale, amb.delta,
                                amb.certified)
            res = dr_synthesize(M, amb, exp.lqr)
        out["beta_w"] = amb.beta_w
    except (Diverged, NotConverged):
        out["feasible"] = 0.0
        return out
    out["feasible"] = 1.0
    out["rel_subopt"] = relative_suboptimality(M, W_true, res.K, exp.lqr, optimal)
    return out


def trivial_subopt(exp, optimal=None):
    """Relative suboptimality of the controller for the prior-only set ``r_w^2 I``."""
    M = exp.model
    if M.structured:
        raise ConfigInvalid("system.model", "trivial ambiguity needs an unstructured model")
    res = dr_synthesize(M, trivial_ambiguity(M.nw, exp.r_w), exp.lqr)
    return relative_suboptimality(M, exp.w_full_true, res.K, exp.lqr, optimal)


# sweeps

@dataclass(frozen=True, order=True)
class SweepRecord:
    experiment_id: str
    N: int
    repeat_index: int
    metric_name: str
    value: float

    def __post_init__(self):
        if self.metric_name not in METRICS:
            raise ValueError(f"unknown metric {self.metric_name!r}")


def _cell(args):
    kind, exp, i, N, rep = args
    rng = cell_rng(exp.seed, i, rep)
    if kind == "identify":
        vals = identify_cell(exp, N, rng)
    else:
        vals = synthesize_cell(exp, N, rng, _optimal(exp))
    return [SweepRecord(exp.experiment_id, N, rep, k, float(v)) for k, v in vals.items()]


_OPT_CACHE = []


def _optimal(exp):
    # holding the experiment keeps its identity valid for the cache lookup
    if not _OPT_CACHE or _OPT_CACHE[0] is not exp:
        _OPT_CACHE[:] = [exp, riccati_fixed_point(exp.model, exp.w_full_true, exp.lqr)]
    return _OPT_CACHE[1]


def run_sweep(exp, kind="identify", threads=1):
    """Run every (N, repeat) cell; returns records sorted by (N, repeat, metric)."""
    if kind not in ("identify", "synthesize"):
        raise ValueError(kind)
    tasks = [(kind, exp, i, N, rep) for i, N in enumerate(exp.sweep) for rep in range(exp.repeats)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_cell, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    else:
        chunks = [_cell(t) for t in tasks]
    records = sorted(r for c in chunks for r in c)
    if kind == "synthesize" and not exp.model.structured:
        records.append(SweepRecord(f"{exp.experiment_id}/trivial", 0, 0, "rel_subopt",
                                   trivial_subopt(exp, _optimal(exp))))
    return records


def write_records(records, path_or_file):
    lines = [SWEEP_HEADER, "experiment_id,N,repeat_index,metric_name,value"]
    lines += [f"{r.experiment_id},{r.N},{r.repeat_index},{r.metric_name},{r.value!r}"
              for r in records]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as f:
            f.write(text)


def read_records(path):
    out = []
    with open(path) as f:
        for line in f:
            if line.startswith("#") or line.startswith("experiment_id,") or not line.strip():
                continue
            e, n, r, m, v = line.rstrip("\n").split(",")
            out.append(SweepRecord(e, int(n), int(r), m, float(v)))
    return out


def quantile_band(values, q=0.1):
    """Central q-mass band around the median: quantiles ``0.5 -/+ q/2``.

    Linear interpolation between order statistics.
    """
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise EmptyInput("quantile_band needs at least one value")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    lo, med, hi = np.quantile(v, [0.5 - q / 2, 0.5, 0.5 + q / 2])
    return float(lo), float(med), float(hi)


def summarize(records, q=0.1):
    """``{(experiment_id, N, metric): (lo, median, hi, count)}``."""
    groups = {}
    for r in records:
        groups.setdefault((r.experiment_id, r.N, r.metric_name), []).append(r.value)
    return {k: quantile_band(v, q) + (len(v),) for k, v in sorted(groups.items())}


def loglog_slope(ns, values):
    """Least-squares slope of log(values) against log(ns)."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def medians(records, metric, experiment_id=None):
    """``{N: median}`` for one metric."""
    by_n = {}
    for r in records:
        if r.metric_name == metric and (experiment_id is None or r.experiment_id == experiment_id):
            by_n.setdefault(r.N, []).append(r.value)
    return {n: float(np.median(v)) for n, v in sorted(by_n.items())}


def with_overrides(cfg, **kw):
    """Copy of a config dict with top-level keys replaced."""
    out = copy.deepcopy(cfg)
    out.update(kw)
    return out


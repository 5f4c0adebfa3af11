"""Experiment pipeline shared by the command-line tool and the benchmarks.

A pipeline run is described by one :class:`Config` with five sections
(``data``, ``learn``, ``solve``, ``eval``, ``bench``).  Poses are generated
and reported in millimetres; learning and lifting work in units of
``data.unit`` millimetres, which is what the penalty weights refer to.
"""

from __future__ import annotations

import configparser
import dataclasses
import functools
import multiprocessing
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import synth
from .core import Pose2D, Pose3D, PoseDictionary, center_pose2d
from .dictlearn import DictLearnConfig, TrainReport, learn_dictionaries
from .errors import ConfigError, EmptyBatch, IoError
from .io import ResultTable
from .metrics import estimation_error, joint_breakdown, per_joint_error
from .solver import SolverConfig, solve_sdm, solve_sr_baseline

METHODS = ("sr", "sdm")


# --- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class DataSection:
    unit: float = 100.0
    train_families: tuple[str, ...] = ("stride",)
    test_families: tuple[str, ...] = ("seated",)
    train_count: int = 200
    test_count: int = 100
    views: int = 4
    sigmas: tuple[float, ...] = (0.0,)
    jitter: float = 40.0
    seed: int = 0


@dataclass(frozen=True)
class LearnSection:
    k: int = 24
    gamma: float = 0.01
    eta: float = 1.0
    tol: float = 1e-6
    max_iter: int = 2000
    seed: int = 0


@dataclass(frozen=True)
class SolveSection:
    method: str = "sdm"
    sigma: float = 0.0
    alpha: float = 0.4
    beta: float = 20.0
    tol: float = 1e-6
    max_iter: int = 10000
    apg_iters: int = 50
    apg_tol: float = 1e-8
    stall_window: int = 20
    stall_rtol: float = 1e-10
    camera_scale: float | None = 1.0  # None: free scale


@dataclass(frozen=True)
class EvalSection:
    breakdown: bool = True


@dataclass(frozen=True)
class BenchSection:
    methods: tuple[str, ...] = METHODS
    alphas: tuple[float, ...] = (0.0, 0.1, 0.5, 1.0, 5.0)
    betas: tuple[float, ...] = (0.0, 5.0, 10.0, 20.0)
    sigmas: tuple[float, ...] = (0.0, 2.0, 5.0, 10.0)
    cdf_step: float = 10.0
    cdf_max: float = 200.0


@dataclass(frozen=True)
class Config:
    data: DataSection = field(default_factory=DataSection)
    learn: LearnSection = field(default_factory=LearnSection)
    solve: SolveSection = field(default_factory=SolveSection)
    eval: EvalSection = field(default_factory=EvalSection)
    bench: BenchSection = field(default_factory=BenchSection)
    out_dir: str = "out"
    workers: int = 1

    def solver_config(self, **changes) -> SolverConfig:
        s = self.solve
        cfg = dict(alpha=s.alpha, beta=s.beta, tol=s.tol, max_iter=s.max_iter, apg_iters=s.apg_iters,
                   apg_tol=s.apg_tol, stall_window=s.stall_window, stall_rtol=s.stall_rtol,
                   camera_scale=s.camera_scale)
        cfg.update(changes)
        return SolverConfig(**cfg)

    def learn_config(self) -> DictLearnConfig:
        s = self.learn
        return DictLearnConfig(gamma=s.gamma, eta=s.eta, k=s.k, tol=s.tol, max_iter=s.max_iter, seed=s.seed)

    def with_seed(self, seed: int) -> Config:
        """Same experiment with both the data and the learning seed replaced."""
        return dataclasses.replace(
            self,
            data=dataclasses.replace(self.data, seed=seed),
            learn=dataclasses.replace(self.learn, seed=seed),
        )


SECTIONS = {"data": DataSection, "learn": LearnSection, "solve": SolveSection,
            "eval": EvalSection, "bench": BenchSection}


# keys whose value may be left empty to mean "not set"
OPTIONAL_KEYS = {("solve", "camera_scale")}


def _convert(section: str, key: str, raw: Any, default: Any) -> Any:
    where = f"{section}.{key}"
    if (section, key) in OPTIONAL_KEYS and (raw is None or str(raw).strip().lower() in ("", "none", "free")):
        return None
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, tuple):
            items = raw if isinstance(raw, (list, tuple)) else [v for v in str(raw).replace(",", " ").split()]
            kind = type(default[0]) if default else str
            return tuple(kind(v) for v in items)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _validate(cfg: Config) -> None:
    d, b = cfg.data, cfg.bench
    for name in d.train_families + d.test_families:
        if name not in synth.FAMILY_AXES:
            raise ConfigError(f"data: unknown family {name!r}; choose from {sorted(synth.FAMILY_AXES)}")
    if not d.train_families or not d.test_families:
        raise ConfigError("data: train_families and test_families must not be empty")
    if d.unit <= 0 or d.views < 1 or d.train_count < 0 or d.test_count < 0 or d.jitter < 0:
        raise ConfigError("data: unit > 0, views >= 1 and non-negative counts and jitter required")
    if not d.sigmas or any(s < 0 for s in d.sigmas):
        raise ConfigError("data: sigmas must be a non-empty list of non-negative numbers")
    if cfg.solve.method not in METHODS:
        raise ConfigError(f"solve.method must be one of {METHODS}, got {cfg.solve.method!r}")
    for m in b.methods:
        if m not in METHODS:
            raise ConfigError(f"bench.methods: unknown method {m!r}")
    for name in ("methods", "alphas", "betas", "sigmas"):
        if not getattr(b, name):
            raise ConfigError(f"bench.{name} is empty")
    if any(v < 0 for v in b.alphas + b.betas + b.sigmas):
        raise ConfigError("bench sweeps must be non-negative")
    if not (b.cdf_step > 0 and b.cdf_max >= b.cdf_step):
        raise ConfigError("bench: need cdf_step > 0 and cdf_max >= cdf_step")
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    try:
        cfg.solver_config()
        cfg.learn_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_config(values: Mapping[str, Mapping[str, Any]] | None = None, out_dir: str | None = None,
                 workers: int | None = None) -> Config:
    """Config from nested ``{section: {key: value}}``; unknown keys are errors."""
    values = values or {}
    sections = {}
    for name, cls in SECTIONS.items():
        given = dict(values.get(name, {}))
        defaults = {f.name: f.default for f in dataclasses.fields(cls)}
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
        sections[name] = cls(**{k: _convert(name, k, v, defaults[k]) for k, v in given.items()})
    unknown = set(values) - set(SECTIONS) - {"run"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    run = dict(values.get("run", {}))
    bad = set(run) - {"out_dir", "workers"}
    if bad:
        raise ConfigError(f"run: unknown keys {sorted(bad)}")
    cfg = Config(
        **sections,
        out_dir=out_dir if out_dir is not None else str(run.get("out_dir", "out")),
        workers=workers if workers is not None else _convert("run", "workers", run.get("workers", 1), 1),
    )
    _validate(cfg)
    return cfg


def read_config_file(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {s: dict(parser[s]) for s in parser.sections()}


def config_to_ini(cfg: Config) -> str:
    """Render a config in the file format read by :func:`read_config_file`."""
    lines = ["[run]", f"out_dir = {cfg.out_dir}", f"workers = {cfg.workers}", ""]
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for f in dataclasses.fields(getattr(cfg, name)):
            v = getattr(getattr(cfg, name), f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = str(v).lower()
            elif v is None:
                v = ""
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)


# --- data ----------------------------------------------------------------------


def derive_seed(*parts: int) -> int:
    """Deterministic 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


TRAIN, TEST, NOISE = 0, 1, 2


@dataclass
class Dataset:
    train: list[tuple[str, Pose3D]]
    test3d: list[tuple[str, Pose3D]]
    test2d: dict[float, list[tuple[str, Pose2D]]]


def _family_poses(names: Sequence[str], count: int, jitter: float, seed: int, stream: int):
    out = []
    for fi, name in enumerate(names):
        spec = synth.family(name, count, seed=derive_seed(seed, stream, fi), jitter=jitter)
        out.extend((f"{name}-{i:04d}", y) for i, y in enumerate(synth.generate_family(spec)))
    return out


def _noisy(x: Pose2D, sigma: float, seed: int) -> Pose2D:
    if sigma == 0:
        return x
    return center_pose2d(synth.add_noise(x, synth.NoiseSpec(sigma, seed)))[0]


def generate(cfg: Config) -> Dataset:
    d = cfg.data
    train = _family_poses(d.train_families, d.train_count, d.jitter, d.seed, TRAIN)
    test3d = _family_poses(d.test_families, d.test_count, d.jitter, d.seed, TEST)
    clean = [(f"{pid}-v{j}", x) for pid, y in test3d for j, x in enumerate(synth.orbit_project(y, d.views))]
    test2d = {}
    for sigma in d.sigmas:
        # the same seed at every sigma: noise fields differ only in scale.
        # Noisy views are re-centred since lifting expects centred input.
        test2d[sigma] = [
            (pid, _noisy(x, sigma, derive_seed(d.seed, NOISE, i)))
            for i, (pid, x) in enumerate(clean)
        ]
    return Dataset(train, test3d, test2d)


def pose_of(view_id: str) -> str:
    """``'seated-0003-v2'`` -> ``'seated-0003'``."""
    return view_id.rsplit("-v", 1)[0]


def category_of(pose_id: str) -> str:
    return pose_id.split("-", 1)[0]


# --- learning -----------------------------------------------------------------


def learn(cfg: Config, train: Sequence[Pose3D], method: str = "sdm") -> TrainReport:
    """Learn in working units; ``method='sr'`` learns the single baseline dictionary."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    scaled = [Pose3D(np.asarray(y.joints) / cfg.data.unit) for y in train]
    return learn_dictionaries(scaled, cfg.learn_config(), joint=(method == "sdm"))


def learn_echo(cfg: Config, method: str) -> dict[str, Any]:
    echo = dataclasses.asdict(cfg.learn)
    echo["unit"] = cfg.data.unit
    echo["method"] = method
    return echo


# --- lifting -------------------------------------------------------------------


@dataclass(frozen=True)
class LiftResult:
    pose: Pose3D
    iterations: int
    termination: str
    stalled: bool
    residual: float
    objective: float


def _lift_one(x: Pose2D, method: str, dict_u: PoseDictionary, dict_v: PoseDictionary | None,
              solver_cfg: SolverConfig, unit: float) -> LiftResult:
    xs = Pose2D(np.asarray(center_pose2d(x)[0].joints) / unit)
    if method == "sdm":
        rep = solve_sdm(xs, dict_u, dict_v, solver_cfg)
    else:
        rep = solve_sr_baseline(xs, dict_u, cfg=solver_cfg)
    return LiftResult(
        pose=Pose3D(np.asarray(rep.pose.joints) * unit),
        iterations=rep.iterations,
        termination=rep.termination.value,
        stalled=rep.stalled,
        residual=rep.residual * unit,
        objective=rep.objective_history[-1] if rep.objective_history else float("nan"),
    )


def parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map, optionally across worker processes."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    ctx = multiprocessing.get_context("fork")
    chunk = max(1, len(items) // (4 * workers))
    with ctx.Pool(workers) as pool:
        return pool.map(fn, items, chunksize=chunk)


def lift(cfg: Config, inputs: Sequence[Pose2D], method: str, dict_u: PoseDictionary,
         dict_v: PoseDictionary | None = None, solver_cfg: SolverConfig | None = None) -> list[LiftResult]:
    if method == "sdm" and dict_v is None:
        raise ConfigError("the sdm method needs a deformation dictionary")
    fn = functools.partial(_lift_one, method=method, dict_u=dict_u, dict_v=dict_v,
                           solver_cfg=solver_cfg or cfg.solver_config(), unit=cfg.data.unit)
    return parallel_map(fn, list(inputs), cfg.workers)


# --- evaluation -----------------------------------------------------------------

RESULT_COLUMNS = ("method", "dataset", "category", "metric", "value", "count")


def errors_by_id(estimates: Sequence[tuple[str, Pose3D]], truth: Mapping[str, Pose3D]) -> list[tuple[str, float, float]]:
    """``(view_id, per_joint_error, estimation_error)`` for each estimate."""
    out = []
    for vid, est in estimates:
        try:
            gt = truth[pose_of(vid)]
        except KeyError:
            raise ConfigError(f"no ground truth for estimate {vid!r}") from None
        out.append((vid, per_joint_error(est, gt), estimation_error(est, gt)))
    return out


def evaluate(method: str, dataset: str, estimates: Sequence[tuple[str, Pose3D]],
             truth: Mapping[str, Pose3D]) -> ResultTable:
    """Per-category and overall mean errors, one row per metric."""
    errs = errors_by_id(estimates, truth)
    if not errs:
        raise EmptyBatch("no estimates to evaluate")
    groups: dict[str, list[tuple[float, float]]] = {}
    for vid, pje, ee in errs:
        groups.setdefault(category_of(vid), []).append((pje, ee))
    groups["all"] = [(p, e) for _, p, e in errs]
    rows = []
    for cat in sorted(groups):
        vals = np.array(groups[cat])
        for m, col in (("per_joint_error", 0), ("estimation_error", 1)):
            rows.append((method, dataset, cat, m, float(np.mean(vals[:, col])), len(vals)))
    return ResultTable(RESULT_COLUMNS, rows)


def breakdown_table(method: str, estimates: Sequence[tuple[str, Pose3D]],
                    truth: Mapping[str, Pose3D]) -> ResultTable:
    pairs = [(est, truth[pose_of(vid)]) for vid, est in estimates]
    means = joint_breakdown(pairs)
    names = synth.JOINT_NAMES if len(means) == synth.N_JOINTS else tuple(str(j) for j in range(len(means)))
    return ResultTable(("method", "joint", "mean_error"), [(method, n, float(v)) for n, v in zip(names, means)])


# --- benchmark ---------------------------------------------------------------------


@dataclass
class BenchData:
    """Inputs and dictionaries shared by every benchmark sweep."""

    cfg: Config
    data: Dataset
    truth: dict[str, Pose3D]
    dicts: dict[str, tuple[PoseDictionary, PoseDictionary]]


def prepare_bench(cfg: Config, methods: Iterable[str] | None = None) -> BenchData:
    data_cfg = dataclasses.replace(cfg.data, sigmas=tuple(sorted(set(cfg.data.sigmas) | set(cfg.bench.sigmas))))
    cfg_full = dataclasses.replace(cfg, data=data_cfg)
    data = generate(cfg_full)
    train = [y for _, y in data.train]
    dicts = {}
    for m in methods or cfg.bench.methods:
        rep = learn(cfg_full, train, m)
        dicts[m] = (rep.dict_u, rep.dict_v)
    return BenchData(cfg_full, data, dict(data.test3d), dicts)


def mean_errors(bench: BenchData, method: str, sigma: float, **solver_changes) -> list[tuple[str, float]]:
    """Estimation error (mm) for every test view at noise level ``sigma``."""
    cfg = bench.cfg
    inputs = bench.data.test2d[sigma]
    solver_cfg = cfg.solver_config(**solver_changes)
    du, dv = bench.dicts[method]
    res = lift(cfg, [x for _, x in inputs], method, du, dv if method == "sdm" else None, solver_cfg)
    return [(vid, estimation_error(r.pose, bench.truth[pose_of(vid)])) for (vid, _), r in zip(inputs, res)]


def _mean(errs: Sequence[tuple[str, float]]) -> float:
    return float(np.mean([e for _, e in errs]))


def alpha_sweep(bench: BenchData, alphas: Sequence[float] | None = None, sigma: float | None = None) -> ResultTable:
    """SDM error against alpha with beta fixed at ``solve.beta``."""
    alphas = bench.cfg.bench.alphas if alphas is None else alphas
    if not alphas:
        raise ConfigError("alpha sweep grid is empty")
    sigma = bench.cfg.bench.sigmas[0] if sigma is None else sigma
    beta = bench.cfg.solve.beta
    rows = []
    for a in alphas:
        errs = mean_errors(bench, "sdm", sigma, alpha=float(a), min_norm_ridge=True)
        rows.append(("sdm", float(a), beta, sigma, _mean(errs), len(errs)))
    return ResultTable(("method", "alpha", "beta", "sigma", "mean_error", "count"), rows)


def beta_sweep(bench: BenchData, betas: Sequence[float] | None = None, sigma: float | None = None) -> ResultTable:
    """SDM error against beta with alpha fixed at ``solve.alpha``.

    At ``beta = 0`` the dense block takes the minimum-norm least-squares
    solution, the limit of the ridge solution as beta shrinks to zero.
    """
    betas = bench.cfg.bench.betas if betas is None else betas
    if not betas:
        raise ConfigError("beta sweep grid is empty")
    sigma = bench.cfg.bench.sigmas[0] if sigma is None else sigma
    alpha = bench.cfg.solve.alpha
    rows = []
    for b in betas:
        errs = mean_errors(bench, "sdm", sigma, beta=float(b), min_norm_ridge=True)
        rows.append(("sdm", alpha, float(b), sigma, _mean(errs), len(errs)))
    return ResultTable(("method", "alpha", "beta", "sigma", "mean_error", "count"), rows)


def method_runs(bench: BenchData, sigmas: Sequence[float] | None = None) -> dict[tuple[str, float], list[tuple[str, float]]]:
    """Per-view errors for every (method, sigma) pair on identical inputs."""
    sigmas = bench.cfg.bench.sigmas if sigmas is None else sigmas
    if not sigmas:
        raise ConfigError("sigma sweep grid is empty")
    return {(m, float(s)): mean_errors(bench, m, float(s)) for s in sigmas for m in bench.cfg.bench.methods}


def noise_curve(runs: Mapping[tuple[str, float], Sequence[tuple[str, float]]]) -> ResultTable:
    rows = [(m, s, _mean(errs), len(errs)) for (m, s), errs in runs.items()]
    rows.sort(key=lambda r: (r[0], r[1]))
    return ResultTable(("method", "sigma", "mean_error", "count"), rows)


def comparison_table(runs: Mapping[tuple[str, float], Sequence[tuple[str, float]]]) -> ResultTable:
    """Mean and median error for every (method, sigma) run, split by test category."""
    rows = []
    for (m, s), errs in runs.items():
        groups: dict[str, list[float]] = {}
        for vid, e in errs:
            groups.setdefault(category_of(vid), []).append(e)
        for cat in sorted(groups):
            v = np.array(groups[cat])
            rows.append((m, s, cat, float(v.mean()), float(np.median(v)), len(v)))
    rows.sort(key=lambda r: (r[1], r[2], r[0]))
    return ResultTable(("method", "sigma", "category", "mean_error", "median_error", "count"), rows)


def cdf_table(runs: Mapping[tuple[str, float], Sequence[tuple[str, float]]], sigma: float,
              step: float, top: float) -> ResultTable:
    """Percentage of views whose error is below each threshold."""
    methods = sorted({m for m, s in runs if s == sigma})
    n_steps = int(round(top / step))
    thresholds = [step * (i + 1) for i in range(n_steps)]
    rows = []
    for t in thresholds:
        row = [t]
        for m in methods:
            e = np.array([v for _, v in runs[(m, sigma)]])
            row.append(100.0 * float(np.mean(e < t)))
        rows.append(tuple(row))
    return ResultTable(("threshold",) + tuple(f"pct_{m}" for m in methods), rows)

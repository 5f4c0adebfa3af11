"""Command-line front end: ``sdmpose {gen,learn,lift,eval,bench}``.

Every command reads the same configuration (see :mod:`sdmpose.pipeline`)
and works inside one output directory::

    train_3d.txt, test_3d.txt, test_2d_sigma<s>.txt      gen
    dictionary_sdm.json, dictionary_sr.json              learn
    lift_<method>_sigma<s>.txt / .csv                    lift
    results.csv, breakdown.csv                           eval
    bench_alpha.csv, bench_beta.csv, bench_noise.csv,
    bench_compare.csv, bench_cdf.csv                     bench

Errors print one ``sdmpose: <ErrorClass>: <message>`` line on stderr and
exit with the error class's code.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from pathlib import Path
from typing import Sequence

from . import io, pipeline
from .core import Pose2D, Pose3D
from .errors import ConfigError, DimensionMismatch, IoError, SDMError

OUT_DIR_ENV = "SDMPOSE_OUT_DIR"


def _sigma_tag(sigma: float) -> str:
    return f"sigma{sigma:g}"


def test2d_name(sigma: float) -> str:
    return f"test_2d_{_sigma_tag(sigma)}.txt"


def lift_name(method: str, sigma: float, ext: str) -> str:
    return f"lift_{method}_{_sigma_tag(sigma)}.{ext}"


def _need(path: Path) -> Path:
    if not path.exists():
        raise IoError(f"{path}: missing input (run the earlier pipeline step first)")
    return path


def _write_config_echo(cfg: pipeline.Config, out: Path) -> None:
    with io._open(out / "config_used.ini", "w") as fh:
        fh.write(pipeline.config_to_ini(cfg))


# --- commands -----------------------------------------------------------------


def cmd_gen(cfg: pipeline.Config) -> None:
    """Generate train/test 3D poses and projected 2D test views."""
    out = io.ensure_dir(cfg.out_dir)
    data = pipeline.generate(cfg)
    io.write_records(out / "train_3d.txt", data.train)
    io.write_records(out / "test_3d.txt", data.test3d)
    for sigma, records in data.test2d.items():
        io.write_records(out / test2d_name(sigma), records)
    _write_config_echo(cfg, out)
    n2d = sum(len(v) for v in data.test2d.values())
    print(f"gen: {len(data.train)} train 3D, {len(data.test3d)} test 3D, "
          f"{n2d} test 2D records in {len(data.test2d)} file(s) -> {out}")


def cmd_learn(cfg: pipeline.Config) -> None:
    """Learn the SDM dictionary pair and the SR baseline dictionary."""
    out = io.ensure_dir(cfg.out_dir)
    train = [y for y in io.read_poses(_need(out / "train_3d.txt"))]
    if any(not isinstance(y, Pose3D) for y in train):
        raise DimensionMismatch("training file must hold 3D poses")
    for method in pipeline.METHODS:
        rep = pipeline.learn(cfg, train, method)
        io.write_dictionary(out / f"dictionary_{method}.json", rep.dict_u, rep.dict_v,
                            pipeline.learn_echo(cfg, method))
        print(f"learn[{method}]: final loss {rep.loss_history[-1]!r} after {rep.iterations} iterations")


def cmd_lift(cfg: pipeline.Config) -> None:
    """Lift the 2D test views to 3D with the configured method."""
    out = io.ensure_dir(cfg.out_dir)
    method, sigma = cfg.solve.method, cfg.solve.sigma
    records = io.read_records(_need(out / test2d_name(sigma)))
    if any(not isinstance(x, Pose2D) for _, x in records):
        raise DimensionMismatch("lift input must hold 2D poses")
    du, dv = io.read_dictionary(_need(out / f"dictionary_{method}.json"))
    results = pipeline.lift(cfg, [x for _, x in records], method, du, dv if method == "sdm" else None)
    ids = [vid for vid, _ in records]
    io.write_records(out / lift_name(method, sigma, "txt"), zip(ids, (r.pose for r in results)))
    report = io.ResultTable(
        ("id", "iterations", "termination", "stalled", "residual", "objective"),
        [(vid, r.iterations, r.termination, r.stalled, r.residual, r.objective) for vid, r in zip(ids, results)],
    )
    io.write_results(out / lift_name(method, sigma, "csv"), report)
    converged = sum(r.termination == "converged" for r in results)
    print(f"lift[{method}, sigma={sigma:g}]: {len(results)} poses, {converged} converged")


_LIFT_RE = re.compile(r"^lift_(sr|sdm)_sigma(.+)\.txt$")


def cmd_eval(cfg: pipeline.Config) -> None:
    """Score every lift output against the 3D ground truth."""
    out = io.ensure_dir(cfg.out_dir)
    truth = dict(io.read_records(_need(out / "test_3d.txt")))
    found = sorted(p for p in out.iterdir() if _LIFT_RE.match(p.name))
    if not found:
        raise IoError(f"{out}: no lift_<method>_sigma<s>.txt files to evaluate")
    rows, breakdown = [], []
    for path in found:
        method, tag = _LIFT_RE.match(path.name).groups()
        estimates = io.read_records(path)
        table = pipeline.evaluate(method, f"sigma{tag}", estimates, truth)
        rows.extend(table.rows)
        if cfg.eval.breakdown:
            bt = pipeline.breakdown_table(f"{method}@sigma{tag}", estimates, truth)
            breakdown.extend(bt.rows)
        overall = [r for r in table.rows if r[2] == "all" and r[3] == "estimation_error"][0]
        print(f"eval[{method}, sigma={tag}]: mean estimation error {overall[4]:.3f} mm over {overall[5]} poses")
    io.write_results(out / "results.csv", io.ResultTable(pipeline.RESULT_COLUMNS, rows))
    if cfg.eval.breakdown:
        io.write_results(out / "breakdown.csv", io.ResultTable(("method", "joint", "mean_error"), breakdown))


def cmd_bench(cfg: pipeline.Config) -> None:
    """Run the parameter and noise sweeps plus the SR/SDM comparison."""
    out = io.ensure_dir(cfg.out_dir)
    b = cfg.bench
    bench = pipeline.prepare_bench(cfg, methods=sorted(set(b.methods) | {"sdm"}))
    alpha = pipeline.alpha_sweep(bench)
    io.write_results(out / "bench_alpha.csv", alpha)
    beta = pipeline.beta_sweep(bench)
    io.write_results(out / "bench_beta.csv", beta)
    runs = pipeline.method_runs(bench)
    io.write_results(out / "bench_noise.csv", pipeline.noise_curve(runs))
    io.write_results(out / "bench_compare.csv", pipeline.comparison_table(runs))
    io.write_results(out / "bench_cdf.csv", pipeline.cdf_table(runs, b.sigmas[0], b.cdf_step, b.cdf_max))
    _write_config_echo(cfg, out)
    for row in pipeline.noise_curve(runs).rows:
        print(f"bench[{row[0]}, sigma={row[1]:g}]: mean estimation error {row[2]:.3f} mm")
    print(f"bench: curves written to {out}")


COMMANDS = {"gen": cmd_gen, "learn": cmd_learn, "lift": cmd_lift, "eval": cmd_eval, "bench": cmd_bench}


# --- argument handling ------------------------------------------------------------


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags without defaults, so a flag given
    # before the command is not reset by the subparser
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [data] [learn] [solve] [eval] [bench] sections", **kw)
    common.add_argument("--seed", type=int, help="sets data.seed and learn.seed", **kw)
    common.add_argument("--workers", type=int, help="worker processes for lifting", **kw)
    common.add_argument("--out-dir", help=f"output directory (env {OUT_DIR_ENV} overrides the config file)", **kw)
    common.add_argument("--method", choices=pipeline.METHODS, help="sets solve.method", **kw)
    common.add_argument("--sigma", type=float, help="sets solve.sigma", **kw)
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override any config key; repeatable", **kw)
    common.add_argument("-v", "--verbose", action="store_true", **kw)
    return common


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdmpose", description=__doc__.splitlines()[0],
                                     parents=[_common(False)])
    sub = parser.add_subparsers(dest="command", required=True)
    shared = _common(True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[shared], help=(fn.__doc__ or name).splitlines()[0])
    return parser


def load(args: argparse.Namespace, environ=os.environ) -> pipeline.Config:
    values: dict[str, dict[str, object]] = {}
    if getattr(args, "config", None):
        values = pipeline.read_config_file(args.config)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        values.setdefault(section, {})[name] = value
    if args.seed is not None:
        values.setdefault("data", {})["seed"] = args.seed
        values.setdefault("learn", {})["seed"] = args.seed
    if args.method is not None:
        values.setdefault("solve", {})["method"] = args.method
    if args.sigma is not None:
        values.setdefault("solve", {})["sigma"] = args.sigma
    out_dir = args.out_dir if args.out_dir is not None else environ.get(OUT_DIR_ENV) or None
    return pipeline.build_config(values, out_dir=out_dir, workers=args.workers)


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args)
        COMMANDS[args.command](cfg)
    except SDMError as exc:
        msg = " ".join(str(exc).split())
        print(f"sdmpose: {type(exc).__name__}: {msg}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("sdmpose: Interrupted", file=sys.stderr)
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())

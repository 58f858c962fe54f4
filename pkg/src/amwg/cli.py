"""Command line experiment runner.

    amwg run --config configs/lorenz96_amwg_b2_L4.toml --out out/
    amwg select-radius --config ... --trials 500
    amwg bench-scaling --config ... --ns 40,80,160,320
    amwg exact-posterior --config configs/linear_flow_posterior.toml

Failures exit nonzero after printing one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, build_problem
from .diagnostics import exact_linear_posterior, metrics_report, write_json
from .likelihood import save_vector_csv
from .sampler import run_chain
from .theory import empirical_radius_select

log = logging.getLogger("amwg")


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {v}")
    return v


def _load(args, **extra) -> ExperimentConfig:
    overrides = {"seed": args.seed, "threads": args.threads, "out": args.out}
    overrides.update(extra)
    if args.config is None:
        return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_toml(args.config, **overrides)


def _outdir(cfg) -> Path:
    # the output directory is left out of the echo so reruns elsewhere write identical files
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(cfg.to_toml(exclude=("out",)))
    return out


def _settings(cfg) -> dict:
    d = asdict(cfg)
    d.pop("out")
    return d


def _echo(cfg):
    print(f"# seed {cfg.seed}")
    print(cfg.to_toml(), end="")


def cmd_run(args) -> int:
    cfg = _load(args)
    _echo(cfg)
    problem = build_problem(cfg)
    result = run_chain(cfg.sampler_config(), problem.model, problem.prior, problem.obs, problem.store)
    out = _outdir(cfg)
    if cfg.samples_format == "csv":
        np.savetxt(out / "samples.csv", result.samples, delimiter=",", fmt="%.17g")
    else:
        np.save(out / "samples.npy", result.samples)
    save_vector_csv(out / "y.csv", problem.obs.y)
    if problem.truth is not None:
        save_vector_csv(out / "truth.csv", problem.truth)
    metrics = metrics_report(result.samples, cfg.k0, result.accepted, result.proposed, result.seconds, problem.truth)
    metrics.update(sampler=cfg.sampler, seed=cfg.seed, config=_settings(cfg))
    write_json(out / "metrics.json", metrics)
    keys = [k for k in ("AR", "CT", "MSE", "MSV") if k in metrics]
    print(json.dumps({k: metrics[k] for k in keys}))
    return 0


def cmd_select_radius(args) -> int:
    extra = {}
    if args.L is not None:
        extra["radius_candidates"] = args.L
    if args.trials is not None:
        extra["radius_trials"] = args.trials
    cfg = _load(args, **extra)
    _echo(cfg)
    problem = build_problem(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    rows = empirical_radius_select(
        problem.model,
        problem.prior,
        problem.obs,
        problem.store,
        cfg.radius_candidates,
        cfg.radius_trials,
        rng,
        h=cfg.h,
        T=cfg.T,
        scheme=cfg.scheme,
        obs_window=cfg.obs_window if cfg.acceptance == "local" else None,
    )
    out = _outdir(cfg)
    with open(out / "radius.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "err_alpha", "err_phi"])
        for r in rows:
            w.writerow([r.L, repr(r.err_alpha), repr(r.err_phi)])
    print("L,err_alpha,err_phi")
    for r in rows:
        print(f"{r.L},{r.err_alpha:.4g},{r.err_phi:.4g}")
    return 0


def bench_scaling(cfg: ExperimentConfig, ns, sweeps):
    """Per-sweep seconds of both samplers at each ``n`` plus log-log slopes.

    Problem setup is excluded from timing, and a one-sweep run at the
    smallest ``n`` compiles the kernels before anything is timed.
    """
    if sweeps < 1:
        raise ConfigError("bench_sweeps", f"must be at least 1, got {sweeps}")
    if list(ns) != sorted(ns):
        raise ConfigError("bench_ns", "must be sorted ascending")
    rows = []

    def setting(sampler, **changes):
        if sampler == "mwg":
            changes.update(acceptance="full", parallel=False)
        return cfg.replace(sampler=sampler, **changes)

    for sampler in ("mwg", "amwg"):
        c = setting(sampler, n=ns[0], K=1, k0=0)
        p = build_problem(c)
        run_chain(c.sampler_config(), p.model, p.prior, p.obs, p.store)
    for n in ns:
        for sampler in ("mwg", "amwg"):
            c = setting(sampler, n=n, K=sweeps, k0=0)
            p = build_problem(c)
            r = run_chain(c.sampler_config(), p.model, p.prior, p.obs, p.store)
            rows.append((n, r.seconds / sweeps, sampler))
            log.info("n=%d %s %.4fs/sweep", n, sampler, r.seconds / sweeps)
    slopes = {}
    for sampler in ("mwg", "amwg"):
        pts = [(n, t) for n, t, s in rows if s == sampler]
        if len(pts) >= 2:
            x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
            slopes[sampler] = float(np.polyfit(x, y, 1)[0])
    return rows, slopes


def cmd_bench_scaling(args) -> int:
    extra = {}
    if args.ns is not None:
        extra["bench_ns"] = args.ns
    if args.sweeps is not None:
        extra["bench_sweeps"] = args.sweeps
    cfg = _load(args, **extra)
    _echo(cfg)
    rows, slopes = bench_scaling(cfg, cfg.bench_ns, cfg.bench_sweeps)
    out = _outdir(cfg)
    with open(out / "scaling.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "seconds_per_sweep", "sampler"])
        for n, t, s in rows:
            w.writerow([n, repr(t), s])
        for s, v in slopes.items():
            w.writerow(["slope", repr(v), s])
    print("n,seconds_per_sweep,sampler")
    for n, t, s in rows:
        print(f"{n},{t:.5g},{s}")
    for s, v in slopes.items():
        print(f"slope,{v:.3f},{s}")
    return 0


def cmd_exact_posterior(args) -> int:
    cfg = _load(args)
    _echo(cfg)
    problem = build_problem(cfg)
    post = exact_linear_posterior(problem.model, problem.prior, problem.obs, cfg.T)
    out = _outdir(cfg)
    write_json(
        out / "posterior.json",
        {
            "mean": post.mean,
            "variance": np.diag(post.covariance),
            "mean_variance": post.mean_variance,
            "seed": cfg.seed,
            "config": _settings(cfg),
        },
    )
    print(f"mean posterior variance {post.mean_variance:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amwg", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="flat TOML experiment file")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", type=str, help="output directory")

    p = sub.add_parser("run", help="run a chain, write samples and metrics")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("select-radius", help="tabulate local-solve errors over candidate radii")
    common(p)
    p.add_argument("--L", type=_int_list, help="comma-separated radii")
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_select_radius)

    p = sub.add_parser("bench-scaling", help="per-sweep cost of both samplers across dimensions")
    common(p)
    p.add_argument("--ns", type=_int_list, help="comma-separated dimensions, ascending")
    p.add_argument("--sweeps", type=int)
    p.set_defaults(func=cmd_bench_scaling)

    p = sub.add_parser("exact-posterior", help="closed-form posterior of the linear flow model")
    common(p)
    p.set_defaults(func=cmd_exact_posterior)
    return parser


def _fail(kind, exc, code, **extra):
    payload = {"error": kind, "message": str(exc)}
    payload.update(extra)
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", exc, 2, field=exc.field)
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        return _fail(type(exc).__name__, exc, 1)


if __name__ == "__main__":
    sys.exit(main())

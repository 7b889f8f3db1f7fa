"""Command-line front end: ``scpnm {synth,train,eval,check,sweep}``.

Exit codes: 0 success, 2 usage or configuration error, 3 training stopped on
its budget, 4 numerical failure, 5 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import PRESETS, ExperimentConfig, resolve
from .experiment import evaluate, make_dataset, run_trial
from .datagen import NoiseSpec, load_dataset, sample_simplex, save_dataset
from .errors import DomainError, FormatError, ParameterError, RankError, ScpnmError, TrainingError
from .identifiability import build_counterexample, build_g, check_bound, numerical_rank, sigma_min
from .training import load_checkpoint, make_segments, save_checkpoint, train

EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5


class UsageError(ScpnmError):
    pass


# --- small helpers ---------------------------------------------------------------


def fmt(v):
    """Deterministic text for a CSV cell."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf)  # RFC 4180: CRLF line ends, minimal quoting
    w.writerow(header)
    w.writerows([fmt(v) for v in r] for r in rows)
    return buf.getvalue()


def write_csv(path, header, rows):
    Path(path).write_text(csv_text(header, rows), newline="")


def one_based(segments):
    return "[" + ",".join("{" + ",".join(str(i + 1) for i in s) + "}" for s in segments) + "]"


def threads_from(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("SCPNM_THREADS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"SCPNM_THREADS must be an integer, got {env!r}") from None
    return n


def load_config(args):
    text = None
    if getattr(args, "config", None):
        text = Path(args.config).read_text()
    return resolve(getattr(args, "preset", None), text, getattr(args, "seed", None),
                   getattr(args, "out", None))


def require_out(cfg: ExperimentConfig):
    if cfg.out is None:
        raise UsageError("no output directory: pass --out or set 'out' in the config")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


METRIC_COLUMNS = ("subspace_distance", "permutation_mse", "min_r2", "sum_intercepts",
                  "curvature_residual", "recon", "prop1_threshold", "prop1_ok")


# --- subcommands ------------------------------------------------------------------------


def cmd_synth(args):
    cfg = load_config(args)
    out = require_out(cfg)
    seed = cfg.seeds[0]
    d = make_dataset(cfg, seed)
    save_dataset(d, out / "dataset.scpnm")
    (out / "config.json").write_text(cfg.to_json())
    snr = d.snr_db()
    print(f"K={d.K} M={d.M} N={d.N} snr_db={snr!r} -> {out / 'dataset.scpnm'}")
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args)
    out = require_out(cfg)
    d = load_dataset(args.dataset)
    tcfg = replace(cfg.train, seed=cfg.seeds[0])
    K = d.K if d.K is not None else cfg.K
    segments = make_segments(d.M, K) if d.M > K else None
    log_lines = []
    t0 = time.perf_counter()
    try:
        model, report, dual = train(d.X, tcfg, segments=segments,
                                    log=lambda r: log_lines.append(f"outer={r['outer_iter']} seconds={r['seconds']:.3f}"))
    except TrainingError as exc:
        (out / "report.csv").write_text(exc.report.to_csv(include_seconds=False), newline="")
        (out / "train.log").write_text("\n".join(log_lines + [f"diverged: {exc}"]) + "\n")
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(out / "model.ckpt", model, dual)
    (out / "report.csv").write_text(report.to_csv(include_seconds=False), newline="")
    log_lines.append(f"total_seconds={time.perf_counter() - t0:.3f} stop={report.stop_reason}")
    (out / "train.log").write_text("\n".join(log_lines) + "\n")
    print(f"stop={report.stop_reason} epochs={report.epochs} residual={report.final_residual!r} "
          f"segments={one_based(model.segments)}")
    return EXIT_OK if report.stop_reason == "converged" else EXIT_BUDGET


def cmd_eval(args):
    out = Path(args.out) if args.out else None
    if out is None:
        raise UsageError("eval needs --out")
    out.mkdir(parents=True, exist_ok=True)
    d = load_dataset(args.dataset)
    model, _ = load_checkpoint(args.checkpoint)
    if model.M != d.M:
        raise UsageError(f"checkpoint has M={model.M} channels but the dataset has M={d.M}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res, affinity, curves = evaluate(d, model)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    header = [c for c in METRIC_COLUMNS if c in res]
    write_csv(out / "metrics.csv", header, [[res[c] for c in header]])
    if affinity:
        cols = ["channel", "slope", "intercept", "r2", "max_abs_h2"]
        write_csv(out / "affinity.csv", cols, [[r[c] for c in cols] for r in affinity])
        write_csv(out / "curves.csv", ["channel", "y", "h"], curves)
    print(", ".join(f"{c}={fmt(res[c])}" for c in header))
    return EXIT_OK


def cmd_check(args):
    M, K = args.M, args.K
    if K < 3 or M < K:
        raise UsageError(f"check needs K >= 3 and M >= K, got M={M}, K={K}")
    rng = np.random.default_rng(args.seed)
    ok = check_bound(M, K)
    sig, ranks = [], []
    for _ in range(args.samples):
        G = build_g(rng.standard_normal((M, K)))
        sig.append(sigma_min(G))
        ranks.append(numerical_rank(G))
    sig = np.array(sig)
    print(f"M={M} K={K} identifiable_regime={fmt(ok)}")
    print(f"segments={one_based(make_segments(M, K))}")
    print(f"sigma_min(G) over {args.samples} Gaussian A: min={float(sig.min())!r} median={float(np.median(sig))!r} "
          f"max={float(sig.max())!r}; full column rank in {sum(r == M for r in ranks)}/{args.samples}")
    if M > K * (K - 1) // 2:
        A = rng.standard_normal((M, K))
        ce = build_counterexample(A, seed=args.seed)
        err = ce.constraint_error(sample_simplex(K, 10_000, 0.0, args.seed))
        print(f"counterexample: max|1'h(As)-1| = {err!r} over 10000 simplex samples; "
              f"max|h''| = {float(np.max(np.abs(ce.h_second())))!r}")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            cols = ["channel", "iota", "c", "beta", "omega"]
            write_csv(out / "counterexample.csv", cols, [[r[c] for c in cols] for r in ce.rows()])
            write_csv(out / "mixing.csv", [f"a{k + 1}" for k in range(K)], A.tolist())
    return EXIT_OK


RUN_COLUMNS = ("kind", "N", "snr_db", "seed", "status", "stop_reason", "epochs", "final_residual",
               "subspace_distance", "subspace_distance_std", "permutation_mse", "permutation_mse_std",
               "min_r2")


def _run_dir(root, N, snr, seed):
    tag = "inf" if snr is None else fmt(float(snr))
    return Path(root) / "runs" / f"N{N}_snr{tag}_seed{seed}"


def _sweep_one(job):
    cfg, N, snr, seed, run_dir = job
    if snr is None:
        noise = NoiseSpec()
    else:
        noise = NoiseSpec(cfg.noise.model if cfg.noise.active else "post", float(snr))
    row = {"kind": "run", "N": N, "snr_db": "inf" if snr is None else float(snr), "seed": seed}
    t0 = time.perf_counter()
    try:
        _, _, report, res = run_trial(cfg, seed, N=N, noise=noise)
        row.update(status="ok", stop_reason=report.stop_reason, epochs=report.epochs,
                   final_residual=report.final_residual, subspace_distance=res["subspace_distance"],
                   permutation_mse=res["permutation_mse"], min_r2=res.get("min_r2"))
    except (TrainingError, RankError, DomainError, FloatingPointError) as exc:
        row.update(status=f"error: {type(exc).__name__}: {exc}")
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "timing.log").write_text(f"seconds={time.perf_counter() - t0:.3f}\n")
    write_csv(run_dir / "result.csv", RUN_COLUMNS, [[row.get(c) for c in RUN_COLUMNS]])
    return row


def _read_row(path):
    with open(path, newline="") as fh:
        return next(csv.DictReader(fh))


def cmd_sweep(args):
    cfg = load_config(args)
    out = require_out(cfg)
    Ns = [int(n) for n in cfg.sweep.get("N", (cfg.N,))]
    snrs = list(cfg.sweep.get("snr_db", (cfg.noise.snr_db if cfg.noise.active else None,)))
    seeds = [int(s) for s in cfg.sweep.get("seeds", cfg.seeds)]
    (out / "config.json").write_text(cfg.to_json())
    settings = list(itertools.product(Ns, snrs))
    todo = []
    for (N, snr), seed in itertools.product(settings, seeds):
        rd = _run_dir(out, N, snr, seed)
        if not (rd / "result.csv").exists():
            todo.append((cfg, N, snr, seed, rd))
    workers = max(1, threads_from(args))
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(workers) as pool:
            list(pool.map(_sweep_one, todo))
    else:
        for job in todo:
            _sweep_one(job)

    rows, table = [], {}
    for N, snr in settings:
        runs = [_read_row(_run_dir(out, N, snr, s) / "result.csv") for s in seeds]
        rows += [[r[c] for c in RUN_COLUMNS] for r in runs]
        good = [r for r in runs if r["status"] == "ok"]
        dist = np.array([float(r["subspace_distance"]) for r in good])
        mse = np.array([float(r["permutation_mse"]) for r in good])
        mean = lambda a: float(np.mean(a)) if a.size else None
        std = lambda a: float(np.std(a)) if a.size else None
        agg = {"kind": "aggregate", "N": N, "snr_db": "inf" if snr is None else float(snr), "seed": "",
               "status": f"{len(good)}/{len(runs)} ok", "subspace_distance": mean(dist),
               "subspace_distance_std": std(dist), "permutation_mse": mean(mse), "permutation_mse_std": std(mse)}
        rows.append([agg.get(c) for c in RUN_COLUMNS])
        table[(N, snr)] = agg
    write_csv(out / "sweep.csv", RUN_COLUMNS, rows)
    label = lambda N, snr: (f"{fmt(float(snr))} dB" if len(snrs) > 1 or snr is not None else "") + \
        (f" N={N}" if len(Ns) > 1 or snr is None else "")
    header = ["metric"] + [label(N, snr).strip() for N, snr in settings]
    pivot = []
    for metric in ("subspace_distance", "subspace_distance_std", "permutation_mse", "permutation_mse_std"):
        pivot.append([metric] + [table[s][metric] for s in settings])
    write_csv(out / "table.csv", header, pivot)
    print(f"{len(settings) * len(seeds)} runs ({len(todo)} new) -> {out / 'sweep.csv'}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="scpnm", description="Simplex-constrained post-nonlinear mixture toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, preset=True):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="overrides the config seeds")
        sp.add_argument("--out", help="output directory")
        if preset:
            sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--threads", type=int, help="worker count (falls back to SCPNM_THREADS)")

    sp = sub.add_parser("synth", help="write a synthetic dataset")
    common(sp)
    sp.set_defaults(func=cmd_synth)
    sp = sub.add_parser("train", help="train the constrained autoencoder on a dataset")
    sp.add_argument("dataset")
    common(sp)
    sp.set_defaults(func=cmd_train)
    sp = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    sp.add_argument("dataset")
    sp.add_argument("checkpoint")
    common(sp, preset=False)
    sp.set_defaults(func=cmd_eval)
    sp = sub.add_parser("check", help="identifiability report for (M, K)")
    sp.add_argument("M", type=int)
    sp.add_argument("K", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--out")
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=cmd_check)
    sp = sub.add_parser("sweep", help="run a grid of experiments and aggregate")
    common(sp)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingError, RankError, DomainError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

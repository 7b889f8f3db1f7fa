"""Building blocks shared by the command line, the demos and the acceptance suite."""

from __future__ import annotations

import time
import warnings
from dataclasses import replace

import numpy as np

from .config import ExperimentConfig
from .datagen import Dataset, inject_pure_samples, sample_mixing, sample_simplex, synthesize
from .errors import DomainError, RankError
from .metrics import affinity_report, composed, curvature_residual, dominant_rows, permutation_mse, subspace_distance
from .recovery import unmix
from .training import make_segments, proposition1_check, train


def make_dataset(cfg: ExperimentConfig, seed: int, N=None, noise=None) -> Dataset:
    """Synthesize the configured dataset; pure samples are injected when requested."""
    N = cfg.N if N is None else N
    noise = cfg.noise if noise is None else noise
    S = sample_simplex(cfg.K, N, cfg.margin, seed)
    meta = {"seed": seed}
    if cfg.pure_per_vertex:
        S, idx = inject_pure_samples(S, cfg.pure_per_vertex, seed)
        meta["pure_indices"] = [int(i) for i in idx]
    A = sample_mixing(cfg.M, cfg.K, seed)
    d = synthesize(S, A, cfg.bank(seed), noise, seed)
    d.meta.update(meta)
    return d


def evaluate(d: Dataset, model, curves_grid=256):
    """Metrics dictionary, affinity rows and per-channel curves for a trained model."""
    X = d.X
    res = {}
    p1 = proposition1_check(model, X)
    res.update(recon=p1["recon"], prop1_threshold=p1["threshold"], prop1_ok=p1["ok"])
    F = model.encode(X)
    affinity, curves = [], []
    if d.S is None:
        warnings.warn("dataset has no ground truth; reporting unsupervised diagnostics only",
                      RuntimeWarning, stacklevel=2)
        return res, affinity, curves
    K = d.K
    Fk = dominant_rows(F, K)
    try:
        res["subspace_distance"] = subspace_distance(d.S, Fk)
    except RankError:
        res["subspace_distance"] = 1.0
    try:
        res["permutation_mse"] = permutation_mse(d.S, unmix(Fk, K).Shat)
    except (RankError, DomainError):
        res["permutation_mse"] = float("nan")
    if d.A is not None and d.distortions is not None:
        rep = affinity_report(model, d.distortions, d.A, d.S)
        res.update(min_r2=rep.min_r2, sum_intercepts=rep.sum_intercepts)
        affinity = rep.rows()
        grid = sample_simplex(K, 200, 0.05, 0)
        try:
            res["curvature_residual"] = curvature_residual(model, d.distortions, d.A, grid)
        except DomainError:
            res["curvature_residual"] = float("nan")
        for m in range(d.M):
            lo, hi = rep.y_ranges[m]
            y = np.linspace(lo, hi, curves_grid)
            h = composed(model, d.distortions, m, y)
            curves += [(m + 1, yy, hh) for yy, hh in zip(y, h)]
    return res, affinity, curves




def run_trial(cfg: ExperimentConfig, seed: int, N=None, noise=None):
    """Synthesize, train and evaluate one configuration.

    Returns ``(dataset, model, report, metrics)``; ``metrics`` also holds the
    per-channel affinity ``r2`` and the wall-clock ``seconds``.
    """
    d = make_dataset(cfg, seed, N=N, noise=noise)
    segments = make_segments(cfg.M, cfg.K) if cfg.M > cfg.K else None
    t0 = time.perf_counter()
    model, report, _ = train(d.X, replace(cfg.train, seed=seed), segments=segments)
    seconds = time.perf_counter() - t0
    res, affinity, _ = evaluate(d, model, curves_grid=2)
    res["r2"] = [row["r2"] for row in affinity]
    res["seconds"] = seconds
    return d, model, report, res

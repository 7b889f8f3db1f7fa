"""Constrained autoencoder training by the augmented-Lagrangian method.

The model is a pair of channelwise network banks: encoders ``f_m`` and
decoders ``q_m``. Training minimises the mean reconstruction error
``||q(f(x)) - x||^2`` subject to ``1^T f(x_l) = 1`` for every sample (or for
every channel segment when ``M > K(K-1)/2``), via

    L = mean_l J_l + mean_l sum_p lam_pl C_pl + rho/2 mean_l sum_p C_pl^2

with Adam on the network weights and dual ascent ``lam <- lam + rho C``.
"""

from __future__ import annotations

import csv
import io
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError, TrainingError
from .network import MLPBank, PARAM_NAMES, SCALES, pack_header, unpack_header

RHO_MAX = 1e6


def make_segments(M, K):
    """Channel index sets (0-based) whose outputs must each sum to one.

    One segment covering every channel while ``M <= K(K-1)/2``; otherwise
    consecutive blocks of ``K`` channels, the last block shifted back so that
    it ends exactly at channel ``M - 1``.
    """
    if K < 3:
        raise ParameterError("segmentation needs K >= 3")
    if M < K:
        raise ParameterError(f"need M >= K, got M={M}, K={K}")
    if M <= K * (K - 1) // 2:
        return [tuple(range(M))]
    starts = list(range(0, M - K + 1, K))
    if starts[-1] + K < M:
        starts.append(M - K)
    return [tuple(range(s, s + K)) for s in starts]


@dataclass
class CnaeModel:
    """Encoder/decoder banks plus a fixed per-channel input standardisation.

    Encoders see ``(x - shift) / scale``; decoder outputs are mapped back by
    ``scale * q + shift`` so reconstruction is measured in data units.
    """

    encoders: MLPBank
    decoders: MLPBank
    segments: list = None
    shift: np.ndarray = None
    scale: np.ndarray = None

    def __post_init__(self):
        if self.encoders.M != self.decoders.M:
            raise ParameterError("encoder and decoder banks must have the same M")
        self.shift = np.zeros(self.M) if self.shift is None else np.asarray(self.shift, float).reshape(-1)
        self.scale = np.ones(self.M) if self.scale is None else np.asarray(self.scale, float).reshape(-1)
        if self.shift.shape != (self.M,) or self.scale.shape != (self.M,) or np.any(self.scale <= 0):
            raise ParameterError("shift/scale must be length-M with positive scale")
        if self.segments is None:
            self.segments = [tuple(range(self.M))]
        self.segments = [tuple(int(i) for i in seg) for seg in self.segments]
        covered = set()
        for seg in self.segments:
            if not seg or min(seg) < 0 or max(seg) >= self.M:
                raise ParameterError(f"segment {seg} outside channels 0..{self.M - 1}")
            covered.update(seg)
        if covered != set(range(self.M)):
            raise ParameterError("segments must cover every channel")

    @property
    def M(self):
        return self.encoders.M

    @property
    def P(self):
        return len(self.segments)

    @classmethod
    def init(cls, M, R=64, activation="tanh", seed=0, segments=None, use_bias=True, scale="glorot"):
        rng = np.random.default_rng(seed)
        s1, s2 = rng.integers(0, 2**63, size=2)
        return cls(MLPBank.init(M, R, activation, int(s1), use_bias, scale),
                   MLPBank.init(M, R, activation, int(s2), use_bias, scale),
                   segments)

    def copy(self):
        return CnaeModel(self.encoders.copy(), self.decoders.copy(), list(self.segments),
                         self.shift.copy(), self.scale.copy())

    def standardize(self, X):
        """Fix the input standardisation to the channel means and deviations of ``X``."""
        sd = X.std(axis=1)
        self.shift = X.mean(axis=1)
        self.scale = np.where(sd > 0, sd, 1.0)
        return self

    def _inputs(self, X):
        return (np.asarray(X, dtype=float) - self.shift[:, None]) / self.scale[:, None]

    def encode(self, X):
        return self.encoders(self._inputs(X))

    def reconstruct(self, X):
        return self.decoders(self.encode(X)) * self.scale[:, None] + self.shift[:, None]

    def segment_matrix(self):
        """``P x M`` 0/1 matrix; row ``p`` selects the channels of segment ``p``."""
        E = np.zeros((self.P, self.M))
        for p, seg in enumerate(self.segments):
            E[p, list(seg)] = 1.0
        return E


@dataclass
class DualState:
    lam: np.ndarray  # P x N
    rho: float = 100.0
    kappa: float = 1.0
    rho_max: float = RHO_MAX

    def __post_init__(self):
        self.lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        if not self.rho > 0:
            raise ParameterError("rho must be positive")
        if not self.kappa >= 1:
            raise ParameterError("kappa must be >= 1")
        if not np.all(np.isfinite(self.lam)):
            raise ParameterError("multipliers must be finite")

    @classmethod
    def zeros(cls, P, N, rho=100.0, kappa=1.0, rho_max=RHO_MAX):
        return cls(np.zeros((P, N)), rho, kappa, rho_max)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 1000
    max_outer: int = 50
    inner_epochs: int = 100
    residual_tol: float = 1e-5
    rho0: float = 100.0
    kappa: float = 1.0
    rho_max: float = RHO_MAX
    seed: int = 0
    width: int = 64
    activation: str = "tanh"
    use_bias: bool = True
    warm_start: bool = False
    standardize: bool = True
    lr_decay: float = 1.0
    schedule: str = "constant"
    check: str = "epoch"
    init: str = "glorot"

    def __post_init__(self):
        if not self.lr > 0:
            raise ParameterError("lr must be positive")
        if self.batch < 1:
            raise ParameterError("batch must be >= 1")
        if not self.residual_tol > 0:
            raise ParameterError("residual_tol must be positive")
        if self.max_outer < 0 or self.inner_epochs < 1:
            raise ParameterError("max_outer must be >= 0 and inner_epochs >= 1")
        if not self.rho0 > 0 or not self.kappa >= 1:
            raise ParameterError("need rho0 > 0 and kappa >= 1")
        if self.width < 1:
            raise ParameterError("width must be >= 1")
        if self.schedule not in ("constant", "cosine"):
            raise ParameterError(f"unknown schedule {self.schedule!r}")
        if self.check not in ("epoch", "outer"):
            raise ParameterError(f"unknown check {self.check!r}")
        if self.init not in SCALES:
            raise ParameterError(f"unknown init {self.init!r}")


REPORT_COLUMNS = ("outer_iter", "recon", "mean_sq_residual", "lambda_norm", "rho", "seconds")


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    stop_reason: str = ""
    epochs: int = 0

    def add(self, **row):
        self.rows.append(row)

    @property
    def final_residual(self):
        return self.rows[-1]["mean_sq_residual"] if self.rows else math.inf

    def series(self, key):
        return np.array([r[key] for r in self.rows])

    def without_timing(self):
        """Rows minus wall-clock time; equal across identical runs."""
        return [{k: v for k, v in r.items() if k != "seconds"} for r in self.rows]

    def to_csv(self, include_seconds=True):
        cols = REPORT_COLUMNS if include_seconds else REPORT_COLUMNS[:-1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        return buf.getvalue()


# --- objective and gradients ----------------------------------------------------


def objective(model: CnaeModel, X):
    """Mean reconstruction error and per-segment residuals ``C`` (``P x B``)."""
    X = np.asarray(X, dtype=float)
    F = model.encode(X)
    Xr = model.decoders(F) * model.scale[:, None] + model.shift[:, None]
    recon = float(np.mean(np.sum((Xr - X) ** 2, axis=0)))
    residuals = model.segment_matrix() @ F - 1.0
    return recon, residuals


def mean_sq_residual(residuals):
    """``(1/N) sum_l sum_p C_pl^2``."""
    return float(np.mean(np.sum(np.atleast_2d(residuals) ** 2, axis=0)))


def lagrangian(model, X, dual: DualState, idx=None):
    """Augmented Lagrangian on the batch ``X``; ``idx`` picks the batch's multipliers."""
    lam = dual.lam if idx is None else dual.lam[:, idx]
    recon, C = objective(model, X)
    B = X.shape[1]
    return recon + float(np.sum(lam * C)) / B + 0.5 * dual.rho * float(np.sum(C * C)) / B


def lagrangian_grad(model: CnaeModel, X, dual: DualState, idx=None):
    """Value and exact gradient of the batch Lagrangian.

    Returns ``(L, {"enc": Gradients, "dec": Gradients}, parts)`` where
    ``parts`` carries the reconstruction error and residuals of the batch.
    """
    X = np.asarray(X, dtype=float)
    B = X.shape[1]
    lam = dual.lam if idx is None else dual.lam[:, idx]
    F, tape_f = model.encoders.forward(model._inputs(X))
    Q, tape_q = model.decoders.forward(F)
    E = model.segment_matrix()
    C = E @ F - 1.0
    diff = Q * model.scale[:, None] + model.shift[:, None] - X
    recon = float(np.mean(np.sum(diff * diff, axis=0)))
    L = recon + float(np.sum(lam * C)) / B + 0.5 * dual.rho * float(np.sum(C * C)) / B

    g_dec, dF = model.decoders.backward(tape_q, 2.0 * diff * model.scale[:, None] / B)
    dF = dF + E.T @ ((lam + dual.rho * C) / B)
    g_enc, _ = model.encoders.backward(tape_f, dF)
    return L, {"enc": g_enc, "dec": g_dec}, {"recon": recon, "residuals": C}


# --- optimizer and dual step ----------------------------------------------------


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update of every array in ``params``."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for k, p in params.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


def dual_update(dual: DualState, residuals) -> DualState:
    """``lam <- lam + rho C`` then ``rho <- min(kappa rho, rho_max)``."""
    C = np.atleast_2d(np.asarray(residuals, dtype=float))
    if C.shape != dual.lam.shape:
        raise ParameterError(f"residuals {C.shape} do not match multipliers {dual.lam.shape}")
    return DualState(dual.lam + dual.rho * C, min(dual.kappa * dual.rho, dual.rho_max),
                     dual.kappa, dual.rho_max)


# --- training loop --------------------------------------------------------------


def _model_params(model):
    out = {}
    for tag, bank in (("enc", model.encoders), ("dec", model.decoders)):
        for k in PARAM_NAMES:
            if bank.use_bias or k in ("w1", "w2"):
                out[f"{tag}.{k}"] = getattr(bank, k)
    return out


def _flat_grads(grads, params):
    return {k: getattr(grads[k.split(".")[0]], k.split(".")[1]) for k in params}


def warm_start_identity(model: CnaeModel, eps=1e-2):
    """Set every encoder and decoder to an approximate identity map.

    One hidden unit is put in its near-linear regime (``tanh(eps x) / eps``
    and the sigmoid analogue, or a shifted ReLU); the other units keep their
    input weights but get zero output weight.
    """
    for bank in (model.encoders, model.decoders):
        bank.w2[:] = 0.0
        bank.b1[:, 0] = 0.0
        if bank.activation == "tanh":
            bank.w1[:, 0], bank.w2[:, 0], bank.b2[:] = eps, 1.0 / eps, 0.0
        elif bank.activation == "sigmoid":
            bank.w1[:, 0], bank.w2[:, 0], bank.b2[:] = eps, 4.0 / eps, -2.0 / eps
        else:
            shift = 1.0 / eps
            bank.w1[:, 0], bank.b1[:, 0], bank.w2[:, 0], bank.b2[:] = 1.0, shift, 1.0, -shift
    return model


def train(X, cfg: TrainConfig = TrainConfig(), segments=None, model=None, log=None):
    """Run the augmented-Lagrangian loop on the ``M x N`` observations ``X``.

    Stops once the full-data mean squared residual falls below
    ``cfg.residual_tol`` (checked after each epoch, or only at the end of
    each outer iteration when ``cfg.check == "outer"``) or after
    ``cfg.max_outer`` outer iterations. Returns ``(model, report, dual)``.
    Non-finite values raise TrainingError instead of floating-point warnings.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _train(X, cfg, segments, model, log)


def _train(X, cfg, segments, model, log):
    X = np.asarray(getattr(X, "X", X), dtype=float)
    if not np.all(np.isfinite(X)):
        raise ParameterError("observations must be finite")
    M, N = X.shape
    if model is None:
        model = CnaeModel.init(M, cfg.width, cfg.activation, cfg.seed, segments, cfg.use_bias, cfg.init)
        if cfg.standardize:
            model.standardize(X)
        if cfg.warm_start:
            warm_start_identity(model)
    dual = DualState.zeros(model.P, N, cfg.rho0, cfg.kappa, cfg.rho_max)
    report = TrainReport()
    rng = np.random.default_rng(cfg.seed + 1)
    params = _model_params(model)
    state = AdamState()
    t0 = time.perf_counter()

    def record(t):
        recon, C = objective(model, X)
        if not (math.isfinite(recon) and np.all(np.isfinite(C))):
            report.stop_reason = "diverged"
            raise TrainingError("non-finite loss during training", report)
        report.add(outer_iter=t, recon=recon, mean_sq_residual=mean_sq_residual(C),
                   lambda_norm=float(np.linalg.norm(dual.lam)), rho=float(dual.rho),
                   seconds=time.perf_counter() - t0)
        if log:
            log(report.rows[-1])
        return C

    lr = cfg.lr
    for t in range(cfg.max_outer):
        converged = False
        for ep in range(cfg.inner_epochs):
            if cfg.schedule == "cosine":
                lr_ep = 0.5 * lr * (1 + math.cos(math.pi * ep / cfg.inner_epochs))
            else:
                lr_ep = lr
            perm = rng.permutation(N)
            for start in range(0, N, cfg.batch):
                idx = perm[start:start + cfg.batch]
                L, grads, _ = lagrangian_grad(model, X[:, idx], dual, idx)
                if not math.isfinite(L):
                    report.stop_reason = "diverged"
                    raise TrainingError("non-finite Lagrangian", report)
                adam_step(params, _flat_grads(grads, params), state, lr_ep)
            report.epochs += 1
            if cfg.check != "epoch" and ep < cfg.inner_epochs - 1:
                continue
            C = model.segment_matrix() @ model.encode(X) - 1.0
            if mean_sq_residual(C) < cfg.residual_tol:
                converged = True
                break
        C = record(t + 1)
        if converged:
            report.stop_reason = "converged"
            return model, report, dual
        dual = dual_update(dual, C)
        lr *= cfg.lr_decay
    report.stop_reason = "budget"
    return model, report, dual


# --- checkpoints ----------------------------------------------------------------

_DUAL = struct.Struct("<4sIIddd")  # tag, P, N, rho, kappa, rho_max


def checkpoint_bytes(model: CnaeModel, dual: DualState = None):
    """Network header, encoder and decoder weights, segments, standardisation, optional dual state."""
    enc = model.encoders
    parts = [pack_header(enc.R, enc.activation, enc.M, enc.use_bias),
             enc.to_bytes(), model.decoders.to_bytes()]
    seg = struct.pack("<I", model.P)
    for s in model.segments:
        seg += struct.pack("<I", len(s)) + np.asarray(s, dtype="<u4").tobytes()
    parts.append(seg)
    parts.append(model.shift.astype("<f8").tobytes() + model.scale.astype("<f8").tobytes())
    if dual is None:
        parts.append(b"NODL")
    else:
        P, N = dual.lam.shape
        parts.append(_DUAL.pack(b"DUAL", P, N, dual.rho, dual.kappa, dual.rho_max))
        parts.append(dual.lam.astype("<f8").tobytes())
    return b"".join(parts)


def checkpoint_from_bytes(buf):
    hdr, off = unpack_header(buf)
    M, R = hdr["M"], hdr["R"]
    size = M * (3 * R + 1) * 8
    enc = MLPBank.from_bytes(buf, M, R, hdr["activation"], hdr["use_bias"], off)
    off += size
    dec = MLPBank.from_bytes(buf, M, R, hdr["activation"], hdr["use_bias"], off)
    off += size
    try:
        (P,) = struct.unpack_from("<I", buf, off)
        off += 4
        segments = []
        for _ in range(P):
            (n,) = struct.unpack_from("<I", buf, off)
            off += 4
            segments.append(tuple(int(i) for i in np.frombuffer(buf, "<u4", n, off)))
            off += 4 * n
    except (struct.error, ValueError) as exc:
        raise FormatError(f"truncated segment table: {exc}", offset=off) from None
    if len(buf) - off < 16 * M + 4:
        raise FormatError("truncated standardisation block", offset=len(buf))
    shift = np.frombuffer(buf, "<f8", M, off).astype(float)
    scale = np.frombuffer(buf, "<f8", M, off + 8 * M).astype(float)
    off += 16 * M
    tag = bytes(buf[off:off + 4])
    try:
        model = CnaeModel(enc, dec, segments, shift, scale)
    except ParameterError as exc:
        raise FormatError(str(exc), offset=off) from None
    if tag == b"NODL":
        return model, None
    if tag != b"DUAL" or len(buf) - off < _DUAL.size:
        raise FormatError("bad dual-state block", offset=off)
    _, P, N, rho, kappa, rho_max = _DUAL.unpack_from(buf, off)
    off += _DUAL.size
    if len(buf) - off < P * N * 8:
        raise FormatError("truncated multipliers", offset=len(buf))
    lam = np.frombuffer(buf, "<f8", P * N, off).reshape(P, N).astype(float)
    return model, DualState(lam, rho, kappa, rho_max)


def save_checkpoint(path, model, dual=None):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model, dual))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())


def proposition1_check(model: CnaeModel, X, rtol=1e-9):
    """Compare the full-data reconstruction error with the summed channel variances.

    A feasible model whose error is below ``sum_m var(x_m)`` cannot have
    collapsed to constant encoders. The best constant model reaches the
    threshold exactly, so the comparison keeps a relative margin ``rtol``
    that stops rounding from deciding that tie.
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    recon, _ = objective(model, X)
    threshold = float(np.sum(np.var(X, axis=1)))
    return {"ok": bool(recon < threshold * (1.0 - rtol)), "recon": recon, "threshold": threshold}

"""Synthetic simplex-constrained post-nonlinear mixtures ``x = g(A s)``.

Also handles the binary dataset container::

    magic  b"SCPNM1"                  6 bytes
    header <IIIII: K, M, N, flags, text_len
    X      M*N   '<f8', column-major
    S      K*N   '<f8', column-major   (flags & 1)
    A      M*K   '<f8', column-major   (flags & 2)
    V      M*N   '<f8', column-major   (flags & 4, the emitted noise)
    text   text_len bytes of UTF-8 JSON: distortion and noise specs
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError, ScpnmError
from .nonlinearity import DistortionBank

MAGIC = b"SCPNM1"
_HEADER = struct.Struct("<IIIII")
_HAS_S, _HAS_A, _HAS_V = 1, 2, 4


def sample_simplex(K, N, margin=0.0, seed=0):
    """``K x N`` matrix of flat-Dirichlet columns, shrunk so every entry is >= margin.

    The shrink is ``s -> margin + (1 - K margin) s``, which keeps columns on
    the simplex.
    """
    if K < 1 or N < 1:
        raise ParameterError("K and N must be positive")
    if not (0.0 <= margin and margin * K < 1.0):
        raise ParameterError(f"margin must lie in [0, 1/K), got {margin}")
    rng = np.random.default_rng(seed)
    E = rng.standard_exponential((K, N))
    S = E / E.sum(axis=0)
    if margin > 0:
        S = margin + (1.0 - K * margin) * S
    return S


def inject_pure_samples(S, per_vertex=1, seed=0):
    """Overwrite ``per_vertex`` random columns per component with unit vectors.

    Returns a copy of ``S`` and the indices of the injected columns, ordered
    by component.
    """
    S = np.array(S, dtype=float)
    K, N = S.shape
    if per_vertex * K > N:
        raise ParameterError("not enough columns to hold the pure samples")
    rng = np.random.default_rng(seed)
    idx = rng.choice(N, size=per_vertex * K, replace=False)
    for j, col in enumerate(idx):
        S[:, col] = 0.0
        S[j % K, col] = 1.0
    return S, np.sort(idx.reshape(per_vertex, K), axis=0).T.reshape(-1)


def sample_mixing(M, K, seed=0, max_tries=100):
    """i.i.d. standard normal ``M x K`` matrix with smallest singular value > 1e-10."""
    if M < K:
        raise ParameterError(f"need M >= K, got M={M}, K={K}")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        A = rng.standard_normal((M, K))
        if np.linalg.svd(A, compute_uv=False)[-1] > 1e-10:
            return A
    raise ScpnmError("could not draw a full-column-rank mixing matrix")


@dataclass(frozen=True)
class NoiseSpec:
    """``model`` is ``"none"``, ``"post"`` (x = g(As) + v) or ``"pre"`` (x = g(As + v))."""

    model: str = "none"
    snr_db: float = float("inf")

    def __post_init__(self):
        if self.model not in ("none", "post", "pre"):
            raise ParameterError(f"unknown noise model {self.model!r}")

    @property
    def active(self):
        return self.model != "none" and np.isfinite(self.snr_db)

    def to_dict(self):
        return {"model": self.model, "snr_db": None if np.isinf(self.snr_db) else self.snr_db}

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return cls()
        snr = d.get("snr_db")
        return cls(d.get("model", "none"), float("inf") if snr is None else float(snr))


def Post(snr_db):
    return NoiseSpec("post", snr_db)


def Pre(snr_db):
    return NoiseSpec("pre", snr_db)


@dataclass
class Dataset:
    X: np.ndarray
    S: np.ndarray = None
    A: np.ndarray = None
    distortions: DistortionBank = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    V: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def M(self):
        return self.X.shape[0]

    @property
    def N(self):
        return self.X.shape[1]

    @property
    def K(self):
        if self.S is not None:
            return self.S.shape[0]
        if self.A is not None:
            return self.A.shape[1]
        return self.meta.get("K")

    def snr_db(self):
        """Empirical SNR from the stored noise (inf when noiseless)."""
        if self.V is None or not np.any(self.V):
            return float("inf")
        Y = self.A @ self.S
        signal = self.distortions(Y) if self.noise.model == "post" else Y
        return snr_db(signal, self.V)


def snr_db(signal, noise):
    return float(10.0 * np.log10(np.sum(signal**2) / np.sum(noise**2)))


def synthesize(S, A, g: DistortionBank, noise: NoiseSpec = None, seed=0) -> Dataset:
    """Build ``X = g(A S)``, optionally with Gaussian noise scaled to an exact SNR."""
    S = np.asarray(S, dtype=float)
    A = np.asarray(A, dtype=float)
    noise = noise or NoiseSpec()
    if A.shape[1] != S.shape[0]:
        raise ParameterError(f"A is {A.shape}, S is {S.shape}: inner dimensions differ")
    if len(g) != A.shape[0]:
        raise ParameterError(f"distortion bank has {len(g)} channels, A has {A.shape[0]} rows")
    Y = A @ S
    if not noise.active:
        return Dataset(g(Y), S, A, g, NoiseSpec())
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal(Y.shape)
    signal = g(Y) if noise.model == "post" else Y
    scale = np.sqrt(np.sum(signal**2) / (np.sum(Z**2) * 10.0 ** (noise.snr_db / 10.0)))
    V = scale * Z
    X = signal + V if noise.model == "post" else g(Y + V)
    return Dataset(X, S, A, g, noise, V)


# --- persistence ----------------------------------------------------------------


def _col_major(a):
    return np.asarray(a, dtype="<f8").tobytes(order="F")


def dataset_bytes(d: Dataset) -> bytes:
    M, N = d.X.shape
    K = d.K or 0
    flags = (_HAS_S if d.S is not None else 0) | (_HAS_A if d.A is not None else 0)
    flags |= _HAS_V if d.V is not None else 0
    text = json.dumps({
        "distortions": d.distortions.to_list() if d.distortions is not None else None,
        "noise": d.noise.to_dict(),
        "meta": d.meta,
    }, sort_keys=True).encode("utf-8")
    parts = [MAGIC, _HEADER.pack(K, M, N, flags, len(text)), _col_major(d.X)]
    if d.S is not None:
        parts.append(_col_major(d.S))
    if d.A is not None:
        parts.append(_col_major(d.A))
    if d.V is not None:
        parts.append(_col_major(d.V))
    parts.append(text)
    return b"".join(parts)


def dataset_from_bytes(buf: bytes) -> Dataset:
    if len(buf) < len(MAGIC) or buf[:len(MAGIC)] != MAGIC:
        raise FormatError("missing SCPNM1 magic", offset=0)
    off = len(MAGIC)
    if len(buf) < off + _HEADER.size:
        raise FormatError("truncated header", offset=len(buf))
    K, M, N, flags, text_len = _HEADER.unpack_from(buf, off)
    off += _HEADER.size

    def block(rows, cols, what):
        nonlocal off
        n = rows * cols * 8
        if len(buf) < off + n:
            raise FormatError(f"truncated {what} block", offset=len(buf))
        arr = np.frombuffer(buf, "<f8", rows * cols, off).reshape((rows, cols), order="F")
        off += n
        return arr.astype(float)

    X = block(M, N, "X")
    S = block(K, N, "S") if flags & _HAS_S else None
    A = block(M, K, "A") if flags & _HAS_A else None
    V = block(M, N, "V") if flags & _HAS_V else None
    if len(buf) != off + text_len:
        raise FormatError(f"spec block length mismatch: expected {text_len} bytes, "
                          f"found {len(buf) - off}", offset=off)
    try:
        spec = json.loads(buf[off:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad spec block: {exc}", offset=off) from None
    bank = DistortionBank.from_list(spec["distortions"]) if spec.get("distortions") else None
    meta = spec.get("meta") or {}
    if K and S is None and A is None:
        meta.setdefault("K", K)
    return Dataset(X, S, A, bank, NoiseSpec.from_dict(spec.get("noise")), V, meta)


def save_dataset(d: Dataset, path):
    with open(path, "wb") as fh:
        fh.write(dataset_bytes(d))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())


def export_csv(d: Dataset, path):
    """One row per sample: x_1..x_M then s_1..s_K when present (17 significant digits)."""
    cols = [f"x{m + 1}" for m in range(d.M)]
    blocks = [d.X]
    if d.S is not None:
        cols += [f"s{k + 1}" for k in range(d.S.shape[0])]
        blocks.append(d.S)
    data = np.vstack(blocks).T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(cols)
        for row in data:
            w.writerow([f"{v:.17g}" for v in row])

"""One-hidden-layer scalar-to-scalar networks with hand-written backprop.

``ScalarMLP`` is a single network ``x -> w2 . act(w1 * x + b1) + b2``.
``MLPBank`` stacks ``M`` such networks with the same width and activation so
that a whole channel bank runs as a handful of array operations; row ``m`` of
every parameter array is network ``m``. Both evaluate elementwise over arrays
of inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import FormatError, ParameterError

ACTIVATIONS = ("tanh", "relu", "sigmoid")
PARAM_NAMES = ("w1", "b1", "w2", "b2")
CHECKPOINT_VERSION = 1


def activate(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return expit(z)
    raise ParameterError(f"unknown activation {name!r}")


def activate_grad(name, z, a):
    """Derivative of the activation, given pre-activation ``z`` and output ``a``."""
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(float)
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ParameterError(f"unknown activation {name!r}")


def activate_grad2(name, z, a):
    if name == "tanh":
        return -2.0 * a * (1.0 - a * a)
    if name == "relu":
        return np.zeros_like(z)
    if name == "sigmoid":
        return a * (1.0 - a) * (1.0 - 2.0 * a)
    raise ParameterError(f"unknown activation {name!r}")


def glorot_limit(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


@dataclass
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k) for k in PARAM_NAMES}


@dataclass
class ScalarMLP:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float = 0.0
    activation: str = "tanh"
    use_bias: bool = True

    def __post_init__(self):
        self.w1 = np.array(self.w1, dtype=float).reshape(-1)
        self.b1 = np.array(self.b1, dtype=float).reshape(-1)
        self.w2 = np.array(self.w2, dtype=float).reshape(-1)
        self.b2 = float(self.b2)
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if not (self.w1.size == self.b1.size == self.w2.size) or self.w1.size < 1:
            raise ParameterError("w1, b1, w2 must share a length R >= 1")

    @property
    def R(self):
        return self.w1.size

    def forward(self, x):
        """Evaluate the net; returns ``(y, tape)`` with ``tape`` kept for backward."""
        x = np.asarray(x, dtype=float)
        z = np.multiply.outer(x, self.w1) + self.b1
        a = activate(self.activation, z)
        y = a @ self.w2 + self.b2
        return y, (x, z, a)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, tape, dy):
        """Reverse pass: gradients of ``sum(dy * y)`` w.r.t. parameters and input."""
        x, z, a = tape
        dy = np.broadcast_to(np.asarray(dy, dtype=float), x.shape)
        da = np.multiply.outer(dy, self.w2)
        dz = da * activate_grad(self.activation, z, a)
        xs, dzs = x.reshape(-1), dz.reshape(-1, self.R)
        grads = Gradients(
            w1=xs @ dzs,
            b1=dzs.sum(axis=0),
            w2=np.tensordot(dy, a, axes=dy.ndim),
            b2=float(dy.sum()),
        )
        if not self.use_bias:
            grads.b1 = np.zeros_like(grads.b1)
            grads.b2 = 0.0
        dx = dz @ self.w1
        return grads, dx

    def derivative(self, x, order=1):
        """Exact first or second derivative of the network w.r.t. its input."""
        z = np.multiply.outer(np.asarray(x, dtype=float), self.w1) + self.b1
        a = activate(self.activation, z)
        if order == 1:
            return activate_grad(self.activation, z, a) @ (self.w2 * self.w1)
        return activate_grad2(self.activation, z, a) @ (self.w2 * self.w1**2)

    def weight_norms(self):
        return {"w1": float(np.linalg.norm(self.w1)), "w2": float(np.linalg.norm(self.w2))}


SCALES = ("glorot", "fan_in")


def _draw(rng, shape, scale):
    """Initial ``(w1, b1, w2, b2)`` for one or more width-R networks.

    ``glorot`` draws Glorot-uniform weights with zero biases. ``fan_in`` draws
    every parameter of a layer from ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, so
    the hidden biases spread the tanh knees over ``[-1, 1]``.
    """
    if scale not in SCALES:
        raise ParameterError(f"unknown scale policy {scale!r}; choose from {SCALES}")
    R = shape[-1]
    if scale == "glorot":
        lim = glorot_limit(1, R)
        return (rng.uniform(-lim, lim, shape), np.zeros(shape),
                rng.uniform(-lim, lim, shape), np.zeros(shape[:-1]))
    lim2 = 1.0 / np.sqrt(R)
    return (rng.uniform(-1.0, 1.0, shape), rng.uniform(-1.0, 1.0, shape),
            rng.uniform(-lim2, lim2, shape), rng.uniform(-lim2, lim2, shape[:-1]))


def init(R, activation="tanh", scale="glorot", seed=0, use_bias=True) -> ScalarMLP:
    """Random network; ``scale`` is ``"glorot"`` (zero biases) or ``"fan_in"``."""
    if R < 1:
        raise ParameterError("hidden width R must be >= 1")
    w1, b1, w2, b2 = _draw(np.random.default_rng(seed), (R,), scale)
    return ScalarMLP(w1=w1, b1=b1, w2=w2, b2=float(b2), activation=activation, use_bias=use_bias)


def forward(net: ScalarMLP, x):
    return net.forward(x)


def backward(net: ScalarMLP, tape, dy):
    return net.backward(tape, dy)


class MLPBank:
    """``M`` independent scalar networks evaluated together, one per channel."""

    def __init__(self, w1, b1, w2, b2, activation="tanh", use_bias=True):
        self.w1 = np.array(w1, dtype=float)
        self.b1 = np.array(b1, dtype=float)
        self.w2 = np.array(w2, dtype=float)
        self.b2 = np.array(b2, dtype=float).reshape(-1)
        self.activation = activation
        self.use_bias = bool(use_bias)
        if activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {activation!r}")
        if self.w1.ndim != 2 or self.w1.shape != self.b1.shape or self.w1.shape != self.w2.shape:
            raise ParameterError("w1, b1, w2 must all be M x R")
        if self.b2.shape != (self.w1.shape[0],):
            raise ParameterError("b2 must have length M")

    @classmethod
    def init(cls, M, R, activation="tanh", seed=0, use_bias=True, scale="glorot"):
        w1, b1, w2, b2 = _draw(np.random.default_rng(seed), (M, R), scale)
        return cls(w1, b1, w2, b2, activation=activation, use_bias=use_bias)

    @classmethod
    def from_nets(cls, nets):
        nets = list(nets)
        act = nets[0].activation
        if any(n.activation != act or n.R != nets[0].R for n in nets):
            raise ParameterError("all nets in a bank need the same width and activation")
        return cls(
            np.stack([n.w1 for n in nets]),
            np.stack([n.b1 for n in nets]),
            np.stack([n.w2 for n in nets]),
            np.array([n.b2 for n in nets]),
            activation=act,
            use_bias=nets[0].use_bias,
        )

    @property
    def M(self):
        return self.w1.shape[0]

    @property
    def R(self):
        return self.w1.shape[1]

    def net(self, m) -> ScalarMLP:
        return ScalarMLP(self.w1[m], self.b1[m], self.w2[m], self.b2[m],
                         activation=self.activation, use_bias=self.use_bias)

    def nets(self):
        return [self.net(m) for m in range(self.M)]

    def params(self):
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self):
        return MLPBank(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
                       self.activation, self.use_bias)

    def forward(self, X):
        """``X`` is ``M x B``; returns ``(Y, tape)`` with ``Y`` of the same shape."""
        X = np.asarray(X, dtype=float)
        Z = self.w1[:, :, None] * X[:, None, :] + self.b1[:, :, None]
        Hd = activate(self.activation, Z)
        Y = np.einsum("mr,mrb->mb", self.w2, Hd) + self.b2[:, None]
        return Y, (X, Z, Hd)

    def __call__(self, X):
        return self.forward(X)[0]

    def backward(self, tape, dY):
        X, Z, Hd = tape
        dZ = self.w2[:, :, None] * dY[:, None, :] * activate_grad(self.activation, Z, Hd)
        grads = Gradients(
            w1=np.einsum("mrb,mb->mr", dZ, X),
            b1=dZ.sum(axis=2),
            w2=np.einsum("mrb,mb->mr", Hd, dY),
            b2=dY.sum(axis=1),
        )
        if not self.use_bias:
            grads.b1 = np.zeros_like(grads.b1)
            grads.b2 = np.zeros_like(grads.b2)
        dX = np.einsum("mrb,mr->mb", dZ, self.w1)
        return grads, dX

    def weight_norms(self):
        return {
            "w1": np.linalg.norm(self.w1, axis=1),
            "w2": np.linalg.norm(self.w2, axis=1),
        }

    # --- binary serialization -------------------------------------------------
    # Layout per net, in channel order: w1 (R), b1 (R), w2 (R), b2 (1), all '<f8'.

    def to_bytes(self):
        blocks = [np.concatenate([self.w1[m], self.b1[m], self.w2[m], self.b2[m:m + 1]])
                  for m in range(self.M)]
        return np.concatenate(blocks).astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, buf, M, R, activation, use_bias=True, offset=0):
        need = M * (3 * R + 1) * 8
        if len(buf) - offset < need:
            raise FormatError("truncated network weights", offset=len(buf))
        flat = np.frombuffer(buf, dtype="<f8", count=M * (3 * R + 1), offset=offset)
        flat = flat.reshape(M, 3 * R + 1).astype(float)
        return cls(flat[:, :R], flat[:, R:2 * R], flat[:, 2 * R:3 * R], flat[:, 3 * R],
                   activation=activation, use_bias=use_bias)


HEADER = struct.Struct("<8sIIIIB")  # magic, version, R, activation id, M, use_bias
MAGIC = b"SCPNMNN1"


def pack_header(R, activation, M, use_bias=True):
    return HEADER.pack(MAGIC, CHECKPOINT_VERSION, R, ACTIVATIONS.index(activation), M, int(use_bias))


def unpack_header(buf, offset=0):
    if len(buf) - offset < HEADER.size:
        raise FormatError("truncated network header", offset=len(buf))
    magic, version, R, act, M, use_bias = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FormatError("bad network magic", offset=offset)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported network format version {version}", offset=offset + 8)
    if act >= len(ACTIVATIONS):
        raise FormatError(f"bad activation id {act}", offset=offset + 16)
    return {"R": R, "activation": ACTIVATIONS[act], "M": M, "use_bias": bool(use_bias)}, offset + HEADER.size

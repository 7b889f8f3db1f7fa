"""Invertible scalar distortions used to generate post-nonlinear mixtures.

Every distortion acts elementwise on numpy arrays. Five kinds are supported::

    SigmoidAffine(a, b):  a * sigmoid(y) + b * y
    TanhAffine(a, b):     a * tanh(y) + b * y
    ExpScale(a):          a * exp(y)
    Identity:             y
    Custom(xs, ys):       monotone piecewise-linear interpolation of a table
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import DomainError, ParameterError

WORKING_INTERVAL = (-6.0, 6.0)

KINDS = ("SigmoidAffine", "TanhAffine", "ExpScale", "Identity", "Custom")
_NPARAMS = {"SigmoidAffine": 2, "TanhAffine": 2, "ExpScale": 1, "Identity": 0}


@dataclass(frozen=True)
class Distortion:
    """A strictly monotone scalar function ``g``.

    ``params`` holds ``(a, b)`` for the affine-plus-saturation kinds, ``(a,)``
    for ExpScale, nothing for Identity, and the concatenated knot table
    ``xs + ys`` for Custom.
    """

    kind: str
    params: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown distortion kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if not all(np.isfinite(params)):
            raise ParameterError("distortion parameters must be finite")
        if self.kind == "Custom":
            if len(params) < 4 or len(params) % 2:
                raise ParameterError("Custom needs at least two (x, y) knots")
            xs, ys = self.table
            if np.any(np.diff(xs) <= 0):
                raise ParameterError("Custom knots must be strictly increasing in x")
            dy = np.diff(ys)
            if not (np.all(dy > 0) or np.all(dy < 0)):
                raise ParameterError("Custom table must be strictly monotone")
            return
        if len(params) != _NPARAMS[self.kind]:
            raise ParameterError(f"{self.kind} takes {_NPARAMS[self.kind]} parameters")
        if self.kind in ("SigmoidAffine", "TanhAffine"):
            a, b = params
            # max of the saturating core's slope: sigmoid' <= 1/4, tanh' <= 1
            core_max = 0.25 if self.kind == "SigmoidAffine" else 1.0
            if b == 0.0 and a == 0.0:
                raise ParameterError("degenerate distortion (a = b = 0)")
            same_sign = a * b >= 0.0 and b != 0.0
            if not (same_sign or abs(b) > abs(a) * core_max or b == 0.0):
                raise ParameterError(
                    f"{self.kind}({a}, {b}) is not monotone: need sign(a) == sign(b) "
                    f"or |b| > {core_max}|a|"
                )
        if self.kind == "ExpScale" and params[0] == 0.0:
            raise ParameterError("ExpScale needs a nonzero scale")

    @property
    def table(self):
        n = len(self.params) // 2
        return np.asarray(self.params[:n]), np.asarray(self.params[n:])

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        k, p = self.kind, self.params
        if k == "SigmoidAffine":
            return p[0] * expit(y) + p[1] * y
        if k == "TanhAffine":
            return p[0] * np.tanh(y) + p[1] * y
        if k == "ExpScale":
            return p[0] * np.exp(y)
        if k == "Identity":
            return y.copy() if y.ndim else y + 0.0
        xs, ys = self.table
        return _interp_extrapolate(y, xs, ys)

    def derivative(self, y, order=1):
        """Analytic first or second derivative at ``y``."""
        if order not in (1, 2):
            raise ParameterError("order must be 1 or 2")
        y = np.asarray(y, dtype=float)
        k, p = self.kind, self.params
        if k == "SigmoidAffine":
            s = expit(y)
            d1 = s * (1.0 - s)
            if order == 1:
                return p[0] * d1 + p[1]
            return p[0] * d1 * (1.0 - 2.0 * s)
        if k == "TanhAffine":
            t = np.tanh(y)
            if order == 1:
                return p[0] * (1.0 - t * t) + p[1]
            return -2.0 * p[0] * t * (1.0 - t * t)
        if k == "ExpScale":
            return p[0] * np.exp(y)
        if k == "Identity":
            return np.ones_like(y) if order == 1 else np.zeros_like(y)
        xs, ys = self.table
        if order == 2:
            return np.zeros_like(y)
        slopes = np.diff(ys) / np.diff(xs)
        idx = np.clip(np.searchsorted(xs, y, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]

    def invert(self, x, bracket=WORKING_INTERVAL):
        """Solve ``g(y) = x`` for ``y`` inside ``bracket`` by bisection.

        Raises DomainError when some ``x`` lies outside ``[g(lo), g(hi)]``.
        """
        x = np.asarray(x, dtype=float)
        lo, hi = map(float, bracket)
        if not lo < hi:
            raise DomainError("bracket must satisfy lo < hi")
        if self.kind == "Identity":
            y = x + 0.0
            if np.any((y < lo) | (y > hi)):
                raise DomainError("value outside the bracket image")
            return y
        glo, ghi = float(self(lo)), float(self(hi))
        increasing = ghi > glo
        vmin, vmax = min(glo, ghi), max(glo, ghi)
        if np.any(~np.isfinite(x)) or np.any((x < vmin) | (x > vmax)):
            raise DomainError(f"value outside [g(lo), g(hi)] = [{vmin}, {vmax}]")
        a = np.full(x.shape, lo)
        b = np.full(x.shape, hi)
        for _ in range(200):
            mid = 0.5 * (a + b)
            gm = self(mid)
            go_right = (gm < x) if increasing else (gm > x)
            a = np.where(go_right, mid, a)
            b = np.where(go_right, b, mid)
            if np.all((b - a) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
                break
        y = 0.5 * (a + b)
        # pick whichever endpoint fits better; bisection brackets the root
        cand = np.stack([a, y, b])
        err = np.abs(self(cand) - x)
        return np.take_along_axis(cand, np.argmin(err, axis=0)[None], axis=0)[0]

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d.get("params", ())))


def _interp_extrapolate(y, xs, ys):
    out = np.interp(y, xs, ys)
    left = y < xs[0]
    right = y > xs[-1]
    if np.any(left):
        out = np.where(left, ys[0] + (y - xs[0]) * (ys[1] - ys[0]) / (xs[1] - xs[0]), out)
    if np.any(right):
        out = np.where(right, ys[-1] + (y - xs[-1]) * (ys[-1] - ys[-2]) / (xs[-1] - xs[-2]), out)
    return out


def SigmoidAffine(a, b):
    return Distortion("SigmoidAffine", (a, b))


def TanhAffine(a, b):
    return Distortion("TanhAffine", (a, b))


def ExpScale(a):
    return Distortion("ExpScale", (a,))


def Identity():
    return Distortion("Identity")


def Custom(xs, ys):
    return Distortion("Custom", tuple(xs) + tuple(ys))


def evaluate(g: Distortion, y):
    return g(y)


def derivative(g: Distortion, y, order=1):
    return g.derivative(y, order)


def invert(g: Distortion, x, bracket=WORKING_INTERVAL):
    return g.invert(x, bracket)


def is_monotone(g: Distortion, interval=WORKING_INTERVAL, step=1e-3) -> bool:
    """True when ``g'`` keeps one strict sign on a grid over ``interval``."""
    lo, hi = interval
    d = g.derivative(np.arange(lo, hi + step / 2, step))
    return bool(np.all(d > 0) or np.all(d < 0))


class DistortionBank:
    """The channelwise distortion ``g = [g_1, ..., g_M]``."""

    def __init__(self, distortions: Sequence[Distortion]):
        self.distortions = tuple(distortions)
        if not self.distortions:
            raise ParameterError("a distortion bank needs at least one channel")

    def __len__(self):
        return len(self.distortions)

    def __getitem__(self, m):
        return self.distortions[m]

    def __iter__(self):
        return iter(self.distortions)

    def __eq__(self, other):
        return isinstance(other, DistortionBank) and self.distortions == other.distortions

    def __repr__(self):
        return f"DistortionBank({list(self.distortions)!r})"

    @property
    def M(self):
        return len(self.distortions)

    def __call__(self, Y):
        """Apply ``g_m`` to row ``m`` of the ``M x N`` array ``Y``."""
        Y = np.asarray(Y, dtype=float)
        if Y.shape[0] != self.M:
            raise ParameterError(f"expected {self.M} rows, got {Y.shape[0]}")
        return np.stack([g(row) for g, row in zip(self.distortions, Y)])

    def to_list(self):
        return [g.to_dict() for g in self.distortions]

    @classmethod
    def from_list(cls, items):
        return cls([Distortion.from_dict(d) for d in items])

    @classmethod
    def identity(cls, M):
        return cls([Identity() for _ in range(M)])


def benchmark_bank(M: int) -> DistortionBank:
    """The five distortions of the synthetic study, truncated to ``M``.

    g1 = 5 sigmoid(y) + 0.3 y, g2 = -3 tanh(y) - 0.2 y, g3 = 0.4 exp(y),
    g4 = -4 sigmoid(y) - 0.2 y, g5 = 5 tanh(y) + 0.3 y.

    g5's linear term is taken with a positive sign: with -0.3 the function
    turns over near |y| = 2.09 and is not invertible.
    """
    bank = [
        SigmoidAffine(5.0, 0.3),
        TanhAffine(-3.0, -0.2),
        ExpScale(0.4),
        SigmoidAffine(-4.0, -0.2),
        TanhAffine(5.0, 0.3),
    ]
    if not 1 <= M <= len(bank):
        raise ParameterError(f"benchmark bank defines 1..{len(bank)} channels, asked for {M}")
    return DistortionBank(bank[:M])


def random_bank(M: int, seed: int) -> DistortionBank:
    """Random sigmoid/tanh-plus-linear distortions, a in N(0,1), b in U[-0.5, 0.5].

    Draws that would break monotonicity are redrawn.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < M:
        a = rng.standard_normal()
        b = rng.uniform(-0.5, 0.5)
        ctor = SigmoidAffine if rng.random() < 0.5 else TanhAffine
        try:
            out.append(ctor(a, b))
        except ParameterError:
            continue
    return DistortionBank(out)

"""Weighted l1 / l2 / l-infinity norms, weak pairings, induced norms and log norms.

Vector functions operate on the trailing axis, so ``x`` of shape ``(..., n)``
returns an array of shape ``(...)``. Matrix functions take a single
``(n, n)`` array.

The three families are

* ``l2``:  ``||x|| = sqrt(x^T P x)``, pairing ``[[x; y]] = y^T P x``
* ``l1``:  ``||x|| = eta^T |x|``, pairing ``||y|| sign(y)^T [eta] x``
* ``linf``: ``||x|| = max_i |x_i| / eta_i``, pairing
  ``max_{i in I(y)} y_i x_i / eta_i^2`` over the indices ``I(y)`` attaining the max.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("l1", "l2", "linf")

# Rejects P with lambda_min / lambda_max below this.
MIN_RECIPROCAL_CONDITION = 1e-12


class NormError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NormSpec:
    """One of the three weighted norm families.

    ``weight`` is ``None`` for the unweighted norm of any dimension, a
    positive vector ``eta`` for ``l1`` / ``linf``, or a symmetric positive
    definite matrix ``P`` for ``l2``.
    """

    kind: str
    weight: np.ndarray | None = None
    _sqrt: np.ndarray | None = field(init=False, repr=False, default=None)
    _isqrt: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NormError(f"unknown norm kind {self.kind!r}; use one of {KINDS}")
        if self.weight is None:
            return
        w = np.array(self.weight, dtype=float)
        if self.kind == "l2":
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise NormError("l2 weight must be a square matrix P")
            if not np.allclose(w, w.T, rtol=0, atol=1e-12 * max(1.0, np.abs(w).max())):
                raise NormError("l2 weight P must be symmetric")
            w = 0.5 * (w + w.T)
            evals, evecs = np.linalg.eigh(w)
            if evals[0] <= 0 or evals[0] / evals[-1] < MIN_RECIPROCAL_CONDITION:
                raise NormError("l2 weight P must be positive definite and well conditioned")
            root = np.sqrt(evals)
            object.__setattr__(self, "_sqrt", (evecs * root) @ evecs.T)
            object.__setattr__(self, "_isqrt", (evecs / root) @ evecs.T)
        else:
            if w.ndim != 1:
                raise NormError(f"{self.kind} weight must be a vector eta")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise NormError(f"{self.kind} weights must be finite and strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)

    @classmethod
    def l1(cls, eta=None) -> "NormSpec":
        return cls("l1", eta)

    @classmethod
    def l2(cls, P=None) -> "NormSpec":
        return cls("l2", P)

    @classmethod
    def linf(cls, eta=None) -> "NormSpec":
        return cls("linf", eta)

    @property
    def dim(self) -> int | None:
        return None if self.weight is None else self.weight.shape[0]

    @property
    def is_weighted(self) -> bool:
        return self.weight is not None

    def eta(self, n: int) -> np.ndarray:
        """Weight vector for l1/linf, expanded to ``n`` if unweighted."""
        if self.kind == "l2":
            raise NormError("eta is only defined for l1 / linf norms")
        self.check_dim(n)
        return np.ones(n) if self.weight is None else self.weight

    def P(self, n: int) -> np.ndarray:
        if self.kind != "l2":
            raise NormError("P is only defined for l2 norms")
        self.check_dim(n)
        return np.eye(n) if self.weight is None else self.weight

    def P_sqrt(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``(P^{1/2}, P^{-1/2})``."""
        self.check_dim(n)
        if self._sqrt is None:
            return np.eye(n), np.eye(n)
        return self._sqrt, self._isqrt

    def check_dim(self, n: int):
        if self.weight is not None and self.weight.shape[0] != n:
            raise NormError(f"norm has dimension {self.weight.shape[0]}, got {n}")

    def _key(self):
        w = None if self.weight is None else (self.weight.shape, self.weight.tobytes())
        return (self.kind, w)

    def __eq__(self, other):
        if not isinstance(other, NormSpec):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __str__(self):
        if self.weight is None:
            return self.kind
        if self.kind == "l2":
            rows = ";".join(",".join(f"{v:g}" for v in row) for row in self.weight)
            return f"l2:[{rows}]"
        return f"{self.kind}:" + ",".join(f"{v:g}" for v in self.weight)


def parse_norm(text: str) -> NormSpec:
    """Parse ``l1``, ``l1:2,3``, ``linf:1,0.5``, ``l2`` or ``l2:path/to/P.txt``.

    The ``P`` file holds one whitespace- or comma-separated row per line.
    """
    kind, _, arg = text.strip().partition(":")
    kind = kind.lower()
    if kind not in KINDS:
        raise NormError(f"unknown norm kind {kind!r} in {text!r}")
    if not arg:
        return NormSpec(kind)
    if kind == "l2":
        path = Path(arg)
        if not path.exists():
            raise NormError(f"P matrix file {arg!r} not found")
        rows = [line.replace(",", " ").split() for line in path.read_text().splitlines()]
        P = np.array([[float(v) for v in r] for r in rows if r], dtype=float)
        return NormSpec("l2", P)
    try:
        eta = np.array([float(v) for v in arg.split(",")], dtype=float)
    except ValueError as exc:
        raise NormError(f"bad weight list in {text!r}") from exc
    return NormSpec(kind, eta)


def _vec(x, N: NormSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    N.check_dim(x.shape[-1])
    return x


def vec_norm(x, N: NormSpec):
    x = _vec(x, N)
    n = x.shape[-1]
    if N.kind == "l2":
        if N.weight is None:
            return np.sqrt(np.einsum("...i,...i->...", x, x))
        Px = x @ N.P(n)  # P symmetric
        return np.sqrt(np.maximum(np.einsum("...i,...i->...", Px, x), 0.0))
    eta = N.eta(n)
    if N.kind == "l1":
        return np.abs(x) @ eta
    return np.max(np.abs(x) / eta, axis=-1)


def weak_pairing(x, y, N: NormSpec):
    """The compatible weak pairing ``[[x; y]]`` (linear in ``x``)."""
    x = _vec(x, N)
    y = _vec(y, N)
    if x.shape[-1] != y.shape[-1]:
        raise NormError("pairing arguments have different dimensions")
    x, y = np.broadcast_arrays(x, y)
    n = x.shape[-1]
    if N.kind == "l2":
        return np.einsum("...i,...i->...", x @ N.P(n), y)
    eta = N.eta(n)
    if N.kind == "l1":
        return (np.abs(y) @ eta) * ((np.sign(y) * eta * x).sum(axis=-1))
    z = np.abs(y) / eta
    top = z.max(axis=-1, keepdims=True)
    terms = y * x / eta**2
    return np.where(z == top, terms, -np.inf).max(axis=-1)


def _square(B, N: NormSpec) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.ndim == 0:
        B = B.reshape(1, 1)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise NormError(f"expected a square matrix, got shape {B.shape}")
    N.check_dim(B.shape[0])
    return B


def _conjugated(B, N: NormSpec) -> np.ndarray:
    S, Si = N.P_sqrt(B.shape[0])
    return S @ B @ Si


def induced_matrix_norm(B, N: NormSpec) -> float:
    B = _square(B, N)
    n = B.shape[0]
    if N.kind == "l2":
        return float(np.linalg.norm(_conjugated(B, N), 2))
    eta = N.eta(n)
    absB = np.abs(B)
    if N.kind == "l1":
        return float(np.max((eta @ absB) / eta))
    return float(np.max((absB @ eta) / eta))


def log_norm(B, N: NormSpec) -> float:
    """Induced log norm (matrix measure) ``lim_{h->0+} (||I + hB|| - 1) / h``."""
    B = _square(B, N)
    n = B.shape[0]
    if N.kind == "l2":
        C = _conjugated(B, N)
        return float(np.linalg.eigvalsh(0.5 * (C + C.T))[-1])
    eta = N.eta(n)
    diag = np.diag(B)
    off = np.abs(B - np.diag(diag))
    if N.kind == "l1":
        return float(np.max(diag + (eta @ off) / eta))
    return float(np.max(diag + (off @ eta) / eta))

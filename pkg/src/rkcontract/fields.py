"""Vector fields with declared contraction certificates, and sampling oracles.

The estimators here return *lower* bounds on the Lipschitz and one-sided
Lipschitz suprema over a box; they are used to cross-check declared
certificates, never to produce them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .norms import NormSpec, vec_norm, weak_pairing


def make_rng(seed: int | np.random.SeedSequence | None = 0) -> np.random.Generator:
    """Counter-based (Philox) generator; every fixture passes an explicit seed."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class Certificate:
    """Declared bounds ``Lip(f) <= lip`` and ``osLip(f) <= oslip``."""

    lip: float
    oslip: float

    def __post_init__(self):
        if not self.lip > 0:
            raise ValueError("Lipschitz bound must be positive (math.inf allowed)")
        if self.oslip > self.lip:
            raise ValueError(
                f"one-sided bound {self.oslip} exceeds Lipschitz bound {self.lip}")

    @property
    def rate(self) -> float:
        """Contractivity rate ``lambda = -oslip`` (positive iff contracting)."""
        return -self.oslip


@dataclass(frozen=True, eq=False)
class VectorField:
    """``f(t, x)`` on R^n with certificates keyed by norm.

    If ``vectorized`` is true, ``rhs`` accepts ``x`` of shape ``(..., n)``;
    otherwise it is applied row by row.
    """

    n: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    certificates: Mapping[NormSpec, Certificate] = field(default_factory=dict)
    component_lips: np.ndarray | None = None
    label: str = "f"
    vectorized: bool = True

    def __post_init__(self):
        if self.component_lips is not None:
            lips = np.array(self.component_lips, dtype=float).reshape(-1)
            if lips.shape != (self.n,) or np.any(lips < 0):
                raise ValueError("component_lips must be a nonnegative n-vector")
            object.__setattr__(self, "component_lips", lips)
        for N in self.certificates:
            N.check_dim(self.n)

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.vectorized or x.ndim == 1:
            out = np.asarray(self.rhs(t, x), dtype=float)
        else:
            flat = x.reshape(-1, self.n)
            out = np.stack([np.asarray(self.rhs(t, row), dtype=float) for row in flat])
            out = out.reshape(x.shape)
        if out.shape != x.shape:
            raise ValueError(f"field returned shape {out.shape} for input {x.shape}")
        return out

    def certificate(self, N: NormSpec) -> Certificate | None:
        cert = self.certificates.get(N)
        if cert is None and N.weight is not None and self.n == 1:
            # weights scale out of every quotient in one dimension
            cert = self.certificates.get(NormSpec(N.kind))
        return cert


@dataclass(frozen=True)
class CertificateEstimate:
    norm: NormSpec
    lip_lower: float
    oslip_lower: float
    samples_used: int


Sampler = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]]


def box_pair_sampler(n: int, low: float = -5.0, high: float = 5.0,
                     eps: float = 1e-4) -> Sampler:
    """Half uniform pairs in the box, half ``(x, x + eps u)`` with random unit ``u``."""

    def sample(rng: np.random.Generator, count: int):
        x = rng.uniform(low, high, size=(count, n))
        y = rng.uniform(low, high, size=(count, n))
        k = count // 2
        u = rng.standard_normal(size=(count - k, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        y[k:] = x[k:] + eps * u
        return x, y

    return sample


def _quotients(f: VectorField, N: NormSpec, sampler: Sampler | None, count: int,
               rng, t: float):
    if count < 1:
        raise ValueError("count must be at least 1")
    sampler = sampler or box_pair_sampler(f.n)
    rng = rng if isinstance(rng, np.random.Generator) else make_rng(rng)
    x, y = sampler(rng, count)
    dx = x - y
    dist = vec_norm(dx, N)
    keep = dist > 0
    dx, dist = dx[keep], dist[keep]
    df = f(t, x[keep]) - f(t, y[keep])
    return df, dx, dist


def estimate_lipschitz(f: VectorField, N: NormSpec, sampler: Sampler | None = None,
                       count: int = 10_000, rng=0, t: float = 0.0) -> float:
    """Max sampled ``||f(x) - f(y)|| / ||x - y||``; a lower bound on ``Lip(f)``."""
    df, dx, dist = _quotients(f, N, sampler, count, rng, t)
    if dist.size == 0:
        return 0.0
    return float(np.max(vec_norm(df, N) / dist))


def estimate_one_sided_lipschitz(f: VectorField, N: NormSpec,
                                 sampler: Sampler | None = None, count: int = 10_000,
                                 rng=0, t: float = 0.0) -> float:
    """Max sampled ``[[f(x) - f(y); x - y]] / ||x - y||^2``; a lower bound on ``osLip(f)``."""
    df, dx, dist = _quotients(f, N, sampler, count, rng, t)
    if dist.size == 0:
        return -math.inf
    return float(np.max(weak_pairing(df, dx, N) / dist**2))


def estimate_certificates(f: VectorField, N: NormSpec, sampler: Sampler | None = None,
                          count: int = 10_000, seed=0, t: float = 0.0) -> CertificateEstimate:
    """Both estimates on the same sample set."""
    df, dx, dist = _quotients(f, N, sampler, count, make_rng(seed), t)
    if dist.size == 0:
        return CertificateEstimate(N, 0.0, -math.inf, 0)
    lip = float(np.max(vec_norm(df, N) / dist))
    oslip = float(np.max(weak_pairing(df, dx, N) / dist**2))
    return CertificateEstimate(N, lip, oslip, int(dist.size))


def estimate_component_lipschitz(f: VectorField, count: int = 10_000, rng=0,
                                 low: float = -5.0, high: float = 5.0,
                                 t: float = 0.0) -> np.ndarray:
    """Lower bounds on ``sup |f_i(x + delta e_i) - f_i(x)| / |delta|`` per component.

    Only coordinate ``i`` is perturbed; half the offsets are macroscopic, half
    are ``+-1e-4`` to probe the derivative.
    """
    rng = rng if isinstance(rng, np.random.Generator) else make_rng(rng)
    x = rng.uniform(low, high, size=(count, f.n))
    delta = rng.uniform(low - high, high - low, size=count)
    small = rng.random(count) < 0.5
    delta[small] = np.where(delta[small] < 0, -1e-4, 1e-4)
    delta[delta == 0] = 1e-4
    fx = f(t, x)
    out = np.zeros(f.n)
    for i in range(f.n):
        xp = x.copy()
        xp[:, i] += delta
        out[i] = np.max(np.abs(f(t, xp)[:, i] - fx[:, i]) / np.abs(delta))
    return out


def forward_euler_lipschitz_l2(h: float, d: float, lam: float, ell: float) -> float:
    """Euclidean-type bound ``sqrt(1 - 2 h d lam + (h d ell)^2)`` on ``Lip(id + h d f)``.

    Valid in any weighted l2 norm for ``osLip(f) <= -lam`` and ``Lip(f) <= ell``.
    A negative step ``h d`` cannot use the one-sided bound, so it falls back to
    the triangle-inequality value ``1 + |h d| ell``.
    """
    hd = h * d
    if hd < 0:
        return 1.0 + abs(hd) * ell
    radicand = 1.0 - 2.0 * hd * lam + (hd * ell) ** 2
    if radicand < 0:
        raise ValueError(
            f"negative radicand {radicand:.3g}: certificate has ell={ell} < lambda={lam}")
    return math.sqrt(radicand)


def forward_euler_lipschitz_general(h: float, lam: float, ell: float) -> float:
    """Any-norm bound ``exp(-h lam) + exp(h ell) - 1 - h ell`` on ``Lip(id + h f)``."""
    if h < 0:
        return 1.0 + abs(h) * ell
    return 1.0 + math.expm1(-h * lam) + (math.expm1(h * ell) - h * ell)


def l2_euler_bound(hd: float, lam: float, ell: float) -> float:
    return forward_euler_lipschitz_l2(hd, 1.0, lam, ell)


def general_euler_bound(hd: float, lam: float, ell: float) -> float:
    return forward_euler_lipschitz_general(hd, lam, ell)


EULER_BOUNDS: dict[str, Callable[[float, float, float], float]] = {
    "l2": l2_euler_bound,
    "general": general_euler_bound,
}

"""Implicit Runge-Kutta steps solved through auxiliary dynamics.

The stage equations ``y = 1 (x) x + h (A (x) I) F(t, y)`` are the equilibria of

    dy/dt = Q^{-1} ( -y + 1 (x) x + h (A (x) I) F(t, y) ),

with ``Q = I`` or ``Q = A (x) I``. When that flow is strongly contracting the
stage solution exists and is unique, and forward Euler on the flow with a
small enough step converges to it. Stage arrays are laid out as ``(..., s, n)``
internally and flattened to ``(..., s*n)`` (stage-major) at the interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .explicit_rk import stage_times
from .fields import Certificate, VectorField, forward_euler_lipschitz_general
from .norms import NormSpec, induced_matrix_norm, log_norm, vec_norm
from .tableau import ButcherTableau, derive

Q_KINDS = ("identity", "kron_A")
CRITERIA = ("cor1_norm", "cor2_l2", "aux_column", "asserted", "explicit")


class NotWellDefined(ValueError):
    """No certificate for unique solvability of the stage equations."""


class StageSolveError(RuntimeError):
    """The stage iteration did not reach the residual tolerance."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class AuxiliaryConfig:
    """Settings for the auxiliary dynamics and the stage iteration.

    ``aux_lambda`` / ``aux_ell`` are user-asserted contraction rate and
    Lipschitz bound of the auxiliary field; when left as ``None`` they are
    derived from the field's certificate in ``norm`` (the component norm).
    ``d`` holds the positive stage weights for ``q_kind="kron_A"``.
    """

    q_kind: str = "identity"
    aux_lambda: float | None = None
    aux_ell: float | None = None
    residual_tol: float = 1e-10
    max_iters: int = 100_000
    stage_time: str = "unscaled"
    norm: NormSpec | None = None
    d: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.q_kind not in Q_KINDS:
            raise ValueError(f"q_kind must be one of {Q_KINDS}")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if (self.aux_lambda is None) != (self.aux_ell is None):
            raise ValueError("aux_lambda and aux_ell must be given together")
        if self.aux_lambda is not None:
            if not self.aux_lambda > 0:
                raise ValueError("aux_lambda must be positive")
            if math.isfinite(self.aux_ell) and self.aux_lambda > self.aux_ell:
                raise ValueError("aux_lambda cannot exceed aux_ell")
        if self.d is not None and any(not v > 0 for v in self.d):
            raise ValueError("stage weights d must be positive")


@dataclass(frozen=True)
class WellDefinednessReport:
    criterion: str
    margin: float
    h: float
    norm: NormSpec | None = None
    asserted: bool = False

    @property
    def certified(self) -> bool:
        return self.margin > 0


@dataclass(frozen=True)
class AuxCertificate:
    """Rate ``lam`` (osLip <= -lam) and Lipschitz bound ``ell`` of the auxiliary field."""

    lam: float
    ell: float
    criterion: str
    asserted: bool = False


@dataclass(frozen=True)
class StageSolveResult:
    y_star: np.ndarray
    residual: float
    iterations: int
    aux_step: float
    aux_rho: float
    converged: bool
    stage_derivatives: np.ndarray  # F(t, y_star), same layout as y_star
    aux_certificate: AuxCertificate | None = None


def abs_A_norm1(T: ButcherTableau) -> float:
    """Max column sum of ``|A|``."""
    return float(np.abs(T.A).sum(axis=0).max())


def _column_pattern(T: ButcherTableau, oslip: float, lip: float) -> float:
    """``max_j (a_jj oslip + lip sum_{i != j} |a_ij|)`` for ``diag(A) >= 0``."""
    A = T.A
    diag = np.diag(A)
    if np.any(diag < 0):
        raise NotWellDefined(f"{T.label}: negative diagonal entry in A")
    off = np.abs(A - np.diag(diag)).sum(axis=0)
    return float(np.max(diag * oslip + lip * off))


def certify_well_defined_cor1(T: ButcherTableau, h: float, lip_component: float,
                              norm: NormSpec | None = None) -> WellDefinednessReport:
    """Margin ``1 - h ||A||_1 Lip(f)`` for the composite l1-of-component norm."""
    if not lip_component > 0:
        raise ValueError("component Lipschitz constant must be positive")
    margin = 1.0 - h * abs_A_norm1(T) * lip_component
    return WellDefinednessReport("cor1_norm", margin, h, norm)


def _stage_weights(T: ButcherTableau, d) -> np.ndarray:
    d = np.ones(T.s) if d is None else np.asarray(d, dtype=float).reshape(-1)
    if d.shape != (T.s,) or np.any(d <= 0):
        raise ValueError("stage weights d must be a positive s-vector")
    return d


def _A_inverse(T: ButcherTableau) -> np.ndarray:
    A = T.A
    if np.linalg.matrix_rank(A) < T.s:
        raise NotWellDefined(f"{T.label}: A is singular")
    return np.linalg.inv(A)


def certify_well_defined_cor2(T: ButcherTableau, h: float, oslip: float, d=None,
                              norm: NormSpec | None = None) -> WellDefinednessReport:
    """Margin ``-(mu_{2,[d]^{1/2}}(-A^{-1}) + h oslip)`` for ``Q = A (x) I``."""
    d = _stage_weights(T, d)
    mu = log_norm(-_A_inverse(T), NormSpec.l2(np.diag(d)))
    return WellDefinednessReport("cor2_l2", -(mu + h * oslip), h, norm)


def certify_well_defined_column(T: ButcherTableau, h: float, oslip: float, lip: float,
                                norm: NormSpec | None = None) -> WellDefinednessReport:
    """Margin from the block-column one-sided bound of the ``Q = I`` auxiliary field.

    ``1 - h max_j (a_jj oslip + lip sum_{i != j} |a_ij|)``; needs ``diag(A) >= 0``.
    """
    return WellDefinednessReport(
        "aux_column", 1.0 - h * _column_pattern(T, oslip, lip), h, norm)


def assert_well_defined(h: float, margin: float, norm: NormSpec | None = None
                        ) -> WellDefinednessReport:
    """Record a user-asserted contraction margin (not verified here)."""
    return WellDefinednessReport("asserted", float(margin), h, norm, asserted=True)


def _best_identity_report(T: ButcherTableau, h: float, cert: Certificate,
                          norm: NormSpec | None) -> WellDefinednessReport:
    reports = [certify_well_defined_cor1(T, h, cert.lip, norm)]
    if np.all(np.diag(T.A) >= 0):
        reports.append(certify_well_defined_column(T, h, cert.oslip, cert.lip, norm))
    return max(reports, key=lambda r: r.margin)


def certify_well_defined(T: ButcherTableau, h: float, cert: Certificate,
                         norm: NormSpec | None = None) -> WellDefinednessReport:
    """Best margin among the criteria applicable to ``T`` and ``norm``."""
    if T.is_explicit:
        return WellDefinednessReport("explicit", math.inf, h, norm)
    reports = [_best_identity_report(T, h, cert, norm)]
    if norm is not None and norm.kind == "l2" and np.linalg.matrix_rank(T.A) == T.s:
        reports.append(certify_well_defined_cor2(T, h, cert.oslip, None, norm))
    return max(reports, key=lambda r: r.margin)


def _component_norm(f: VectorField, cfg: AuxiliaryConfig) -> NormSpec:
    if cfg.norm is not None:
        return cfg.norm
    if cfg.q_kind == "kron_A":
        for N in f.certificates:
            if N.kind == "l2":
                return N
        return NormSpec.l2()
    if f.certificates:
        return next(iter(f.certificates))
    return NormSpec.l1()


def auxiliary_certificate(T: ButcherTableau, f: VectorField, cfg: AuxiliaryConfig,
                          h: float) -> AuxCertificate:
    """Contraction rate and Lipschitz bound of the auxiliary field.

    ``Q = I``: the larger of the Lipschitz-based rate ``1 - h ||A||_1 ell``
    and the block-column rate; Lipschitz bound ``1 + h ||A||_1 ell``.
    ``Q = A (x) I``: rate ``-(mu(-A^{-1}) + h oslip)`` in the ``[d] (x) P``
    norm; Lipschitz bound ``||A^{-1}|| + h ell``.
    """
    if cfg.aux_lambda is not None:
        return AuxCertificate(cfg.aux_lambda, cfg.aux_ell, "asserted", asserted=True)
    N = _component_norm(f, cfg)
    cert = f.certificate(N)
    if cert is None:
        raise NotWellDefined(
            f"field {f.label!r} has no certificate in norm {N}; "
            "pass aux_lambda/aux_ell to assert one")
    if cfg.q_kind == "identity":
        wd = _best_identity_report(T, h, cert, N)
        ell = 1.0 + h * abs_A_norm1(T) * cert.lip
        return AuxCertificate(wd.margin, ell, wd.criterion)
    if N.kind != "l2":
        raise NotWellDefined("q_kind='kron_A' needs an l2 component norm")
    d = _stage_weights(T, cfg.d)
    wd = certify_well_defined_cor2(T, h, cert.oslip, d, N)
    Ainv_norm = induced_matrix_norm(_A_inverse(T), NormSpec.l2(np.diag(d)))
    return AuxCertificate(wd.margin, Ainv_norm + h * cert.lip, wd.criterion)


class _StageSystem:
    """Batched evaluation of the stage residual and the auxiliary field."""

    def __init__(self, T: ButcherTableau, f: VectorField, cfg: AuxiliaryConfig,
                 h: float, t: float):
        self.T, self.f, self.cfg, self.h = T, f, cfg, h
        self.times = stage_times(T, t, h, cfg.stage_time)
        self.hA = h * T.A
        self._lu = lu_factor(T.A) if cfg.q_kind == "kron_A" else None
        if self._lu is not None:
            _A_inverse(T)
        self.norm = _component_norm(f, cfg)
        self.d = _stage_weights(T, cfg.d)

    def derivatives(self, y: np.ndarray) -> np.ndarray:
        F = np.empty_like(y)
        for i in range(self.T.s):
            F[..., i, :] = self.f(self.times[i], y[..., i, :])
        if not np.all(np.isfinite(F)):
            raise FloatingPointError("non-finite field value in stage iteration")
        return F

    def residual(self, x: np.ndarray, y: np.ndarray):
        F = self.derivatives(y)
        r = x[..., None, :] - y + np.einsum("ij,...jn->...in", self.hA, F)
        return r, F

    def apply_Qinv(self, r: np.ndarray) -> np.ndarray:
        if self._lu is None:
            return r
        s = self.T.s
        z = np.moveaxis(r, -2, 0)
        sol = lu_solve(self._lu, z.reshape(s, -1)).reshape(z.shape)
        return np.moveaxis(sol, 0, -2)

    def composite_norm(self, r: np.ndarray) -> np.ndarray:
        per_stage = vec_norm(r, self.norm)
        if self.cfg.q_kind == "identity":
            return per_stage.sum(axis=-1)
        return np.sqrt((self.d * per_stage**2).sum(axis=-1))


def _composite_normspec(norm: NormSpec, cfg: AuxiliaryConfig, s: int, n: int
                        ) -> NormSpec | None:
    if cfg.q_kind == "identity" and norm.kind == "l1":
        return NormSpec.l1(np.tile(norm.eta(n), s))
    if cfg.q_kind == "kron_A" and norm.kind == "l2":
        d = np.ones(s) if cfg.d is None else np.asarray(cfg.d, dtype=float)
        return NormSpec.l2(np.kron(np.diag(d), norm.P(n)))
    return None


def auxiliary_field(T: ButcherTableau, f: VectorField, cfg: AuxiliaryConfig,
                    h: float, t: float, x) -> VectorField:
    """The auxiliary vector field on R^{sn} for fixed ``(t, x)``.

    The returned field carries its certificate when the composite norm is
    one of the weighted families (l1 composite of l1, or ``[d] (x) P``).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    sys = _StageSystem(T, f, cfg, h, t)
    s, n = T.s, f.n

    def rhs(_tau, y):
        y = np.asarray(y, dtype=float)
        stages = y.reshape(*y.shape[:-1], s, n)
        r, _ = sys.residual(np.broadcast_to(x, stages.shape[:-2] + (n,)), stages)
        return sys.apply_Qinv(r).reshape(y.shape)

    certs = {}
    comp = _composite_normspec(sys.norm, cfg, s, n)
    if comp is not None:
        try:
            aux = auxiliary_certificate(T, f, cfg, h)
            certs[comp] = Certificate(aux.ell, -aux.lam)
        except (NotWellDefined, ValueError):
            pass
    return VectorField(s * n, rhs, certs, label=f"aux[{T.label},{f.label}]")


def select_aux_step(lam: float, ell: float, points: int = 40) -> tuple[float, float]:
    """Grid minimizer of ``exp(-k lam) + exp(k ell) - 1 - k ell`` over ``[1e-4, 10] / ell``."""
    if not (lam > 0 and ell > 0):
        raise NotWellDefined(f"auxiliary dynamics not contracting (lambda={lam:.3g})")
    grid = np.logspace(math.log10(1e-4 / ell), math.log10(10.0 / ell), points)
    rhos = [forward_euler_lipschitz_general(k, lam, ell) for k in grid]
    i = int(np.argmin(rhos))
    if not rhos[i] < 1.0:
        raise NotWellDefined("no auxiliary step size achieves a contraction factor below 1")
    return float(grid[i]), float(rhos[i])


def solve_stages(T: ButcherTableau, f: VectorField, t: float, x, h: float,
                 cfg: AuxiliaryConfig | None = None, y0=None) -> StageSolveResult:
    """Solve the stage equations by forward Euler on the auxiliary dynamics.

    ``x`` may be a batch ``(..., n)``; the iteration stops when every batch
    member's stage residual is within ``cfg.residual_tol``. Exhausting
    ``cfg.max_iters`` returns the last iterate with ``converged=False``.
    """
    cfg = cfg or AuxiliaryConfig()
    x = np.asarray(x, dtype=float)
    s, n = T.s, f.n
    if x.shape[-1] != n:
        raise ValueError(f"state has dimension {x.shape[-1]}, field expects {n}")
    aux = auxiliary_certificate(T, f, cfg, h)
    step, aux_rho = select_aux_step(aux.lam, aux.ell)
    sys = _StageSystem(T, f, cfg, h, t)

    if y0 is None:
        y = np.repeat(x[..., None, :], s, axis=-2)
    else:
        y = np.array(y0, dtype=float).reshape(x.shape[:-1] + (s, n))

    iterations = 0
    while True:
        r, F = sys.residual(x, y)
        res = float(np.max(sys.composite_norm(r), initial=0.0))
        if res <= cfg.residual_tol or iterations >= cfg.max_iters:
            break
        y = y + step * sys.apply_Qinv(r)
        iterations += 1

    flat = x.shape[:-1] + (s * n,)
    return StageSolveResult(
        y_star=y.reshape(flat),
        residual=res,
        iterations=iterations,
        aux_step=step,
        aux_rho=aux_rho,
        converged=res <= cfg.residual_tol,
        stage_derivatives=F.reshape(flat),
        aux_certificate=aux,
    )


def _solved(T, f, t, x, h, cfg) -> StageSolveResult:
    result = solve_stages(T, f, t, x, h, cfg)
    if not result.converged:
        raise StageSolveError(
            f"stage iteration stopped at residual {result.residual:.3g} after "
            f"{result.iterations} iterations", result)
    return result


def implicit_step(T: ButcherTableau, f: VectorField, t: float, x, h: float,
                  cfg: AuxiliaryConfig | None = None) -> np.ndarray:
    """``x + h (b (x) I)^T F(t, y*)`` with ``y*`` from :func:`solve_stages`."""
    x = np.asarray(x, dtype=float)
    res = _solved(T, f, t, x, h, cfg)
    F = res.stage_derivatives.reshape(x.shape[:-1] + (T.s, f.n))
    return x + h * np.einsum("i,...in->...n", T.b, F)


def implicit_step_rewritten(T: ButcherTableau, f: VectorField, t: float, x, h: float,
                            cfg: AuxiliaryConfig | None = None) -> np.ndarray:
    """Stage average plus ``h (v (x) I)^T F(t, y*)`` with ``v = b - A^T 1 / s``."""
    x = np.asarray(x, dtype=float)
    res = _solved(T, f, t, x, h, cfg)
    shape = x.shape[:-1] + (T.s, f.n)
    Y = res.y_star.reshape(shape)
    F = res.stage_derivatives.reshape(shape)
    v = derive(T).v
    return Y.mean(axis=-2) + h * np.einsum("i,...in->...n", v, F)


def with_tolerance(cfg: AuxiliaryConfig | None, tol: float) -> AuxiliaryConfig:
    return replace(cfg or AuxiliaryConfig(), residual_tol=tol)

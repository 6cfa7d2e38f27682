"""Closed-form contraction factors of implicit RK dynamics in l2, l1 and l-infinity.

Each function returns a :class:`ContractionCertificate` listing every
assumption it checked with a signed margin (nonnegative or positive means
satisfied, see ``strict``). A certificate is ``certified`` only when every
assumption holds and ``rho < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Certificate
from .implicit_rk import WellDefinednessReport, certify_well_defined
from .norms import NormSpec
from .tableau import ButcherTableau, derive, is_algebraically_stable

THEOREMS = ("thm3_l2", "thm4_l1", "thm5_linf")


class AssumptionViolated(ValueError):
    pass


@dataclass(frozen=True)
class Assumption:
    id: str
    satisfied: bool
    margin: float
    note: str = ""


@dataclass(frozen=True)
class ContractionCertificate:
    theorem: str
    norm: NormSpec
    h: float
    rho: float | None
    assumptions: tuple[Assumption, ...]
    details: dict = field(default_factory=dict)
    well_definedness: WellDefinednessReport | None = None

    @property
    def certified(self) -> bool:
        return (self.rho is not None and all(a.satisfied for a in self.assumptions)
                and 0.0 <= self.rho < 1.0)

    def failing(self) -> list[str]:
        return [a.id for a in self.assumptions if not a.satisfied]

    def as_dict(self) -> dict:
        out = {
            "theorem": self.theorem,
            "norm": str(self.norm),
            "h": self.h,
            "rho": self.rho,
            "certified": self.certified,
        }
        for a in self.assumptions:
            out[f"{a.id}.satisfied"] = a.satisfied
            out[f"{a.id}.margin"] = a.margin
        out.update(self.details)
        if self.well_definedness is not None:
            wd = self.well_definedness
            out["wd.criterion"] = wd.criterion
            out["wd.margin"] = wd.margin
            out["wd.asserted"] = wd.asserted
        return out


def _check(id_, margin, strict=False, note="", slack=0.0) -> Assumption:
    ok = margin + slack > 0 if strict else margin + slack >= 0
    return Assumption(id_, bool(ok), float(margin), note)


def _rate_assumptions(lam: float, ell: float) -> list[Assumption]:
    return [
        _check("A2_rate", lam, strict=True, note="osLip(f) <= -lambda, lambda > 0"),
        _check("A3_lipschitz", ell - lam if ell > 0 else -math.inf,
               note="Lip(f) <= ell with ell >= lambda"),
    ]


def _well_definedness(T: ButcherTableau, h: float, lam: float, ell: float,
                      norm: NormSpec) -> WellDefinednessReport:
    try:
        cert = Certificate(ell, -lam)
    except ValueError:
        return WellDefinednessReport("invalid_certificate", -math.inf, h, norm)
    return certify_well_defined(T, h, cert, norm)


def _a1(wd: WellDefinednessReport) -> Assumption:
    return Assumption("A1_well_defined", wd.certified, wd.margin, wd.criterion)


def rho_l2(T: ButcherTableau, h: float, lam2: float, ell2: float,
           norm: NormSpec | None = None, well_defined: WellDefinednessReport | None = None,
           tol: float = 1e-12) -> ContractionCertificate:
    """Contraction factor in a weighted l2 norm for algebraically stable tableaus.

    ``rho2 = sqrt(1 - 2 h lam2 ||b||_1 / ||I + h ell2 |A| ||^2)``, the matrix norm
    being the spectral norm of ``[b]^{1/2} (I + h ell2 |A|) [b]^{-1/2}``.
    Requires ``b > 0`` strictly, so the weighted norm is a norm.
    """
    norm = norm or NormSpec.l2()
    if norm.kind != "l2":
        raise ValueError("rho_l2 needs an l2 norm")
    alg = is_algebraically_stable(T, tol)
    wd = well_defined or _well_definedness(T, h, lam2, ell2, norm)
    assumptions = [
        _a1(wd),
        *_rate_assumptions(lam2, ell2),
        _check("A4_M_psd", alg.m_margin, note="smallest eigenvalue of M", slack=tol),
        _check("A4_b_nonneg", alg.b_margin, slack=tol),
        _check("b_positive", alg.b_margin, strict=True,
               note="weighted norm needs b > 0"),
        _check("h_positive", h, strict=True),
    ]
    details = {"alg_stable": bool(alg), "M_min_eig": alg.m_margin}
    rho = None
    if alg and alg.b_margin > 0 and h >= 0:
        b = T.b
        sq = np.sqrt(b)
        W = sq[:, None] * (np.eye(T.s) + h * ell2 * np.abs(T.A)) / sq[None, :]
        wnorm = float(np.linalg.norm(W, 2))
        rad = 1.0 - 2.0 * h * lam2 * float(np.abs(b).sum()) / wnorm**2
        details["weighted_norm"] = wnorm
        details["radicand"] = rad
        if rad >= 0:
            rho = math.sqrt(rad)
        else:
            assumptions.append(_check("radicand_nonneg", rad))
    return ContractionCertificate("thm3_l2", norm, float(h), rho, tuple(assumptions),
                                  details, wd)


def _column_max(A: np.ndarray, lam: float, ell: float) -> float:
    """``max_j (-lam a_jj + ell sum_{i != j} |a_ij|)``."""
    diag = np.diag(A)
    off = np.abs(A - np.diag(diag))
    return float(np.max(-lam * diag + ell * off.sum(axis=0)))


def _row_max(A: np.ndarray, lam: float, ell: float) -> float:
    """``max_i (-lam a_ii + ell sum_{j != i} |a_ij|)``."""
    diag = np.diag(A)
    off = np.abs(A - np.diag(diag))
    return float(np.max(-lam * diag + ell * off.sum(axis=1)))


def _component_lips(comp_lips, ell: float, n_default: int = 1):
    if comp_lips is None:
        return np.full(n_default, ell), True
    lips = np.asarray(comp_lips, dtype=float).reshape(-1)
    if lips.size == 0 or np.any(lips < 0):
        raise ValueError("component Lipschitz constants must be nonnegative")
    return lips, False


def _rho_l1_like(theorem: str, T: ButcherTableau, h: float, lam: float, ell: float,
                 comp_lips, norm: NormSpec, well_defined) -> ContractionCertificate:
    der = derive(T)
    A, v, s = T.A, der.v, T.s
    vsum = float(v.sum())
    lips, defaulted = _component_lips(comp_lips, ell)
    # A4 condition uses the column pattern for both theorems; the l-inf
    # factor's denominator uses the row pattern. Both are recorded.
    col = _column_max(A, lam, ell)
    row = _row_max(A, lam, ell)
    denom_pattern = col if theorem == "thm4_l1" else row
    wd = well_defined or _well_definedness(T, h, lam, ell, norm)
    assumptions = [
        _a1(wd),
        *_rate_assumptions(lam, ell),
        _check("A4_diag_nonneg", float(np.min(np.diag(A)))),
        _check("A4_v_nonneg", float(np.min(v))),
        _check("A4_rate_gap", lam * vsum - col, strict=True,
               note="lambda v^T 1 > max_j(-lambda a_jj + ell sum_{i!=j} |a_ij|)"),
        _check("A5_step_rate", 1.0 - h * lam * vsum, note="1 >= h lambda v^T 1"),
        _check("A5_step_component", 1.0 - h * s * float(lips.max()) * float(v.max()),
               note="1 >= h s l_i v_k" + (" (l_i defaulted to ell)" if defaulted else "")),
        _check("h_positive", h, strict=True),
    ]
    details = {
        "v_sum": vsum,
        "column_pattern": col,
        "row_pattern": row,
        "component_lips_defaulted": defaulted,
    }
    denom = 1.0 - h * denom_pattern
    details["denominator"] = denom
    rho = None
    if denom > 0:
        rho = (1.0 - h * lam * vsum) / denom
    else:
        assumptions.append(_check("denominator_positive", denom, strict=True))
    return ContractionCertificate(theorem, norm, float(h), rho, tuple(assumptions),
                                  details, wd)


def rho_l1(T: ButcherTableau, h: float, lam1: float, ell1: float, comp_lips=None,
           norm: NormSpec | None = None,
           well_defined: WellDefinednessReport | None = None) -> ContractionCertificate:
    """Contraction factor in a weighted l1 norm.

    ``rho1 = (1 - h lam1 v^T 1) / (1 - h max_j(-lam1 a_jj + ell1 sum_{i != j} |a_ij|))``
    with ``v = b - A^T 1 / s``. ``comp_lips`` are per-component Lipschitz
    constants of ``f_i`` in ``x_i``; they default to ``ell1`` (flagged).
    """
    norm = norm or NormSpec.l1()
    if norm.kind != "l1":
        raise ValueError("rho_l1 needs an l1 norm")
    return _rho_l1_like("thm4_l1", T, h, lam1, ell1, comp_lips, norm, well_defined)


def rho_linf(T: ButcherTableau, h: float, lam_inf: float, ell_inf: float, comp_lips=None,
             norm: NormSpec | None = None,
             well_defined: WellDefinednessReport | None = None) -> ContractionCertificate:
    """Contraction factor in a weighted l-infinity norm.

    Same numerator as :func:`rho_l1`; the denominator takes the row pattern
    ``max_i(-lam a_ii + ell sum_{j != i} |a_ij|)`` while the rate-gap assumption
    keeps the column pattern. Both coincide for one-stage tableaus.
    """
    norm = norm or NormSpec.linf()
    if norm.kind != "linf":
        raise ValueError("rho_linf needs an linf norm")
    return _rho_l1_like("thm5_linf", T, h, lam_inf, ell_inf, comp_lips, norm,
                        well_defined)


def max_certified_step_l1(T: ButcherTableau, lam1: float, ell1: float,
                          comp_lips=None) -> float:
    """Largest ``h`` meeting both step conditions of the l1 theorem.

    ``min(1 / (lam1 v^T 1), min_{i,k} 1 / (s l_i v_k))``; ``math.inf`` when
    both are unbounded (``v = 0``).

    Raises
    ------
    AssumptionViolated
        If ``diag(A) >= 0``, ``v >= 0`` or the rate gap fails.
    """
    der = derive(T)
    A, v, s = T.A, der.v, T.s
    if np.any(np.diag(A) < 0):
        raise AssumptionViolated(f"{T.label}: negative diagonal entry in A")
    if np.any(v < 0):
        raise AssumptionViolated(f"{T.label}: v has a negative entry")
    vsum = float(v.sum())
    if not lam1 * vsum > _column_max(A, lam1, ell1):
        raise AssumptionViolated(f"{T.label}: rate-gap condition fails")
    lips, _ = _component_lips(comp_lips, ell1)
    caps = [math.inf]
    if lam1 * vsum > 0:
        caps.append(1.0 / (lam1 * vsum))
    worst = float(lips.max()) * float(v.max()) * s
    if worst > 0:
        caps.append(1.0 / worst)
    return min(caps)


def certify(T: ButcherTableau, norm: NormSpec, h: float, cert: Certificate,
            comp_lips=None) -> ContractionCertificate:
    """Dispatch to the theorem matching ``norm.kind``."""
    lam, ell = cert.rate, cert.lip
    if norm.kind == "l2":
        return rho_l2(T, h, lam, ell, norm)
    if norm.kind == "l1":
        return rho_l1(T, h, lam, ell, comp_lips, norm)
    return rho_linf(T, h, lam, ell, comp_lips, norm)

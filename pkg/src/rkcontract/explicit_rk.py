"""Explicit Runge-Kutta stepping and the recursive Lipschitz bound on the step map.

The bound propagates stage Lipschitz constants ``rho_i`` through the rewrite

    y_i = sum_j (a_ij / d_i) (y_j + h d_i f(y_j)) - sum_j sum_{l<j} (h a_ij a_jl / d_i) f(y_l)

with ``rho_1 = 1``, and combines them with the weights ``b``. Two variants of
the final combination are offered:

``form="basic"``
    ``rho = sum_i |b_i / d0| Lip(id + h d0 f) rho_i``, the default for the
    figure curves. It treats ``x -> x + h d0 f(y_i)`` as if ``y_i = x``,
    and it is *not* a valid Lipschitz bound for multi-stage methods: heun2 on
    ``f = -x`` with ``h = 0.5`` has factor 0.625 while this form gives 0.375.

``form="corrected"`` (used for certification)
    Adds the omitted cross term ``ell sum_i sum_{l<i} |h b_i a_il / d0| rho_l``,
    i.e. the update is handled exactly like an extra stage with row ``b``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .fields import EULER_BOUNDS, VectorField
from .tableau import ButcherTableau, derive

EulerBound = Callable[[float, float, float], float]

FORMS = ("basic", "corrected")


class NotCertifiable(ValueError):
    """The bound's preconditions fail for this tableau / parameter set."""


@dataclass(frozen=True)
class ExplicitRhoBound:
    method: str
    h: float
    rho: float
    stage_rhos: np.ndarray
    euler_bound_kind: str
    form: str = "basic"


def _resolve_bound(euler_bound) -> tuple[EulerBound, str]:
    if isinstance(euler_bound, str):
        try:
            return EULER_BOUNDS[euler_bound], euler_bound
        except KeyError:
            raise ValueError(f"unknown euler bound {euler_bound!r}") from None
    name = getattr(euler_bound, "__name__", "custom")
    return euler_bound, name


def _row_rho(row: np.ndarray, d_row: float, A: np.ndarray, rhos: np.ndarray,
             h: float, lam: float, ell: float, bound: EulerBound) -> float:
    """Lipschitz bound for ``x + h sum_j row_j f(y_j)`` given stage bounds ``rhos``."""
    k = row.shape[0]
    L = bound(h * d_row, lam, ell)
    first = sum(abs(row[j] / d_row) * L * rhos[j] for j in range(k) if row[j] != 0)
    second = sum(
        abs(h * row[j] * A[j, l] / d_row) * rhos[l]
        for j in range(k) for l in range(j) if row[j] != 0 and A[j, l] != 0
    )
    return first + ell * second


def explicit_lipschitz_bound(T: ButcherTableau, h: float, lam: float, ell: float,
                             euler_bound="l2", form: str = "basic") -> ExplicitRhoBound:
    """Recursive Lipschitz bound ``rho`` of one explicit RK step.

    Parameters
    ----------
    T : ButcherTableau
        Explicit tableau.
    h : float
        Step size, ``h >= 0``.
    lam, ell : float
        ``osLip(f) <= -lam`` and ``Lip(f) <= ell`` with ``0 < lam <= ell``.
    euler_bound : str or callable
        ``"l2"``, ``"general"`` or a function ``(h*d, lam, ell) -> float``
        bounding ``Lip(id + h d f)``.
    form : {"basic", "corrected"}
        See the module docstring.

    Raises
    ------
    NotCertifiable
        If a nonzero row has ``d_i = 0`` or ``d0 = 0``.
    """
    if not T.is_explicit:
        raise ValueError(f"{T.label} is not explicit")
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    if h < 0:
        raise ValueError("step size must be nonnegative")
    if not (lam > 0 and ell > 0 and ell >= lam):
        raise ValueError(f"need 0 < lambda <= ell, got lambda={lam}, ell={ell}")
    bound, kind = _resolve_bound(euler_bound)
    der = derive(T)
    A, b = T.A, T.b
    s = T.s
    if der.d0 == 0:
        raise NotCertifiable(f"{T.label}: sum of weights d0 is zero")
    rhos = np.ones(s)
    for i in range(1, s):
        if not np.any(A[i, :i]):
            continue  # stage equals x_k
        if der.d[i] == 0:
            raise NotCertifiable(f"{T.label}: d_{i + 1} = 0 with a nonzero row")
        rhos[i] = _row_rho(A[i, :i], der.d[i], A, rhos, h, lam, ell, bound)
    L0 = bound(h * der.d0, lam, ell)
    rho = sum(abs(b[i] / der.d0) * L0 * rhos[i] for i in range(s))
    if form == "corrected":
        rho += ell * sum(
            abs(h * b[i] * A[i, l] / der.d0) * rhos[l]
            for i in range(s) for l in range(i) if b[i] != 0 and A[i, l] != 0
        )
    rhos.setflags(write=False)
    return ExplicitRhoBound(T.label, float(h), float(rho), rhos, kind, form)


def stage_times(T: ButcherTableau, t: float, h: float, stage_time: str = "unscaled"):
    """``t + c_i`` as written in the stage equations, or the usual ``t + c_i h``."""
    if stage_time == "unscaled":
        return t + T.c
    if stage_time == "scaled_by_h":
        return t + T.c * h
    raise ValueError(f"unknown stage_time {stage_time!r}")


def explicit_step(T: ButcherTableau, f: VectorField, t: float, x, h: float,
                  stage_time: str = "unscaled") -> np.ndarray:
    """One explicit RK step; ``x`` may be a batch of shape ``(..., n)``."""
    if not T.is_explicit:
        raise ValueError(f"{T.label} is not explicit")
    x = np.asarray(x, dtype=float)
    A, b = T.A, T.b
    times = stage_times(T, t, h, stage_time)
    k = []
    for i in range(T.s):
        y = x.copy()
        for j in range(i):
            if A[i, j] != 0:
                y += (h * A[i, j]) * k[j]
        ki = f(times[i], y)
        if not np.all(np.isfinite(ki)):
            raise FloatingPointError(f"non-finite field value at stage {i + 1}")
        k.append(ki)
    out = x.copy()
    for i in range(T.s):
        if b[i] != 0:
            out += (h * b[i]) * k[i]
    return out


@dataclass(frozen=True)
class SweepRow:
    method: str
    h: float
    rho: float
    certified: bool
    note: str = ""


def rho_sweep(T: ButcherTableau, lam: float, ell: float, euler_bound="l2",
              h_grid: Iterable[float] = (), form: str = "basic") -> list[SweepRow]:
    """Evaluate the bound on a grid of positive step sizes.

    Grid points where the bound is not available are kept with
    ``rho = nan`` and ``certified = False``.
    """
    grid = [float(h) for h in h_grid]
    if not grid:
        raise ValueError("empty step-size grid")
    if any(not h > 0 for h in grid):
        raise ValueError("all grid step sizes must be positive")
    rows = []
    for h in grid:
        try:
            r = explicit_lipschitz_bound(T, h, lam, ell, euler_bound, form).rho
        except (NotCertifiable, ValueError) as exc:
            rows.append(SweepRow(T.label, h, math.nan, False, str(exc)))
            continue
        rows.append(SweepRow(T.label, h, r, r < 1.0))
    return rows


def default_h_grid(points: int = 1000, h_max: float = 1.0) -> np.ndarray:
    return h_max * np.arange(1, points + 1) / points


def write_sweep_csv(rows: Sequence[SweepRow], out=None) -> str:
    """Write ``method,h,rho,certified`` rows; returns the text when ``out`` is None."""
    buf = out if out is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "h", "rho", "certified"])
    for r in rows:
        w.writerow([r.method, repr(r.h), repr(r.rho), "true" if r.certified else "false"])
    return buf.getvalue() if out is None else ""

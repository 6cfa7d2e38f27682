"""Built-in test systems, empirical contraction measurement and figure data.

Every certified cell of the (method, system, norm, h) matrix is checked by
stepping trajectory pairs and comparing the worst one-step ratio
``||g(x) - g(x')|| / ||x - x'||`` against the certified factor.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .contraction import certify
from .explicit_rk import (default_h_grid, explicit_lipschitz_bound, explicit_step,
                          rho_sweep, write_sweep_csv, NotCertifiable)
from .fields import Certificate, VectorField, make_rng
from .implicit_rk import AuxiliaryConfig, implicit_step
from .norms import NormSpec, induced_matrix_norm, log_norm, vec_norm
from .tableau import (CATALOG_NAMES, EXPLICIT_NAMES, ButcherTableau, catalog_lookup)

SYSTEM_NAMES = ("linear_rot", "scalar_sat", "diag_l1")

# one-step ratios may exceed the certificate by this much (roundoff)
SOUNDNESS_TOL = 1e-9

# stage solves inside the harness run close to machine precision so that the
# pair differences (down to 1e-6) are not swamped by solver error
HARNESS_RESIDUAL_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class TestSystemSpec:
    """A contracting system with certificates that are tight or provably valid.

    ``matrix`` is set for linear systems ``f(x) = B x``; their certificate in
    any norm is exact (``lip = ||B||``, ``oslip = mu(B)``).
    """

    __test__ = False  # not a pytest class

    name: str
    params: dict
    field: VectorField
    matrix: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.field.n

    def certificate(self, N: NormSpec) -> Certificate:
        if self.matrix is not None:
            return Certificate(induced_matrix_norm(self.matrix, N),
                               log_norm(self.matrix, N))
        cert = self.field.certificate(N)
        if cert is None:
            raise KeyError(f"{self.name} has no certificate in {N}")
        return cert

    def field_with(self, N: NormSpec) -> VectorField:
        """The field with its certificate in ``N`` attached."""
        certs = dict(self.field.certificates)
        certs[N] = self.certificate(N)
        return VectorField(self.n, self.field.rhs, certs, self.field.component_lips,
                           self.field.label)


def _check_params(lam: float, ell: float):
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if ell < lam:
        raise ValueError(f"need ell >= lambda, got ell={ell}, lambda={lam}")


def _linear(name: str, B: np.ndarray, params: dict) -> TestSystemSpec:
    B = np.array(B, dtype=float)
    B.setflags(write=False)
    BT = B.T.copy()

    def rhs(t, x):
        return x @ BT

    norms = (NormSpec.l1(), NormSpec.l2(), NormSpec.linf())
    certs = {N: Certificate(induced_matrix_norm(B, N), log_norm(B, N)) for N in norms}
    f = VectorField(B.shape[0], rhs, certs, np.abs(np.diag(B)), label=name)
    return TestSystemSpec(name, params, f, B)


def builtin_system(name: str, lam: float = 1.0, ell: float = 2.0, n: int = 3
                   ) -> TestSystemSpec:
    """Construct a named test system.

    ``linear_rot``
        ``B = [[-lam, w], [-w, -lam]]`` with ``w = sqrt(ell^2 - lam^2)``:
        exact l2 certificate ``(ell, -lam)``.
    ``scalar_sat``
        ``f(x) = -lam x - (ell - lam) tanh(x)``; ``f'`` ranges over
        ``[-ell, -lam)`` so ``(ell, -lam)`` is valid in every norm.
    ``diag_l1``
        ``f(x) = -lam x`` on R^n, tight in every weighted norm (``ell`` unused).
    """
    if name == "linear_rot":
        _check_params(lam, ell)
        w = math.sqrt(ell**2 - lam**2)
        return _linear(name, [[-lam, w], [-w, -lam]], {"lam": lam, "ell": ell})
    if name == "diag_l1":
        if not lam > 0:
            raise ValueError("lambda must be positive")
        if n < 1:
            raise ValueError("dimension must be positive")
        return _linear(name, -lam * np.eye(n), {"lam": lam, "n": n})
    if name == "scalar_sat":
        _check_params(lam, ell)
        gap = ell - lam

        def rhs(t, x):
            return -lam * x - gap * np.tanh(x)

        cert = Certificate(ell, -lam)
        certs = {NormSpec(k): cert for k in ("l1", "l2", "linf")}
        f = VectorField(1, rhs, certs, [ell], label=name)
        return TestSystemSpec(name, {"lam": lam, "ell": ell}, f)
    raise KeyError(f"unknown system {name!r}; choose from {', '.join(SYSTEM_NAMES)}")


Stepper = Callable[[float, np.ndarray], np.ndarray]


def make_stepper(T: ButcherTableau, f: VectorField, h: float,
                 cfg: AuxiliaryConfig | None = None) -> Stepper:
    if T.is_explicit:
        return lambda t, x: explicit_step(T, f, t, x, h)
    cfg = cfg or AuxiliaryConfig(residual_tol=HARNESS_RESIDUAL_TOL)
    return lambda t, x: implicit_step(T, f, t, x, h, cfg)


@dataclass(frozen=True)
class CellCertificate:
    certified: bool
    rho: float | None
    theorem: str
    note: str = ""


def certify_method(T: ButcherTableau, sys: TestSystemSpec, N: NormSpec, h: float
                   ) -> CellCertificate:
    """Certificate for ``T`` on ``sys`` in ``N``.

    Explicit tableaus use the corrected recursive bound (l2-type Euler bound
    in l2 norms, the general one otherwise); implicit ones the closed-form
    theorem for the norm family.
    """
    cert = sys.certificate(N)
    if T.is_explicit:
        lam, ell = cert.rate, cert.lip
        if not lam > 0:
            return CellCertificate(False, None, "explicit", "field not contracting")
        bound = "l2" if N.kind == "l2" else "general"
        try:
            rho = explicit_lipschitz_bound(T, h, lam, ell, bound, form="corrected").rho
        except NotCertifiable as exc:
            return CellCertificate(False, None, "explicit", str(exc))
        return CellCertificate(rho < 1.0, rho, f"explicit_{bound}")
    c = certify(T, N, h, cert, sys.field.component_lips)
    return CellCertificate(c.certified, c.rho, c.theorem, ",".join(c.failing()))


@dataclass(frozen=True)
class EmpiricalContractionReport:
    method: str
    norm: NormSpec
    h: float
    pairs: int
    steps: int
    max_ratio: float
    certified_rho: float | None
    sound: bool | None


def sample_pairs(rng: np.random.Generator, pairs: int, n: int, low: float = -2.0,
                 high: float = 2.0, sep_range=(1e-6, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Pairs in ``[low, high]^n`` with Euclidean separation log-uniform in ``sep_range``."""
    x = rng.uniform(low, high, size=(pairs, n))
    u = rng.standard_normal(size=(pairs, n))
    norms = np.linalg.norm(u, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        u[bad] = rng.standard_normal(size=(int(bad.sum()), n))
        norms = np.linalg.norm(u, axis=1)
    lo, hi = np.log(sep_range[0]), np.log(sep_range[1])
    sep = np.exp(rng.uniform(lo, hi, size=pairs))
    y = x + (sep / norms)[:, None] * u
    coincident = np.all(x == y, axis=1)
    if np.any(coincident):  # resample: separation underflowed
        y[coincident] = x[coincident] + sep_range[1] * u[coincident] / norms[coincident, None]
    return x, y


def empirical_contraction_factor(stepper: Stepper, sys: TestSystemSpec, N: NormSpec,
                                 pairs: int = 1000, steps: int = 1, seed=0, h: float = 0.0,
                                 method: str = "", certified_rho: float | None = None,
                                 t0: float = 0.0, tol: float = SOUNDNESS_TOL
                                 ) -> EmpiricalContractionReport:
    """Worst per-step ratio over ``pairs`` trajectory pairs and ``steps`` steps.

    Deterministic for a given seed. ``sound`` is ``None`` when no certified
    factor is supplied (exploratory run).
    """
    if pairs < 1 or steps < 1:
        raise ValueError("pairs and steps must be positive")
    rng = make_rng(seed)
    x, y = sample_pairs(rng, pairs, sys.n)
    both = np.concatenate([x, y])
    worst = 0.0
    t = t0
    for _ in range(steps):
        dist = vec_norm(both[:pairs] - both[pairs:], N)
        nxt = stepper(t, both)
        new = vec_norm(nxt[:pairs] - nxt[pairs:], N)
        live = dist > 0
        if np.any(live):
            worst = max(worst, float(np.max(new[live] / dist[live])))
        both = nxt
        t += h
    sound = None if certified_rho is None else bool(worst <= certified_rho + tol)
    return EmpiricalContractionReport(method, N, h, pairs, steps, worst, certified_rho,
                                      sound)


def default_norms(n: int) -> tuple[NormSpec, ...]:
    """One weighted representative per family, sized for dimension ``n``."""
    P = np.diag(1.0 + 0.5 * np.arange(n))
    if n >= 2:
        P[0, 1] = P[1, 0] = 0.25
    eta1 = 1.0 + np.arange(n, dtype=float)
    etainf = np.array([1.0, 0.5, 2.0, 1.5][:n] + [1.0] * max(0, n - 4))
    return NormSpec.l2(P), NormSpec.l1(eta1), NormSpec.linf(etainf)


DEFAULT_H_VALUES = (0.05, 0.1, 0.25, 0.5, 1.0)


def default_systems() -> tuple[TestSystemSpec, ...]:
    return (builtin_system("linear_rot", 1.0, 2.0),
            builtin_system("scalar_sat", 1.0, 2.0),
            builtin_system("diag_l1", 1.0, n=3))


@dataclass(frozen=True)
class CellResult:
    method: str
    system: str
    norm: str
    h: float
    certified: bool
    rho: float | None
    theorem: str
    max_ratio: float
    sound: bool | None
    note: str = ""


def _run_cell(index: int, T: ButcherTableau, sys: TestSystemSpec, N: NormSpec, h: float,
              pairs: int, steps: int, master_seed: int) -> CellResult:
    cc = certify_method(T, sys, N, h)
    if not cc.certified:
        return CellResult(T.label, sys.name, str(N), h, False, cc.rho, cc.theorem,
                          math.nan, None, cc.note)
    f = sys.field_with(N)
    cfg = AuxiliaryConfig(residual_tol=HARNESS_RESIDUAL_TOL, norm=N)
    stepper = make_stepper(T, f, h, cfg)
    seed = np.random.SeedSequence(master_seed, spawn_key=(index,))
    rep = empirical_contraction_factor(stepper, sys, N, pairs, steps, seed, h,
                                       T.label, cc.rho)
    return CellResult(T.label, sys.name, str(N), h, True, cc.rho, cc.theorem,
                      rep.max_ratio, rep.sound)


def soundness_matrix(methods: Sequence[str] = CATALOG_NAMES,
                     systems: Sequence[TestSystemSpec] | None = None,
                     h_values: Sequence[float] = DEFAULT_H_VALUES, pairs: int = 1000,
                     steps: int = 2, seed: int = 0, workers: int = 1,
                     norms: Callable[[int], Sequence[NormSpec]] = default_norms
                     ) -> list[CellResult]:
    """Evaluate every (method, system, norm, h) cell.

    Cells are independent; ``workers > 1`` runs them on a thread pool. Each
    cell seeds its own generator from ``(seed, cell index)``.
    """
    systems = default_systems() if systems is None else systems
    jobs = []
    for m in methods:
        T = catalog_lookup(m)
        for sys in systems:
            for N in norms(sys.n):
                for h in h_values:
                    jobs.append((len(jobs), T, sys, N, float(h), pairs, steps, seed))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda job: _run_cell(*job), jobs))
    return [_run_cell(*job) for job in jobs]


def write_matrix_csv(cells: Sequence[CellResult], out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["method", "system", "norm", "h", "certified", "rho", "theorem",
                "max_ratio", "sound"])
    for c in cells:
        w.writerow([c.method, c.system, c.norm, c.h, c.certified,
                    "" if c.rho is None else repr(c.rho), c.theorem,
                    "" if math.isnan(c.max_ratio) else repr(c.max_ratio),
                    "" if c.sound is None else c.sound])


FIGURE_CONFIGS = (("fig1.csv", 1.0, 2.0), ("fig2.csv", 2.0, 2.0))


@dataclass(frozen=True)
class FigureSummary:
    path: Path
    lam: float
    ell: float
    min_rho: dict = field(default_factory=dict)
    rho_at_first: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        """Every method dips below 1 somewhere on the grid."""
        return all(v < 1.0 for v in self.min_rho.values())


def reproduce_figures(output_dir, grid: int = 1000, configs=FIGURE_CONFIGS,
                      h_max: float = 1.0, form: str = "basic", euler_bound="l2",
                      plot: bool = False) -> list[FigureSummary]:
    """Write ``method,h,rho,certified`` curves for the five explicit methods.

    With ``plot=True`` a PNG is rendered next to each CSV (needs matplotlib).
    """
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h_grid = default_h_grid(grid, h_max)
    summaries = []
    for fname, lam, ell in configs:
        rows = []
        mins, firsts = {}, {}
        for m in EXPLICIT_NAMES:
            r = rho_sweep(catalog_lookup(m), lam, ell, euler_bound, h_grid, form)
            rows.extend(r)
            vals = np.array([row.rho for row in r])
            mins[m] = float(np.nanmin(vals))
            firsts[m] = float(vals[0])
        path = out_dir / fname
        with path.open("w", newline="") as fh:
            write_sweep_csv(rows, fh)
        summaries.append(FigureSummary(path, lam, ell, mins, firsts))
        if plot:
            _plot(rows, path.with_suffix(".png"), lam, ell)
    return summaries


def _plot(rows, path: Path, lam: float, ell: float):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for m in EXPLICIT_NAMES:
        pts = [(r.h, r.rho) for r in rows if r.method == m]
        ax.plot(*zip(*pts), label=m)
    ax.axhline(1.0, color="k", lw=0.5)
    ax.set_xlabel("h")
    ax.set_ylabel("rho")
    ax.set_title(f"lambda={lam:g}, ell={ell:g}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

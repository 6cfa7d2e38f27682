"""Butcher tableaus, the method catalog, and tableau-level structural quantities.

Coefficients are kept as exact rationals (:class:`fractions.Fraction`) and
converted to float arrays once at construction, so catalog entries can be
compared exactly while the numerical code works on ``numpy`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class TableauError(ValueError):
    """Malformed tableau: inconsistent dimensions or non-finite entries."""


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise TableauError(f"cannot parse coefficient {value!r}") from exc
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise TableauError(f"cannot interpret coefficient {value!r}") from exc
    if not math.isfinite(value):
        raise TableauError(f"non-finite coefficient {value!r}")
    return Fraction(value)


def _as_rows(A) -> list[list]:
    if isinstance(A, np.ndarray):
        A = A.tolist()
    if not isinstance(A, (list, tuple)):
        return [[A]]
    return [list(r) if isinstance(r, (list, tuple, np.ndarray)) else [r] for r in A]


def _as_vector(x) -> list:
    return list(np.ravel(np.asarray(x, dtype=object)))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """An ``s``-stage Runge-Kutta tableau ``(A, b, c)``.

    Use :func:`make_tableau` or :func:`catalog_lookup` rather than the
    constructor; they validate and convert the coefficients.
    """

    A_exact: tuple[tuple[Fraction, ...], ...]
    b_exact: tuple[Fraction, ...]
    c_exact: tuple[Fraction, ...]
    name: str | None = None
    A: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)
    c: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = len(self.b_exact)
        if s == 0:
            raise TableauError("tableau needs at least one stage")
        if len(self.A_exact) != s or any(len(row) != s for row in self.A_exact):
            raise TableauError(f"A must be {s}x{s} to match b")
        if len(self.c_exact) != s:
            raise TableauError(f"c must have {s} entries to match b")
        as_float = lambda seq: np.array([float(v) for v in seq], dtype=float)
        object.__setattr__(self, "A", _frozen(np.array([as_float(r) for r in self.A_exact])))
        object.__setattr__(self, "b", _frozen(as_float(self.b_exact)))
        object.__setattr__(self, "c", _frozen(as_float(self.c_exact)))

    @property
    def s(self) -> int:
        return len(self.b_exact)

    @property
    def is_explicit(self) -> bool:
        return all(
            self.A_exact[i][j] == 0
            for i in range(self.s) for j in range(i, self.s)
        )

    @property
    def label(self) -> str:
        return self.name or f"rk{self.s}"

    def __eq__(self, other):
        if not isinstance(other, ButcherTableau):
            return NotImplemented
        return (self.A_exact, self.b_exact, self.c_exact) == (
            other.A_exact, other.b_exact, other.c_exact)

    def __hash__(self):
        return hash((self.A_exact, self.b_exact, self.c_exact))


def make_tableau(A, b, c=None, name: str | None = None) -> ButcherTableau:
    """Validate and build a tableau.

    Entries may be ints, floats, :class:`~fractions.Fraction` or strings such
    as ``"3/16"``. When ``c`` is omitted the row sums of ``A`` are used.
    """
    b_ex = tuple(_to_fraction(v) for v in _as_vector(b))
    A_ex = tuple(tuple(_to_fraction(v) for v in row) for row in _as_rows(A))
    if c is None:
        c_ex = tuple(sum(row, Fraction(0)) for row in A_ex)
    else:
        c_ex = tuple(_to_fraction(v) for v in _as_vector(c))
    return ButcherTableau(A_ex, b_ex, c_ex, name=name)


# c omitted for the explicit methods -> row sums of A.
_CATALOG_SPECS = {
    "forward_euler": ([["0"]], ["1"], None),
    "heun2": ([["0", "0"], ["1", "0"]], ["1/2", "1/2"], None),
    "heun3": (
        [["0", "0", "0"], ["1/3", "0", "0"], ["0", "2/3", "0"]],
        ["1/4", "0", "3/4"],
        None,
    ),
    "rk4_classic": (
        [["0", "0", "0", "0"], ["1/2", "0", "0", "0"],
         ["0", "1/2", "0", "0"], ["0", "0", "1", "0"]],
        ["1/6", "1/3", "1/3", "1/6"],
        None,
    ),
    "ssprk5": (
        [["0", "0", "0", "0", "0"],
         ["1/4", "0", "0", "0", "0"],
         ["1/8", "1/8", "0", "0", "0"],
         ["0", "0", "1/2", "0", "0"],
         ["3/16", "-3/8", "3/8", "9/16", "0"]],
        ["1/6", "0", "2/3", "1/6", "0"],
        None,
    ),
    "implicit_euler": ([["1"]], ["1"], ["1"]),
    "implicit_midpoint": ([["1/2"]], ["1"], ["1/2"]),
}

CATALOG_NAMES = tuple(_CATALOG_SPECS)
EXPLICIT_NAMES = ("forward_euler", "heun2", "heun3", "rk4_classic", "ssprk5")
IMPLICIT_NAMES = ("implicit_euler", "implicit_midpoint")


def catalog_lookup(name: str) -> ButcherTableau:
    try:
        A, b, c = _CATALOG_SPECS[name]
    except KeyError:
        raise KeyError(
            f"unknown method {name!r}; choose from {', '.join(CATALOG_NAMES)}"
        ) from None
    return make_tableau(A, b, c, name=name)


@dataclass(frozen=True)
class TableauDerived:
    """Structural quantities consumed by the contraction theorems.

    d0 : sum of the weights ``b``.
    d : row sums of the strictly lower part of ``A``.
    v : ``b - A^T 1 / s``.
    M : ``[b] A + A^T [b] - b b^T`` (symmetric).
    """

    d0: float
    d: np.ndarray
    v: np.ndarray
    M: np.ndarray


def derive(T: ButcherTableau) -> TableauDerived:
    s = T.s
    A, b = T.A_exact, T.b_exact
    d0 = sum(b, Fraction(0))
    d = [sum((A[i][j] for j in range(i)), Fraction(0)) for i in range(s)]
    v = [b[j] - sum((A[i][j] for i in range(s)), Fraction(0)) / s for j in range(s)]
    M = [[b[i] * A[i][j] + A[j][i] * b[j] - b[i] * b[j] for j in range(s)]
         for i in range(s)]
    to_arr = lambda x: _frozen(np.array(x, dtype=float))
    return TableauDerived(
        d0=float(d0),
        d=to_arr([float(x) for x in d]),
        v=to_arr([float(x) for x in v]),
        M=to_arr([[float(x) for x in row] for row in M]),
    )


@dataclass(frozen=True)
class AlgebraicStability:
    """Result of the algebraic stability check; truthy when stable."""

    stable: bool
    m_margin: float  # smallest eigenvalue of M
    b_margin: float  # smallest weight

    def __bool__(self):
        return self.stable


def is_algebraically_stable(T: ButcherTableau, tol: float = 1e-12) -> AlgebraicStability:
    M = derive(T).M
    m_min = float(np.linalg.eigvalsh(M)[0])
    b_min = float(np.min(T.b))
    return AlgebraicStability(m_min >= -tol and b_min >= -tol, m_min, b_min)


def parse_tableau(text: str, name: str | None = None) -> ButcherTableau:
    """Parse the plain-text format: ``s``, ``s`` rows of ``A``, then ``b``, then ``c``.

    Tokens are whitespace separated decimal or fraction literals; ``#``
    starts a comment.
    """
    tokens: list[str] = []
    for line in text.splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens:
        raise TableauError("empty tableau description")
    try:
        s = int(tokens[0])
    except ValueError as exc:
        raise TableauError(f"stage count must be an integer, got {tokens[0]!r}") from exc
    if s <= 0:
        raise TableauError("stage count must be positive")
    expected = 1 + s * s + 2 * s
    if len(tokens) != expected:
        raise TableauError(
            f"expected {expected - 1} coefficients for s={s}, got {len(tokens) - 1}")
    body = tokens[1:]
    A = [body[i * s:(i + 1) * s] for i in range(s)]
    b = body[s * s:s * s + s]
    c = body[s * s + s:]
    return make_tableau(A, b, c, name=name)


def load_tableau(path: str | Path) -> ButcherTableau:
    path = Path(path)
    return parse_tableau(path.read_text(), name=path.stem)


def format_tableau(T: ButcherTableau) -> str:
    rows: Iterable[Sequence[Fraction]] = [*T.A_exact, T.b_exact, T.c_exact]
    lines = [str(T.s)] + [" ".join(str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"

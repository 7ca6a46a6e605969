"""Canonical operators x, P = -i d/dx and the deformed momentum P_f = P + i f'.

The deformed momentum arises equivalently as the similarity transform
``exp(f) P exp(-f)``; both constructions are provided and their agreement is
a genuine O(h^2) statement checked in the test suite.  The deformation
function f is restricted to real values: a complex f would break the adjoint
relations the Hamiltonian constructions rely on.

Identity checks such as ``[x, P] = i I`` cannot hold entrywise for finite
matrices (the commutator is traceless while i I is not); they hold in the
only sense available to a discretization, namely acting on smooth functions.
:func:`action_difference` and :func:`canonical_commutator_defect` implement
that semantics against a fixed corpus of smooth test vectors.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as npoly

from .grid import Grid1D, derivative_matrices
from .tolerances import DEFAULT as TOL

# exp(f) overflows float64 near 709; similarity constructions stay well clear
MAX_SAFE_EXPONENT = 300.0


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """Declarative description of a function on the grid (f, W or V).

    Polynomial specs (ascending coefficients) carry exact derivatives and
    antiderivatives by coefficient shifting.  Tabulated specs hold one sample
    per grid node and differentiate through the grid's D1/D2 matrices, unless
    exact derivative samples were recorded at construction time (as happens
    for antiderivatives, whose derivative is the integrand itself).
    """

    coefficients: tuple[float, ...] | None = None
    samples: np.ndarray | None = None
    derivative_samples: np.ndarray | None = None

    def __post_init__(self):
        if (self.coefficients is None) == (self.samples is None):
            raise ValueError("exactly one of coefficients/samples must be given")
        if self.coefficients is not None and len(self.coefficients) == 0:
            raise ValueError("polynomial coefficient list must be non-empty")

    # -- constructors ------------------------------------------------------

    @classmethod
    def polynomial(cls, coefficients) -> "FunctionSpec":
        return cls(coefficients=tuple(float(c) for c in coefficients))

    @classmethod
    def tabulated(cls, values, derivative_values=None) -> "FunctionSpec":
        d = None if derivative_values is None else np.asarray(derivative_values, float)
        return cls(samples=np.asarray(values, dtype=float), derivative_samples=d)

    @classmethod
    def zero(cls) -> "FunctionSpec":
        return cls.polynomial([0.0])

    @classmethod
    def parse(cls, text: str) -> "FunctionSpec":
        """Parse the textual form ``poly:c0,c1,...`` or ``table:<path.csv>``."""
        kind, _, body = text.partition(":")
        if kind == "poly" and body:
            try:
                return cls.polynomial([float(c) for c in body.split(",")])
            except ValueError as exc:
                raise ValueError(f"bad polynomial spec {text!r}") from exc
        if kind == "table" and body:
            values = np.loadtxt(Path(body), dtype=float, ndmin=1)
            return cls.tabulated(values)
        raise ValueError(f"function spec must look like 'poly:c0,c1,...' or "
                         f"'table:<path>', got {text!r}")

    # -- evaluation --------------------------------------------------------

    @property
    def is_polynomial(self) -> bool:
        return self.coefficients is not None

    def _check_length(self, g: Grid1D):
        if self.samples is not None and len(self.samples) != g.n:
            raise ValueError(
                f"tabulated function has {len(self.samples)} values, grid has {g.n} nodes"
            )

    def values(self, g: Grid1D) -> np.ndarray:
        if self.is_polynomial:
            return npoly.polyval(g.nodes, self.coefficients)
        self._check_length(g)
        return np.asarray(self.samples)

    def derivative_values(self, g: Grid1D) -> np.ndarray:
        if self.is_polynomial:
            return npoly.polyval(g.nodes, npoly.polyder(self.coefficients))
        self._check_length(g)
        if self.derivative_samples is not None:
            return np.asarray(self.derivative_samples)
        d1, _ = derivative_matrices(g)
        return d1 @ self.samples

    def second_derivative_values(self, g: Grid1D) -> np.ndarray:
        if self.is_polynomial:
            return npoly.polyval(g.nodes, npoly.polyder(self.coefficients, 2))
        self._check_length(g)
        if self.derivative_samples is not None:
            d1, _ = derivative_matrices(g)
            return d1 @ self.derivative_samples
        _, d2 = derivative_matrices(g)
        return d2 @ self.samples

    def antiderivative(self, g: Grid1D | None = None) -> "FunctionSpec":
        """Antiderivative anchored at 0 (the integral from 0 to x).

        Exact coefficient shift for polynomials.  Tabulated specs integrate by
        the trapezoid rule on the grid, anchored at the node nearest x = 0,
        and retain the integrand as exact derivative samples.
        """
        if self.is_polynomial:
            return FunctionSpec.polynomial(npoly.polyint(self.coefficients))
        if g is None:
            raise ValueError("tabulated antiderivative needs the grid")
        self._check_length(g)
        from scipy.integrate import cumulative_trapezoid

        raw = cumulative_trapezoid(self.samples, g.nodes, initial=0.0)
        anchor = int(np.argmin(np.abs(g.nodes)))
        return FunctionSpec.tabulated(raw - raw[anchor], derivative_values=self.samples)

    def __neg__(self) -> "FunctionSpec":
        if self.is_polynomial:
            return FunctionSpec.polynomial([-c for c in self.coefficients])
        d = None if self.derivative_samples is None else -self.derivative_samples
        return FunctionSpec.tabulated(-self.samples, derivative_values=d)

    def max_abs(self, g: Grid1D) -> float:
        return float(np.max(np.abs(self.values(g))))

    def derivative_scale(self, g: Grid1D) -> float:
        """max(1, |f'|, |f''|, |f'''|) over the grid; feeds tolerance scales."""
        if self.is_polynomial:
            c = self.coefficients
            tops = [
                float(np.max(np.abs(npoly.polyval(g.nodes, npoly.polyder(c, m)))))
                for m in (1, 2, 3)
            ]
            return max(1.0, *tops)
        fp = self.derivative_values(g)
        _, d2 = derivative_matrices(g)
        fpp = d2 @ self.values(g)
        inner = g.interior()
        return max(1.0, float(np.max(np.abs(fp[inner]))), float(np.max(np.abs(fpp[inner]))))


@dataclass(frozen=True, eq=False)
class LinOp:
    """Dense complex square matrix bound to the grid it acts on.

    Instances are treated as immutable; combining two operators requires a
    shared grid.
    """

    entries: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.complex128)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError(f"operator entries must be square, got shape {e.shape}")
        if e.shape[0] != self.grid.n:
            raise ValueError(
                f"operator dimension {e.shape[0]} does not match grid size {self.grid.n}"
            )
        object.__setattr__(self, "entries", e)

    @property
    def n(self) -> int:
        return self.grid.n

    def _require_same_grid(self, other: "LinOp"):
        if self.grid != other.grid:
            raise ValueError("operators act on different grids")

    def __add__(self, other: "LinOp") -> "LinOp":
        self._require_same_grid(other)
        return LinOp(self.entries + other.entries, self.grid)

    def __sub__(self, other: "LinOp") -> "LinOp":
        self._require_same_grid(other)
        return LinOp(self.entries - other.entries, self.grid)

    def __neg__(self) -> "LinOp":
        return LinOp(-self.entries, self.grid)

    def __mul__(self, scalar) -> "LinOp":
        return LinOp(self.entries * scalar, self.grid)

    __rmul__ = __mul__

    def __matmul__(self, other: "LinOp") -> "LinOp":
        self._require_same_grid(other)
        return LinOp(self.entries @ other.entries, self.grid)

    def adjoint(self) -> "LinOp":
        return LinOp(self.entries.conj().T, self.grid)

    def apply(self, vec) -> np.ndarray:
        return self.entries @ np.asarray(vec)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.entries)))

    def interior_block(self) -> np.ndarray:
        s = self.grid.interior()
        return self.entries[s, s]


# -- basic constructions ---------------------------------------------------


def identity(g: Grid1D) -> LinOp:
    return LinOp(np.eye(g.n, dtype=np.complex128), g)


def diagonal(g: Grid1D, values) -> LinOp:
    v = np.asarray(values)
    if v.shape != (g.n,):
        raise ValueError(f"diagonal needs {g.n} values, got shape {v.shape}")
    return LinOp(np.diag(v.astype(np.complex128)), g)


def position_operator(g: Grid1D) -> LinOp:
    """The multiplication operator x: diag of the node coordinates."""
    return diagonal(g, g.nodes)


def momentum_operator(g: Grid1D) -> LinOp:
    """P = -i D1."""
    d1, _ = derivative_matrices(g)
    return LinOp(-1j * d1, g)


def momentum_squared(g: Grid1D) -> LinOp:
    """P^2 realized as -D2 (the three-point Laplacian).

    D1 @ D1 is not used here: it carries a checkerboard null-space artifact,
    while -D2 is the standard discrete Laplacian.  Compositional Hamiltonians
    do use matrix products of the momentum matrices, which makes their
    agreement with the closed forms a genuine O(h^2) statement.
    """
    _, d2 = derivative_matrices(g)
    return LinOp(-d2.astype(np.complex128), g)


def deformed_momentum(g: Grid1D, f: FunctionSpec) -> LinOp:
    """P_f = P + i diag(f'), with exact f' whenever the spec provides it."""
    p = momentum_operator(g)
    return LinOp(p.entries + 1j * np.diag(f.derivative_values(g)), g)


def deformed_momentum_by_similarity(g: Grid1D, f: FunctionSpec) -> LinOp:
    """P_f built as diag(e^f) P diag(e^-f).

    Exactly annihilates samples of e^f (the conjugated constant vector); agrees
    with :func:`deformed_momentum` acting on smooth vectors within O(h^2).
    """
    fv = f.values(g)
    peak = float(np.max(np.abs(fv)))
    if peak > MAX_SAFE_EXPONENT:
        raise ValueError(
            f"max|f| = {peak:.3g} exceeds {MAX_SAFE_EXPONENT}; exp(f) would overflow"
        )
    e = np.exp(fv)
    p = momentum_operator(g)
    return LinOp(p.entries * e[:, None] / e[None, :], g)


def adjoint(a: LinOp) -> LinOp:
    return a.adjoint()


def commutator(a: LinOp, b: LinOp) -> LinOp:
    return a @ b - b @ a


def anticommutator(a: LinOp, b: LinOp) -> LinOp:
    return a @ b + b @ a


def hermiticity_defect(a: LinOp) -> float:
    """max |A - A^dagger| over the interior block."""
    s = a.grid.interior()
    d = a.entries - a.entries.conj().T
    return float(np.max(np.abs(d[s, s]))) if a.n > 8 else float(np.max(np.abs(d)))


# -- action-based comparison corpus ----------------------------------------


def smooth_test_vectors(g: Grid1D) -> list[tuple[str, np.ndarray, float]]:
    """Smooth probe vectors (name, samples, derivative bound up to order 4).

    Operator identities are verified by acting on these: sin/cos have all
    derivatives bounded by 1, the unit gaussian by 3.
    """
    x = g.nodes
    return [
        ("sin", np.sin(x), 1.0),
        ("cos", np.cos(x), 1.0),
        ("gauss", np.exp(-0.5 * x**2), 3.0),
    ]


def action_difference(a: LinOp, b: LinOp, tests=None) -> float:
    """max interior |(A - B) v| / scale(v) over the smooth test corpus."""
    a._require_same_grid(b)
    if tests is None:
        tests = smooth_test_vectors(a.grid)
    inner = a.grid.interior()
    worst = 0.0
    for _, v, scale in tests:
        w = (a.apply(v) - b.apply(v))[inner]
        worst = max(worst, float(np.max(np.abs(w))) / scale)
    return worst


def canonical_commutator_defect(g: Grid1D, f: FunctionSpec | None = None, tests=None) -> float:
    """max interior |([x, P_f] - iI) v| / scale(v) over the smooth test corpus.

    f = None checks the undeformed pair (x, P).
    """
    x = position_operator(g)
    p = momentum_operator(g) if f is None else deformed_momentum(g, f)
    c = commutator(x, p)
    if tests is None:
        tests = smooth_test_vectors(g)
    inner = g.interior()
    worst = 0.0
    for _, v, scale in tests:
        w = (c.apply(v) - 1j * v)[inner]
        worst = max(worst, float(np.max(np.abs(w))) / scale)
    return worst


def canonical_tolerance(g: Grid1D, f: FunctionSpec | None = None) -> float:
    """Discretization tolerance for the canonical-algebra checks."""
    scale = 1.0 if f is None else f.derivative_scale(g)
    return TOL.discretization(g, scale)

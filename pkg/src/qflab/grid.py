"""Uniform 1-D lattices and O(h^2) finite-difference derivative matrices.

Every operator in the package is realized as a dense matrix acting on
samples over a :class:`Grid1D`.  Interior rows use central stencils; the two
boundary rows of each derivative matrix use one-sided stencils of the same
order, so the matrices are total (no ghost nodes).  Algebraic-identity checks
therefore restrict themselves to the interior block (see
:meth:`Grid1D.interior`), where one-sided-stencil artifacts cannot reach even
after one matrix product.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    """Uniform lattice of ``n`` nodes on ``[x_min, x_max]``.

    Node ``k`` sits at ``x_min + k*h`` with spacing
    ``h = (x_max - x_min) / (n - 1)``.
    """

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"grid needs at least 3 nodes, got n={self.n}")
        if not self.x_min < self.x_max:
            raise ValueError(
                f"grid requires x_min < x_max, got [{self.x_min}, {self.x_max}]"
            )

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.n)

    def interior(self) -> slice:
        """Rows/columns free of one-sided-stencil contamination: 4..n-5.

        The transpose of a derivative matrix with one-sided boundary rows is
        not a consistent derivative near the ends (the one-sided stencil
        reaches column 2), and operator products with two adjoint factors
        propagate that pollution one row further.  Row 4 is the first row
        whose entries and action stay clean for every product formed in this
        package.
        """
        return slice(4, self.n - 4)


def make_grid(x_min: float, x_max: float, n: int) -> Grid1D:
    """Validated constructor for :class:`Grid1D`."""
    return Grid1D(float(x_min), float(x_max), int(n))


@lru_cache(maxsize=8)
def derivative_matrices(g: Grid1D) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivative matrices (D1, D2), both O(h^2).

    D1 is the central difference ``(u[k+1] - u[k-1]) / 2h`` with one-sided
    second-order stencils on the first and last row; D2 is the standard
    second difference ``(u[k+1] - 2u[k] + u[k-1]) / h^2`` with four-point
    one-sided boundary rows.  Both are real dense matrices; treat the cached
    arrays as read-only.
    """
    n, h = g.n, g.h
    d1 = np.zeros((n, n))
    d2 = np.zeros((n, n))
    k = np.arange(1, n - 1)
    d1[k, k - 1] = -0.5 / h
    d1[k, k + 1] = 0.5 / h
    d2[k, k - 1] = 1.0 / h**2
    d2[k, k] = -2.0 / h**2
    d2[k, k + 1] = 1.0 / h**2
    d1[0, :3] = np.array([-3.0, 4.0, -1.0]) / (2.0 * h)
    d1[-1, -3:] = np.array([1.0, -4.0, 3.0]) / (2.0 * h)
    d2[0, :4] = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
    d2[-1, -4:] = np.array([-1.0, 4.0, -5.0, 2.0]) / h**2
    d1.flags.writeable = False
    d2.flags.writeable = False
    return d1, d2

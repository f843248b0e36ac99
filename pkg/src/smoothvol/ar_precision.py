"""Tridiagonal AR(1) precision algebra.

The latent log-variance vector h = (h_0, ..., h_n) has a Gaussian Markov
random field representation with a tridiagonal precision matrix: unit first
and last diagonal entries, 1 + rho^2 on the interior, and -rho on the
off-diagonals. Everything the coordinate updates need from this matrix
(solves, log-determinants, the tridiagonal band of the inverse) is computed
in O(n) from the three-vector representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PrecisionError(ValueError):
    pass


@dataclass(frozen=True)
class TridiagSym:
    """Symmetric tridiagonal matrix stored as (diag, offdiag) vectors."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "diag", np.asarray(self.diag, dtype=float))
        object.__setattr__(self, "offdiag", np.asarray(self.offdiag, dtype=float))
        if len(self.offdiag) != len(self.diag) - 1:
            raise PrecisionError("offdiag must have length len(diag) - 1")

    @property
    def dim(self) -> int:
        return len(self.diag)

    def dense(self) -> np.ndarray:
        m = np.diag(self.diag)
        idx = np.arange(self.dim - 1)
        m[idx, idx + 1] = self.offdiag
        m[idx + 1, idx] = self.offdiag
        return m

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        y[:-1] += self.offdiag * x[1:]
        y[1:] += self.offdiag * x[:-1]
        return y

    def quad_form(self, x: np.ndarray) -> float:
        """x' M x."""
        return float(x @ self.matvec(x))

    def add_diag(self, d: np.ndarray) -> "TridiagSym":
        return TridiagSym(self.diag + d, self.offdiag.copy())

    def scale(self, a: float) -> "TridiagSym":
        return TridiagSym(a * self.diag, a * self.offdiag)

    def ldl(self) -> tuple[np.ndarray, np.ndarray]:
        """LDL' factorization: returns (d, l) with unit-lower-bidiagonal L.

        Raises if any pivot is non-positive (matrix not positive definite).
        """
        n = self.dim
        d = np.empty(n)
        l = np.empty(n - 1)
        d[0] = self.diag[0]
        if d[0] <= 0:
            raise PrecisionError("matrix is not positive definite")
        for i in range(n - 1):
            l[i] = self.offdiag[i] / d[i]
            d[i + 1] = self.diag[i + 1] - l[i] * self.offdiag[i]
            if d[i + 1] <= 0:
                raise PrecisionError("matrix is not positive definite")
        return d, l

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve M x = rhs via the LDL' factorization."""
        d, l = self.ldl()
        rhs = np.asarray(rhs, dtype=float)
        n = self.dim
        x = rhs.astype(float).copy()
        for i in range(1, n):
            x[i] -= l[i - 1] * x[i - 1]
        x /= d
        for i in range(n - 2, -1, -1):
            x[i] -= l[i] * x[i + 1]
        return x

    def logdet(self) -> float:
        d, _ = self.ldl()
        return float(np.sum(np.log(d)))

    def inverse_band(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and first off-diagonal of the inverse.

        Backward (Takahashi) recursion on the LDL' factors; exact for
        tridiagonal matrices and O(n).
        """
        d, l = self.ldl()
        n = self.dim
        inv_diag = np.empty(n)
        inv_off = np.empty(n - 1)
        inv_diag[-1] = 1.0 / d[-1]
        for i in range(n - 2, -1, -1):
            inv_off[i] = -l[i] * inv_diag[i + 1]
            inv_diag[i] = 1.0 / d[i] - l[i] * inv_off[i]
        return inv_diag, inv_off

    def trace_product(self, other: "TridiagSym") -> float:
        """tr(M^{-1} other) using only the tridiagonal band of M^{-1}."""
        inv_diag, inv_off = self.inverse_band()
        return float(inv_diag @ other.diag + 2.0 * (inv_off @ other.offdiag))


def build_precision(rho: float, n: int) -> TridiagSym:
    """Stationary AR(1) precision matrix of dimension n + 1."""
    if abs(rho) >= 1.0:
        raise PrecisionError(f"|rho| must be < 1 for stationarity, got {rho}")
    if n < 1:
        raise PrecisionError(f"n must be >= 1, got {n}")
    diag = np.full(n + 1, 1.0 + rho * rho)
    diag[0] = diag[-1] = 1.0
    offdiag = np.full(n, -rho)
    return TridiagSym(diag, offdiag)


def expected_precision(mu_rho: float, mu_rho2: float, n: int) -> TridiagSym:
    """Element-wise expectation of the precision under the rho factor."""
    if mu_rho2 < mu_rho * mu_rho - 1e-12:
        raise PrecisionError(
            f"invalid moments: E[rho^2]={mu_rho2} < (E[rho])^2={mu_rho**2}"
        )
    diag = np.full(n + 1, 1.0 + mu_rho2)
    diag[0] = diag[-1] = 1.0
    offdiag = np.full(n, -mu_rho)
    return TridiagSym(diag, offdiag)


def logdet_ar(rho: float, n: int) -> float:
    """log|Q(rho)| = log(1 - rho^2), independent of the dimension."""
    if abs(rho) >= 1.0:
        raise PrecisionError(f"|rho| must be < 1, got {rho}")
    return float(np.log1p(-rho * rho))

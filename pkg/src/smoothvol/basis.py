"""Construction of the deterministic projection matrices that control the
smoothness of the latent log-variance posterior mean.

Each basis is an (n+1) x k design matrix evaluated on the integer time grid
0..n, together with its cached left Moore-Penrose pseudo-inverse. Available
kinds: identity, periodized Daubechies wavelets, clamped B-splines, and
block-diagonal combinations of the former.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

# Daubechies D4 scaling filter (two vanishing moments), normalized so the
# coefficients sum to sqrt(2).
_D4_H = np.array(
    [
        (1.0 + np.sqrt(3.0)) / (4.0 * np.sqrt(2.0)),
        (3.0 + np.sqrt(3.0)) / (4.0 * np.sqrt(2.0)),
        (3.0 - np.sqrt(3.0)) / (4.0 * np.sqrt(2.0)),
        (1.0 - np.sqrt(3.0)) / (4.0 * np.sqrt(2.0)),
    ]
)

_CASCADE_LEVELS = 8
_RANK_TOL = 1e-10


class BasisError(ValueError):
    """Invalid basis request (bad length, resolution, knots or rank)."""


@dataclass(frozen=True)
class BasisMatrix:
    """An (n+1) x k full-column-rank design matrix with cached pseudo-inverse."""

    values: np.ndarray
    kind: str
    pinv: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if self.pinv is None:
            object.__setattr__(self, "pinv", _left_pinv(vals))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def project(self, f: np.ndarray) -> np.ndarray:
        """Map coefficients f (length k) to the latent mean W @ f."""
        return self.values @ np.asarray(f, dtype=float)

    def coefficients(self, mu: np.ndarray) -> np.ndarray:
        """Least-squares coefficients W+ @ mu for a latent mean vector."""
        return self.pinv @ np.asarray(mu, dtype=float)


def _left_pinv(w: np.ndarray) -> np.ndarray:
    """(W'W)^{-1} W', rejecting numerically rank-deficient matrices."""
    gram = w.T @ w
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] < _RANK_TOL * sv[0]:
        raise BasisError(
            f"basis matrix is numerically rank deficient "
            f"(singular-value ratio {sv[-1] / sv[0]:.2e})"
        )
    return np.linalg.solve(gram, w.T)


def pseudo_inverse(basis: BasisMatrix) -> np.ndarray:
    """Left Moore-Penrose pseudo-inverse of the basis values."""
    return _left_pinv(basis.values)


def identity_basis(n: int) -> BasisMatrix:
    if n < 1:
        raise BasisError(f"series length n must be >= 1, got {n}")
    eye = np.eye(n + 1)
    return BasisMatrix(values=eye, kind="identity", pinv=eye.copy())


def _daubechies_functions() -> tuple[np.ndarray, np.ndarray]:
    """D4 scaling and wavelet functions on a dyadic grid over [0, 3].

    Built by cascade iteration: the scaling function is the fixed point of
    the two-scale relation, refined for a fixed number of dyadic levels.
    Returns (grid, psi) with psi the mother wavelet sampled on the grid.
    """
    h = _D4_H
    nh = len(h)
    support = nh - 1
    # Start from the indicator on [0, 1) and refine.
    m = 2 ** _CASCADE_LEVELS
    grid = np.arange(support * m) / m
    phi = np.where(grid < 1.0, 1.0, 0.0)
    for _ in range(_CASCADE_LEVELS + 4):
        new = np.zeros_like(phi)
        for i, hi in enumerate(h):
            shifted = 2.0 * grid - i
            idx = np.round(shifted * m).astype(int)
            ok = (idx >= 0) & (idx < len(phi))
            contrib = np.zeros_like(phi)
            contrib[ok] = phi[idx[ok]]
            new += np.sqrt(2.0) * hi * contrib
        phi = new
    g = np.array([(-1.0) ** i * h[nh - 1 - i] for i in range(nh)])
    psi = np.zeros_like(phi)
    for i, gi in enumerate(g):
        shifted = 2.0 * grid - i
        idx = np.round(shifted * m).astype(int)
        ok = (idx >= 0) & (idx < len(phi))
        contrib = np.zeros_like(phi)
        contrib[ok] = phi[idx[ok]]
        psi += np.sqrt(2.0) * gi * contrib
    return grid, psi


_PSI_CACHE: dict[str, np.ndarray] = {}


def _mother_wavelet(u: np.ndarray) -> np.ndarray:
    """Evaluate the D4 mother wavelet at points u (support [0, 3])."""
    if "grid" not in _PSI_CACHE:
        grid, psi = _daubechies_functions()
        _PSI_CACHE["grid"] = grid
        _PSI_CACHE["psi"] = psi
    grid, psi = _PSI_CACHE["grid"], _PSI_CACHE["psi"]
    out = np.zeros_like(u, dtype=float)
    inside = (u >= 0.0) & (u < grid[-1])
    idx = np.searchsorted(grid, u[inside], side="right") - 1
    out[inside] = psi[idx]
    return out


def wavelet_basis(n: int, level: int) -> BasisMatrix:
    """Constant column plus periodized D4 wavelets up to the given level.

    The finest level contributes 2^(level-1) dilated/shifted functions; the
    total column count is 2^level (constant included).
    """
    if level < 1:
        raise BasisError(f"wavelet level must be >= 1, got {level}")
    resolution = 2 ** (level - 1)
    if n < resolution:
        raise BasisError(
            f"series length n={n} too small for wavelet resolution {resolution}"
        )
    u = np.arange(n + 1) / (n + 1)  # map 0..n into [0, 1)
    cols = [np.ones(n + 1)]
    support = 3  # D4 wavelet support length
    for j in range(1, level + 1):
        scale = 2 ** (j - 1)
        for shift in range(scale):
            # Periodize: wrap all integer translates that hit [0, 1).
            vals = np.zeros(n + 1)
            zmin = -((support + shift) // scale) - 1
            zmax = 2
            for z in range(zmin, zmax):
                vals += _mother_wavelet(scale * (u + z) - shift)
            cols.append(vals * np.sqrt(scale))
    values = np.column_stack(cols)
    return BasisMatrix(values=values, kind=f"wavelet(level={level})")


def bspline_basis(n: int, knots: int, degree: int) -> BasisMatrix:
    """Clamped B-spline design matrix with equally spaced interior knots.

    Column count is knots + degree + 1; rows form a partition of unity.
    """
    if knots < 1 or degree < 0:
        raise BasisError(f"need knots >= 1 and degree >= 0, got ({knots}, {degree})")
    k = knots + degree + 1
    if n + 1 <= knots + degree + 1:
        raise BasisError(
            f"series length n={n} too short for {knots} knots at degree {degree}"
        )
    interior = np.linspace(0.0, n, knots + 2)[1:-1]
    t = np.concatenate(
        [np.zeros(degree + 1), interior, np.full(degree + 1, float(n))]
    )
    x = np.arange(n + 1, dtype=float)
    # Right-closed evaluation: nudge the last point inside the support so the
    # final basis function evaluates to 1 rather than 0.
    x[-1] = np.nextafter(float(n), 0.0)
    design = BSpline.design_matrix(x, t, degree).toarray()
    if design.shape[1] != k:
        raise BasisError("unexpected B-spline column count")
    return BasisMatrix(values=design, kind=f"bspline(knots={knots}, degree={degree})")


def block_basis(n: int, blocks: list[tuple[range, dict]]) -> BasisMatrix:
    """Block-diagonal assembly of sub-bases over a partition of rows 0..n.

    Each entry is (row_range, spec) where spec is a basis config dict as
    accepted by :func:`from_spec` (without the outer length).
    """
    covered = []
    mats = []
    for rows, spec in blocks:
        rows = list(rows)
        if not rows:
            raise BasisError("empty row range in block basis")
        covered.extend(rows)
        sub = from_spec(len(rows) - 1, spec)
        mats.append(sub.values)
    if sorted(covered) != list(range(n + 1)):
        raise BasisError("block row ranges must partition 0..n without gaps/overlaps")
    total_k = sum(m.shape[1] for m in mats)
    values = np.zeros((n + 1, total_k))
    r0 = c0 = 0
    for m in mats:
        r, c = m.shape
        values[r0 : r0 + r, c0 : c0 + c] = m
        r0 += r
        c0 += c
    return BasisMatrix(values=values, kind="block")


def from_spec(n: int, spec: dict) -> BasisMatrix:
    """Build a basis from a config mapping, e.g. {"kind": "wavelet", "level": 5}."""
    kind = spec.get("kind", "identity")
    if kind == "identity":
        return identity_basis(n)
    if kind == "wavelet":
        return wavelet_basis(n, int(spec.get("level", 5)))
    if kind == "bspline":
        return bspline_basis(n, int(spec["knots"]), int(spec.get("degree", 3)))
    if kind == "block":
        blocks = []
        start = 0
        for blk in spec["blocks"]:
            length = int(blk["length"])
            blocks.append((range(start, start + length), blk["basis"]))
            start += length
        return block_basis(n, blocks)
    raise BasisError(f"unknown basis kind {kind!r}")

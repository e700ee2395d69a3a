"""Sparse precision matrices for the discretized fields.

The coefficient vector lives on the Kronecker basis with the spatial index
fastest: coefficient (i, j) for spatial basis i and time knot j sits at
position j*N_s + i.  All spatial operators take the lumped mass matrix
wherever an inverse mass appears, which keeps every precision sparse.

Noise-scale placement: the spatial operators Q1, Q2, Q3 are built without the
gamma_e^2 factor; gamma_e^2 multiplies the assembled space-time precision
exactly once.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sparse

from .fem import TimeGrid, temporal_matrices
from .params import (
    ParameterError,
    ScaleParams,
    SmoothnessParams,
    scales_to_interpretable,
)

__all__ = [
    "TemporalPrecision",
    "spatial_precision",
    "ar2_stationary_precision",
    "ou_precision",
    "ou_correction_factor",
    "demf121_precision",
    "separable_precision",
    "eigen_oracle",
    "adjacency_pattern",
    "boolean_power",
    "neighbor_counts",
]

DIFFUSION_ALPHAS = SmoothnessParams(1.0, 2.0, 1.0)
SEPARABLE_ALPHAS = SmoothnessParams(1.0, 0.0, 2.0)


def spatial_precision(
    order: int,
    gamma_s: float,
    C_lumped: sparse.spmatrix,
    G: sparse.spmatrix,
) -> sparse.csr_matrix:
    """Spatial precision Q_order for the operator (gamma_s^2 - Lap)^order.

    With K = gamma_s^2 C~ + G (C~ the lumped mass):

        Q1 = K,   Q2 = K C~^{-1} K,   Q3 = K C~^{-1} K C~^{-1} K.

    The noise scale gamma_e is *not* included here.
    """
    if order not in (1, 2, 3):
        raise ParameterError(f"spatial precision order must be 1, 2 or 3, got {order}")
    if not gamma_s > 0:
        raise ParameterError(f"gamma_s must be positive, got {gamma_s}")
    K = (gamma_s**2 * C_lumped + G).tocsr()
    if order == 1:
        Q = K
    else:
        Cinv = sparse.diags(1.0 / C_lumped.diagonal())
        KCinv = K @ Cinv
        Q = KCinv @ K if order == 2 else KCinv @ (KCinv @ K)
    Q = Q.tocsr()
    if (Q.diagonal() <= 0).any():
        raise ParameterError("spatial precision has a non-positive diagonal entry")
    return Q


def ar2_stationary_precision(q0: float, q1: float, q2: float, n: int) -> sparse.csr_matrix:
    """Stationary AR(2) precision: quint-diagonal with interior bands
    (q0, q1, q2) and corner corrections that make the length-n process
    exactly stationary.

    The corners come from the moving-average coefficients (a0, a1, a2) of the
    evolution a0 u_t + a1 u_{t-1} + a2 u_{t-2} = z_t, recovered from the bands;
    the identities q0 = a0^2+a1^2+a2^2, q1 = a1(a0+a2), q2 = a0 a2 are
    asserted on exit.
    """
    if n < 4:
        raise ParameterError("ar2 precision needs n >= 4")
    bp2 = q0 + 2.0 * q1 + 2.0 * q2
    bm2 = q0 - 2.0 * q1 + 2.0 * q2
    if bp2 <= 0:
        raise ParameterError(f"q0 + 2 q1 + 2 q2 = {bp2} must be positive")
    if bm2 <= 0:
        raise ParameterError(f"q0 - 2 q1 + 2 q2 = {bm2} must be positive")
    bp, bm = math.sqrt(bp2), math.sqrt(bm2)
    bs = bp + bm
    disc = bs * bs - 16.0 * q2
    if disc < 0:
        raise ParameterError(f"(b+ + b-)^2 - 16 q2 = {disc} must be non-negative")
    root = math.sqrt(disc)
    a0 = 0.25 * (bs + root)
    a1 = 0.5 * (bp - bm)
    a2 = 0.25 * (bs - root)
    for got, want, label in (
        (a0 * a0 + a1 * a1 + a2 * a2, q0, "q0"),
        (a1 * (a0 + a2), q1, "q1"),
        (a0 * a2, q2, "q2"),
    ):
        if abs(got - want) > 1e-12 * max(1.0, abs(want)):
            raise ParameterError(
                f"reconstructed {label} = {got} does not match input {want}"
            )
    ones = np.ones(n)
    Q = sparse.diags(
        [q2 * ones[:-2], q1 * ones[:-1], q0 * ones, q1 * ones[:-1], q2 * ones[:-2]],
        [-2, -1, 0, 1, 2],
    ).tolil()
    Q[0, 0] = Q[n - 1, n - 1] = a0 * a0
    Q[1, 1] = Q[n - 2, n - 2] = a0 * a0 + a1 * a1
    Q[0, 1] = Q[1, 0] = Q[n - 1, n - 2] = Q[n - 2, n - 1] = a0 * a1
    return Q.tocsr()


def ou_correction_factor(kappa: float, h: float) -> float:
    """Boundary factor making the tridiagonal discretization exactly
    stationary: sqrt(1 + h^2 kappa^2 / 12) for the consistent mass matrix."""
    return math.sqrt(1.0 + h * h * kappa * kappa / 12.0)


@dataclass(frozen=True)
class TemporalPrecision:
    """Stationary temporal precision with its rate and noise scale."""

    matrix: sparse.csr_matrix
    kappa: float
    b: float


def ou_precision(kappa: float, b: float, grid: TimeGrid) -> TemporalPrecision:
    """Stationary precision of the mean-reverting process
    kappa z + dz/dt = b^{-1/2} w on the regular grid:

        R = b (kappa^2 M0 + 2 kappa c M1 + M2)

    where the corner factor c = sqrt(1 + h^2 kappa^2/12) makes the diagonal of
    R^{-1} exactly constant (c -> 1 as the step shrinks, recovering the plain
    b*kappa corner correction).
    """
    if kappa <= 0 or b <= 0:
        raise ParameterError("ou_precision needs kappa > 0 and b > 0")
    if kappa * grid.step > 0.5:
        warnings.warn(
            f"temporal resolution is coarse: h*kappa = {kappa * grid.step:.3g} > 0.5",
            stacklevel=2,
        )
    M0, M1, M2 = temporal_matrices(grid)
    c = ou_correction_factor(kappa, grid.step)
    R = (b * (kappa**2 * M0 + 2.0 * kappa * c * M1 + M2)).tocsr()
    return TemporalPrecision(matrix=R, kappa=kappa, b=b)


def _check_model(sp: SmoothnessParams, want: SmoothnessParams, label: str) -> None:
    if (sp.alpha_t, sp.alpha_s, sp.alpha_e) != (want.alpha_t, want.alpha_s, want.alpha_e):
        raise ParameterError(
            f"{label} requires smoothness ({want.alpha_t:g}, {want.alpha_s:g}, "
            f"{want.alpha_e:g}), got ({sp.alpha_t:g}, {sp.alpha_s:g}, {sp.alpha_e:g})"
        )


def demf121_precision(
    sc: ScaleParams,
    C_lumped: sparse.spmatrix,
    G: sparse.spmatrix,
    grid: TimeGrid,
) -> sparse.csr_matrix:
    """Space-time precision of the diffusion model (alpha = (1, 2, 1)):

        Q = gamma_e^2 (M0 x Q3 + 2 gamma_t M1 x Q2 + gamma_t^2 M2 x Q1)

    with the plain corner marker M1 (mode-independent boundary correction).
    The mode-exact correction is available through
    :func:`eigen_oracle` with ``exact_correction=True``.
    """
    gt, gs, ge = sc.gamma_t, sc.gamma_s, sc.gamma_e
    kappa_min = gs**2 / gt
    if kappa_min * grid.step > 0.5:
        warnings.warn(
            f"temporal resolution is coarse for the slowest spatial mode: "
            f"h*kappa = {kappa_min * grid.step:.3g} > 0.5",
            stacklevel=2,
        )
    Q1 = spatial_precision(1, gs, C_lumped, G)
    Q2 = spatial_precision(2, gs, C_lumped, G)
    Q3 = spatial_precision(3, gs, C_lumped, G)
    M0, M1, M2 = temporal_matrices(grid)
    Q = (
        sparse.kron(M0, Q3, format="csr")
        + 2.0 * gt * sparse.kron(M1, Q2, format="csr")
        + gt**2 * sparse.kron(M2, Q1, format="csr")
    )
    return (ge**2 * Q).tocsr()


def separable_precision(
    sp: SmoothnessParams,
    sc: ScaleParams,
    C_lumped: sparse.spmatrix,
    G: sparse.spmatrix,
    grid: TimeGrid,
) -> sparse.csr_matrix:
    """Kronecker precision R_t x Q_s of the separable model (1, 0, 2).

    R_t is the stationary mean-reverting precision with rate 1/gamma_t and
    noise scale chosen for exactly unit temporal marginal variance; Q_s is the
    order-2 spatial precision scaled so the spatial marginal variance matches
    sigma^2 in the continuum (tau = 1/(4 pi gamma_s^2 sigma^2)).
    """
    _check_model(sp, SEPARABLE_ALPHAS, "separable_precision")
    sigma = scales_to_interpretable(sp, sc).sigma
    kappa_t = 1.0 / sc.gamma_t
    # exact unit variance of the discrete chain: var = 1/(a0^2 - a1^2)
    # = 1/(2 b kappa c), so pick b = 1/(2 kappa c)
    b = 1.0 / (2.0 * kappa_t * ou_correction_factor(kappa_t, grid.step))
    R_t = ou_precision(kappa_t, b, grid).matrix
    tau = 1.0 / (4.0 * math.pi * sc.gamma_s**2 * sigma**2)
    Q_s = tau * spatial_precision(2, sc.gamma_s, C_lumped, G)
    return sparse.kron(R_t, Q_s, format="csr")


def eigen_oracle(
    sc: ScaleParams,
    C_lumped: sparse.spmatrix,
    G: sparse.spmatrix,
    grid: TimeGrid,
    exact_correction: bool = False,
    max_vertices: int = 500,
) -> sparse.csr_matrix:
    """Diffusion-model precision through the semi-discrete eigenbasis.

    Solves the dense generalized eigenproblem G V = C~ V Lambda (normalized so
    V' C~ V = I), builds one stationary temporal precision per spatial mode
    with rate kappa_j = (gamma_s^2 + lambda_j)/gamma_t, and maps back.  With
    ``exact_correction=False`` the per-mode corner factor is 1, which
    reproduces :func:`demf121_precision` entry by entry; with True the factor
    is the mode-dependent sqrt(1 + h^2 kappa_j^2/12).

    Dense route: only for small meshes (``max_vertices`` guard).
    """
    n_s = C_lumped.shape[0]
    if n_s > max_vertices:
        raise ParameterError(
            f"eigen_oracle is a dense construction; {n_s} vertices exceeds "
            f"the limit {max_vertices}"
        )
    gt, gs, ge = sc.gamma_t, sc.gamma_s, sc.gamma_e
    c_diag = C_lumped.diagonal()
    lam, V = scipy.linalg.eigh(G.toarray(), np.diag(c_diag))
    lam = np.clip(lam, 0.0, None)
    W = c_diag[:, None] * V  # C~ V
    a = gs**2 + lam
    if exact_correction:
        cf = np.sqrt(1.0 + (grid.step * a / gt) ** 2 / 12.0)
    else:
        cf = np.ones_like(a)
    M0, M1, M2 = temporal_matrices(grid)
    S3 = (W * a**3) @ W.T
    S2 = (W * (a**2 * cf)) @ W.T
    S1 = (W * a) @ W.T
    Q = (
        sparse.kron(M0, sparse.csr_matrix(S3), format="csr")
        + 2.0 * gt * sparse.kron(M1, sparse.csr_matrix(S2), format="csr")
        + gt**2 * sparse.kron(M2, sparse.csr_matrix(S1), format="csr")
    )
    return (ge**2 * Q).tocsr()


# ---------------------------------------------------------------------- #
# stencil inspection
# ---------------------------------------------------------------------- #

def adjacency_pattern(A: sparse.spmatrix, numerical: bool = False) -> sparse.csr_matrix:
    """Boolean connectivity of A plus the diagonal.

    ``numerical=False`` uses the stored sparsity pattern; ``numerical=True``
    keeps only entries whose value is nonzero (on structured right-triangle
    meshes the stiffness carries exact zeros on cell diagonals, so the two
    differ).
    """
    A = A.tocsr()
    if numerical:
        A = A.copy()
        A.data = (A.data != 0).astype(np.int8)
        A.eliminate_zeros()
    P = sparse.csr_matrix(
        (np.ones(A.nnz, dtype=np.int8), A.indices.copy(), A.indptr.copy()),
        shape=A.shape,
    )
    P = P + sparse.identity(A.shape[0], dtype=np.int8, format="csr")
    P.data[:] = 1
    return P


def boolean_power(P: sparse.csr_matrix, k: int) -> sparse.csr_matrix:
    """k-th boolean power of a pattern matrix (k-step neighborhoods)."""
    out = P.copy()
    for _ in range(k - 1):
        out = out @ P
        out.data[:] = 1
    return out


def neighbor_counts(Q: sparse.spmatrix, numerical: bool = False) -> np.ndarray:
    """Per-row neighbor counts of a precision matrix, excluding the diagonal."""
    P = adjacency_pattern(Q, numerical=numerical)
    return np.diff(P.indptr) - 1

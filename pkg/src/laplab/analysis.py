"""Error metrics: eigenvalue and eigenvector errors, pointwise error, slope fits."""

from dataclasses import dataclass

import numpy as np

from .graph import laplacian_apply


@dataclass(frozen=True)
class ReferenceVectors:
    phi: np.ndarray
    convention: str


def build_references(samples, eigensystem, K=None, convention="phi_scaled"):
    """Population eigenfunctions evaluated at the samples, scaled for comparison.

    ``phi_scaled``: ``psi_k(x_i) / sqrt(p N)`` (uniform density only), the
    counterpart of ``L_un``/``L_rw`` eigenvectors.
    ``tilde_phi``: ``psi_k(x_i) / sqrt(N)``, the counterpart of density-corrected
    eigenvectors.
    """
    K = eigensystem.K if K is None else K
    if K > eigensystem.K:
        raise ValueError(f"requested {K} reference vectors but only {eigensystem.K} eigenfunctions")
    N = samples.N
    psi = eigensystem.evaluate(samples.intrinsic_coords)[:, :K]
    if convention == "phi_scaled":
        p = samples.density.constant
        if p is None:
            raise ValueError("phi_scaled references need a uniform density")
        return ReferenceVectors(psi / np.sqrt(p * N), convention)
    if convention == "tilde_phi":
        return ReferenceVectors(psi / np.sqrt(N), convention)
    raise ValueError(f"unknown reference convention {convention!r}")


def multiplicity_blocks(mu, gap_rel_tol=0.05):
    """Group consecutive analytic eigenvalues whose relative gap is below ``gap_rel_tol``."""
    mu = np.asarray(mu, dtype=float)
    blocks = [[0]]
    for i in range(1, len(mu)):
        scale = max(abs(mu[i]), abs(mu[i - 1]))
        gap = 0.0 if scale == 0 else (mu[i] - mu[i - 1]) / scale
        if gap < gap_rel_tol:
            blocks[-1].append(i)
        else:
            blocks.append([i])
    return blocks


@dataclass(frozen=True)
class AlignmentReport:
    blocks: list
    rotations: list
    alphas: np.ndarray
    vector_errors: np.ndarray
    value_errors: np.ndarray
    relerr_v: float
    relerr_lambda: float

    @property
    def flagged(self):
        """0-based indices whose fitted scale falls outside [0.5, 2]."""
        a = np.abs(self.alphas)
        return [int(i) for i in np.flatnonzero((a < 0.5) | (a > 2.0))]


def align_and_score(spectral, refs, mu, k_max, gap_rel_tol=0.05):
    """Procrustes-align computed eigenvectors to the references and score them.

    Within each block of equal analytic eigenvalues, the computed vectors are
    rotated by the orthogonal ``Q`` minimising ``||V Q - Phi||_F`` (``Q = U W^T``
    from the SVD ``V^T Phi = U S W^T``).  Then, over ``k = 2..k_max``
    (1-based),

        RelErr_lambda = sum |lambda_k - mu_k| / mu_k
        RelErr_v      = sum ||(V Q)_k - phi_k|| / ||phi_k||

    ``mu`` must extend past ``k_max`` so the last block can be checked for
    completeness.
    """
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(spectral.eigenvalues, dtype=float)
    V = np.asarray(spectral.eigenvectors, dtype=float)
    Phi = refs.phi
    if len(mu) <= k_max:
        raise ValueError(f"need at least k_max + 1 = {k_max + 1} analytic eigenvalues")
    if V.shape[1] < k_max or Phi.shape[1] < k_max:
        raise ValueError(f"need at least k_max = {k_max} computed and reference vectors")
    blocks = multiplicity_blocks(mu[: k_max + 1], gap_rel_tol)
    if k_max in blocks[-1] and len(blocks[-1]) > 1:
        raise ValueError(
            f"k_max = {k_max} splits the eigenvalue block at mu = {mu[k_max - 1]:.6g}; "
            "choose a larger k_max that ends on a block boundary"
        )
    blocks = [b for b in blocks if b[0] < k_max]

    aligned = np.empty((V.shape[0], k_max))
    rotations = []
    for b in blocks:
        Vb, Pb = V[:, b], Phi[:, b]
        U, _, Wt = np.linalg.svd(Vb.T @ Pb)
        Q = U @ Wt
        rotations.append(Q)
        aligned[:, b] = Vb @ Q
    P = Phi[:, :k_max]
    phi_norm = np.linalg.norm(P, axis=0)
    vec_err = np.linalg.norm(aligned - P, axis=0) / phi_norm
    alphas = np.sum(aligned * P, axis=0) / phi_norm**2
    val_err = np.abs(lam[1:k_max] - mu[1:k_max]) / mu[1:k_max]
    return AlignmentReport(
        blocks=blocks,
        rotations=rotations,
        alphas=alphas,
        vector_errors=vec_err,
        value_errors=val_err,
        relerr_v=float(vec_err[1:].sum()),
        relerr_lambda=float(val_err.sum()),
    )


def pointwise_error(ops, f_values, laplacian_f_values):
    """``||-L f - Laplacian f||_1 / ||Laplacian f||_1`` over the samples."""
    target = np.asarray(laplacian_f_values, dtype=float)
    denom = np.sum(np.abs(target))
    if denom == 0.0:
        raise ValueError("Laplacian of the test function vanishes at every sample")
    return float(np.sum(np.abs(-laplacian_apply(ops, f_values) - target)) / denom)


def fit_loglog_slope(xs, ys):
    """Least-squares line through ``(log10 x, log10 y)``; returns ``(slope, intercept, r2)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 2:
        raise ValueError("need at least two (x, y) pairs")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs strictly positive data")
    lx, ly = np.log10(xs), np.log10(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    return float(slope), float(intercept), float(r2)

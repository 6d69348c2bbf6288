"""Lowest eigenpairs of the graph Laplacians.

Every variant is reduced to a symmetric matrix ``S`` first: ``L_un`` is
already symmetric, and the random-walk variants are similar to
``(I - D^{-1/2} W D^{-1/2}) / (m_tilde eps)`` with eigenvectors mapped back by
``v = D^{-1/2} u``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal

from ._random import make_rng
from .graph import dirichlet_form, laplacian_matrix

NORMALIZATIONS = ("unit2norm", "dnorm_np", "tilde_dnorm_recip_n")
_DEFAULT_NORMALIZATION = {
    "unnormalized": "unit2norm",
    "random_walk": "dnorm_np",
    "density_corrected": "tilde_dnorm_recip_n",
}


class ConvergenceError(RuntimeError):
    """Lanczos hit its iteration cap; carries the partial residuals."""

    def __init__(self, message, residuals, iterations):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    normalization: str
    solver_meta: dict = field(default_factory=dict)


def symmetric_reduction(ops):
    """Return ``(S, back)`` where ``back`` maps eigenvectors of ``S`` to ``L``."""
    spec = ops.spec
    if ops.kind == "unnormalized":
        if ops.p is None:
            raise ValueError("the unnormalized Laplacian needs a uniform density")
        scale = (spec.m2 / 2.0) * ops.p * spec.epsilon * ops.N
        S = -ops.W / scale
        S[np.diag_indices_from(S)] += ops.degrees / scale
        return S, np.ones(ops.N)
    if ops.kind == "random_walk":
        W, D = ops.W, ops.degrees
    else:
        W, D = ops.W_tilde, ops.D_tilde
    r = 1.0 / np.sqrt(D)
    S = -(W * r[:, None] * r[None, :])
    S[np.diag_indices_from(S)] += 1.0
    S /= spec.m_tilde * spec.epsilon
    return S, r


def gershgorin_upper(S):
    return float(np.max(np.diag(S) + np.sum(np.abs(S), axis=1) - np.abs(np.diag(S))))


def lanczos_largest(A, k, tol, max_iter=None, seed=0, rtol=1e-9):
    """``k`` largest eigenpairs of a symmetric ``A`` by Lanczos with full reorthogonalization.

    A Ritz pair ``(theta, y)`` is accepted once its residual estimate is at
    most ``min(tol, rtol * (|theta| + 1))``.  Returns
    ``(theta, Y, iterations, residual_estimates)`` with ``theta`` descending.
    """
    return _lanczos(A, k, tol, max_iter, seed, rtol, shift=None)


def _lanczos(A, k, tol, max_iter, seed, rtol, shift):
    n = A.shape[0]
    if max_iter is None:
        max_iter = n
    max_iter = min(max_iter, n)
    rng = make_rng(seed)
    Q = np.empty((n, max_iter))
    alpha = np.empty(max_iter)
    beta = np.zeros(max_iter)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    res = None
    for j in range(max_iter):
        Q[:, j] = q
        w = A @ q
        alpha[j] = q @ w
        w -= alpha[j] * q
        if j > 0:
            w -= beta[j - 1] * Q[:, j - 1]
        # two passes of classical Gram-Schmidt keep the basis orthogonal to machine precision
        Qj = Q[:, : j + 1]
        w -= Qj @ (Qj.T @ w)
        w -= Qj @ (Qj.T @ w)
        b = np.linalg.norm(w)
        m = j + 1
        breakdown = b <= 1e-12 * max(abs(alpha[j]), 1.0)
        # on breakdown every Ritz residual vanishes, yet further copies of a
        # repeated eigenvalue may lie outside the current Krylov space
        if m >= k and (not breakdown or m == n):
            theta, Y = _tridiag_eig(alpha[:m], beta[: m - 1])
            top = np.argsort(theta)[::-1][:k]
            res = b * np.abs(Y[-1, top])
            lam = theta[top] if shift is None else shift - theta[top]
            limit = np.minimum(tol, rtol * (np.abs(lam) + 1.0))
            if np.all(res <= limit) or m == n:
                return theta[top], Qj @ Y[:, top], m, res
        if breakdown:
            # invariant subspace found: restart with a fresh direction orthogonal to Q
            w = rng.standard_normal(n)
            w -= Qj @ (Qj.T @ w)
            w -= Qj @ (Qj.T @ w)
            beta[j] = 0.0
            q = w / np.linalg.norm(w)
        else:
            beta[j] = b
            q = w / b
    raise ConvergenceError(
        f"Lanczos did not converge in {max_iter} iterations",
        residuals=res,
        iterations=max_iter,
    )


def _tridiag_eig(a, b):
    if len(a) == 1:
        return a.copy(), np.ones((1, 1))
    return eigh_tridiagonal(a, b)


def solve_lowest(ops, k_max, backend="dense", normalization=None, tol=1e-10, max_iter=None, seed=0):
    """The ``k_max + 1`` lowest eigenpairs of ``ops``' Laplacian.

    Parameters
    ----------
    ops : GraphOperators
    k_max : int
        Largest eigen-index of interest; ``k_max + 1`` pairs are returned.
    backend : {"dense", "iterative"}
        ``dense`` runs a full symmetric eigendecomposition (LAPACK ``syev``);
        ``iterative`` runs Lanczos on ``sigma I - S`` with ``sigma`` a
        Gershgorin bound, stopping when every wanted residual is below
        ``tol * sigma`` and ``1e-9 (|lambda| + 1)``.
    normalization : str, optional
        ``unit2norm``, ``dnorm_np`` (``v^T D v = N p``) or
        ``tilde_dnorm_recip_n`` (``N v^T Dt v = 1``).  Defaults per kind.

    Returns
    -------
    SpectralResult
    """
    k = k_max + 1
    N = ops.N
    if k > N:
        raise ValueError(f"k_max + 1 = {k} exceeds N = {N}")
    normalization = normalization or _DEFAULT_NORMALIZATION[ops.kind]
    S, back = symmetric_reduction(ops)
    meta = {"backend": backend}
    if backend == "dense":
        lam, U = eigh(S, driver="ev")
        lam, U = lam[:k], U[:, :k]
        meta["iterations"] = 0
    elif backend == "iterative":
        sigma = gershgorin_upper(S)
        shifted = -S
        shifted[np.diag_indices_from(shifted)] += sigma
        theta, U, its, _ = _lanczos(shifted, k, tol * sigma, max_iter, seed, 1e-9, shift=sigma)
        lam = sigma - theta
        meta.update(iterations=its, sigma=sigma)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    order = np.argsort(lam, kind="stable")
    lam, U = lam[order], U[:, order]
    residuals = np.linalg.norm(S @ U - U * lam, axis=0) / np.linalg.norm(U, axis=0)
    meta["residuals"] = residuals.tolist()
    meta["max_residual"] = float(residuals.max())
    V = U * back[:, None]
    V = _normalize(V, ops, normalization)
    V = _fix_signs(V)
    return SpectralResult(lam, V, normalization, meta)


def _normalize(V, ops, normalization):
    if normalization == "unit2norm":
        sq = np.sum(V * V, axis=0)
        target = 1.0
    elif normalization == "dnorm_np":
        if ops.p is None:
            raise ValueError("dnorm_np normalization needs a uniform density p")
        sq = np.sum(V * V * ops.degrees[:, None], axis=0)
        target = ops.N * ops.p
    elif normalization == "tilde_dnorm_recip_n":
        if ops.D_tilde is None:
            raise ValueError("tilde_dnorm_recip_n normalization needs density-corrected operators")
        sq = ops.N * np.sum(V * V * ops.D_tilde[:, None], axis=0)
        target = 1.0
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return V * np.sqrt(target / sq)


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def rayleigh_quotient(ops, u, variant=None):
    """Variational quotient whose min-max values are the Laplacian eigenvalues."""
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise ValueError("Rayleigh quotient of the zero vector is undefined")
    variant = variant or ops.kind
    N = ops.N
    if variant == "unnormalized":
        return dirichlet_form(ops, u, "standard") / (ops.p * (u @ u) / N)
    if variant == "random_walk":
        return dirichlet_form(ops, u, "standard") / ((u @ (ops.degrees * u)) / (ops.spec.m0 * N**2))
    if variant == "density_corrected":
        return dirichlet_form(ops, u, "density_corrected") / (ops.spec.m0 * (u @ (ops.D_tilde * u)))
    raise ValueError(f"unknown variant {variant!r}")


def similarity_check_values(ops):
    """Eigenvalues of the non-symmetric random-walk matrix via a general solver."""
    vals = np.linalg.eigvals(laplacian_matrix(ops))
    return np.sort(vals.real)


"""scikit-learn style wrapper: a graph-Laplacian eigenmap with Nyström extension."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .eigen import solve_lowest
from .graph import KernelSpec, build_operators, canonical_kind


@dataclass(frozen=True)
class _ConstantDensity:
    constant: float


class GraphLaplacianEigenmap(TransformerMixin, BaseEstimator):
    """Embed points with the lowest nontrivial eigenvectors of a graph Laplacian.

    Parameters
    ----------
    epsilon : float
        Kernel bandwidth (squared-distance scale).
    intrinsic_dim : int
        Manifold dimension ``d`` used in the kernel normalization.
    n_components : int
        Number of nontrivial eigenvectors kept (``k_max = n_components``).
    laplacian : {"rw", "un", "dc"} or full names
    profile : {"gaussian", "indicator"}
    density : float, optional
        Known constant sampling density.  Needed for ``"un"``; for ``"rw"``
        it selects the ``v^T D v = N p`` scaling, otherwise unit 2-norm is used.
    backend : {"dense", "iterative"}
    random_state : int
        Seed of the Lanczos start vector.

    Attributes
    ----------
    eigenvalues_ : ndarray of shape (n_components + 1,)
        Including the trivial ``lambda_1 ~ 0``.
    embedding_ : ndarray of shape (n_samples, n_components)
    """

    def __init__(self, epsilon=1e-3, intrinsic_dim=1, n_components=2, laplacian="rw",
                 profile="gaussian", density=None, backend="dense", random_state=0):
        self.epsilon = epsilon
        self.intrinsic_dim = intrinsic_dim
        self.n_components = n_components
        self.laplacian = laplacian
        self.profile = profile
        self.density = density
        self.backend = backend
        self.random_state = random_state

    def _spec(self):
        return KernelSpec(float(self.epsilon), int(self.intrinsic_dim), self.profile)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if not 1 <= self.n_components < X.shape[0]:
            raise ValueError(f"n_components must lie in [1, n_samples - 1], got {self.n_components}")
        kind = canonical_kind(self.laplacian)
        density = _ConstantDensity(float(self.density)) if self.density is not None else None
        ops = build_operators(X, self._spec(), kind, density=density)
        normalization = None
        if kind == "random_walk" and density is None:
            normalization = "unit2norm"
        res = solve_lowest(ops, self.n_components, self.backend, normalization, seed=self.random_state)
        self.X_fit_ = X
        self.kind_ = kind
        self.eigenvalues_ = res.eigenvalues
        self.eigenvectors_ = res.eigenvectors
        self.embedding_ = res.eigenvectors[:, 1:]
        self._scale = (ops.spec.m2 / 2.0) * ops.p * ops.spec.epsilon * ops.N if kind == "unnormalized" else None
        self._degrees = ops.degrees
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Nyström extension of the fitted eigenvectors to new points."""
        check_is_fitted(self, "embedding_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        spec = self._spec()
        K = spec.kernel(cdist(X, self.X_fit_, "sqeuclidean"))
        lam = self.eigenvalues_[1:]
        V = self.eigenvectors_[:, 1:]
        if self.kind_ == "unnormalized":
            return (K @ V) / (K.sum(axis=1)[:, None] - self._scale * lam[None, :])
        if self.kind_ == "density_corrected":
            K = K / (K.sum(axis=1)[:, None] * self._degrees[None, :])
        factor = 1.0 - spec.m_tilde * spec.epsilon * lam
        return (K @ V) / K.sum(axis=1)[:, None] / factor[None, :]

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_

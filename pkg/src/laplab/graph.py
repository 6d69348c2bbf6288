"""Kernel affinity matrices, graph Laplacians and their quadratic forms.

Conventions: ``W_ij = eps^{-d/2} h(||x_i - x_j||^2 / eps)`` over *all* pairs,
diagonal included, and ``D_i = sum_j W_ij``.  Three Laplacians are built on
top of ``W``:

    unnormalized       (D - W) / ((m2/2) p eps N)
    random_walk        (I - D^{-1} W) / (m_tilde eps)
    density_corrected  (I - Dt^{-1} Wt) / (m_tilde eps),  Wt = D^{-1} W D^{-1}

each scaled so that it converges to ``-Laplacian`` on the manifold.
"""

from dataclasses import dataclass
import math
import struct

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .manifold import SampleSet, heat_kernel_matrix

KINDS = ("unnormalized", "random_walk", "density_corrected")
PROFILES = ("gaussian", "indicator")

_KIND_ALIASES = {
    "un": "unnormalized",
    "unnormalized": "unnormalized",
    "rw": "random_walk",
    "random_walk": "random_walk",
    "dc": "density_corrected",
    "density_corrected": "density_corrected",
}


def canonical_kind(kind):
    try:
        return _KIND_ALIASES[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown Laplacian kind {kind!r}; expected one of {sorted(_KIND_ALIASES)}") from None


class DisconnectedGraphError(ValueError):
    """Raised when some sample has no neighbour other than itself."""

    def __init__(self, index):
        self.index = int(index)
        super().__init__(
            f"vertex {self.index} has no neighbours at this bandwidth; "
            "the graph is disconnected (increase eps or N)"
        )


@dataclass(frozen=True)
class KernelSpec:
    epsilon: float
    intrinsic_dim: int
    profile: str = "gaussian"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown kernel profile {self.profile!r}")
        if self.profile == "indicator" and self.intrinsic_dim not in (1, 2):
            raise ValueError("indicator moments are tabulated for d = 1, 2 only")

    @property
    def m0(self):
        if self.profile == "gaussian":
            return 1.0
        return 2.0 if self.intrinsic_dim == 1 else math.pi

    @property
    def m2(self):
        if self.profile == "gaussian":
            return 2.0
        # (1/d) * integral of |u|^2 over the unit ball
        return 2.0 / 3.0 if self.intrinsic_dim == 1 else math.pi / 4.0

    @property
    def m_tilde(self):
        return self.m2 / (2.0 * self.m0)

    def h(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.profile == "gaussian":
            return (4 * np.pi) ** (-self.intrinsic_dim / 2) * np.exp(-xi / 4.0)
        return (xi < 1.0).astype(float)

    def kernel(self, sq_dist):
        """``K_eps`` as a function of squared ambient distance."""
        return self.epsilon ** (-self.intrinsic_dim / 2) * self.h(np.asarray(sq_dist) / self.epsilon)


@dataclass(frozen=True)
class GraphOperators:
    W: np.ndarray
    degrees: np.ndarray
    kind: str
    spec: KernelSpec
    p: float = None
    W_tilde: np.ndarray = None
    D_tilde: np.ndarray = None

    @property
    def N(self):
        return self.W.shape[0]


def _points(samples):
    if isinstance(samples, SampleSet):
        return samples.ambient_points
    return np.asarray(samples, dtype=float)


def build_affinity(samples, spec, truncate=False):
    """Dense kernel affinity ``W`` and degrees ``D``.

    ``W`` is assembled from condensed pairwise distances, so it is exactly
    symmetric.  With ``truncate=True`` entries below ``1e-15 * max(W)`` are
    zeroed.
    """
    X = _points(samples)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two points as an (N, D) array")
    condensed = spec.kernel(pdist(X, "sqeuclidean"))
    W = squareform(condensed)
    diag = spec.epsilon ** (-spec.intrinsic_dim / 2) * float(spec.h(0.0))
    np.fill_diagonal(W, diag)
    if truncate:
        W[W < 1e-15 * W.max()] = 0.0
    D = W.sum(axis=1)
    isolated = np.flatnonzero(D - diag <= 0.0)
    if isolated.size:
        raise DisconnectedGraphError(isolated[0])
    return W, D


def build_operators(samples, spec, kind="random_walk", density=None, truncate=False):
    """Affinity plus everything one Laplacian variant needs.

    ``density`` supplies the constant ``p`` for the unnormalized Laplacian and
    for the ``D``-norm convention of the random-walk one; it must be uniform
    for ``kind="unnormalized"``.
    """
    kind = canonical_kind(kind)
    if density is None and isinstance(samples, SampleSet):
        density = samples.density
    p = density.constant if density is not None else None
    if kind == "unnormalized" and p is None:
        raise ValueError("the unnormalized Laplacian needs a uniform density")
    W, D = build_affinity(samples, spec, truncate=truncate)
    W_tilde = D_tilde = None
    if kind == "density_corrected":
        inv = 1.0 / D
        W_tilde = W * inv[:, None] * inv[None, :]
        D_tilde = W_tilde.sum(axis=1)
    return GraphOperators(W, D, kind, spec, p, W_tilde, D_tilde)


def _unnormalized_scale(ops):
    return (ops.spec.m2 / 2.0) * ops.p * ops.spec.epsilon * ops.N


def laplacian_apply(ops, u):
    """``L u`` for the operator's Laplacian variant."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != ops.N:
        raise ValueError(f"vector length {u.shape[0]} does not match N={ops.N}")
    if ops.kind == "unnormalized":
        if ops.p is None:
            raise ValueError("the unnormalized Laplacian needs a uniform density")
        return (_deg(ops.degrees, u) * u - ops.W @ u) / _unnormalized_scale(ops)
    if ops.kind == "random_walk":
        W, D = ops.W, ops.degrees
    else:
        W, D = ops.W_tilde, ops.D_tilde
    return (u - (W @ u) / _deg(D, u)) / (ops.spec.m_tilde * ops.spec.epsilon)


def _deg(D, u):
    return D if u.ndim == 1 else D[:, None]


def laplacian_matrix(ops):
    """The dense Laplacian matrix (mainly for checks on small instances)."""
    if ops.kind == "unnormalized":
        return (np.diag(ops.degrees) - ops.W) / _unnormalized_scale(ops)
    if ops.kind == "random_walk":
        W, D = ops.W, ops.degrees
    else:
        W, D = ops.W_tilde, ops.D_tilde
    return (np.eye(ops.N) - W / D[:, None]) / (ops.spec.m_tilde * ops.spec.epsilon)


def _pairwise_sum(W, u):
    u = np.asarray(u, dtype=float)
    diff = u[:, None] - u[None, :]
    return float(np.sum(W * diff * diff))


def dirichlet_form(ops, u, variant=None):
    """Graph Dirichlet form via the pairwise-difference sum.

    ``standard``: ``E_N(u) = sum_ij W_ij (u_i - u_j)^2 / (m2 eps N^2)``.
    ``density_corrected``: ``sum_ij Wt_ij (u_i - u_j)^2 m0^2 / (m2 eps)``.
    The default variant follows ``ops.kind``.
    """
    if variant is None:
        variant = "density_corrected" if ops.kind == "density_corrected" else "standard"
    u = np.asarray(u, dtype=float)
    if u.shape != (ops.N,):
        raise ValueError(f"expected a vector of length {ops.N}")
    spec = ops.spec
    if variant == "standard":
        return _pairwise_sum(ops.W, u) / (spec.m2 * spec.epsilon * ops.N**2)
    if variant == "density_corrected":
        if ops.kind != "density_corrected":
            raise ValueError("density-corrected form requires density-corrected operators")
        return _pairwise_sum(ops.W_tilde, u) * spec.m0**2 / (spec.m2 * spec.epsilon)
    raise ValueError(f"unknown Dirichlet form variant {variant!r}")


def bilinear_form(ops, u, v, variant=None):
    """Polarization ``(E(u + v) - E(u - v)) / 4``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("u and v must have the same shape")
    return (dirichlet_form(ops, u + v, variant) - dirichlet_form(ops, u - v, variant)) / 4.0


@dataclass(frozen=True)
class DegreeReport:
    max_degree_deviation: float
    degree_ok: bool
    max_row_sum_deviation: float = None
    row_sum_ok: bool = None
    tolerance: float = None

    @property
    def passed(self):
        return self.degree_ok and (self.row_sum_ok is None or self.row_sum_ok)


def degree_diagnostic(ops, samples, tol=0.1):
    """Degree concentration ``max_i |D_i/N - m0 p(x_i)|``.

    For density-corrected operators it also reports
    ``max_i |sum_j W_ij / D_j - 1|``.
    """
    N = ops.N
    dev = float(np.max(np.abs(ops.degrees / N - ops.spec.m0 * samples.density_values)))
    row = row_ok = None
    if ops.kind == "density_corrected":
        row = float(np.max(np.abs(ops.W @ (1.0 / ops.degrees) - 1.0)))
        row_ok = row <= tol
    return DegreeReport(dev, dev <= tol, row, row_ok, tol)


def heat_quadratic_forms(samples, s, u, weighted=False):
    """``(q_s, q_s^(0), q_s^(2))`` built from the exact heat kernel.

    With ``weighted=True`` the kernel is divided by ``p(x_i) p(x_j)``.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    u = np.asarray(u, dtype=float)
    N = samples.N
    A = heat_kernel_matrix(samples.manifold, s, samples.intrinsic_coords)
    if weighted:
        inv = 1.0 / samples.density_values
        A = A * inv[:, None] * inv[None, :]
    q = float(u @ A @ u) / N**2
    q0 = float(np.sum(u**2 * A.sum(axis=1))) / N**2
    q2 = 0.5 * _pairwise_sum(A, u) / N**2
    return q, q0, q2


# ------------------------------------------------------------- matrix dumps

_MAGIC = b"LAPLABM1"


def dump_matrix(path, M):
    """Write a square matrix: 8-byte magic, uint64 N, then row-major float64 (little endian)."""
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("only square matrices can be dumped")
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<Q", M.shape[0]))
        fh.write(M.tobytes(order="C"))


def load_matrix(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:8] != _MAGIC:
            raise ValueError(f"{path}: not a laplab matrix dump")
        (n,) = struct.unpack("<Q", header[8:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * n:
        raise ValueError(f"{path}: expected {n * n} entries, found {data.size}")
    return data.reshape(n, n).astype(float)

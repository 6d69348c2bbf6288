"""Benchmark manifolds with exact samplers, spectra and heat kernels.

Two closed manifolds are provided:

* ``s1``: the unit-length circle isometrically embedded in R^4 by
  ``t -> (cos 2pi t, sin 2pi t, 2/3 cos 6pi t, 2/3 sin 6pi t) / (2 pi sqrt 5)``,
  intrinsic coordinate ``t in [0, 1)`` (arclength).
* ``s2``: the unit sphere in R^3, intrinsic coordinates ``(theta, phi)``
  (polar angle, azimuth).

Everything else in the package is measured against the analytic objects
defined here.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import lpmv

from ._random import make_rng

TWO_PI = 2.0 * np.pi
_CIRCLE_SCALE = 1.0 / (TWO_PI * np.sqrt(5.0))
_INV_CDF_POINTS = 2**16


@dataclass(frozen=True)
class ManifoldModel:
    kind: str
    ambient_dim: int
    intrinsic_dim: int
    volume: float

    @property
    def name(self):
        return "s1" if self.kind == "circle_r4" else "s2"

    def embed(self, intrinsic):
        """Map intrinsic coordinates to ambient points."""
        intrinsic = np.asarray(intrinsic, dtype=float)
        if self.kind == "circle_r4":
            a = TWO_PI * intrinsic
            b = 3.0 * a
            return _CIRCLE_SCALE * np.stack(
                [np.cos(a), np.sin(a), (2.0 / 3.0) * np.cos(b), (2.0 / 3.0) * np.sin(b)],
                axis=-1,
            )
        theta, phi = intrinsic[..., 0], intrinsic[..., 1]
        st = np.sin(theta)
        return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)

    def geodesic_distance(self, x, y):
        """Exact geodesic distance between intrinsic points (broadcasting)."""
        if self.kind == "circle_r4":
            s = np.abs(_wrap(np.asarray(x, float) - np.asarray(y, float)))
            return s
        return np.arccos(np.clip(_sphere_cos(x, y, self), -1.0, 1.0))


CIRCLE = ManifoldModel("circle_r4", ambient_dim=4, intrinsic_dim=1, volume=1.0)
SPHERE = ManifoldModel("sphere_r3", ambient_dim=3, intrinsic_dim=2, volume=4.0 * np.pi)

_MANIFOLDS = {"s1": CIRCLE, "circle_r4": CIRCLE, "s2": SPHERE, "sphere_r3": SPHERE}


def get_manifold(name):
    try:
        return _MANIFOLDS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown manifold {name!r}; expected one of s1, s2") from None


def _wrap(s):
    # signed difference on the unit circle, in [-1/2, 1/2)
    return (s + 0.5) % 1.0 - 0.5


def _sphere_cos(x, y, model):
    xa = model.embed(x)
    ya = model.embed(y)
    return np.sum(xa * ya, axis=-1)


# ---------------------------------------------------------------- densities


def _nonuniform_p(t):
    return 1.0 + 0.5 * np.sin(4 * np.pi * t) + 0.3 * np.sin(10 * np.pi * t)


def _nonuniform_cdf(t):
    return (
        t
        + 0.5 * (1.0 - np.cos(4 * np.pi * t)) / (4 * np.pi)
        + 0.3 * (1.0 - np.cos(10 * np.pi * t)) / (10 * np.pi)
    )


@dataclass(frozen=True)
class DensityModel:
    """Sampling density on a manifold, w.r.t. the Riemannian volume."""

    kind: str
    manifold: ManifoldModel

    @property
    def is_uniform(self):
        return self.kind == "uniform"

    @property
    def constant(self):
        """The density value when uniform (``1 / Vol``), else ``None``."""
        return 1.0 / self.manifold.volume if self.is_uniform else None

    @property
    def lower_bound(self):
        return self.constant if self.is_uniform else 0.2

    def __call__(self, intrinsic):
        intrinsic = np.asarray(intrinsic, dtype=float)
        if self.is_uniform:
            shape = intrinsic.shape if self.manifold.intrinsic_dim == 1 else intrinsic.shape[:-1]
            return np.full(shape, self.constant)
        return _nonuniform_p(intrinsic)


def get_density(name, manifold):
    name = name.lower()
    if name == "uniform":
        return DensityModel("uniform", manifold)
    if name in ("nonuniform", "circle_nonuniform"):
        if manifold.kind != "circle_r4":
            raise ValueError("the non-uniform density is only defined on s1")
        return DensityModel("circle_nonuniform", manifold)
    raise ValueError(f"unknown density {name!r}; expected uniform or nonuniform")


@lru_cache(maxsize=1)
def _nonuniform_inverse_cdf():
    grid = np.linspace(0.0, 1.0, _INV_CDF_POINTS + 1)
    return PchipInterpolator(_nonuniform_cdf(grid), grid)


# ------------------------------------------------------------------ samples


@dataclass(frozen=True)
class SampleSet:
    intrinsic_coords: np.ndarray
    ambient_points: np.ndarray
    density_values: np.ndarray
    seed: int
    manifold: ManifoldModel = field(repr=False)
    density: DensityModel = field(repr=False)

    @property
    def N(self):
        return self.ambient_points.shape[0]


def sample(model, density, N, seed):
    """Draw ``N`` i.i.d. points from ``density`` on ``model``.

    The same ``(model, density, N, seed)`` always yields bit-identical arrays.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if density.manifold != model:
        raise ValueError(f"density {density.kind!r} is defined on {density.manifold.name}, not {model.name}")
    rng = make_rng(seed)
    if model.kind == "circle_r4":
        u = rng.random(N)
        if density.is_uniform:
            t = u
        else:
            t = np.mod(_nonuniform_inverse_cdf()(u), 1.0)
        intrinsic = t
        ambient = model.embed(t)
    else:
        g = rng.standard_normal((N, 3))
        ambient = g / np.linalg.norm(g, axis=1, keepdims=True)
        theta = np.arccos(np.clip(ambient[:, 2], -1.0, 1.0))
        phi = np.mod(np.arctan2(ambient[:, 1], ambient[:, 0]), TWO_PI)
        intrinsic = np.stack([theta, phi], axis=1)
        # re-embed so that ambient points are exactly the embedding of the stored angles
        ambient = model.embed(intrinsic)
    return SampleSet(
        intrinsic_coords=intrinsic,
        ambient_points=ambient,
        density_values=density(intrinsic),
        seed=int(seed),
        manifold=model,
        density=density,
    )


# ------------------------------------------------------------------ spectra


@dataclass(frozen=True)
class AnalyticEigensystem:
    """Lowest ``K`` eigenpairs of ``-Laplacian``, orthonormal in L^2(M, dV).

    Indices are 0-based: index 0 is the constant eigenfunction.
    """

    manifold: ManifoldModel
    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    _labels: tuple = field(repr=False)

    @property
    def K(self):
        return len(self.eigenvalues)

    def evaluate(self, intrinsic, k=None):
        """Eigenfunction values at points; shape ``(N, K)``, or ``(N,)`` for one ``k``."""
        idx = range(self.K) if k is None else [k]
        cols = [_eigenfunction(self.manifold, self._labels[i], intrinsic) for i in idx]
        out = np.stack(cols, axis=-1)
        return out[..., 0] if k is not None else out


def _circle_labels(K):
    labels = [(0, "c")]
    j = 1
    while len(labels) < K:
        labels += [(j, "c"), (j, "s")]
        j += 1
    return labels[:K]


def _sphere_labels(K):
    labels = []
    ell = 0
    while len(labels) < K:
        labels.append((ell, 0))
        for m in range(1, ell + 1):
            labels += [(ell, m), (ell, -m)]
        ell += 1
    return labels[:K]


def _eigenfunction(model, label, intrinsic):
    x = np.asarray(intrinsic, dtype=float)
    if model.kind == "circle_r4":
        j, trig = label
        if j == 0:
            return np.ones_like(x)
        f = np.cos if trig == "c" else np.sin
        return np.sqrt(2.0) * f(TWO_PI * j * x)
    ell, m = label
    theta, phi = x[..., 0], x[..., 1]
    am = abs(m)
    norm = math.sqrt((2 * ell + 1) / (4 * math.pi) * math.exp(math.lgamma(ell - am + 1) - math.lgamma(ell + am + 1)))
    legendre = lpmv(am, ell, np.cos(theta))
    if m == 0:
        return norm * legendre
    trig = np.cos(am * phi) if m > 0 else np.sin(am * phi)
    return math.sqrt(2.0) * norm * legendre * trig


def analytic_spectrum(model, K):
    """Lowest ``K`` Laplace-Beltrami eigenvalues (with repeats) and eigenfunctions."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if model.kind == "circle_r4":
        labels = _circle_labels(K)
        mu = np.array([(TWO_PI * j) ** 2 for j, _ in labels])
    else:
        labels = _sphere_labels(K)
        mu = np.array([float(ell * (ell + 1)) for ell, _ in labels])
    _, mult = np.unique(mu, return_counts=True)
    return AnalyticEigensystem(model, mu, mult, tuple(labels))


# ------------------------------------------------------------- heat kernels


def heat_kernel(model, t, x, y):
    """Exact heat kernel ``H_t(x, y)`` between intrinsic points (broadcasting).

    On the circle this is the wrapped Gaussian, truncated once images fall
    below 1e-16; on the sphere the Legendre series, truncated once the term
    bound ``exp(-l(l+1)t)(2l+1)/4pi`` falls below 1e-14.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if model.kind == "circle_r4":
        s = _wrap(np.asarray(x, float) - np.asarray(y, float))
        return _wrapped_gaussian(s, t)
    return _sphere_heat(_sphere_cos(x, y, model), t)


def heat_kernel_matrix(model, t, points):
    """``H_t`` over all pairs of an intrinsic-coordinate array."""
    points = np.asarray(points, float)
    if model.kind == "circle_r4":
        return heat_kernel(model, t, points[:, None], points[None, :])
    amb = model.embed(points)
    c = np.clip(amb @ amb.T, -1.0, 1.0)
    return _sphere_heat(c, t)


def _wrapped_gaussian(s, t):
    amp = (4 * np.pi * t) ** -0.5
    # smallest image index whose contribution is below 1e-16 for any s
    log_ratio = max(math.log(amp / 1e-16), 0.0)
    n_max = int(math.ceil(0.5 + math.sqrt(4 * t * log_ratio))) + 1
    total = np.zeros(np.broadcast(s).shape)
    for n in range(-n_max, n_max + 1):
        total = total + np.exp(-((s + n) ** 2) / (4 * t))
    return amp * total


def _sphere_degree_cutoff(t):
    ell = 0
    while math.exp(-ell * (ell + 1) * t) * (2 * ell + 1) / (4 * math.pi) >= 1e-14:
        ell += 1
    return ell


def _sphere_heat(c, t):
    c = np.asarray(c, float)
    L = _sphere_degree_cutoff(t)
    p_prev = np.ones_like(c)
    total = p_prev / (4 * math.pi)
    if L == 0:
        return total
    p_cur = c.copy()
    for ell in range(1, L):
        total += math.exp(-ell * (ell + 1) * t) * (2 * ell + 1) / (4 * math.pi) * p_cur
        p_prev, p_cur = p_cur, ((2 * ell + 1) * c * p_cur - ell * p_prev) / (ell + 1)
    # the true kernel is positive; the alternating tail can leave -1e-14 level residue
    return np.maximum(total, 0.0)


def gaussian_surrogate(model, t, x, y):
    """``(4 pi t)^{-d/2} exp(-d_M(x, y)^2 / 4t)`` with exact geodesic distance."""
    if not t > 0:
        raise ValueError("t must be positive")
    d = model.geodesic_distance(x, y)
    return (4 * np.pi * t) ** (-model.intrinsic_dim / 2) * np.exp(-(d**2) / (4 * t))


def ambient_gaussian(model, t, x, y):
    """Ambient Gaussian ``K_t(x, y) = (4 pi t)^{-d/2} exp(-||x - y||^2 / 4t)``."""
    diff = model.embed(x) - model.embed(y)
    r2 = np.sum(diff * diff, axis=-1)
    return (4 * np.pi * t) ** (-model.intrinsic_dim / 2) * np.exp(-r2 / (4 * t))


# ----------------------------------------------------------- test functions


@dataclass(frozen=True)
class SmoothFunction:
    """A smooth function with its analytic Laplace-Beltrami image."""

    name: str
    f: object
    laplacian: object


def appendix_function():
    """``f(t) = 0.2 sin 4pi t - 0.8 sin 8pi t`` on s1 and its Laplacian."""
    a, b = 4 * np.pi, 8 * np.pi
    return SmoothFunction(
        "appendix",
        lambda t: 0.2 * np.sin(a * np.asarray(t)) - 0.8 * np.sin(b * np.asarray(t)),
        lambda t: -0.2 * a**2 * np.sin(a * np.asarray(t)) + 0.8 * b**2 * np.sin(b * np.asarray(t)),
    )


def eigen_function(model, k, scale=1.0):
    """``scale * psi_k`` (0-based ``k``) with Laplacian ``-mu_k scale psi_k``."""
    system = analytic_spectrum(model, k + 1)
    mu = system.eigenvalues[k]
    return SmoothFunction(
        f"psi{k + 1}",
        lambda x: scale * system.evaluate(x, k),
        lambda x: -mu * scale * system.evaluate(x, k),
    )


def get_function(name, model, density=None):
    """Registered test functions: ``appendix`` (s1 only) and ``psiK``.

    ``psiK`` is scaled by ``1/sqrt(p)`` when ``density`` is uniform.
    """
    if name == "appendix":
        if model.kind != "circle_r4":
            raise ValueError("the appendix test function lives on s1")
        return appendix_function()
    if name.startswith("psi"):
        k = int(name[3:]) - 1
        scale = 1.0
        if density is not None and density.is_uniform:
            scale = 1.0 / math.sqrt(density.constant)
        return eigen_function(model, k, scale)
    raise ValueError(f"unknown test function {name!r}")


def quadrature_grid(model, n=1_000_000):
    """Intrinsic nodes and volume weights for integrating smooth functions."""
    if model.kind == "circle_r4":
        nodes = np.arange(n) / n
        return nodes, np.full(n, 1.0 / n)
    n_theta = max(int(math.sqrt(n / 2)), 8)
    n_phi = 2 * n_theta
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)
    phi = np.arange(n_phi) * (TWO_PI / n_phi)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = np.outer(w, np.full(n_phi, TWO_PI / n_phi))
    return np.stack([T.ravel(), P.ravel()], axis=1), W.ravel()


def dirichlet_energy(model, func, n=1_000_000):
    """``<f, -Laplacian f>`` in L^2(M, dV) by quadrature."""
    nodes, w = quadrature_grid(model, n)
    return float(np.sum(-func.f(nodes) * func.laplacian(nodes) * w))

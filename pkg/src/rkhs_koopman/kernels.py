"""Positive-definite kernels and Gram matrices.

Every kernel exposes a vectorised ``gram(X, Y)``; :func:`kernel_eval` is the
scalar convenience wrapper. Kernels are frozen dataclasses so they can be
hashed, compared and shared between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "Gaussian",
    "Matern52",
    "LinearAffine",
    "Centered",
    "KernelSpec",
    "kernel_eval",
    "gram_matrix",
    "kernel_from_dict",
    "kernel_to_dict",
    "psd_min_eig_ok",
]

_SQRT5 = np.sqrt(5.0)


def _as_points(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a point or a list of points, got shape {X.shape}")
    return X


@dataclass(frozen=True)
class Gaussian:
    """k(x, y) = exp(-||x - y||^2 / (2 l^2))."""

    length_scale: float = 1.0

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")

    def gram(self, X, Y) -> np.ndarray:
        d2 = cdist(X, Y, "sqeuclidean")
        return np.exp(-0.5 * d2 / self.length_scale**2)


@dataclass(frozen=True)
class Matern52:
    """Matern kernel with nu = 5/2, unit variance (k(x, x) = 1)."""

    length_scale: float = 1.0

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")

    def gram(self, X, Y) -> np.ndarray:
        r = _SQRT5 * cdist(X, Y, "euclidean") / self.length_scale
        return (1.0 + r + r * r / 3.0) * np.exp(-r)


@dataclass(frozen=True)
class LinearAffine:
    """k(x, y) = 1 + x^T y."""

    def gram(self, X, Y) -> np.ndarray:
        return 1.0 + X @ Y.T


@dataclass(frozen=True)
class Centered:
    """Base kernel re-centred so that every section vanishes at ``anchor``.

    kc(x, y) = h(x, y) - h(x, a) - h(a, y) + h(a, a)
    """

    base: "KernelSpec"
    anchor: tuple

    def __post_init__(self):
        if isinstance(self.base, Centered):
            raise ValueError("a Centered kernel may not wrap another Centered kernel")
        object.__setattr__(self, "anchor", tuple(float(a) for a in np.ravel(self.anchor)))

    def gram(self, X, Y) -> np.ndarray:
        a = np.asarray(self.anchor)[None, :]
        h = self.base.gram
        return h(X, Y) - h(X, a) - h(a, Y) + h(a, a)


KernelSpec = Union[Gaussian, Matern52, LinearAffine, Centered]


def gram_matrix(spec: KernelSpec, X, Y=None) -> np.ndarray:
    """Return the m x n matrix ``[k(X_i, Y_j)]``.

    ``Y`` defaults to ``X``; in that case the result is symmetrised to remove
    round-off asymmetry.
    """
    X = _as_points(X, "X")
    same = Y is None
    Y = X if same else _as_points(Y, "Y")
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("point lists must be non-empty")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if isinstance(spec, Centered) and len(spec.anchor) != X.shape[1]:
        raise ValueError("dimension mismatch between points and centring anchor")
    K = spec.gram(X, Y)
    if same:
        K = 0.5 * (K + K.T)
    return K


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    return float(gram_matrix(spec, x[None, :], y[None, :])[0, 0])


def psd_min_eig_ok(K: np.ndarray, rel_tol: float = 1e-8) -> bool:
    """True when the smallest eigenvalue of symmetric K is >= -rel_tol * trace."""
    w = np.linalg.eigvalsh(0.5 * (K + K.T))
    return bool(w[0] >= -rel_tol * max(np.trace(K), 0.0))


def kernel_to_dict(spec: KernelSpec) -> dict[str, Any]:
    if isinstance(spec, Gaussian):
        return {"kind": "gaussian", "length_scale": spec.length_scale}
    if isinstance(spec, Matern52):
        return {"kind": "matern52", "length_scale": spec.length_scale}
    if isinstance(spec, LinearAffine):
        return {"kind": "linear_affine"}
    if isinstance(spec, Centered):
        return {"kind": "centered", "base": kernel_to_dict(spec.base), "anchor": list(spec.anchor)}
    raise TypeError(f"unknown kernel {spec!r}")


def kernel_from_dict(d: dict[str, Any]) -> KernelSpec:
    kind = d.get("kind")
    if kind == "gaussian":
        return Gaussian(float(d["length_scale"]))
    if kind == "matern52":
        return Matern52(float(d["length_scale"]))
    if kind == "linear_affine":
        return LinearAffine()
    if kind == "centered":
        return Centered(kernel_from_dict(d["base"]), tuple(d["anchor"]))
    raise ValueError(f"unknown kernel kind {kind!r}")

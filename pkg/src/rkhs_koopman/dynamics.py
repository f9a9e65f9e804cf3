"""Benchmark discrete-time systems.

Four maps are provided: a polynomial map with a known finite Koopman-invariant
subspace, a forward-Euler Van der Pol oscillator, a scaled Nicholson-Bailey
host-parasitoid model and an explicit finite-difference convection-diffusion
scheme.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .dataset import Trajectory

__all__ = [
    "PolyMap2D",
    "VanDerPolEuler",
    "NicholsonBailey",
    "ConvectionDiffusion1D",
    "SystemSpec",
    "step",
    "simulate",
    "pde_initial",
    "system_from_dict",
    "system_to_dict",
]


@dataclass(frozen=True)
class PolyMap2D:
    mu1: float = 0.95
    mu2: float = 0.75
    dim = 2

    def step(self, x: np.ndarray) -> np.ndarray:
        x1, x2 = x
        return np.array([self.mu1 * x1, self.mu2 * x2 + (self.mu1**2 - self.mu2) * x1**2])


@dataclass(frozen=True)
class VanDerPolEuler:
    mu: float = 0.5
    dt: float = 0.2
    u: float = 0.0
    dim = 2

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def step(self, x: np.ndarray) -> np.ndarray:
        x1, x2 = x
        return np.array([x1 + self.dt * x2, x2 + self.dt * (self.mu * (1.0 - x1**2) * x2 - x1 + self.u)])


@dataclass(frozen=True)
class NicholsonBailey:
    R0: float = 1.1
    c: float = 3.0
    dim = 2

    def step(self, x: np.ndarray) -> np.ndarray:
        x1, x2 = x
        base = 1.0 + 2.0 * x2
        if np.any(base <= 0):
            raise ValueError("Nicholson-Bailey map requires 1 + 2*x2 > 0")
        s = base**-0.5
        return np.array([self.R0 * x1 * s, self.c * x1 * (1.0 - s)])


@dataclass(frozen=True)
class ConvectionDiffusion1D:
    """Explicit scheme for u_t = a u_xi + b u_xixi on [0, 1].

    Central differences on interior nodes; at the two boundary nodes the first
    and second derivatives use one-sided stencils, so no boundary value is
    imposed.
    """

    a: float = 1.0
    b: float = 0.1
    dxi: float = 1e-2
    dt: float = 1e-4

    def __post_init__(self):
        if not (self.dt > 0 and self.dxi > 0):
            raise ValueError("dt and dxi must be positive")
        if self.b * self.dt / self.dxi**2 >= 0.5 or abs(self.a) * self.dt / self.dxi >= 1:
            warnings.warn("convection-diffusion parameters violate the explicit stability limits")

    @property
    def dim(self) -> int:
        return int(round(1.0 / self.dxi)) + 1

    def matrix(self, n: int | None = None) -> np.ndarray:
        """Dense one-step update matrix (the map is linear)."""
        n = self.dim if n is None else n
        h = self.dxi
        D1 = np.zeros((n, n))
        D2 = np.zeros((n, n))
        i = np.arange(1, n - 1)
        D1[i, i + 1] = 0.5 / h
        D1[i, i - 1] = -0.5 / h
        D2[i, i - 1] = D2[i, i + 1] = 1.0 / h**2
        D2[i, i] = -2.0 / h**2
        D1[0, :2] = np.array([-1.0, 1.0]) / h
        D1[-1, -2:] = np.array([-1.0, 1.0]) / h
        D2[0, :3] = np.array([1.0, -2.0, 1.0]) / h**2
        D2[-1, -3:] = np.array([1.0, -2.0, 1.0]) / h**2
        return np.eye(n) + self.dt * (self.a * D1 + self.b * D2)

    def step(self, x: np.ndarray) -> np.ndarray:
        u = np.asarray(x, dtype=float)
        h = self.dxi
        d1 = np.empty_like(u)
        d2 = np.empty_like(u)
        d1[1:-1] = (u[2:] - u[:-2]) / (2 * h)
        d2[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
        d1[0] = (u[1] - u[0]) / h
        d1[-1] = (u[-1] - u[-2]) / h
        d2[0] = (u[0] - 2 * u[1] + u[2]) / h**2
        d2[-1] = (u[-3] - 2 * u[-2] + u[-1]) / h**2
        return u + self.dt * (self.a * d1 + self.b * d2)


SystemSpec = Union[PolyMap2D, VanDerPolEuler, NicholsonBailey, ConvectionDiffusion1D]


def step(sys: SystemSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != sys.dim:
        raise ValueError(f"{type(sys).__name__} expects a state of dimension {sys.dim}, got {x.shape[0]}")
    return sys.step(x)


def step_many(sys: SystemSpec, X) -> np.ndarray:
    """Apply one step to every row of X (vectorised for the planar maps)."""
    X = np.asarray(X, dtype=float)
    if isinstance(sys, ConvectionDiffusion1D):
        return X @ sys.matrix(X.shape[1]).T
    out = sys.step(X.T)
    return np.asarray(out).T


def simulate(sys: SystemSpec, x0, n: int) -> Trajectory:
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x0, dtype=float).ravel()
    states = np.empty((n + 1, x.shape[0]))
    states[0] = x
    for k in range(n):
        x = step(sys, x)
        states[k + 1] = x
    return Trajectory(states)


def pde_initial(profile: str, n_x: int = 101) -> np.ndarray:
    if n_x < 2:
        raise ValueError("n_x must be >= 2")
    xi = np.arange(n_x) / (n_x - 1)
    if profile == "sin_pi":
        return np.sin(np.pi * xi)
    if profile == "one_minus_exp":
        return 1.0 - np.exp(-xi)
    raise ValueError(f"unknown initial profile {profile!r}")


_NAMES = {
    "polymap2d": PolyMap2D,
    "vanderpol": VanDerPolEuler,
    "nicholson_bailey": NicholsonBailey,
    "convection_diffusion": ConvectionDiffusion1D,
}


def system_from_dict(d: dict[str, Any]) -> SystemSpec:
    d = dict(d)
    name = d.pop("system", None)
    if name not in _NAMES:
        raise ValueError(f"unknown system {name!r}")
    return _NAMES[name](**{k: float(v) for k, v in d.items()})


def system_to_dict(sys: SystemSpec) -> dict[str, Any]:
    name = {v: k for k, v in _NAMES.items()}[type(sys)]
    out = {"system": name}
    out.update({k: getattr(sys, k) for k in sys.__dataclass_fields__})
    return out

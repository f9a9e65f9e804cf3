"""The learned operator as a finite expansion over kernel sections.

An estimate stores its coefficient matrix ``A`` together with the anchor
points of both expansions, so it can be evaluated anywhere, iterated,
projected and serialised without the training data.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import solvers as S
from .dataset import ObservableSet, TrainingData
from .kernels import KernelSpec, LinearAffine, gram_matrix, kernel_from_dict, kernel_to_dict

__all__ = [
    "KoopmanEstimate",
    "METHODS",
    "fit",
    "apply_observable",
    "apply",
    "eigenvalues",
    "predict_observables",
    "reconstruct_state_linear",
    "project_estimate",
    "operator_norms",
    "save_estimate",
    "load_estimate",
]


@dataclass(frozen=True)
class KoopmanEstimate:
    kernel: KernelSpec
    anchors_z: np.ndarray
    anchors_g: np.ndarray
    A: np.ndarray
    G: np.ndarray
    Gcross: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        nz, ng = len(self.anchors_z), len(self.anchors_g)
        if self.A.shape != (nz, ng) or self.G.shape != (ng, ng) or self.Gcross.shape != (ng, nz) or self.Z.shape != (nz, nz):
            raise ValueError("inconsistent shapes in KoopmanEstimate")

    @classmethod
    def from_anchors(cls, kernel: KernelSpec, anchors_z, anchors_g, A) -> "KoopmanEstimate":
        qz = np.atleast_2d(np.asarray(anchors_z, dtype=float))
        pg = np.atleast_2d(np.asarray(anchors_g, dtype=float))
        return cls(
            kernel=kernel,
            anchors_z=qz,
            anchors_g=pg,
            A=np.asarray(A, dtype=float),
            G=gram_matrix(kernel, pg),
            Gcross=gram_matrix(kernel, pg, qz),
            Z=gram_matrix(kernel, qz),
        )

    @property
    def observable_invariant(self) -> bool:
        return self.anchors_z.shape == self.anchors_g.shape and bool(np.array_equal(self.anchors_z, self.anchors_g))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kernel": kernel_to_dict(self.kernel),
            "anchors_z": self.anchors_z.tolist(),
            "anchors_g": self.anchors_g.tolist(),
            "A": self.A.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "KoopmanEstimate":
        return cls.from_anchors(kernel_from_dict(d["kernel"]), d["anchors_z"], d["anchors_g"], np.array(d["A"], dtype=float))


def save_estimate(est: KoopmanEstimate, path: str | os.PathLike, extra: dict | None = None) -> None:
    d = est.to_dict()
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh, indent=1)
        fh.write("\n")


def load_estimate(path: str | os.PathLike) -> KoopmanEstimate:
    with open(path) as fh:
        return KoopmanEstimate.from_dict(json.load(fh))


# ---------------------------------------------------------------- learning

METHODS = (
    "edmd",
    "operator",
    "operator_stable",
    "frobenius",
    "frobenius_stable",
    "nuclear",
    "rank",
    "huber",
    "pseudo_huber",
)


def fit(
    data: TrainingData,
    method: str,
    lam: float = 1e-6,
    *,
    rho: float | None = None,
    rank: int | None = None,
    loss_scale: float = 1.0,
    opts: S.SolverOptions = S.SolverOptions(),
) -> tuple[KoopmanEstimate, S.SolveResult]:
    """Run one solver on ``data`` and wrap the coefficients as an estimate."""
    P, R = data.design()
    G, Y = data.G, data.Y
    if method == "edmd":
        # EDMD regresses on the observables themselves
        P_G = gram_matrix(data.kernel, data.preimages, data.anchors_g)
        res = S.solve_edmd(P_G, Y, G)
        est = KoopmanEstimate.from_anchors(data.kernel, data.anchors_g, data.anchors_g, res.A)
        return est, res
    kw = dict(P=P)
    if method == "operator":
        res = S.solve_operator_norm(R, G, Y, lam, S.ConstraintSpec(rho), opts, **kw)
    elif method == "operator_stable":
        res = S.solve_operator_norm(R, G, Y, lam, S.ConstraintSpec(1.0 if rho is None else rho), opts, **kw)
    elif method == "frobenius":
        res = S.solve_frobenius(R, G, Y, lam, opts=opts, **kw)
    elif method == "frobenius_stable":
        res = S.solve_frobenius_stable(R, G, Y, lam, 1.0 if rho is None else rho, opts, **kw)
    elif method == "nuclear":
        res = S.solve_nuclear(R, G, Y, lam, opts, **kw)
    elif method == "rank":
        if rank is None:
            raise ValueError("method 'rank' needs a rank bound")
        res = S.solve_rank(R, G, Y, rank, **kw)
    elif method == "huber":
        res = S.solve_general_loss(R, G, Y, S.Huber(loss_scale), lam, opts, **kw)
    elif method == "pseudo_huber":
        res = S.solve_general_loss(R, G, Y, S.PseudoHuber(loss_scale), lam, opts, **kw)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    est = KoopmanEstimate(
        kernel=data.kernel,
        anchors_z=data.anchors_z,
        anchors_g=data.anchors_g,
        A=res.A,
        G=G,
        Gcross=data.Gcross,
        Z=R,
    )
    return est, res


# ---------------------------------------------------------------- evaluation


def apply(est: KoopmanEstimate, X) -> np.ndarray:
    """Values ``(K g_l)(x)`` for all rows of ``X`` and all observables."""
    return gram_matrix(est.kernel, X, est.anchors_z) @ (est.A @ est.G)


def apply_to(est: KoopmanEstimate, X, test_anchors) -> np.ndarray:
    """Values of the operator applied to arbitrary kernel sections ``k(p, .)``."""
    Kpz = gram_matrix(est.kernel, est.anchors_g, np.atleast_2d(test_anchors))
    return gram_matrix(est.kernel, X, est.anchors_z) @ (est.A @ Kpz)


def apply_observable(est: KoopmanEstimate, l: int, x) -> float:
    if not 0 <= l < est.A.shape[1]:
        raise IndexError(f"observable index {l} out of range")
    x = np.asarray(x, dtype=float).ravel()[None, :]
    return float((gram_matrix(est.kernel, x, est.anchors_z) @ (est.A @ est.G[:, l]))[0])


def eigenvalues(est: KoopmanEstimate) -> np.ndarray:
    """Spectrum of ``A @ Gcross``, by decreasing modulus then increasing angle."""
    ev = np.linalg.eigvals(est.A @ est.Gcross)
    mag = np.round(np.abs(ev), 12)
    ang = np.round(np.angle(ev), 12)
    return ev[np.lexsort((ang, -mag))]


def predict_observables(est: KoopmanEstimate, x0, n: int) -> np.ndarray:
    """Rows ``phi_0 .. phi_n`` with ``phi_{m+1} = phi_m @ (A G)``."""
    if not est.observable_invariant:
        raise ValueError("prediction requires observable-invariant estimate (anchors_z == anchors_g)")
    if n < 0:
        raise ValueError("n must be >= 0")
    x0 = np.asarray(x0, dtype=float).ravel()[None, :]
    M = est.A @ est.G
    out = np.empty((n + 1, est.A.shape[1]))
    out[0] = gram_matrix(est.kernel, x0, est.anchors_g)[0]
    for m in range(n):
        out[m + 1] = out[m] @ M
    return out


def reconstruct_state_linear(obs: ObservableSet, phi) -> np.ndarray:
    """Least-squares state from values of ``1 + p_l^T x``."""
    if not isinstance(obs.kernel, LinearAffine):
        raise TypeError("state reconstruction needs the linear-affine kernel")
    phi = np.asarray(phi, dtype=float)
    return (S.pinv(obs.anchors) @ (phi - 1.0).T).T


def project_estimate(est: KoopmanEstimate, w_anchors) -> KoopmanEstimate:
    """Replace each representer by its orthogonal projection onto ``span k(w_j, .)``."""
    Wa = np.atleast_2d(np.asarray(w_anchors, dtype=float))
    if Wa.shape[0] == 0:
        raise ValueError("w_anchors must be non-empty")
    P_W = gram_matrix(est.kernel, est.anchors_z, Wa)
    W = gram_matrix(est.kernel, Wa)
    C = (P_W @ S.pinv(W)).T @ est.A
    return KoopmanEstimate(
        kernel=est.kernel,
        anchors_z=Wa,
        anchors_g=est.anchors_g,
        A=C,
        G=est.G,
        Gcross=gram_matrix(est.kernel, est.anchors_g, Wa),
        Z=W,
    )


def operator_norms(est: KoopmanEstimate) -> dict[str, float]:
    B = S.psd_sqrt(est.Z) @ est.A @ S.psd_sqrt(est.G)
    sv = np.linalg.svd(B, compute_uv=False)
    return {
        "operator": float(sv.max(initial=0.0)),
        "frobenius": float(np.sqrt(np.sum(sv**2))),
        "nuclear": float(np.sum(sv)),
    }

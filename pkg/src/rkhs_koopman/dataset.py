"""Trajectories, observables and the finite matrices consumed by the solvers.

Conventions (0-based indices throughout):

* ``Y[k, l] = g_l(x_{k+1})`` for ``k = 0..n_s-1``: observable values one step
  ahead of the representer pre-images.
* ``Z[i, j] = k(q_i, q_j)`` for the representer anchors ``q`` (the training
  pre-images ``x_0..x_{n_s-1}`` in the base formulation).
* ``G[l, j] = k(p_l, p_j)`` and ``Gcross[l, k] = k(p_l, q_k)``.
* In the subspace formulation, ``P_W[k, l] = w_l(x_k)`` and ``W`` is the Gram
  matrix of the subspace generators.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .kernels import KernelSpec, gram_matrix

__all__ = [
    "Trajectory",
    "ObservableSet",
    "TrainingData",
    "NoiseSpec",
    "observable_eval",
    "build_training_data",
    "build_subspace_data",
    "add_noise",
    "add_observable_noise",
    "read_trajectory_csv",
    "write_trajectory_csv",
    "dump_training_data",
]


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0..x_{n_s}`` stored row-wise."""

    states: np.ndarray

    def __post_init__(self):
        X = np.array(self.states, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError("a trajectory needs at least two states (n_s >= 1)")
        X.setflags(write=False)
        object.__setattr__(self, "states", X)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def preimages(self) -> np.ndarray:
        return self.states[:-1]

    @property
    def images(self) -> np.ndarray:
        return self.states[1:]


@dataclass(frozen=True)
class ObservableSet:
    """Kernel sections ``g_l = k(p_l, .)`` at the anchor points ``p_l``."""

    kernel: KernelSpec
    anchors: np.ndarray

    def __post_init__(self):
        P = np.array(self.anchors, dtype=float)
        if P.ndim == 1:
            P = P[None, :]
        if P.shape[0] < 1:
            raise ValueError("at least one observable anchor is required")
        if np.unique(P, axis=0).shape[0] < P.shape[0]:
            warnings.warn("duplicate observable anchors make G singular; pseudo-inverses will be used")
        P.setflags(write=False)
        object.__setattr__(self, "anchors", P)

    @property
    def n_g(self) -> int:
        return self.anchors.shape[0]

    def __call__(self, X) -> np.ndarray:
        """Matrix ``[g_l(X_k)]`` of shape (n_points, n_g)."""
        return gram_matrix(self.kernel, X, self.anchors)


@dataclass(frozen=True)
class TrainingData:
    Y: np.ndarray
    Z: np.ndarray
    G: np.ndarray
    Gcross: np.ndarray
    anchors_z: np.ndarray
    anchors_g: np.ndarray
    kernel: KernelSpec
    preimages: np.ndarray
    P_W: np.ndarray | None = None
    W: np.ndarray | None = None
    anchors_w: np.ndarray | None = None
    n_steps: tuple = field(default=())

    @property
    def has_subspace(self) -> bool:
        return self.P_W is not None

    def design(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(P, R)``: the evaluation matrix of the representers at the
        training pre-images and the Gram matrix of the representers.

        The loss is ``||P A G - Y||_F^2`` and every regulariser acts on
        ``R^{1/2} A G^{1/2}``. In the base formulation ``P = R = Z``.
        """
        if self.has_subspace:
            return self.P_W, self.W
        return self.Z, self.Z

    def rows(self, idx) -> "TrainingData":
        """Restrict to a subset of training rows (representers unchanged)."""
        idx = np.asarray(idx)
        if self.has_subspace:
            return replace(self, Y=self.Y[idx], P_W=self.P_W[idx], preimages=self.preimages[idx], n_steps=())
        # base formulation: rows of P are rows of Z restricted to the kept pre-images
        return replace(
            self,
            Y=self.Y[idx],
            P_W=self.Z[idx],
            W=self.Z,
            anchors_w=self.anchors_z,
            preimages=self.preimages[idx],
            n_steps=(),
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise at a given SNR in dB (``inf`` = clean)."""

    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db):
            raise ValueError("snr_db must not be NaN")


def observable_eval(obs: ObservableSet, l: int, x) -> float:
    """Value of the ``l``-th observable (0-based) at ``x``."""
    if not 0 <= l < obs.n_g:
        raise IndexError(f"observable index {l} out of range for {obs.n_g} observables")
    return float(obs(np.asarray(x, dtype=float).ravel()[None, :])[0, l])


def _check_dims(trajectories: Sequence[Trajectory], obs: ObservableSet) -> int:
    if len(trajectories) == 0:
        raise ValueError("at least one trajectory is required")
    dims = {t.dim for t in trajectories}
    if len(dims) != 1:
        raise ValueError(f"trajectories have inconsistent dimensions {sorted(dims)}")
    (dim,) = dims
    if obs.anchors.shape[1] != dim:
        raise ValueError(f"observable anchors have dimension {obs.anchors.shape[1]}, states have {dim}")
    return dim


def _stack(trajectories: Sequence[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    pre = np.vstack([t.preimages for t in trajectories])
    post = np.vstack([t.images for t in trajectories])
    return pre, post


def build_training_data(kernel: KernelSpec, trajectories: Sequence[Trajectory] | Trajectory, obs: ObservableSet) -> TrainingData:
    """Assemble ``Y``, ``Z``, ``G`` and ``Gcross`` from one or more trajectories.

    Multiple trajectories are concatenated: the representer anchors are all
    pre-images in order and ``Z`` is the full block Gram matrix.
    """
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    _check_dims(trajectories, obs)
    pre, post = _stack(trajectories)
    return TrainingData(
        Y=obs(post),
        Z=gram_matrix(kernel, pre),
        G=gram_matrix(obs.kernel, obs.anchors),
        Gcross=gram_matrix(kernel, obs.anchors, pre),
        anchors_z=pre,
        anchors_g=obs.anchors,
        kernel=kernel,
        preimages=pre,
        n_steps=tuple(t.n_steps for t in trajectories),
    )


def build_subspace_data(kernel: KernelSpec, trajectories: Sequence[Trajectory] | Trajectory, obs: ObservableSet, w_anchors) -> TrainingData:
    """Training data for learning with image in ``span{k(w_j, .)}``.

    The representers become the subspace generators, so ``anchors_z`` is set
    to ``w_anchors``. With ``w_anchors`` equal to the observable anchors this
    is the EDMD-compatible setting (``P_W = P_G``, ``W = G``).
    """
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    dim = _check_dims(trajectories, obs)
    Wa = np.array(w_anchors, dtype=float)
    if Wa.ndim == 1:
        Wa = Wa[None, :]
    if Wa.shape[0] == 0:
        raise ValueError("w_anchors must be non-empty")
    if Wa.shape[1] != dim:
        raise ValueError("w_anchors dimension mismatch")
    pre, post = _stack(trajectories)
    W = gram_matrix(kernel, Wa)
    return TrainingData(
        Y=obs(post),
        Z=gram_matrix(kernel, pre),
        G=gram_matrix(obs.kernel, obs.anchors),
        Gcross=gram_matrix(kernel, obs.anchors, Wa),
        anchors_z=Wa,
        anchors_g=obs.anchors,
        kernel=kernel,
        preimages=pre,
        P_W=gram_matrix(kernel, pre, Wa),
        W=W,
        anchors_w=Wa,
        n_steps=tuple(t.n_steps for t in trajectories),
    )


def _noise_sigma(signal: np.ndarray, snr_db: float) -> float:
    p_sig = float(np.mean(np.square(signal)))
    return math.sqrt(p_sig * 10.0 ** (-snr_db / 10.0))


def add_noise(traj: Trajectory, spec: NoiseSpec) -> Trajectory:
    """Corrupt every state coordinate with i.i.d. N(0, sigma^2).

    ``sigma^2`` is the mean squared entry of the clean trajectory scaled by
    ``10^(-snr_db/10)``.
    """
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        return traj
    rng = np.random.default_rng(spec.seed)
    sigma = _noise_sigma(traj.states, spec.snr_db)
    return Trajectory(traj.states + sigma * rng.standard_normal(traj.states.shape))


def add_observable_noise(Y: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Observable-level alternative to :func:`add_noise` (off by default)."""
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        return Y
    rng = np.random.default_rng(spec.seed)
    return Y + _noise_sigma(Y, spec.snr_db) * rng.standard_normal(Y.shape)


def write_trajectory_csv(traj: Trajectory, path: str | os.PathLike, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(traj.dim)])
        for row in traj.states:
            w.writerow([repr(float(v)) for v in row])


def read_trajectory_csv(path: str | os.PathLike) -> Trajectory:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if len(rows) < 3:
        raise ValueError(f"{path}: a trajectory needs a header and at least two rows")
    return Trajectory(np.array([[float(v) for v in r] for r in rows[1:]]))


def _write_matrix(path: Path, M: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")


def dump_training_data(data: TrainingData, directory: str | os.PathLike) -> None:
    """Write Y, Z, G, Gcross (and P_W, W when present) as CSV files."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in ("Y", "Z", "G", "Gcross", "P_W", "W"):
        M = getattr(data, name)
        if M is not None:
            _write_matrix(d / f"{name}.csv", M)


def stack_states(trajectories: Iterable[Trajectory]) -> np.ndarray:
    return np.vstack([t.states for t in trajectories])

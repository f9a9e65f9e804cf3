"""Quantitative studies: grid MSE, lambda sweeps, Monte Carlo noise runs,
hyperparameter selection and the four benchmark scenarios."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import solvers as S
from .dataset import NoiseSpec, ObservableSet, TrainingData, Trajectory, add_noise, build_subspace_data
from .dynamics import (
    ConvectionDiffusion1D,
    NicholsonBailey,
    PolyMap2D,
    SystemSpec,
    VanDerPolEuler,
    pde_initial,
    simulate,
    step_many,
)
from .kernels import Gaussian, KernelSpec, LinearAffine, Matern52
from .operator import (
    KoopmanEstimate,
    apply_to,
    eigenvalues,
    fit,
    operator_norms,
    predict_observables,
    reconstruct_state_linear,
)

__all__ = [
    "GridSpec",
    "SweepSpec",
    "MethodSpec",
    "MonteCarloConfig",
    "Scenario",
    "mse_grid",
    "lambda_sweep",
    "monte_carlo",
    "select_lambda",
    "realization_seed",
    "fit_realization",
    "summarize",
    "example1_scenario",
    "example2_scenario",
    "example3_scenario",
    "pde_forecast",
]


# ---------------------------------------------------------------- grid MSE


@dataclass(frozen=True)
class GridSpec:
    lower: tuple
    upper: tuple
    spacing: tuple

    def __post_init__(self):
        lo, hi, dx = (tuple(float(v) for v in t) for t in (self.lower, self.upper, self.spacing))
        if not len(lo) == len(hi) == len(dx):
            raise ValueError("grid bounds and spacing must have equal length")
        if any(d <= 0 for d in dx) or any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("grid spacing must be positive and bounds ordered")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "spacing", dx)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def centers(self) -> np.ndarray:
        axes = []
        for a, b, d in zip(self.lower, self.upper, self.spacing):
            n = int(round((b - a) / d))
            axes.append(a + d * (np.arange(n) + 0.5))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.lower, self.upper, tuple(d / factor for d in self.spacing))


def mse_grid(est: KoopmanEstimate, sys: SystemSpec, test_obs: ObservableSet, grid: GridSpec) -> float:
    """Mean over test observables of the integrated squared one-step error."""
    if grid.dim != sys.dim or test_obs.anchors.shape[1] != sys.dim:
        raise ValueError("grid, system and test observables must share one dimension")
    X = grid.centers()
    truth = test_obs(step_many(sys, X))
    pred = apply_to(est, X, test_obs.anchors)
    return float(np.mean(np.sum((pred - truth) ** 2, axis=0)) * grid.cell_volume)


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepSpec:
    lambdas: tuple
    families: tuple = ("operator", "frobenius", "nuclear")
    top_k: int = 3

    def __post_init__(self):
        if any(not lam > 0 for lam in self.lambdas):
            raise ValueError("sweep lambdas must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


def _row(family: str, lam: float, est: KoopmanEstimate, res: S.SolveResult | None, k: int) -> dict[str, Any]:
    mags = np.abs(eigenvalues(est))
    mags = np.concatenate([mags, np.zeros(max(0, k - mags.size))])[:k]
    norms = operator_norms(est)
    sv = np.linalg.svd(res.B if res is not None else S.psd_sqrt(est.Z) @ est.A @ S.psd_sqrt(est.G), compute_uv=False)
    row = {"lambda": float(lam), "family": family}
    row.update({f"gamma{i + 1}": float(m) for i, m in enumerate(mags)})
    row.update(
        rank=int(np.sum(sv > 1e-8)),
        norm_op=norms["operator"],
        norm_fro=norms["frobenius"],
        norm_nuc=norms["nuclear"],
        converged=bool(res.converged) if res is not None else True,
        error="",
    )
    return row


def lambda_sweep(data: TrainingData, spec: SweepSpec, opts: S.SolverOptions = S.SolverOptions(), workers: int = 1) -> list[dict[str, Any]]:
    """One row per (family, lambda) plus an EDMD row at ``lambda = 0``."""
    if not np.array_equal(data.anchors_z, data.anchors_g):
        raise ValueError("lambda sweeps need representers equal to the observable anchors")

    def task(key):
        family, lam = key
        try:
            est, res = fit(data, family, lam, opts=opts)
            return _row(family, lam, est, res, spec.top_k)
        except Exception as exc:  # recorded per row
            row = {"lambda": float(lam), "family": family, "error": f"{type(exc).__name__}: {exc}"}
            return row

    keys = [(f, lam) for f in spec.families for lam in spec.lambdas]
    rows = _map(task, keys, workers)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est, res = fit(data, "edmd")
    rows.append(_row("edmd", 0.0, est, res, spec.top_k))
    return sorted(rows, key=lambda r: (r["family"], r["lambda"]))


def _map(fn, items, workers: int):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class MethodSpec:
    name: str
    method: str
    lam: float = 0.0
    rho: float | None = None
    rank: int | None = None


@dataclass(frozen=True)
class MonteCarloConfig:
    snr_db: tuple
    realizations: int
    base_seed: int = 0
    methods: tuple = ()

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")


@dataclass(frozen=True)
class Scenario:
    """Everything needed to generate data and score an estimate."""

    name: str
    system: SystemSpec
    kernel: KernelSpec
    x0s: tuple
    n_steps: tuple
    obs_anchors: np.ndarray
    test_anchors: np.ndarray
    grid: GridSpec | None = None

    def clean_trajectories(self) -> list[Trajectory]:
        return [simulate(self.system, x0, n) for x0, n in zip(self.x0s, self.n_steps)]

    @property
    def observables(self) -> ObservableSet:
        return ObservableSet(self.kernel, self.obs_anchors)

    @property
    def test_observables(self) -> ObservableSet:
        return ObservableSet(self.kernel, self.test_anchors)


def realization_seed(base_seed: int, snr_index: int, realization: int) -> int:
    """Deterministic 63-bit seed for one (SNR, realisation) cell."""
    return int(np.random.SeedSequence([base_seed, snr_index, realization]).generate_state(2, np.uint32).view(np.uint64)[0] >> np.uint64(1))


def noisy_data(scenario: Scenario, snr_db: float, seed: int, clean: Sequence[Trajectory] | None = None) -> TrainingData:
    clean = scenario.clean_trajectories() if clean is None else clean
    noisy = [add_noise(t, NoiseSpec(snr_db, seed + i)) for i, t in enumerate(clean)]
    return build_subspace_data(scenario.kernel, noisy, scenario.observables, scenario.obs_anchors)


def fit_realization(data: TrainingData, m: MethodSpec, opts: S.SolverOptions = S.SolverOptions()):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit(data, m.method, m.lam, rho=m.rho, rank=m.rank, opts=opts)


def monte_carlo(
    config: MonteCarloConfig,
    scenario: Scenario,
    opts: S.SolverOptions = S.SolverOptions(),
    workers: int = 1,
) -> dict[str, Any]:
    """Noise, fit and score every method over all SNR levels and realisations.

    Returns ``{"rows": [...], "summary": {...}, "failures": int}``; each row
    carries method, lambda, snr_db, seed, mse and the largest eigenvalue
    modulus of the estimate.
    """
    if scenario.grid is None:
        raise ValueError("scenario has no evaluation grid")
    clean = scenario.clean_trajectories()
    test_obs = scenario.test_observables
    cells = [(i, snr, r) for i, snr in enumerate(config.snr_db) for r in range(config.realizations)]

    def task(cell):
        i, snr, r = cell
        seed = 0 if math.isinf(snr) else realization_seed(config.base_seed, i, r)
        out = []
        try:
            data = noisy_data(scenario, snr, seed, clean)
        except Exception as exc:
            return [{"method": m.name, "snr_db": snr, "seed": seed, "error": str(exc)} for m in config.methods]
        for m in config.methods:
            row = {"method": m.name, "lambda": m.lam, "snr_db": float(snr), "seed": seed, "realization": r}
            try:
                est, res = fit_realization(data, m, opts)
                row["mse"] = mse_grid(est, scenario.system, test_obs, scenario.grid)
                row["max_abs_eig"] = float(np.abs(eigenvalues(est)).max(initial=0.0))
                row["converged"] = bool(res.converged)
                if not math.isfinite(row["mse"]):
                    raise FloatingPointError("non-finite MSE")
            except Exception as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
            out.append(row)
        return out

    rows = [row for chunk in _map(task, cells, workers) for row in chunk]
    good = [r for r in rows if "error" not in r]
    rows_sorted = sorted(good, key=lambda r: (r["method"], r["snr_db"], r["realization"]))
    return {"rows": rows_sorted, "summary": summarize(rows_sorted), "failures": len(rows) - len(good)}


def summarize(rows: Sequence[dict]) -> dict[str, dict[str, dict[str, float]]]:
    """Median and quartiles of MSE per method and SNR."""
    out: dict[str, dict[str, dict[str, float]]] = {}
    keys = sorted({(r["method"], r["snr_db"]) for r in rows})
    for method, snr in keys:
        v = np.array([r["mse"] for r in rows if r["method"] == method and r["snr_db"] == snr])
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        out.setdefault(method, {})[f"{snr:g}"] = {"median": float(med), "q1": float(q1), "q3": float(q3), "n": int(v.size)}
    return out


# ---------------------------------------------------------------- lambda selection


def select_lambda(
    data: TrainingData,
    family: str,
    lambdas: Sequence[float],
    folds: int = 5,
    opts: S.SolverOptions = S.SolverOptions(),
) -> float:
    """Lambda with the smallest mean held-out one-step error over contiguous
    time-block folds (ties go to the smaller lambda)."""
    lambdas = sorted(float(v) for v in lambdas)
    if not lambdas:
        raise ValueError("empty lambda grid")
    if len(lambdas) == 1:
        return lambdas[0]
    n = data.Y.shape[0]
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= {n}")
    blocks = np.array_split(np.arange(n), folds)
    scores = []
    for lam in lambdas:
        err = 0.0
        for b in blocks:
            train = np.setdiff1d(np.arange(n), b)
            sub = data.rows(train)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est, _ = fit(sub, family, lam, opts=opts)
            P_held, _ = data.rows(b).design()
            err += float(np.sum((P_held @ est.A @ data.G - data.Y[b]) ** 2))
        scores.append(err / folds)
    scores = np.array(scores)
    best = np.flatnonzero(scores <= scores.min() * (1 + 1e-12))[0]
    return lambdas[int(best)]


# ---------------------------------------------------------------- scenarios


def _lattice(origin, step, lo, hi) -> np.ndarray:
    idx = np.arange(lo, hi + 1)
    return np.array([(origin[0] + step * i, origin[1] + step * j) for i in idx for j in idx], dtype=float)


def example1_scenario() -> Scenario:
    anchors = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Scenario("example1", PolyMap2D(0.95, 0.75), Gaussian(1.0), ((1.0, 0.0),), (60,), anchors, anchors)


def example2_scenario() -> Scenario:
    return Scenario(
        "example2",
        VanDerPolEuler(0.5, 0.2, 0.0),
        Matern52(1.0),
        ((-2.0, 2.0), (0.0, -1.0)),
        (50, 50),
        _lattice((0.0, 0.0), 0.5, -5, 5),
        _lattice((0.0, 0.0), 0.1, -5, 5),
        GridSpec((-2.5, -2.5), (2.5, 2.5), (0.025, 0.025)),
    )


def example3_scenario() -> Scenario:
    return Scenario(
        "example3",
        NicholsonBailey(1.1, 3.0),
        Gaussian(0.1),
        ((0.5, 0.05),),
        (100,),
        _lattice((0.3, 0.05), 0.025, 0, 8),
        _lattice((0.3, 0.05), 0.01, 0, 20),
        GridSpec((0.3, 0.05), (0.5, 0.25), (0.0025, 0.0025)),
    )


def _pde_run(F: np.ndarray, u0: np.ndarray, n: int) -> np.ndarray:
    X = np.empty((n + 1, u0.size))
    X[0] = u0
    for k in range(n):
        X[k + 1] = F @ X[k]
    return X


def pde_forecast(
    lam: float = 1e3,
    n_anchors: int = 202,
    seed: int = 0,
    train_steps: int = 12500,
    horizon_steps: int = 12500,
    methods: Sequence[str] = ("edmd", "frobenius"),
    sys: ConvectionDiffusion1D = ConvectionDiffusion1D(),
) -> dict[str, Any]:
    """Train on the ``sin_pi`` solution, forecast ``one_minus_exp`` and report
    the space-time L2 error of each method's reconstructed states."""
    F = sys.matrix()
    n_x = sys.dim
    train = _pde_run(F, pde_initial("sin_pi", n_x), train_steps)
    truth = _pde_run(F, pde_initial("one_minus_exp", n_x), horizon_steps)
    anchors = np.random.default_rng(seed).standard_normal((n_anchors, n_x))
    kernel = LinearAffine()
    obs = ObservableSet(kernel, anchors)
    data = build_subspace_data(kernel, Trajectory(train), obs, anchors)
    out: dict[str, Any] = {"lambda": lam, "seed": seed, "train_steps": train_steps, "errors": {}}
    for m in methods:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est, _ = fit(data, m, lam)
        phi = predict_observables(est, truth[0], horizon_steps)
        states = reconstruct_state_linear(obs, phi)
        out["errors"][m] = float(np.sqrt(np.sum((states - truth) ** 2) * sys.dxi * sys.dt))
    return out

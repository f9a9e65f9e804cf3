"""Finite-dimensional learning problems for the representer coefficients.

Every solver shares one calling convention::

    solve_*(Z, G, Y, ..., P=None)

``Z`` (n_z x n_z) and ``G`` (n_g x n_g) are the Gram matrices of the
representers and of the observables; the data term is ``||P A G - Y||_F^2``
with ``P`` defaulting to ``Z``. Passing ``P`` explicitly selects the
subspace-restricted problem (``P = P_W`` and ``Z = W``). Regularisers act on
``B = Z^{1/2} A G^{1/2}``, whose singular values coincide with those of the
learned operator.

Internally the problem is rotated into coordinates where the data term is
diagonal. With ``L = P pinv(Z^{1/2}) = U diag(s) V^T`` (thin SVD) and
``G^{1/2} = Q diag(r) Q^T``, writing ``B = V X Q^T`` gives::

    ||P A G - Y||_F^2 = ||w * X - U^T Y Q||_F^2 + const,   w_ij = s_i r_j

and the spectral, Frobenius and nuclear norms of ``B`` equal those of ``X``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "OperatorNormSq",
    "FrobeniusSq",
    "Nuclear",
    "RankAtMost",
    "NoReg",
    "RegularizerSpec",
    "ConstraintSpec",
    "Quadratic",
    "PseudoHuber",
    "Huber",
    "LossSpec",
    "SolverOptions",
    "SolveResult",
    "psd_sqrt",
    "pinv",
    "recover_A_from_B",
    "objective_value",
    "solve_edmd",
    "solve_frobenius",
    "solve_operator_norm",
    "solve_nuclear",
    "solve_rank",
    "solve_frobenius_stable",
    "solve_general_loss",
    "prox_spectral_sq",
]

PINV_RTOL = 1e-10


# ---------------------------------------------------------------- specs


def _positive(name: str, v: float) -> None:
    if not (v > 0 and math.isfinite(v)):
        raise ValueError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class OperatorNormSq:
    lam: float

    def __post_init__(self):
        _positive("lambda", self.lam)


@dataclass(frozen=True)
class FrobeniusSq:
    lam: float

    def __post_init__(self):
        _positive("lambda", self.lam)


@dataclass(frozen=True)
class Nuclear:
    lam: float

    def __post_init__(self):
        _positive("lambda", self.lam)


@dataclass(frozen=True)
class RankAtMost:
    r: int

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("rank bound must be >= 0")


@dataclass(frozen=True)
class NoReg:
    pass


RegularizerSpec = Union[OperatorNormSq, FrobeniusSq, Nuclear, RankAtMost, NoReg]


@dataclass(frozen=True)
class ConstraintSpec:
    spectral_bound: float | None = None

    def __post_init__(self):
        if self.spectral_bound is not None and not 0 < self.spectral_bound <= 1:
            raise ValueError("spectral_bound must lie in (0, 1]")


@dataclass(frozen=True)
class Quadratic:
    pass


@dataclass(frozen=True)
class PseudoHuber:
    rho: float

    def __post_init__(self):
        _positive("rho", self.rho)


@dataclass(frozen=True)
class Huber:
    rho: float

    def __post_init__(self):
        _positive("rho", self.rho)


LossSpec = Union[Quadratic, PseudoHuber, Huber]


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    rel_tol: float = 1e-9
    jitter: float = 1e-10
    beta_search_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.max_iters <= 0 or self.rel_tol <= 0 or self.jitter < 0 or self.beta_search_tol <= 0:
            raise ValueError("solver options must be positive")


@dataclass
class SolveResult:
    A: np.ndarray
    B: np.ndarray
    objective: float
    iterations: int = 0
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    def diagnostics_json(self) -> dict:
        out = {}
        for k, v in self.diagnostics.items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
            elif isinstance(v, (np.floating, np.integer, np.bool_)):
                out[k] = v.item()
            else:
                out[k] = v
        out.update(objective=float(self.objective), iterations=int(self.iterations), converged=bool(self.converged))
        return out


# ---------------------------------------------------------------- linear algebra


def _sym_check(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{what} must be square, got shape {M.shape}")
    scale = max(np.abs(M).max(initial=0.0), 1e-300)
    if np.abs(M - M.T).max(initial=0.0) > 1e-8 * scale:
        raise ValueError(f"{what} is not symmetric")
    return 0.5 * (M + M.T)


def _eigh_psd(M: np.ndarray, jitter: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a PSD matrix with round-off negatives and the jitter floor
    (relative to the largest eigenvalue) zeroed."""
    vals, vecs = np.linalg.eigh(M)
    top = max(vals.max(initial=0.0), 0.0)
    vals = np.where(vals > jitter * top, vals, 0.0) if top > 0 else np.zeros_like(vals)
    return vals, vecs


def psd_sqrt(M, jitter: float = 1e-10) -> np.ndarray:
    M = _sym_check(M, "psd_sqrt input")
    vals, vecs = _eigh_psd(M, jitter * 1e-6)
    S = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (S + S.T)


def pinv(M, tol: float = PINV_RTOL) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return M.T.copy()
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def recover_A_from_B(Z, G, B, jitter: float = 1e-10) -> np.ndarray:
    return pinv(psd_sqrt(Z, jitter)) @ np.asarray(B, dtype=float) @ pinv(psd_sqrt(G, jitter))


def _transform_B(Z, G, A, jitter: float = 1e-10) -> np.ndarray:
    return psd_sqrt(Z, jitter) @ A @ psd_sqrt(G, jitter)


def objective_value(Z, G, Y, A, reg: RegularizerSpec = NoReg(), P=None) -> float:
    Z = np.asarray(Z, dtype=float)
    G = np.asarray(G, dtype=float)
    P = Z if P is None else np.asarray(P, dtype=float)
    val = float(np.sum((P @ A @ G - Y) ** 2))
    if isinstance(reg, (NoReg, RankAtMost)):
        return val
    s = np.linalg.svd(_transform_B(Z, G, A), compute_uv=False)
    if isinstance(reg, OperatorNormSq):
        return val + reg.lam * float(s.max(initial=0.0)) ** 2
    if isinstance(reg, FrobeniusSq):
        return val + reg.lam * float(np.sum(s**2))
    if isinstance(reg, Nuclear):
        return val + reg.lam * float(np.sum(s))
    raise TypeError(f"unknown regulariser {reg!r}")


# ---------------------------------------------------------------- reduced problem


class _Reduced:
    """Diagonalised data term ``||w * X - Yhat||^2 + offset``."""

    def __init__(self, Z, G, Y, P=None, jitter: float = 1e-10):
        Z = _sym_check(Z, "Z")
        G = _sym_check(G, "G")
        Y = np.asarray(Y, dtype=float)
        P = Z if P is None else np.asarray(P, dtype=float)
        if P.shape[1] != Z.shape[0] or Y.shape != (P.shape[0], G.shape[0]):
            raise ValueError(f"shape mismatch: P {P.shape}, Z {Z.shape}, G {G.shape}, Y {Y.shape}")
        self.Z, self.G, self.Y, self.P, self.jitter = Z, G, Y, P, jitter
        self.Zh = psd_sqrt(Z, jitter)
        self.Gh = psd_sqrt(G, jitter)
        self.Zh_pinv = pinv(self.Zh)
        self.Gh_pinv = pinv(self.Gh)

        L = P @ self.Zh_pinv
        U, s, Vt = np.linalg.svd(L, full_matrices=False)
        keep = s > PINV_RTOL * s[0] if s.size and s[0] > 0 else np.zeros(s.shape, dtype=bool)
        self.U, self.s, self.V = U[:, keep], s[keep], Vt[keep].T

        r, Q = np.linalg.eigh(self.Gh)
        order = np.argsort(r)[::-1]
        r, Q = r[order], Q[:, order]
        keep = r > PINV_RTOL * r[0] if r.size and r[0] > 0 else np.zeros(r.shape, dtype=bool)
        self.r, self.Q = r[keep], Q[:, keep]

        self.w = np.outer(self.s, self.r)
        self.Yhat = self.U.T @ Y @ self.Q
        self.offset = max(float(np.sum(Y**2) - np.sum(self.Yhat**2)), 0.0)
        self.lip = 2.0 * float(self.w.max(initial=0.0)) ** 2

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape

    def data_term(self, X) -> float:
        return float(np.sum((self.w * X - self.Yhat) ** 2)) + self.offset

    def grad(self, X) -> np.ndarray:
        return 2.0 * self.w * (self.w * X - self.Yhat)

    def to_B(self, X) -> np.ndarray:
        return self.V @ X @ self.Q.T

    def to_A(self, X) -> np.ndarray:
        return self.Zh_pinv @ self.to_B(X) @ self.Gh_pinv

    def least_squares(self) -> np.ndarray:
        return np.divide(self.Yhat, self.w, out=np.zeros_like(self.Yhat), where=self.w > 0)

    def result(self, X, objective, iterations, converged, cap: float | None = None, objective_fn=None, **diag) -> SolveResult:
        A = self.to_A(X)
        B = _transform_B(self.Z, self.G, A, self.jitter)
        if cap is not None and B.size:
            # round trip through pinv(Z^{1/2}) can push sigma_max past the cap
            top = float(np.linalg.norm(B, 2))
            if top > cap:
                factor = (cap / top) * (1.0 - 1e-12)
                A = A * factor
                B = _transform_B(self.Z, self.G, A, self.jitter)
                if objective_fn is not None:
                    objective = objective_fn(X * factor)
        sv = np.linalg.svd(B, compute_uv=False) if B.size else np.zeros(0)
        top = float(sv.max(initial=0.0))
        diag.setdefault("sigma_max", top)
        diag.setdefault("rank", int(np.sum(sv > 1e-8 * max(top, 1e-300))) if top > 0 else 0)
        return SolveResult(A=A, B=B, objective=float(objective), iterations=int(iterations), converged=bool(converged), diagnostics=diag)


def _empty_reduced(red: _Reduced) -> bool:
    return red.w.size == 0


# ---------------------------------------------------------------- proximal maps


def _svd(X):
    return np.linalg.svd(X, full_matrices=False)


def _spectral_cap(sv: np.ndarray, c: float, cap: float | None) -> float:
    """argmin_b 1/2 sum(max(sv_i - b, 0)^2) + c b^2 over 0 <= b <= cap (sv descending)."""
    if sv.size == 0 or sv[0] <= 0:
        return 0.0
    csum = np.cumsum(sv)
    beta = sv[0]
    for k in range(1, sv.size + 1):
        b = csum[k - 1] / (k + 2.0 * c)
        nxt = sv[k] if k < sv.size else 0.0
        if nxt <= b <= sv[k - 1]:
            beta = b
            break
    if cap is not None:
        beta = min(beta, cap)
    return max(beta, 0.0)


def prox_spectral_sq(X: np.ndarray, c: float, cap: float | None = None) -> tuple[np.ndarray, float]:
    """Prox of ``c * sigma_max(.)^2`` (plus the ball ``sigma_max <= cap``)."""
    U, sv, Vt = _svd(X)
    beta = _spectral_cap(sv, c, cap)
    return (U * np.minimum(sv, beta)) @ Vt, beta


def _clip_sv(X: np.ndarray, bound: float) -> np.ndarray:
    U, sv, Vt = _svd(X)
    if sv.size == 0 or sv[0] <= bound:
        return X
    return (U * np.minimum(sv, bound)) @ Vt


def _svt(X: np.ndarray, tau: float) -> np.ndarray:
    U, sv, Vt = _svd(X)
    return (U * np.maximum(sv - tau, 0.0)) @ Vt


# ---------------------------------------------------------------- first-order engine


def _fista(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    prox: Callable[[np.ndarray, float], np.ndarray],
    x0: np.ndarray,
    lip: float,
    max_iters: int,
    rel_tol: float,
    backtrack: bool = False,
) -> tuple[np.ndarray, int, bool, float]:
    """Accelerated proximal gradient with gradient-based adaptive restart.

    Returns ``(x, iterations, converged, step)``. Stops once the step
    ``||x_{k+1} - x_k||`` falls below ``rel_tol * max(1, ||x_k||)``.
    """
    x = x0.copy()
    y = x0.copy()
    t = 1.0
    step = 1.0 / lip if lip > 0 else 1.0
    for it in range(1, max_iters + 1):
        gy = grad(y)
        if backtrack:
            fy = f(y)
            while True:
                x_new = prox(y - step * gy, step)
                d = x_new - y
                if f(x_new) <= fy + np.sum(gy * d) + np.sum(d * d) / (2 * step) + 1e-15 * abs(fy):
                    break
                step *= 0.5
                if step < 1e-30:
                    break
        else:
            x_new = prox(y - step * gy, step)
        dx = x_new - x
        if np.linalg.norm(dx) <= rel_tol * max(1.0, np.linalg.norm(x)):
            return x_new, it, True, step
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if np.sum((y - x_new) * dx) > 0:  # restart
            t_new = 1.0
            y = x_new
        else:
            y = x_new + ((t - 1.0) / t_new) * dx
        x, t = x_new, t_new
    return x, max_iters, False, step


def _grad_mapping_norm(red: _Reduced, X, prox, step) -> float:
    G = (X - prox(X - step * red.grad(X), step)) / step
    return float(np.linalg.norm(G))


# ---------------------------------------------------------------- solvers


def solve_edmd(P_G, Y, G) -> SolveResult:
    """Least-squares fit ``M* = pinv(P_G) Y`` with coefficients ``C = M* pinv(G)``."""
    P_G = np.asarray(P_G, dtype=float)
    Y = np.asarray(Y, dtype=float)
    G = _sym_check(G, "G")
    if P_G.shape[0] != Y.shape[0] or P_G.shape[1] != G.shape[0]:
        raise ValueError("shape mismatch in EDMD data")
    rank = int(np.linalg.matrix_rank(P_G, tol=PINV_RTOL * max(np.linalg.norm(P_G, 2), 1e-300)))
    unique = rank == P_G.shape[1]
    if not unique:
        warnings.warn("P_G is column-rank deficient; returning the minimum-norm least-squares solution")
    M = pinv(P_G) @ Y
    C = M @ pinv(G)
    resid = float(np.linalg.norm(P_G @ M - Y))
    B = _transform_B(G, G, C)
    return SolveResult(
        A=C,
        B=B,
        objective=resid**2,
        diagnostics={"M": M, "residual": resid, "rank_P": rank, "unique": unique},
    )


def solve_frobenius(Z, G, Y, lam: float, P=None, opts: SolverOptions = SolverOptions()) -> SolveResult:
    _positive("lambda", lam)
    red = _Reduced(Z, G, Y, P, opts.jitter)
    X = red.w * red.Yhat / (red.w**2 + lam)
    obj = red.data_term(X) + lam * float(np.sum(X**2))
    return red.result(X, obj, 0, True)


def frobenius_gradient(Z, G, Y, A, lam: float, P=None) -> np.ndarray:
    """Gradient of ``||P A G - Y||^2 + lam ||Z^{1/2} A G^{1/2}||_F^2`` in ``A``."""
    Z = np.asarray(Z, dtype=float)
    G = np.asarray(G, dtype=float)
    P = Z if P is None else np.asarray(P, dtype=float)
    return 2.0 * (P.T @ (P @ A @ G - Y) @ G + lam * Z @ A @ G)


def solve_operator_norm(
    Z,
    G,
    Y,
    lam: float,
    constraint: ConstraintSpec = ConstraintSpec(),
    opts: SolverOptions = SolverOptions(),
    P=None,
    method: str = "prox",
) -> SolveResult:
    """``min ||P A G - Y||^2 + lam * sigma_max(B)^2`` (optionally ``sigma_max(B) <= rho``).

    ``method="prox"`` runs accelerated proximal gradient using the exact prox of
    ``c*sigma_max^2``. ``method="beta_search"`` minimises over the spectral radius
    bound ``beta`` by golden section with a projected-gradient inner solve.
    """
    rho = constraint.spectral_bound
    if lam < 0 or (lam == 0 and rho is None) or not math.isfinite(lam):
        raise ValueError("lambda must be positive (zero only with a spectral bound)")
    red = _Reduced(Z, G, Y, P, opts.jitter)
    if _empty_reduced(red):
        return red.result(np.zeros(red.shape), red.offset, 0, True, beta=0.0, grad_norm=0.0)
    if method == "prox":
        return _opnorm_prox(red, lam, rho, opts)
    if method == "beta_search":
        return _opnorm_beta_search(red, lam, rho, opts)
    raise ValueError(f"unknown method {method!r}")


def _opnorm_objective(red: _Reduced, lam: float, X) -> float:
    return red.data_term(X) + lam * float(np.linalg.norm(X, 2)) ** 2 if X.size else red.offset


def _opnorm_prox(red: _Reduced, lam, rho, opts) -> SolveResult:
    if not np.any(red.Yhat):
        return red.result(np.zeros(red.shape), red.offset, 0, True, beta=0.0, grad_norm=0.0)

    def prox(V, step):
        return prox_spectral_sq(V, step * lam, rho)[0]

    X0 = prox(red.least_squares(), 1.0 / max(red.lip, 1e-300))
    X, it, ok, step = _fista(lambda X: red.data_term(X), red.grad, prox, X0, red.lip, opts.max_iters, opts.rel_tol)
    beta = float(np.linalg.norm(X, 2))
    gnorm = _grad_mapping_norm(red, X, prox, step)
    return red.result(
        X, _opnorm_objective(red, lam, X), it, ok, cap=rho, objective_fn=lambda V: _opnorm_objective(red, lam, V), beta=beta, grad_norm=gnorm
    )


def _ball_solve(red: _Reduced, beta: float, X0, opts, max_iters: int):
    def prox(V, step):
        return _clip_sv(V, beta)

    return _fista(lambda X: red.data_term(X), red.grad, prox, X0, red.lip, max_iters, opts.rel_tol * 1e-2)


def _opnorm_beta_search(red: _Reduced, lam, rho, opts) -> SolveResult:
    X_ls = red.least_squares()
    hi = float(np.linalg.norm(X_ls, 2)) if X_ls.size else 0.0
    if rho is not None:
        hi = min(hi, rho)
    cache: dict[float, tuple[float, np.ndarray]] = {}
    warm = [X_ls]
    total = [0]

    def h(beta: float) -> float:
        if beta not in cache:
            X, it, _, _ = _ball_solve(red, beta, _clip_sv(warm[0], beta), opts, opts.max_iters)
            total[0] += it
            warm[0] = X
            cache[beta] = (red.data_term(X) + lam * beta**2, X)
        return cache[beta][0]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    outer = 0
    while b - a > opts.beta_search_tol * max(1.0, hi) and outer < 200:
        outer += 1
        if h(c) <= h(d):
            b, d = d, c
            c = b - invphi * (b - a)
        else:
            a, c = c, d
            d = a + invphi * (b - a)
    beta = 0.5 * (a + b)
    cand = [beta, 0.0, hi]
    best = min(cand, key=h)
    X = cache[best][1]
    return red.result(
        X,
        _opnorm_objective(red, lam, X),
        total[0],
        outer < 200,
        cap=rho,
        objective_fn=lambda V: _opnorm_objective(red, lam, V),
        beta=float(best),
        outer_iterations=outer,
    )


def solve_nuclear(Z, G, Y, lam: float, opts: SolverOptions = SolverOptions(), P=None) -> SolveResult:
    """``min ||P A G - Y||^2 + lam * ||B||_*`` by FISTA with singular-value soft-thresholding."""
    _positive("lambda", lam)
    red = _Reduced(Z, G, Y, P, opts.jitter)
    if _empty_reduced(red) or not np.any(red.Yhat):
        return red.result(np.zeros(red.shape), red.offset, 0, True, subgradient_residual=0.0)

    def prox(V, step):
        return _svt(V, step * lam)

    X, it, ok, step = _fista(lambda X: red.data_term(X), red.grad, prox, prox(red.least_squares(), 0.0), red.lip, opts.max_iters, opts.rel_tol)
    gnorm = _grad_mapping_norm(red, X, prox, step)
    scale = 1.0 + float(np.linalg.norm(2.0 * red.w * red.Yhat))
    obj = red.data_term(X) + lam * float(np.sum(np.linalg.svd(X, compute_uv=False)))
    return red.result(X, obj, it, ok, subgradient_residual=gnorm / scale, grad_norm=gnorm)


def solve_rank(Z, G, Y, r: int, P=None, jitter: float = 1e-10) -> SolveResult:
    """Best data fit with ``rank(P A G) <= r`` via truncated SVD."""
    if r < 0:
        raise ValueError("rank bound must be >= 0")
    Z = _sym_check(Z, "Z")
    G = _sym_check(G, "G")
    Y = np.asarray(Y, dtype=float)
    P = Z if P is None else np.asarray(P, dtype=float)
    Pp = pinv(P)
    Gp = pinv(G)
    rank_P = int(np.linalg.matrix_rank(P, tol=PINV_RTOL * max(np.linalg.norm(P, 2), 1e-300)))
    rank_G = int(np.linalg.matrix_rank(G, tol=PINV_RTOL * max(np.linalg.norm(G, 2), 1e-300)))
    r_eff = min(r, rank_P, rank_G)
    # the fit P A G can only live in range(P) x range(G)
    Yp = (P @ Pp) @ Y @ (Gp @ G)
    U, sv, Vt = _svd(Yp)
    Br = (U[:, :r_eff] * sv[:r_eff]) @ Vt[:r_eff]
    A = Pp @ Br @ Gp
    resid = float(np.linalg.norm(P @ A @ G - Y))
    B = _transform_B(Z, G, A, jitter)
    return SolveResult(
        A=A,
        B=B,
        objective=resid**2,
        diagnostics={"residual": resid, "rank_effective": r_eff, "rank": int(np.sum(sv[:r_eff] > 0))},
    )


def solve_frobenius_stable(Z, G, Y, lam: float, rho: float, opts: SolverOptions = SolverOptions(), P=None) -> SolveResult:
    """Frobenius-regularised fit over the spectral ball ``sigma_max(B) <= rho``."""
    _positive("lambda", lam)
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    red = _Reduced(Z, G, Y, P, opts.jitter)
    X_free = red.w * red.Yhat / (red.w**2 + lam)
    if X_free.size == 0 or np.linalg.norm(X_free, 2) <= rho:
        obj = red.data_term(X_free) + lam * float(np.sum(X_free**2))
        return red.result(X_free, obj, 0, True, cap=rho, kkt_residual=0.0, active=False)

    def f(X):
        return red.data_term(X) + lam * float(np.sum(X * X))

    def grad(X):
        return red.grad(X) + 2.0 * lam * X

    def prox(V, step):
        return _clip_sv(V, rho)

    X, it, ok, step = _fista(f, grad, prox, _clip_sv(X_free, rho), red.lip + 2.0 * lam, opts.max_iters, opts.rel_tol)
    kkt = float(np.linalg.norm((X - prox(X - step * grad(X), step)) / step))
    return red.result(X, f(X), it, ok, cap=rho, objective_fn=f, kkt_residual=kkt, active=True)


def _loss_fns(loss: LossSpec):
    """Elementwise loss and derivative, scaled so that small residuals cost e^2."""
    if isinstance(loss, Quadratic):
        return (lambda e: e * e), (lambda e: 2.0 * e), 2.0
    if isinstance(loss, Huber):
        p = loss.rho
        return (
            lambda e: np.where(np.abs(e) <= p, e * e, 2.0 * p * np.abs(e) - p * p),
            lambda e: np.where(np.abs(e) <= p, 2.0 * e, 2.0 * p * np.sign(e)),
            2.0,
        )
    if isinstance(loss, PseudoHuber):
        p = loss.rho
        return (
            lambda e: 2.0 * p * p * (np.sqrt(1.0 + (e / p) ** 2) - 1.0),
            lambda e: 2.0 * e / np.sqrt(1.0 + (e / p) ** 2),
            2.0,
        )
    raise TypeError(f"unknown loss {loss!r}")


def solve_general_loss(Z, G, Y, loss: LossSpec, lam: float, opts: SolverOptions = SolverOptions(), P=None) -> SolveResult:
    """``min sum_kl L([P A G - Y]_kl) + lam ||B||_F^2`` by accelerated gradient with backtracking."""
    _positive("lambda", lam)
    red = _Reduced(Z, G, Y, P, opts.jitter)
    if _empty_reduced(red) or not np.any(red.Y):
        return red.result(np.zeros(red.shape), 0.0, 0, True, grad_norm=0.0)
    val, der, curv = _loss_fns(loss)
    U, Q, Yfull = red.U, red.Q, red.Y

    def residual(X):
        return U @ (red.w * X) @ Q.T - Yfull

    def f(X):
        return float(np.sum(val(residual(X)))) + lam * float(np.sum(X * X))

    def grad(X):
        return red.w * (U.T @ der(residual(X)) @ Q) + 2.0 * lam * X

    X0 = red.w * red.Yhat / (red.w**2 + lam)
    lip = curv * float(red.w.max()) ** 2 + 2.0 * lam
    X, it, ok, _ = _fista(f, grad, lambda V, s: V, X0, lip, opts.max_iters, opts.rel_tol, backtrack=not isinstance(loss, Quadratic))
    return red.result(X, f(X), it, ok, grad_norm=float(np.linalg.norm(grad(X))))

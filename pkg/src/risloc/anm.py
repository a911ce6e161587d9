"""Two-fold Toeplitz structure and the 2D atomic-norm SDP.

The convex program minimizes
    (1/2) tr(Q) + (1/(2N)) tr(Toep(T))
subject to a data-fit ball ||y - H_bar P(X)||_2 <= eps and positive
semidefiniteness of the block matrix [[Q, X], [X^H, Toep(T)]].

ADMM splitting: the smooth block (T, X, Q) has closed-form updates; two
consensus variables carry the constraints, Z for the PSD cone and s for
the data-fit set {s : ||y - H_bar s|| <= eps}. The s projection is exact
through the SVD of the sensing map (a scalar Lagrange root-find), which
keeps the conditioning of the sensing map out of the dual dynamics. The
problem is rescaled so the minimum-norm interpolator has unit size; by
positive homogeneity of the program the solution rescales exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .subspace import LiftingOperator


class InfeasibleEpsError(RuntimeError):
    """Data has a component outside the sensing range larger than eps."""


@dataclass(frozen=True)
class Toep2Coeffs:
    """Coefficients of a two-fold Toeplitz matrix.

    ``t[l + n_h - 1, m + n_v - 1]`` holds the coefficient for outer lag l
    and inner lag m. Hermitian structure requires t[-l, -m] = conj(t[l, m]).
    """

    t: np.ndarray

    def __post_init__(self):
        rows, cols = self.t.shape
        if rows % 2 == 0 or cols % 2 == 0:
            raise ValueError("coefficient array must have odd dimensions")

    @property
    def n_h(self) -> int:
        return (self.t.shape[0] + 1) // 2

    @property
    def n_v(self) -> int:
        return (self.t.shape[1] + 1) // 2

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        flipped = np.conj(self.t[::-1, ::-1])
        scale = max(np.max(np.abs(self.t)), 1e-300)
        return bool(np.max(np.abs(self.t - flipped)) <= tol * scale)

    @staticmethod
    def zeros(n_h: int, n_v: int) -> "Toep2Coeffs":
        return Toep2Coeffs(np.zeros((2 * n_h - 1, 2 * n_v - 1), dtype=complex))


_LAG_CACHE: dict = {}


def _lag_indices(n_h: int, n_v: int) -> np.ndarray:
    """Cached linear index map between matrix positions and lag pairs."""
    key = (n_h, n_v)
    if key not in _LAG_CACHE:
        n = n_h * n_v
        outer = np.arange(n) // n_v
        inner = np.arange(n) % n_v
        row_lag = outer[:, None] - outer[None, :] + n_h - 1
        col_lag = inner[:, None] - inner[None, :] + n_v - 1
        _LAG_CACHE[key] = (row_lag * (2 * n_v - 1) + col_lag).ravel()
    return _LAG_CACHE[key]


def toep2(coeffs: Toep2Coeffs) -> np.ndarray:
    """Expand coefficients into the N x N block-Toeplitz-of-Toeplitz matrix."""
    n = coeffs.n_h * coeffs.n_v
    linear = _lag_indices(coeffs.n_h, coeffs.n_v)
    return coeffs.t.ravel()[linear].reshape(n, n)


def toep2_adjoint(mat: np.ndarray, n_h: int, n_v: int) -> Toep2Coeffs:
    """Adjoint of toep2: sum matrix entries over equal-lag diagonals."""
    n = n_h * n_v
    if mat.shape != (n, n):
        raise ValueError(f"expected {(n, n)} matrix, got {mat.shape}")
    linear = _lag_indices(n_h, n_v)
    size = (2 * n_h - 1) * (2 * n_v - 1)
    flat = mat.ravel()
    acc = np.bincount(linear, weights=flat.real, minlength=size) + 1j * np.bincount(
        linear, weights=flat.imag, minlength=size
    )
    return Toep2Coeffs(acc.reshape(2 * n_h - 1, 2 * n_v - 1))


def lag_counts(n_h: int, n_v: int) -> np.ndarray:
    """Number of matrix positions contributing to each lag pair."""
    lags_h = n_h - np.abs(np.arange(-(n_h - 1), n_h))
    lags_v = n_v - np.abs(np.arange(-(n_v - 1), n_v))
    return np.outer(lags_h, lags_v).astype(float)


@dataclass
class AdmmOptions:
    rho_psd: float = 0.03
    rho_data: float = 1.0
    max_iters: int = 20000
    abs_tol: float = 1e-7
    rel_tol: float = 1e-5
    over_relax: float = 1.6
    balance_every: int = 0  # 0 disables residual balancing
    balance_ratio: float = 10.0
    rho_min: float = 1e-4
    rho_max: float = 1e6
    residual_csv: str | None = None


@dataclass
class SolverStats:
    iterations: int
    primal_res: float
    dual_res: float
    objective: float
    converged: bool
    eps: float
    rho_final: tuple
    data_residual: float
    objective_history: np.ndarray = field(repr=False, default=None)


@dataclass
class SdpSolution:
    x_hat: np.ndarray
    t_hat: Toep2Coeffs
    q_hat: np.ndarray
    stats: SolverStats


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _psd_project(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(_hermitize(a))
    pos = w > 0
    if np.all(pos):
        return a
    vp = v[:, pos] * w[pos]
    return vp @ v[:, pos].conj().T


class _DataFitProjector:
    """Exact projection onto {s : ||y - H s||_2 <= eps} via the SVD of H."""

    def __init__(self, h: np.ndarray, y: np.ndarray, eps: float):
        u, sig, vh = np.linalg.svd(h, full_matrices=False)
        cutoff = sig[0] * max(h.shape) * np.finfo(float).eps
        rank = int(np.sum(sig > cutoff))
        self.v_r = vh[:rank].conj().T  # (N, r)
        self.sig = sig[:rank]
        self.g = u[:, :rank].conj().T @ y
        self.eps = eps
        # component of y outside the column span is unreachable by any s
        self.unreachable = float(np.linalg.norm(y - u[:, :rank] @ self.g))

    def residual_norm(self, s: np.ndarray) -> float:
        resid = self.g - self.sig * (self.v_r.conj().T @ s)
        return math.sqrt(float(np.sum(np.abs(resid) ** 2)) + self.unreachable**2)

    def __call__(self, c: np.ndarray) -> np.ndarray:
        c_hat = self.v_r.conj().T @ c
        resid_sq = np.abs(self.g - self.sig * c_hat) ** 2
        budget_sq = self.eps**2 - self.unreachable**2
        if float(np.sum(resid_sq)) <= budget_sq:
            return c
        if budget_sq <= 0:
            a = self.g / self.sig
            return c + self.v_r @ (a - c_hat)
        lam = self._solve_multiplier(resid_sq, budget_sq)
        a = (c_hat + lam * self.sig * self.g) / (1.0 + lam * self.sig**2)
        return c + self.v_r @ (a - c_hat)

    def _solve_multiplier(self, resid_sq: np.ndarray, budget_sq: float) -> float:
        sig_sq = self.sig**2

        def phi(lam):
            return float(np.sum(resid_sq / (1.0 + lam * sig_sq) ** 2))

        lo, hi = 0.0, 1.0
        for _ in range(200):
            if phi(hi) <= budget_sq:
                break
            hi *= 10.0
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            if phi(mid) > budget_sq:
                lo = mid
            else:
                hi = mid
        return hi


def _zero_solution(n_h, n_v, j, n, eps, opts) -> SdpSolution:
    stats = SolverStats(
        iterations=0,
        primal_res=0.0,
        dual_res=0.0,
        objective=0.0,
        converged=True,
        eps=eps,
        rho_final=(opts.rho_psd, opts.rho_data),
        data_residual=0.0,
        objective_history=np.zeros(0),
    )
    return SdpSolution(
        x_hat=np.zeros((j, n), dtype=complex),
        t_hat=Toep2Coeffs.zeros(n_h, n_v),
        q_hat=np.zeros((j, j), dtype=complex),
        stats=stats,
    )


def solve_anm(
    y: np.ndarray,
    h_bar: np.ndarray,
    op: LiftingOperator,
    eps: float,
    opts: AdmmOptions | None = None,
) -> SdpSolution:
    """Solve the atomic-norm SDP by ADMM.

    Returns the solution triple with solver statistics. Non-convergence at
    max_iters is flagged in the stats; an eps below the best reachable
    data residual raises InfeasibleEpsError. The returned block satisfies
    the PSD constraint exactly: any trailing negative eigenvalue is
    absorbed by an identity shift shared between Q and the center lag of
    T, which preserves the Toeplitz structure.
    """
    if opts is None:
        opts = AdmmOptions()
    if eps < 0:
        raise ValueError("eps must be non-negative")

    geom = op.geom
    n_h, n_v = geom.n_h, geom.n_v
    n = geom.n_elements
    j = op.coeff_dim
    ml = y.shape[0]
    if h_bar.shape != (ml, n):
        raise ValueError(f"h_bar must be {(ml, n)}, got {h_bar.shape}")

    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        return _zero_solution(n_h, n_v, j, n, eps, opts)

    rows = op.rows  # (n, j) dictionary rows
    rows_conj_t = rows.conj().T
    row_norm_sq = np.sum(np.abs(rows) ** 2, axis=1)

    def p_apply(x):
        return np.einsum("nc,cn->n", rows, x)

    def p_adjoint(v):
        return rows_conj_t * v[None, :]

    # feasibility check and solution-scale normalization
    probe = _DataFitProjector(h_bar, y / y_norm, eps / y_norm)
    if probe.unreachable * y_norm > eps * (1.0 + 1e-9) + 1e-300:
        raise InfeasibleEpsError(
            f"min reachable data residual {probe.unreachable * y_norm:.3e} "
            f"exceeds eps={eps:.3e}"
        )
    s_min = probe(np.zeros(n, dtype=complex))
    x_min = p_adjoint(s_min / row_norm_sq)
    y_scale = y_norm * max(float(np.linalg.norm(x_min)), 1e-300)
    projector = _DataFitProjector(h_bar, y / y_scale, eps / y_scale)

    counts = lag_counts(n_h, n_v)
    center = (n_h - 1, n_v - 1)
    alpha = opts.over_relax
    rho_z = opts.rho_psd
    rho_s = opts.rho_data

    dim = j + n
    x = np.zeros((j, n), dtype=complex)
    t = np.zeros((2 * n_h - 1, 2 * n_v - 1), dtype=complex)
    q = np.zeros((j, j), dtype=complex)
    z = np.zeros((dim, dim), dtype=complex)
    s = np.zeros(n, dtype=complex)
    lam = np.zeros((dim, dim), dtype=complex)
    nu = np.zeros(n, dtype=complex)

    block = np.zeros((dim, dim), dtype=complex)
    eye_j = np.eye(j)
    obj_history = []
    csv_rows = []
    primal = dual = np.inf
    data_res = np.inf
    converged = False
    it = 0

    for it in range(1, opts.max_iters + 1):
        # --- smooth block update (T, X, Q) ---
        p_q = _hermitize(z[:j, :j] + lam[:j, :j])
        q = p_q - (0.5 / rho_z) * eye_j

        p_v = _hermitize(z[j:, j:] + lam[j:, j:])
        adj = toep2_adjoint(p_v, n_h, n_v).t
        t = adj / counts
        t[center] = (adj[center] - 0.5 / rho_z) / counts[center]
        t = 0.5 * (t + np.conj(t[::-1, ::-1]))

        p_x = z[:j, j:] + lam[:j, j:]
        rhs = 2.0 * rho_z * p_x + rho_s * p_adjoint(s + nu)
        # (2 rho_z I + rho_s P* P) is column-separable with a rank-one bump
        corr = p_apply(rhs) * rho_s / (2.0 * rho_z + rho_s * row_norm_sq)
        x = (rhs - p_adjoint(corr)) / (2.0 * rho_z)

        # --- consensus block: PSD cone and data-fit set ---
        block[:j, :j] = q
        block[:j, j:] = x
        block[j:, :j] = x.conj().T
        block[j:, j:] = toep2(Toep2Coeffs(t))
        px = p_apply(x)

        z_prev = z
        s_prev = s
        block_relaxed = alpha * block + (1.0 - alpha) * z_prev
        px_relaxed = alpha * px + (1.0 - alpha) * s_prev
        z = _psd_project(block_relaxed - lam)
        s = projector(px_relaxed - nu)

        lam = lam + (z - block_relaxed)
        nu = nu + (s - px_relaxed)

        # --- residuals and stopping ---
        r1 = float(np.linalg.norm(z - block))
        r2 = float(np.linalg.norm(s - px))
        primal = math.hypot(r1, r2)
        d1 = rho_z * np.linalg.norm(z - z_prev)
        d2 = rho_s * np.linalg.norm(p_adjoint(s - s_prev))
        dual = math.hypot(float(d1), float(d2))

        objective = 0.5 * float(np.trace(q).real) + 0.5 * float(t[center].real)
        obj_history.append(objective)
        data_res = projector.residual_norm(px)
        if opts.residual_csv:
            csv_rows.append((it, primal, dual, objective))

        scale_ref = max(
            math.hypot(float(np.linalg.norm(z)), float(np.linalg.norm(s))),
            math.hypot(float(np.linalg.norm(block)), float(np.linalg.norm(px))),
        )
        eps_pri = math.sqrt(dim * dim + n) * opts.abs_tol + opts.rel_tol * scale_ref
        eps_dual = math.sqrt(dim * dim + n) * opts.abs_tol + opts.rel_tol * math.hypot(
            rho_z * float(np.linalg.norm(lam)), rho_s * float(np.linalg.norm(p_adjoint(nu)))
        )
        if primal <= eps_pri and dual <= eps_dual:
            converged = True
            break

        if opts.balance_every and it % opts.balance_every == 0:
            if r1 > opts.balance_ratio * d1 and rho_z < opts.rho_max:
                rho_z *= 2.0
                lam /= 2.0
            elif d1 > opts.balance_ratio * r1 and rho_z > opts.rho_min:
                rho_z /= 2.0
                lam *= 2.0
            if r2 > opts.balance_ratio * d2 and rho_s < opts.rho_max:
                rho_s *= 2.0
                nu /= 2.0
            elif d2 > opts.balance_ratio * r2 and rho_s > opts.rho_min:
                rho_s /= 2.0
                nu *= 2.0

    # exact PSD feasibility: absorb any trailing negative eigenvalue into an
    # identity shift on Q and the center lag (identity is two-fold Toeplitz)
    block[:j, :j] = q
    block[:j, j:] = x
    block[j:, :j] = x.conj().T
    block[j:, j:] = toep2(Toep2Coeffs(t))
    min_eig = float(np.linalg.eigvalsh(_hermitize(block))[0])
    if min_eig < 0:
        q = q + (-min_eig) * eye_j
        t[center] += -min_eig

    scale = y_scale
    stats = SolverStats(
        iterations=it,
        primal_res=primal,
        dual_res=dual,
        objective=scale * obj_history[-1] if obj_history else 0.0,
        converged=converged,
        eps=eps,
        rho_final=(rho_z, rho_s),
        data_residual=scale * data_res,
        objective_history=np.asarray(obj_history),
    )
    if opts.residual_csv:
        with open(opts.residual_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "primal_res", "dual_res", "objective"])
            writer.writerows(csv_rows)
    return SdpSolution(
        x_hat=scale * x,
        t_hat=Toep2Coeffs(scale * t),
        q_hat=scale * q,
        stats=stats,
    )

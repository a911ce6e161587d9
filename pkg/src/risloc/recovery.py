"""Post-processing: paired frequency extraction, range and gain recovery.

Angles come from the two-fold Toeplitz solution block through a shift-
invariance pencil on both index levels with joint diagonalization for
pairing. Ranges come from the chirp reconstructed out of the coefficient
block: the three-term ratio q[n+1]q[n-1]/q[n]^2 of a quadratic-phase chirp
is the constant exp(-j 2 gamma d^2), which kills the per-user scaling
ambiguity. Gains close the loop by least squares against the measurements.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .anm import AdmmOptions, SdpSolution, Toep2Coeffs, solve_anm, toep2
from .model import UpaGeometry, exact_response_many, position_at
from .subspace import ChirpSubspace, LiftingOperator


class RankDeficientError(RuntimeError):
    """Requested model order exceeds the numerical rank."""


class PairingAmbiguityError(RuntimeError):
    """Joint diagonalization failed to separate the pencil eigenvalues."""


class DegenerateChirpError(RuntimeError):
    """Too few usable chirp-ratio samples to estimate a range."""


class SingularGramError(RuntimeError):
    """Gain least squares has a numerically singular Gram matrix."""


class LocalizationError(RuntimeError):
    """Pipeline failure, labeled with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class FreqPairEstimates:
    """Paired spatial-frequency estimates with decomposition weights."""

    pairs: list
    weights: np.ndarray


@dataclass(frozen=True)
class UeEstimate:
    azimuth: float
    elevation: float
    range: float
    effective_gain: complex | None = None
    gain: complex | None = None
    angle_clamped: bool = False
    range_clamped: bool = False

    @property
    def position(self) -> np.ndarray:
        return position_at(self.azimuth, self.elevation, self.range)


def _pair_atoms(pairs, geom: UpaGeometry) -> np.ndarray:
    """Steering matrix with one kron(a_h, a_v) column per frequency pair."""
    cols = [
        np.kron(np.exp(1j * geom.idx_h * a), np.exp(1j * geom.idx_v * b))
        for a, b in pairs
    ]
    return np.stack(cols, axis=1)


def mapp(
    t_hat: Toep2Coeffs,
    k: int,
    geom: UpaGeometry,
    zeta_seed: int = 7,
    rank_tol: float = 1e-12,
) -> FreqPairEstimates:
    """Extract k paired (alpha, beta) frequencies from Toeplitz coefficients.

    Takes the k leading eigenvectors of the expanded matrix, forms shift-
    invariance pencils along both index levels, and diagonalizes a random
    unit-modulus combination so both frequency sets share eigenvectors and
    pair up automatically. Weights solve the diagonal decomposition by
    non-negative least squares. ``rank_tol`` is the relative eigenvalue
    floor below which the matrix counts as rank-deficient for order k.
    """
    n_h, n_v = t_hat.n_h, t_hat.n_v
    if (n_h, n_v) != (geom.n_h, geom.n_v):
        raise ValueError("coefficients and geometry disagree on the panel size")
    if k < 1:
        raise ValueError("model order must be at least 1")
    if k > min((n_h - 1) * n_v, n_h * (n_v - 1)):
        raise ValueError(f"model order {k} exceeds the pencil capacity")

    r_mat = toep2(t_hat)
    r_mat = 0.5 * (r_mat + r_mat.conj().T)
    evals, evecs = np.linalg.eigh(r_mat)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    if evals[0] <= 0 or evals[k - 1] <= rank_tol * evals[0]:
        raise RankDeficientError(
            f"order {k} exceeds numerical rank (eigenvalue ratio "
            f"{evals[k - 1] / max(evals[0], 1e-300):.2e})"
        )

    sig = evecs[:, :k].reshape(n_h, n_v, k)
    u1_h = sig[:-1, :, :].reshape(-1, k)
    u2_h = sig[1:, :, :].reshape(-1, k)
    u1_v = sig[:, :-1, :].reshape(-1, k)
    u2_v = sig[:, 1:, :].reshape(-1, k)
    psi_h = np.linalg.pinv(u1_h) @ u2_h
    psi_v = np.linalg.pinv(u1_v) @ u2_v

    rng = np.random.default_rng(zeta_seed)
    vectors = None
    for _ in range(3):
        zeta = np.exp(1j * rng.uniform(0.0, 2.0 * math.pi))
        mix_vals, mix_vecs = np.linalg.eig(psi_h + zeta * psi_v)
        if k > 1:
            diffs = np.abs(mix_vals[:, None] - mix_vals[None, :])
            np.fill_diagonal(diffs, np.inf)
            gap = float(np.min(diffs))
        else:
            gap = np.inf
        if gap > 1e-7 * max(np.max(np.abs(mix_vals)), 1e-300):
            vectors = mix_vecs
            break
    if vectors is None:
        raise PairingAmbiguityError("combined pencil kept repeated eigenvalues")

    diag_h = np.diag(np.linalg.solve(vectors, psi_h @ vectors))
    diag_v = np.diag(np.linalg.solve(vectors, psi_v @ vectors))
    alphas = np.angle(diag_h)
    betas = np.angle(diag_v)
    pairs = list(zip(alphas.tolist(), betas.tolist()))

    atoms = _pair_atoms(pairs, geom)
    gram = np.abs(atoms.conj().T @ atoms) ** 2
    rhs = np.real(np.einsum("nk,nm,mk->k", atoms.conj(), r_mat, atoms))
    weights, _ = nnls(gram, rhs)
    return FreqPairEstimates(pairs=pairs, weights=weights)


def angles_from_freqs(pairs, geom: UpaGeometry):
    """Map (alpha, beta) pairs to (azimuth, elevation); clamp with warning.

    Returns (azimuths, elevations, clamped) arrays; ``clamped`` marks pairs
    whose arcsine argument numerically overshot [-1, 1].
    """
    azimuths = np.zeros(len(pairs))
    elevations = np.zeros(len(pairs))
    clamped = np.zeros(len(pairs), dtype=bool)
    lam = geom.wavelength
    for i, (alpha, beta) in enumerate(pairs):
        sin_el = beta * lam / (2.0 * math.pi * geom.d_v)
        if abs(sin_el) > 1.0:
            clamped[i] = True
            sin_el = math.copysign(1.0, sin_el)
        el = math.asin(sin_el)
        cos_el = math.cos(el)
        sin_az = alpha * lam / (2.0 * math.pi * geom.d_h * cos_el) if cos_el > 0 else math.copysign(1.0, alpha)
        if abs(sin_az) > 1.0:
            clamped[i] = True
            sin_az = math.copysign(1.0, sin_az)
        azimuths[i] = math.asin(sin_az)
        elevations[i] = el
    if np.any(clamped):
        warnings.warn("arcsine argument clamped for some frequency pairs", stacklevel=2)
    return azimuths, elevations, clamped


def _golden_section(fun, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) < tol * (abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def chirp_ratio_sequence(q: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Three-term ratios of a chirp; entries with tiny denominators dropped."""
    num = q[2:] * q[:-2]
    den = q[1:-1] ** 2
    keep = np.abs(q[1:-1]) >= floor
    ratios = num[keep] / den[keep]
    mod = np.abs(ratios)
    ratios = ratios[mod > 0] / mod[mod > 0]
    return ratios


def estimate_ranges(
    x_hat: np.ndarray,
    pairs,
    sub_h: ChirpSubspace,
    sub_v: ChirpSubspace,
    geom: UpaGeometry,
    r_bounds: tuple[float, float] | None = None,
):
    """Per-user chirp-rate and range estimates from the coefficient block.

    Projects the solution onto the estimated steering matrix, factorizes
    each coefficient column into horizontal/vertical parts by a rank-one
    SVD, rebuilds the per-axis chirps, and fits the common ratio phase.
    Returns a list of (gamma_hat, range_hat, clamped) triples.
    """
    atoms = _pair_atoms(pairs, geom)
    u_mat = x_hat @ np.linalg.pinv(atoms.T)
    lam = geom.wavelength
    if r_bounds is None:
        # constrained LS over the subspace validity interval
        gamma_lo = min(sub_h.gamma_min, sub_v.gamma_min)
        gamma_hi = max(sub_h.gamma_max, sub_v.gamma_max)
    else:
        gamma_lo = math.pi / (lam * r_bounds[1])
        gamma_hi = math.pi / (lam * r_bounds[0])

    same_spacing = math.isclose(geom.d_h, geom.d_v, rel_tol=1e-12)
    out = []
    for col in range(u_mat.shape[1]):
        mat = u_mat[:, col].reshape(sub_h.j_x, sub_v.j_x)
        # rank-one factor u_h u_v^T: numpy svd returns the second factor as
        # the leading row of vh, already in the unconjugated row convention
        u_svd, _, vh_svd = np.linalg.svd(mat)
        u_h = u_svd[:, 0]
        u_v = vh_svd[0, :]
        # convention: leading entry of the horizontal factor real non-negative
        phase = u_h[0] / abs(u_h[0]) if abs(u_h[0]) > 0 else 1.0
        u_h = u_h / phase

        q_h = sub_h.basis @ u_h
        q_v = sub_v.basis @ u_v
        rho_h = chirp_ratio_sequence(q_h)
        rho_v = chirp_ratio_sequence(q_v)
        if len(rho_h) < 2 or len(rho_v) < 2:
            raise DegenerateChirpError(
                f"user {col}: only {len(rho_h)}/{len(rho_v)} usable ratios"
            )

        if same_spacing:
            d_sq = geom.d_h**2
            gamma = -np.angle(np.sum(rho_h) + np.sum(rho_v)) / (2.0 * d_sq)
        else:
            def cost(g):
                ref_h = np.exp(-2j * g * geom.d_h**2)
                ref_v = np.exp(-2j * g * geom.d_v**2)
                return float(
                    np.sum(np.abs(rho_h - ref_h) ** 2) + np.sum(np.abs(rho_v - ref_v) ** 2)
                )

            gamma = _golden_section(cost, gamma_lo, gamma_hi)

        clamped = False
        if not gamma_lo <= gamma <= gamma_hi:
            clamped = True
            gamma = min(max(gamma, gamma_lo), gamma_hi)
        out.append((float(gamma), float(math.pi / (lam * gamma)), clamped))
    if any(c for _, _, c in out):
        warnings.warn("range estimate clamped to the configured interval", stacklevel=2)
    return out


def estimate_gains(
    y: np.ndarray,
    h_bar: np.ndarray,
    geom: UpaGeometry,
    estimates: list,
    powers=None,
) -> list:
    """Least-squares effective gains at the estimated parameters.

    Rebuilds the spherical-wave responses at the estimates, solves the
    stacked LS problem, and returns updated UeEstimate objects. ``powers``
    (known transmit powers) additionally resolve the raw path gains.
    """
    if not estimates:
        return []
    k = len(estimates)
    if y.shape[0] < k:
        raise ValueError("need at least as many samples as users")
    responses = exact_response_many(
        [e.azimuth for e in estimates],
        [e.elevation for e in estimates],
        [e.range for e in estimates],
        geom,
    )
    s_mat = h_bar @ responses
    gram = s_mat.conj().T @ s_mat
    if np.linalg.cond(gram) > 1e12:
        raise SingularGramError("estimated responses are nearly collinear")
    gains_eff = np.linalg.solve(gram, s_mat.conj().T @ y)

    updated = []
    for i, est in enumerate(estimates):
        gain = None
        if powers is not None:
            gain = gains_eff[i] / math.sqrt(powers[i])
        updated.append(
            UeEstimate(
                azimuth=est.azimuth,
                elevation=est.elevation,
                range=est.range,
                effective_gain=complex(gains_eff[i]),
                gain=gain,
                angle_clamped=est.angle_clamped,
                range_clamped=est.range_clamped,
            )
        )
    return updated


def localize(
    y: np.ndarray,
    h_bar: np.ndarray,
    op: LiftingOperator,
    k: int,
    eps: float,
    solver_opts: AdmmOptions | None = None,
    r_bounds: tuple[float, float] | None = None,
    powers=None,
) -> tuple[list, SdpSolution]:
    """Full pipeline: SDP solve, angle extraction, range and gain recovery.

    Returns (estimates, sdp_solution). Component failures re-raise as
    LocalizationError labeled with the failing stage.
    """
    geom = op.geom
    try:
        solution = solve_anm(y, h_bar, op, eps, solver_opts)
    except Exception as exc:  # noqa: BLE001 - stage labeling
        raise LocalizationError("solve_anm", exc) from exc
    try:
        # atoms more than ~40 dB below the leading one are indistinguishable
        # from solver residue; surface rank deficiency instead of noise pairs
        freq_pairs = mapp(solution.t_hat, k, geom, rank_tol=1e-4)
    except Exception as exc:
        raise LocalizationError("mapp", exc) from exc
    # PSD of [[Q, X], [X^H, Toep(T)]] with atoms u d^T puts conj(d) into
    # Toep(T): the extracted frequencies are the negated user frequencies.
    pairs = [(-a, -b) for a, b in freq_pairs.pairs]
    try:
        azimuths, elevations, clamped = angles_from_freqs(pairs, geom)
    except Exception as exc:
        raise LocalizationError("angles_from_freqs", exc) from exc
    try:
        ranges = estimate_ranges(solution.x_hat, pairs, op.sub_h, op.sub_v, geom, r_bounds)
    except Exception as exc:
        raise LocalizationError("estimate_ranges", exc) from exc

    estimates = [
        UeEstimate(
            azimuth=float(azimuths[i]),
            elevation=float(elevations[i]),
            range=ranges[i][1],
            angle_clamped=bool(clamped[i]),
            range_clamped=ranges[i][2],
        )
        for i in range(k)
    ]
    try:
        estimates = estimate_gains(y, h_bar, geom, estimates, powers)
    except Exception as exc:
        raise LocalizationError("estimate_gains", exc) from exc
    return estimates, solution


def select_model_order(t_hat: Toep2Coeffs, max_k: int) -> int:
    """Largest log-eigenvalue gap of the expanded Toeplitz matrix."""
    evals = np.linalg.eigvalsh(toep2(t_hat))[::-1]
    evals = np.maximum(evals[: max_k + 1], 1e-300)
    gaps = np.diff(np.log(evals))
    return int(np.argmin(gaps)) + 1

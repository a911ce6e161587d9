"""Comparison methods: polar-dictionary OMP and RIS-side 3D MUSIC.

Both are grid methods. OMP greedily picks dictionary atoms pushed through
the stacked sensing map; MUSIC assumes direct (non-realizable) access to
panel-side snapshots and scans a spherical-wave steering grid against the
noise subspace of the sample covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .model import UpaGeometry, exact_response_many, fresnel_response_many, spatial_freqs_from_ue
from .recovery import UeEstimate, angles_from_freqs


@dataclass(frozen=True)
class GridSpec:
    """Search grid over (azimuth, elevation, range).

    Angles are spaced uniformly in their sines, ranges uniformly in the
    reciprocal range, matching polar-domain codebook conventions.
    """

    n_az: int
    n_el: int
    n_range: int
    az_range: tuple[float, float]
    el_range: tuple[float, float]
    r_range: tuple[float, float]

    def __post_init__(self):
        if min(self.n_az, self.n_el, self.n_range) < 2:
            raise ValueError("need at least two grid points per axis")
        if self.az_range[0] >= self.az_range[1] or self.el_range[0] >= self.el_range[1]:
            raise ValueError("empty angle range")
        if not 0 < self.r_range[0] < self.r_range[1]:
            raise ValueError("empty or invalid range interval")

    def axes(self):
        azs = np.arcsin(
            np.linspace(math.sin(self.az_range[0]), math.sin(self.az_range[1]), self.n_az)
        )
        els = np.arcsin(
            np.linspace(math.sin(self.el_range[0]), math.sin(self.el_range[1]), self.n_el)
        )
        rs = 1.0 / np.linspace(1.0 / self.r_range[0], 1.0 / self.r_range[1], self.n_range)
        return azs, els, rs

    def points(self):
        """Flattened meshgrid; returns (azimuths, elevations, ranges)."""
        azs, els, rs = self.axes()
        mesh = np.meshgrid(azs, els, rs, indexing="ij")
        return mesh[0].ravel(), mesh[1].ravel(), mesh[2].ravel()

    @property
    def size(self) -> int:
        return self.n_az * self.n_el * self.n_range


def default_grid(geom: UpaGeometry, scene_bounds=None, n_range: int = 32) -> GridSpec:
    az_range = scene_bounds[0] if scene_bounds else (-math.pi / 3, math.pi / 3)
    el_range = scene_bounds[1] if scene_bounds else (-math.pi / 6, math.pi / 6)
    r_range = scene_bounds[2] if scene_bounds else (3.0, 15.0)
    return GridSpec(
        n_az=2 * geom.n_h,
        n_el=2 * geom.n_v,
        n_range=n_range,
        az_range=az_range,
        el_range=el_range,
        r_range=r_range,
    )


@dataclass(frozen=True)
class PolarDictionary:
    """Near-field response dictionary over a polar grid."""

    atoms: np.ndarray
    params: np.ndarray  # (G, 3) rows of (alpha, beta, gamma)
    grid: GridSpec

    def __post_init__(self):
        if self.atoms.shape[1] != self.params.shape[0]:
            raise ValueError("atom count does not match the parameter list")


def build_polar_dictionary(geom: UpaGeometry, grid: GridSpec) -> PolarDictionary:
    """Fresnel-response atoms over the Cartesian product grid."""
    azs, els, rs = grid.points()
    sin_el = np.sin(els)
    alphas = 2.0 * math.pi / geom.wavelength * geom.d_h * np.sin(azs) * np.cos(els)
    betas = 2.0 * math.pi / geom.wavelength * geom.d_v * sin_el
    gammas = math.pi / (geom.wavelength * rs)
    atoms = fresnel_response_many(alphas, betas, gammas, geom)
    params = np.stack([alphas, betas, gammas], axis=1)
    return PolarDictionary(atoms=atoms, params=params, grid=grid)


def omp_estimate(
    y: np.ndarray,
    h_bar: np.ndarray,
    dictionary: PolarDictionary,
    k: int,
    geom: UpaGeometry,
) -> list:
    """Greedy sparse recovery over the effective dictionary H_bar @ atoms.

    Each round selects the unit-normalized effective atom with maximal
    residual correlation, then re-fits all selected coefficients by LS.
    Selected grid triples map back to angle/range estimates.
    """
    n_atoms = dictionary.atoms.shape[1]
    if k > n_atoms:
        raise ValueError(f"k={k} exceeds the dictionary size {n_atoms}")
    if k > y.shape[0]:
        raise ValueError(f"k={k} exceeds the measurement dimension")
    if k == 0:
        return []

    effective = h_bar @ dictionary.atoms
    col_norms = np.linalg.norm(effective, axis=0)
    usable = col_norms > 1e-14 * np.max(col_norms)
    if np.count_nonzero(usable) < k:
        raise ValueError("effective dictionary rank is below the requested order")

    residual = y.copy()
    selected: list[int] = []
    coeffs = np.zeros(0, dtype=complex)
    for _ in range(k):
        corr = np.abs(effective.conj().T @ residual)
        corr[~usable] = -1.0
        corr[selected] = -1.0
        pick = int(np.argmax(corr / np.where(col_norms > 0, col_norms, 1.0)))
        selected.append(pick)
        sub = effective[:, selected]
        coeffs, *_ = np.linalg.lstsq(sub, y, rcond=None)
        residual = y - sub @ coeffs

    lam = geom.wavelength
    triples = dictionary.params[selected]
    azimuths, elevations, _ = angles_from_freqs(
        [(a, b) for a, b, _ in triples], geom
    )
    return [
        UeEstimate(
            azimuth=float(azimuths[i]),
            elevation=float(elevations[i]),
            range=float(math.pi / (lam * triples[i, 2])),
            effective_gain=complex(coeffs[i]),
        )
        for i in range(k)
    ]


@dataclass(frozen=True)
class MusicSpectrum:
    """Pseudo-spectrum values over a (azimuth, elevation, range) grid."""

    grid: GridSpec
    values: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("spectrum values must be finite and non-negative")


def music3d_ris(
    snapshots: np.ndarray,
    k: int,
    grid: GridSpec,
    geom: UpaGeometry,
    chunk: int = 4096,
    steering: str = "exact",
) -> tuple[MusicSpectrum, list]:
    """Idealized panel-side MUSIC over a steering grid.

    ``snapshots`` is the (N, L) matrix of per-slot panel observations. The
    pseudo-spectrum is 1 / ||E_n^H b(az, el, r)||^2 evaluated on the grid;
    the k largest local maxima become estimates. ``steering`` selects the
    response model of the scan grid (the genie matches whatever generated
    the snapshots). k >= L leaves no reliable noise-subspace estimate and
    is flagged as degenerate.
    """
    n, n_slots = snapshots.shape
    if n != geom.n_elements:
        raise ValueError("snapshot dimension does not match the panel")
    if n_slots < 1:
        raise ValueError("need at least one snapshot")
    if not 0 < k < n:
        raise ValueError(f"model order {k} outside 1..{n - 1}")
    if steering not in ("exact", "fresnel"):
        raise ValueError(f"unknown steering model {steering!r}")
    degenerate = k >= n_slots

    cov = snapshots @ snapshots.conj().T / n_slots
    evals, evecs = np.linalg.eigh(cov)
    signal_basis = evecs[:, ::-1][:, :k]

    azs, els, rs = grid.points()
    values = np.zeros(grid.size)
    for start in range(0, grid.size, chunk):
        stop = min(start + chunk, grid.size)
        if steering == "exact":
            atoms = exact_response_many(azs[start:stop], els[start:stop], rs[start:stop], geom)
        else:
            lam = geom.wavelength
            sl = slice(start, stop)
            alphas = 2.0 * math.pi / lam * geom.d_h * np.sin(azs[sl]) * np.cos(els[sl])
            betas = 2.0 * math.pi / lam * geom.d_v * np.sin(els[sl])
            atoms = fresnel_response_many(alphas, betas, math.pi / (lam * rs[sl]), geom)
        proj = signal_basis.conj().T @ atoms
        denom = n - np.sum(np.abs(proj) ** 2, axis=0)
        values[start:stop] = 1.0 / np.maximum(denom, 1e-12)

    cube = values.reshape(grid.n_az, grid.n_el, grid.n_range)
    local_max = cube == maximum_filter(cube, size=3, mode="nearest")
    peak_idx = np.flatnonzero(local_max.ravel())
    if len(peak_idx) < k:
        extra = np.argsort(values)[::-1]
        extra = extra[~np.isin(extra, peak_idx)]
        peak_idx = np.concatenate([peak_idx, extra[: k - len(peak_idx)]])
    top = peak_idx[np.argsort(values[peak_idx])[::-1][:k]]

    estimates = [
        UeEstimate(azimuth=float(azs[i]), elevation=float(els[i]), range=float(rs[i]))
        for i in top
    ]
    return MusicSpectrum(grid=grid, values=values, degenerate=degenerate), estimates


def synthesize_ris_snapshots(
    scene,
    geom: UpaGeometry,
    n_slots: int,
    noise_var: float,
    seed=None,
    model: str = "exact",
) -> np.ndarray:
    """Idealized panel-side snapshots: combined user signal plus noise."""
    combined = np.zeros(geom.n_elements, dtype=complex)
    for ue in scene:
        if model == "exact":
            resp = exact_response_many([ue.azimuth], [ue.elevation], [ue.range], geom)[:, 0]
        else:
            freqs = spatial_freqs_from_ue(ue, geom)
            resp = fresnel_response_many([freqs.alpha], [freqs.beta], [freqs.gamma], geom)[:, 0]
        combined += ue.effective_gain * resp
    snapshots = np.tile(combined[:, None], (1, n_slots))
    if noise_var > 0:
        rng = np.random.default_rng(seed)
        scale = math.sqrt(noise_var / 2.0)
        snapshots = snapshots + scale * (
            rng.standard_normal(snapshots.shape) + 1j * rng.standard_normal(snapshots.shape)
        )
    return snapshots

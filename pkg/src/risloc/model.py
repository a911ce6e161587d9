"""Panel geometry, uplink channels, and measurement synthesis.

The reflecting panel is a uniform planar array on the YZ-plane with odd
element counts per row/column and the center element as phase reference.
A user at spherical coordinates (azimuth, elevation, range) induces a
spherical-wave response across the panel; in the radiating near field the
response factors into a 2D far-field steering vector modulated by
quadratic-phase chirps, parameterized by the spatial frequencies
(alpha, beta, gamma) with gamma = pi / (wavelength * range).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised for physically impossible layouts (e.g. coincident elements)."""


@dataclass(frozen=True)
class UpaGeometry:
    """Uniform planar array on the YZ-plane, center element as reference.

    Element (n_h, n_v) sits at (0, n_h*d_h, n_v*d_v) with n_h, n_v running
    over symmetric integer index sets; counts must be odd so the reference
    element exists.
    """

    n_h: int
    n_v: int
    d_h: float
    d_v: float
    wavelength: float

    def __post_init__(self):
        if self.n_h < 1 or self.n_h % 2 == 0:
            raise ValueError(f"n_h must be an odd positive integer, got {self.n_h}")
        if self.n_v < 1 or self.n_v % 2 == 0:
            raise ValueError(f"n_v must be an odd positive integer, got {self.n_v}")
        if min(self.d_h, self.d_v, self.wavelength) <= 0:
            raise ValueError("d_h, d_v and wavelength must be strictly positive")

    @property
    def n_elements(self) -> int:
        return self.n_h * self.n_v

    @property
    def half_h(self) -> int:
        return (self.n_h - 1) // 2

    @property
    def half_v(self) -> int:
        return (self.n_v - 1) // 2

    @property
    def idx_h(self) -> np.ndarray:
        """Row index set, -(n_h-1)/2 .. (n_h-1)/2."""
        return np.arange(-self.half_h, self.half_h + 1)

    @property
    def idx_v(self) -> np.ndarray:
        return np.arange(-self.half_v, self.half_v + 1)

    def element_index(self, n_h_idx: int, n_v_idx: int) -> int:
        """1-based scalar index of grid element (n_h_idx, n_v_idx)."""
        if abs(n_h_idx) > self.half_h or abs(n_v_idx) > self.half_v:
            raise ValueError("grid index outside the panel")
        return (n_h_idx + self.half_h) * self.n_v + (n_v_idx + self.half_v) + 1

    def grid_index(self, n: int) -> tuple[int, int]:
        """Inverse of element_index."""
        if not 1 <= n <= self.n_elements:
            raise ValueError(f"scalar index {n} outside 1..{self.n_elements}")
        q, r = divmod(n - 1, self.n_v)
        return q - self.half_h, r - self.half_v

    def element_positions(self) -> np.ndarray:
        """(N, 3) Cartesian element positions, ordered by scalar index."""
        yy = self.idx_h * self.d_h
        zz = self.idx_v * self.d_v
        pos = np.zeros((self.n_elements, 3))
        pos[:, 1] = np.repeat(yy, self.n_v)
        pos[:, 2] = np.tile(zz, self.n_h)
        return pos


@dataclass(frozen=True)
class UeGroundTruth:
    """One user: spherical coordinates relative to the panel center plus
    complex path gain and transmit power."""

    azimuth: float
    elevation: float
    range: float
    path_gain: complex = 1.0 + 0.0j
    power: float = 1.0

    def __post_init__(self):
        if self.range <= 0:
            raise ValueError("range must be positive")
        if not (-math.pi / 2 < self.azimuth < math.pi / 2):
            raise ValueError("azimuth must lie in (-pi/2, pi/2)")
        if not (-math.pi / 2 < self.elevation < math.pi / 2):
            raise ValueError("elevation must lie in (-pi/2, pi/2)")
        if self.power <= 0:
            raise ValueError("power must be positive")

    @property
    def position(self) -> np.ndarray:
        return self.range * np.array(
            [
                math.cos(self.azimuth) * math.cos(self.elevation),
                math.sin(self.azimuth) * math.cos(self.elevation),
                math.sin(self.elevation),
            ]
        )

    @property
    def effective_gain(self) -> complex:
        """Path gain scaled by the transmitted amplitude."""
        return math.sqrt(self.power) * self.path_gain


@dataclass(frozen=True)
class SpatialFreqs:
    """Linear-phase frequencies (alpha, beta) and chirp rate gamma."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


def position_at(azimuth, elevation, range_m) -> np.ndarray:
    return range_m * np.array(
        [
            math.cos(azimuth) * math.cos(elevation),
            math.sin(azimuth) * math.cos(elevation),
            math.sin(elevation),
        ]
    )


def free_space_gain(range_m: float, wavelength: float) -> float:
    """Amplitude of the free-space loss at the given distance."""
    return wavelength / (4.0 * math.pi * range_m)


def spatial_freqs_from_ue(ue: UeGroundTruth, geom: UpaGeometry) -> SpatialFreqs:
    """Map (azimuth, elevation, range) to the spatial frequencies."""
    two_pi_over_lam = 2.0 * math.pi / geom.wavelength
    alpha = two_pi_over_lam * geom.d_h * math.sin(ue.azimuth) * math.cos(ue.elevation)
    beta = two_pi_over_lam * geom.d_v * math.sin(ue.elevation)
    gamma = math.pi / (geom.wavelength * ue.range)
    return SpatialFreqs(alpha=alpha, beta=beta, gamma=gamma)


def ue_from_spatial_freqs(freqs: SpatialFreqs, geom: UpaGeometry) -> tuple[float, float, float]:
    """Invert spatial_freqs_from_ue; returns (azimuth, elevation, range).

    Raises ValueError when an arcsine argument falls outside [-1, 1].
    """
    sin_el = freqs.beta * geom.wavelength / (2.0 * math.pi * geom.d_v)
    if abs(sin_el) > 1.0:
        raise ValueError(f"beta={freqs.beta} maps outside the elevation domain")
    elevation = math.asin(sin_el)
    sin_az = freqs.alpha * geom.wavelength / (2.0 * math.pi * geom.d_h * math.cos(elevation))
    if abs(sin_az) > 1.0:
        raise ValueError(f"alpha={freqs.alpha} maps outside the azimuth domain")
    azimuth = math.asin(sin_az)
    range_m = math.pi / (geom.wavelength * freqs.gamma)
    return azimuth, elevation, range_m


def steering_vector(index_set: np.ndarray, freq: float) -> np.ndarray:
    """Far-field steering vector exp(j * n * freq) over an index set."""
    return np.exp(1j * index_set * freq)


def chirp_vector(index_set: np.ndarray, delta: float) -> np.ndarray:
    """Quadratic-phase chirp exp(-j * n^2 * delta) over an index set."""
    return np.exp(-1j * index_set.astype(float) ** 2 * delta)


def exact_response(ue: UeGroundTruth, geom: UpaGeometry) -> np.ndarray:
    """Spherical-wave panel response, element n: exp{j 2pi/lam (r - r_n)}."""
    dists = np.linalg.norm(ue.position[None, :] - geom.element_positions(), axis=1)
    return np.exp(1j * (2.0 * math.pi / geom.wavelength) * (ue.range - dists))


def fresnel_response(freqs: SpatialFreqs, geom: UpaGeometry) -> np.ndarray:
    """Separable near-field approximation of the panel response.

    Equals kron(a_h * q_h, a_v * q_v) with per-axis steering vectors a and
    chirps q evaluated at (alpha, beta) and the chirp rates d_x^2 * gamma.
    """
    row = steering_vector(geom.idx_h, freqs.alpha) * chirp_vector(
        geom.idx_h, geom.d_h**2 * freqs.gamma
    )
    col = steering_vector(geom.idx_v, freqs.beta) * chirp_vector(
        geom.idx_v, geom.d_v**2 * freqs.gamma
    )
    return np.kron(row, col)


def fresnel_response_many(alphas, betas, gammas, geom: UpaGeometry) -> np.ndarray:
    """Vectorized fresnel_response; returns an (N, G) matrix of responses."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    nh = geom.idx_h.astype(float)
    nv = geom.idx_v.astype(float)
    rows = np.exp(1j * (np.outer(nh, alphas) - np.outer(nh**2, geom.d_h**2 * gammas)))
    cols = np.exp(1j * (np.outer(nv, betas) - np.outer(nv**2, geom.d_v**2 * gammas)))
    return np.einsum("ig,jg->ijg", rows, cols).reshape(geom.n_elements, -1)


def exact_response_many(azimuths, elevations, ranges, geom: UpaGeometry) -> np.ndarray:
    """Vectorized exact_response; returns an (N, G) matrix of responses."""
    azimuths = np.atleast_1d(np.asarray(azimuths, dtype=float))
    elevations = np.atleast_1d(np.asarray(elevations, dtype=float))
    ranges = np.atleast_1d(np.asarray(ranges, dtype=float))
    pos = np.stack(
        [
            ranges * np.cos(azimuths) * np.cos(elevations),
            ranges * np.sin(azimuths) * np.cos(elevations),
            ranges * np.sin(elevations),
        ],
        axis=1,
    )
    dists = np.linalg.norm(pos[:, None, :] - geom.element_positions()[None, :, :], axis=2)
    return np.exp(1j * (2.0 * math.pi / geom.wavelength) * (ranges[:, None] - dists)).T


@dataclass(frozen=True)
class BsRisLink:
    """Static base-station/panel link: element layouts and channel matrix."""

    m_antennas: int
    bs_element_positions: np.ndarray
    ris_element_positions: np.ndarray
    channel_matrix: np.ndarray

    def __post_init__(self):
        m, n = self.channel_matrix.shape
        if m != self.m_antennas or n != self.ris_element_positions.shape[0]:
            raise ValueError("channel matrix dimensions do not match the layouts")
        if not np.all(np.isfinite(self.channel_matrix)):
            raise ValueError("channel matrix has non-finite entries")


def build_bs_channel(
    geom: UpaGeometry, m_antennas: int = 15, separation: float = 6.0
) -> BsRisLink:
    """Free-space channel from the panel to a half-wavelength BS line array.

    The BS array runs along the y-axis, centered at (separation, 0, 0) and
    facing the panel. Entry (m, n) carries the free-space amplitude
    wavelength / (4 pi d_mn) and the propagation phase -2 pi d_mn / wavelength
    with d_mn the exact element-to-element distance.
    """
    if m_antennas < 1:
        raise ValueError("m_antennas must be positive")
    bs_pos = np.zeros((m_antennas, 3))
    bs_pos[:, 0] = separation
    bs_pos[:, 1] = (np.arange(m_antennas) - (m_antennas - 1) / 2.0) * geom.wavelength / 2.0
    ris_pos = geom.element_positions()
    dists = np.linalg.norm(bs_pos[:, None, :] - ris_pos[None, :, :], axis=2)
    if np.any(dists < 1e-9):
        raise GeometryError("BS and panel elements coincide")
    lam = geom.wavelength
    channel = (lam / (4.0 * math.pi * dists)) * np.exp(-2j * math.pi * dists / lam)
    return BsRisLink(
        m_antennas=m_antennas,
        bs_element_positions=bs_pos,
        ris_element_positions=ris_pos,
        channel_matrix=channel,
    )


@dataclass(frozen=True)
class PhaseSchedule:
    """Per-slot, per-element reflection phases in [0, 2pi)."""

    phases: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.phases.ndim != 2:
            raise ValueError("phases must be an (L, N) matrix")
        if np.any(self.phases < 0) or np.any(self.phases >= 2.0 * math.pi):
            raise ValueError("phases must lie in [0, 2pi)")

    @property
    def n_slots(self) -> int:
        return self.phases.shape[0]

    @staticmethod
    def random(geom: UpaGeometry, n_slots: int, seed: int) -> "PhaseSchedule":
        rng = np.random.default_rng(seed)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=(n_slots, geom.n_elements))
        return PhaseSchedule(phases=phases, seed=seed)


@dataclass(frozen=True)
class MeasurementStack:
    """Stacked multi-slot observation and its sensing map."""

    y: np.ndarray
    h_bar: np.ndarray
    noise_var: float
    seed: int | None = None

    def __post_init__(self):
        if self.y.shape[0] != self.h_bar.shape[0]:
            raise ValueError("y and h_bar disagree on the stacked dimension")


def stacked_sensing_map(link: BsRisLink, sched: PhaseSchedule) -> np.ndarray:
    """Stack H @ diag(exp(j phi(t))) over the slots into an (M*L, N) map."""
    h = link.channel_matrix
    reflect = np.exp(1j * sched.phases)  # (L, N)
    # (L, M, N) scaled copies, flattened along slots
    stacked = h[None, :, :] * reflect[:, None, :]
    return stacked.reshape(-1, h.shape[1])


def synthesize(
    scene,
    geom: UpaGeometry,
    link: BsRisLink,
    sched: PhaseSchedule,
    noise_var: float = 0.0,
    seed: int | None = None,
    model: str = "exact",
) -> MeasurementStack:
    """Simulate the stacked uplink observation for a list of users.

    Pilot symbols are fixed to one, so each slot receives
    H diag(exp(j phi)) sum_k effective_gain_k b_k plus circularly-symmetric
    complex Gaussian noise of per-sample variance noise_var. ``model``
    selects the spherical ("exact") or separable ("fresnel") response.
    """
    if not scene:
        raise ValueError("scene must contain at least one user")
    if model not in ("exact", "fresnel"):
        raise ValueError(f"unknown response model {model!r}")
    if link.channel_matrix.shape[1] != geom.n_elements:
        raise ValueError("link and geometry disagree on the panel size")

    combined = np.zeros(geom.n_elements, dtype=complex)
    for ue in scene:
        if model == "exact":
            b = exact_response(ue, geom)
        else:
            b = fresnel_response(spatial_freqs_from_ue(ue, geom), geom)
        combined += ue.effective_gain * b

    h_bar = stacked_sensing_map(link, sched)
    y = h_bar @ combined
    if noise_var > 0:
        rng = np.random.default_rng(seed)
        scale = math.sqrt(noise_var / 2.0)
        y = y + scale * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return MeasurementStack(y=y, h_bar=h_bar, noise_var=noise_var, seed=seed)

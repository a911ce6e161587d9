"""Low-dimensional chirp subspaces and the lifting operator.

Quadratic-phase chirps over a chirp-rate interval live close to a
low-dimensional subspace. We sample the chirp family on a uniform rate
grid, keep the leading left singular vectors as an orthonormal basis, and
record the worst-case relative approximation error on a finer validation
grid. The lifting operator maps a coefficient-domain matrix to a panel
response through the per-element rows of the horizontal/vertical bases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import UpaGeometry, chirp_vector


@dataclass(frozen=True)
class ChirpSubspace:
    """Orthonormal basis approximating chirps over [gamma_min, gamma_max]."""

    basis: np.ndarray
    gamma_min: float
    gamma_max: float
    spacing: float
    worst_case_error: float

    def __post_init__(self):
        n_x, j_x = self.basis.shape
        if not 1 <= j_x <= n_x:
            raise ValueError("basis must be tall with at least one column")
        gram = self.basis.conj().T @ self.basis
        if np.max(np.abs(gram - np.eye(j_x))) > 1e-12:
            raise ValueError("basis columns are not orthonormal")

    @property
    def n_x(self) -> int:
        return self.basis.shape[0]

    @property
    def j_x(self) -> int:
        return self.basis.shape[1]

    def coefficients(self, gamma: float) -> np.ndarray:
        """Projection coefficients of the chirp at rate spacing^2 * gamma."""
        idx = np.arange(self.n_x) - (self.n_x - 1) // 2
        q = chirp_vector(idx, self.spacing**2 * gamma)
        return self.basis.conj().T @ q


def _chirp_ensemble(n_x: int, d_x: float, gammas: np.ndarray) -> np.ndarray:
    idx = np.arange(n_x) - (n_x - 1) // 2
    deltas = d_x**2 * gammas
    return np.exp(-1j * np.outer(idx.astype(float) ** 2, deltas))


def build_subspace(
    n_x: int,
    d_x: float,
    gamma_interval: tuple[float, float],
    j_x: int,
    grid_size: int = 64,
    validation_factor: int = 4,
) -> ChirpSubspace:
    """Build a chirp subspace from the SVD of a sampled chirp ensemble.

    Chirp rates are sampled uniformly over the interval (uniform in the
    reciprocal range), the leading ``j_x`` left singular vectors form the
    basis, and the recorded worst-case error is the largest relative
    residual over a ``validation_factor`` times finer grid.
    """
    gamma_min, gamma_max = gamma_interval
    if gamma_min <= 0 or gamma_max < gamma_min:
        raise ValueError(f"invalid gamma interval [{gamma_min}, {gamma_max}]")
    if not 1 <= j_x <= n_x:
        raise ValueError(f"j_x must lie in 1..{n_x}, got {j_x}")
    if grid_size < 1:
        raise ValueError("grid_size must be positive")

    gammas = np.linspace(gamma_min, gamma_max, max(grid_size, 2))
    ensemble = _chirp_ensemble(n_x, d_x, gammas)
    u, _, _ = np.linalg.svd(ensemble, full_matrices=False)
    basis = u[:, :j_x]

    fine = np.linspace(gamma_min, gamma_max, max(validation_factor * grid_size, 2))
    probes = _chirp_ensemble(n_x, d_x, fine)
    coeff = basis.conj().T @ probes
    # ||q||^2 = n_x for unit-modulus chirps; residual from the projection norm
    res_sq = np.maximum(n_x - np.sum(np.abs(coeff) ** 2, axis=0), 0.0)
    worst = float(np.sqrt(np.max(res_sq) / n_x))
    return ChirpSubspace(
        basis=basis,
        gamma_min=gamma_min,
        gamma_max=gamma_max,
        spacing=d_x,
        worst_case_error=worst,
    )


def gamma_interval_for_ranges(
    r_min: float, r_max: float, wavelength: float, guard: float = 0.1
) -> tuple[float, float]:
    """Chirp-rate interval covering ranges [r_min, r_max], widened by a
    relative guard band on both ends."""
    if not 0 < r_min <= r_max:
        raise ValueError("need 0 < r_min <= r_max")
    gamma_lo = np.pi / (wavelength * r_max) * (1.0 - guard)
    gamma_hi = np.pi / (wavelength * r_min) * (1.0 + guard)
    return float(gamma_lo), float(gamma_hi)


class LiftingOperator:
    """Linear map from coefficient-domain matrices to panel responses.

    Element n of the image pairs column n of the input with the Kronecker
    product of row n_h of the horizontal basis and row n_v of the vertical
    basis. The adjoint scatters a length-N vector back into rank-one terms.
    """

    def __init__(self, sub_h: ChirpSubspace, sub_v: ChirpSubspace, geom: UpaGeometry):
        if sub_h.n_x != geom.n_h or sub_v.n_x != geom.n_v:
            raise ValueError("subspace sizes do not match the panel")
        self.sub_h = sub_h
        self.sub_v = sub_v
        self.geom = geom
        # row n of the dictionary: kron(B_h[n_h, :], B_v[n_v, :])
        self.rows = np.kron(sub_h.basis, sub_v.basis)

    @property
    def coeff_dim(self) -> int:
        return self.sub_h.j_x * self.sub_v.j_x

    @property
    def n_elements(self) -> int:
        return self.geom.n_elements

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Image of a (j_h*j_v, N) matrix: per-element paired contraction."""
        if z.shape != (self.coeff_dim, self.n_elements):
            raise ValueError(
                f"expected shape {(self.coeff_dim, self.n_elements)}, got {z.shape}"
            )
        return np.einsum("nc,cn->n", self.rows, z)

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        """Adjoint map; satisfies <apply(Z), v> = <Z, adjoint(v)>."""
        if v.shape != (self.n_elements,):
            raise ValueError(f"expected shape {(self.n_elements,)}, got {v.shape}")
        return self.rows.conj().T * v[None, :]

    def lifted_atom(
        self, u_h: np.ndarray, u_v: np.ndarray, alpha: float, beta: float
    ) -> np.ndarray:
        """Coefficient-domain atom kron(outer(u_h, a_h), outer(u_v, a_v))."""
        a_h = np.exp(1j * self.geom.idx_h * alpha)
        a_v = np.exp(1j * self.geom.idx_v * beta)
        return np.kron(np.outer(u_h, a_h), np.outer(u_v, a_v))

    def target_matrix(self, freqs_list, gains) -> np.ndarray:
        """Ground-truth coefficient matrix for users at the given spatial
        frequencies with the given effective gains."""
        z = np.zeros((self.coeff_dim, self.n_elements), dtype=complex)
        for freqs, gain in zip(freqs_list, gains):
            u_h = self.sub_h.coefficients(freqs.gamma)
            u_v = self.sub_v.coefficients(freqs.gamma)
            z += gain * self.lifted_atom(u_h, u_v, freqs.alpha, freqs.beta)
        return z

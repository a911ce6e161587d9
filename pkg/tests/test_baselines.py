import math
import time

import numpy as np
import pytest

from risloc.baselines import (
    GridSpec,
    build_polar_dictionary,
    default_grid,
    music3d_ris,
    omp_estimate,
    synthesize_ris_snapshots,
)
from risloc.model import (
    PhaseSchedule,
    UeGroundTruth,
    UpaGeometry,
    build_bs_channel,
    fresnel_response,
    spatial_freqs_from_ue,
    synthesize,
)

GEOM = UpaGeometry(n_h=15, n_v=15, d_h=0.15, d_v=0.15, wavelength=0.3)
GRID = GridSpec(
    n_az=20,
    n_el=20,
    n_range=16,
    az_range=(-math.pi / 3, math.pi / 3),
    el_range=(-math.pi / 6, math.pi / 6),
    r_range=(3.0, 15.0),
)


@pytest.fixture(scope="module")
def dictionary():
    return build_polar_dictionary(GEOM, GRID)


@pytest.fixture(scope="module")
def link():
    return build_bs_channel(GEOM, 15, 6.0)


class TestPolarDictionary:
    def test_atom_count_is_grid_product(self, dictionary):
        assert dictionary.atoms.shape == (225, 20 * 20 * 16)
        assert dictionary.params.shape == (20 * 20 * 16, 3)

    def test_atoms_have_panel_norm(self, dictionary):
        norms = np.linalg.norm(dictionary.atoms[:, ::97], axis=0)
        assert np.allclose(norms, math.sqrt(225), rtol=1e-12)

    def test_on_grid_atom_matches_response(self, dictionary):
        g = 1234
        alpha, beta, gamma = dictionary.params[g]
        from risloc.model import SpatialFreqs

        b = fresnel_response(SpatialFreqs(alpha=alpha, beta=beta, gamma=gamma), GEOM)
        corr = abs(np.vdot(dictionary.atoms[:, g], b))
        assert corr == pytest.approx(225.0, rel=1e-12)

    def test_range_rings_uniform_in_reciprocal(self):
        _, _, rs = GRID.axes()
        recips = 1.0 / rs
        steps = np.diff(recips)
        assert np.allclose(steps, steps[0], rtol=1e-10)

    def test_default_grid_built_quickly(self):
        start = time.perf_counter()
        d = build_polar_dictionary(GEOM, default_grid(GEOM))
        elapsed = time.perf_counter() - start
        assert d.atoms.shape[1] == 30 * 30 * 32
        assert elapsed < 10.0

    def test_rejects_degenerate_grid(self):
        with pytest.raises(ValueError):
            GridSpec(1, 4, 4, (-1, 1), (-1, 1), (3, 15))
        with pytest.raises(ValueError):
            GridSpec(4, 4, 4, (1, -1), (-1, 1), (3, 15))
        with pytest.raises(ValueError):
            GridSpec(4, 4, 4, (-1, 1), (-1, 1), (15, 3))


class TestOmp:
    def test_zero_order_returns_empty(self, dictionary, link):
        sched = PhaseSchedule.random(GEOM, 10, seed=0)
        ue = UeGroundTruth(azimuth=0.2, elevation=0.1, range=6.0)
        stack = synthesize([ue], GEOM, link, sched, 0.0, None)
        assert omp_estimate(stack.y, stack.h_bar, dictionary, 0, GEOM) == []

    def test_on_grid_source_recovered_exactly(self, dictionary, link):
        azs, els, rs = GRID.axes()
        ue = UeGroundTruth(azimuth=float(azs[12]), elevation=float(els[7]), range=float(rs[5]))
        sched = PhaseSchedule.random(GEOM, 10, seed=1)
        stack = synthesize([ue], GEOM, link, sched, 0.0, None, model="fresnel")
        est = omp_estimate(stack.y, stack.h_bar, dictionary, 1, GEOM)[0]
        assert est.azimuth == pytest.approx(ue.azimuth, abs=1e-9)
        assert est.elevation == pytest.approx(ue.elevation, abs=1e-9)
        assert est.range == pytest.approx(ue.range, rel=1e-9)

    def test_off_grid_source_hits_grid_floor(self, dictionary, link):
        azs, els, rs = GRID.axes()
        # place the user halfway between azimuth grid points
        az = 0.5 * (azs[9] + azs[10])
        ue = UeGroundTruth(azimuth=float(az), elevation=float(els[7]), range=float(rs[5]))
        sched = PhaseSchedule.random(GEOM, 10, seed=2)
        stack = synthesize([ue], GEOM, link, sched, 0.0, None, model="fresnel")
        est = omp_estimate(stack.y, stack.h_bar, dictionary, 1, GEOM)[0]
        half_cell = 0.5 * (azs[10] - azs[9])
        assert abs(est.azimuth - ue.azimuth) >= 0.25 * half_cell

    def test_residual_norm_non_increasing(self, dictionary, link):
        rng = np.random.default_rng(3)
        sched = PhaseSchedule.random(GEOM, 10, seed=3)
        scene = [
            UeGroundTruth(
                azimuth=rng.uniform(-0.9, 0.9),
                elevation=rng.uniform(-0.45, 0.45),
                range=rng.uniform(3.5, 14.0),
                path_gain=rng.normal() + 1j * rng.normal(),
            )
            for _ in range(3)
        ]
        stack = synthesize(scene, GEOM, link, sched, 1e-9, seed=3)
        # trace residuals by re-running with increasing k
        norms = [np.linalg.norm(stack.y)]
        effective = stack.h_bar @ dictionary.atoms
        for k in range(1, 5):
            ests = omp_estimate(stack.y, stack.h_bar, dictionary, k, GEOM)
            from risloc.model import SpatialFreqs

            cols = np.stack(
                [
                    stack.h_bar
                    @ fresnel_response(
                        SpatialFreqs(
                            alpha=spatial_freqs_from_ue(
                                UeGroundTruth(azimuth=e.azimuth, elevation=e.elevation, range=e.range),
                                GEOM,
                            ).alpha,
                            beta=spatial_freqs_from_ue(
                                UeGroundTruth(azimuth=e.azimuth, elevation=e.elevation, range=e.range),
                                GEOM,
                            ).beta,
                            gamma=math.pi / (GEOM.wavelength * e.range),
                        ),
                        GEOM,
                    )
                    for e in ests
                ],
                axis=1,
            )
            coef, *_ = np.linalg.lstsq(cols, stack.y, rcond=None)
            norms.append(np.linalg.norm(stack.y - cols @ coef))
        for a, b in zip(norms, norms[1:]):
            assert b <= a + 1e-12

    def test_k_exceeding_dictionary_rejected(self, dictionary, link):
        sched = PhaseSchedule.random(GEOM, 10, seed=4)
        ue = UeGroundTruth(azimuth=0.2, elevation=0.1, range=6.0)
        stack = synthesize([ue], GEOM, link, sched, 0.0, None)
        with pytest.raises(ValueError):
            omp_estimate(stack.y, stack.h_bar, dictionary, GRID.size + 1, GEOM)


class TestMusic:
    def test_single_source_peak_on_grid(self):
        azs, els, rs = GRID.axes()
        ue = UeGroundTruth(azimuth=float(azs[13]), elevation=float(els[6]), range=float(rs[4]))
        snaps = synthesize_ris_snapshots([ue], GEOM, 10, 1e-8, seed=5)
        spectrum, ests = music3d_ris(snaps, 1, GRID, GEOM)
        assert ests[0].azimuth == pytest.approx(ue.azimuth, abs=1e-9)
        assert ests[0].elevation == pytest.approx(ue.elevation, abs=1e-9)
        assert ests[0].range == pytest.approx(ue.range, rel=1e-9)
        assert not spectrum.degenerate

    def test_spectrum_invariant_to_common_phase(self):
        ue = UeGroundTruth(azimuth=0.3, elevation=-0.1, range=7.0)
        snaps = synthesize_ris_snapshots([ue], GEOM, 8, 1e-7, seed=6)
        s1, _ = music3d_ris(snaps, 1, GRID, GEOM)
        s2, _ = music3d_ris(np.exp(1j * 1.234) * snaps, 1, GRID, GEOM)
        assert np.allclose(s1.values, s2.values, rtol=1e-9)

    def test_degenerate_flag_when_k_reaches_snapshots(self):
        ue = UeGroundTruth(azimuth=0.3, elevation=-0.1, range=7.0)
        snaps = synthesize_ris_snapshots([ue], GEOM, 2, 1e-7, seed=7)
        spectrum, ests = music3d_ris(snaps, 2, GRID, GEOM)
        assert spectrum.degenerate
        assert len(ests) == 2

    def test_values_finite_non_negative(self):
        ue = UeGroundTruth(azimuth=-0.4, elevation=0.2, range=5.0)
        snaps = synthesize_ris_snapshots([ue], GEOM, 10, 1e-6, seed=8)
        spectrum, _ = music3d_ris(snaps, 1, GRID, GEOM)
        assert np.all(np.isfinite(spectrum.values))
        assert np.all(spectrum.values >= 0)

    def test_order_validation(self):
        snaps = np.ones((225, 4), dtype=complex)
        with pytest.raises(ValueError):
            music3d_ris(snaps, 0, GRID, GEOM)
        with pytest.raises(ValueError):
            music3d_ris(snaps, 225, GRID, GEOM)

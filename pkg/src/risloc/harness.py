"""Seeded Monte Carlo experiments, metrics, and CSV output.

Every trial draws a scene, synthesizes one measurement stack, runs all
enabled methods on identical data, and matches estimates to ground truth
by minimum-cost assignment in the (alpha, beta) plane. Sweeps replicate
the two headline experiments: RMSE versus SNR at fixed user count, and
average positioning error versus user count at fixed SNR.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import baselines as bl
from .anm import AdmmOptions
from .model import (
    BsRisLink,
    PhaseSchedule,
    UeGroundTruth,
    UpaGeometry,
    build_bs_channel,
    free_space_gain,
    spatial_freqs_from_ue,
    synthesize,
)
from .recovery import localize
from .subspace import LiftingOperator, build_subspace, gamma_interval_for_ranges

SEPARATION_RULE = "redraw until pairwise wrap-around |d_alpha| and |d_beta| >= pi/N_x"


@dataclass(frozen=True)
class GeometryConfig:
    n_h: int = 15
    n_v: int = 15
    d_h: float = 0.15
    d_v: float = 0.15
    wavelength: float = 0.3

    def build(self) -> UpaGeometry:
        return UpaGeometry(
            n_h=self.n_h, n_v=self.n_v, d_h=self.d_h, d_v=self.d_v, wavelength=self.wavelength
        )


@dataclass(frozen=True)
class BsConfig:
    m_antennas: int = 15
    separation: float = 6.0
    # "exact": propagation phases from exact element distances (rank-limited
    # in the near field); "iid": free-space magnitudes with one static draw
    # of uniform phases (rich sensing map)
    phase_model: str = "iid"


@dataclass(frozen=True)
class SubspaceConfig:
    j_h: int = 3
    j_v: int = 3
    r_min: float = 3.0
    r_max: float = 15.0
    guard: float = 0.1
    grid_size: int = 64


@dataclass(frozen=True)
class SceneConfig:
    az_min: float = -math.pi / 3
    az_max: float = math.pi / 3
    el_min: float = -math.pi / 6
    el_max: float = math.pi / 6
    r_min: float = 3.0
    r_max: float = 15.0
    power: float = 1.0
    gain_model: str = "unit"  # or "free_space": |path_gain| = wavelength/(4 pi r)
    max_redraws: int = 1000


@dataclass(frozen=True)
class SolverConfig:
    rho_psd: float = 0.03
    rho_data: float = 1.0
    max_iters: int = 20000
    abs_tol: float = 1e-7
    rel_tol: float = 1e-5
    eps_scale: float = 1.0
    noiseless_eps_rel: float = 1e-6

    def admm_options(self) -> AdmmOptions:
        return AdmmOptions(
            rho_psd=self.rho_psd,
            rho_data=self.rho_data,
            max_iters=self.max_iters,
            abs_tol=self.abs_tol,
            rel_tol=self.rel_tol,
        )


@dataclass(frozen=True)
class BaselineConfig:
    omp_n_range: int = 32
    music_n_range: int = 32
    angle_oversampling: int = 2  # grid points per axis = oversampling * element count


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    bs: BsConfig = field(default_factory=BsConfig)
    subspace: SubspaceConfig = field(default_factory=SubspaceConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    n_slots: int = 10
    snr_list_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    k_list: tuple = (1, 2, 3)
    fig1_k: int = 2
    fig2_snr_db: float = 15.0
    trials: int = 50
    seed: int = 20250901
    methods: tuple = ("proposed", "omp", "music")
    synthesis_model: str = "fresnel"  # "exact" adds spherical-model mismatch

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        sections = {
            "geometry": GeometryConfig,
            "bs": BsConfig,
            "subspace": SubspaceConfig,
            "scene": SceneConfig,
            "solver": SolverConfig,
            "baselines": BaselineConfig,
        }
        kwargs = {}
        top_names = {f.name for f in fields(ExperimentConfig)}
        for key, value in data.items():
            if key not in top_names:
                raise ValueError(f"unknown config key {key!r}")
            if key in sections:
                sec_names = {f.name for f in fields(sections[key])}
                bad = set(value) - sec_names
                if bad:
                    raise ValueError(f"unknown keys in config section {key!r}: {sorted(bad)}")
                kwargs[key] = sections[key](**value)
            elif key in ("snr_list_db", "k_list", "methods"):
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        return ExperimentConfig(**kwargs)

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        with open(path) as fh:
            return ExperimentConfig.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


REDUCED_PRESET = {"trials": 15, "snr_list_db": (0.0, 10.0, 15.0, 20.0, 30.0)}


def apply_preset(config: ExperimentConfig, preset: str) -> ExperimentConfig:
    if preset == "paper":
        return config
    if preset == "reduced":
        return replace(config, **REDUCED_PRESET)
    raise ValueError(f"unknown preset {preset!r}")


METRICS_FIELDS = (
    "method",
    "snr_db",
    "k",
    "trial",
    "rmse_azimuth",
    "rmse_elevation",
    "rmse_range",
    "positioning_error",
    "solver_iters",
    "wall_time_s",
    "seed",
    "status",
)


@dataclass
class MetricsRow:
    method: str
    snr_db: float
    k: int
    trial: int
    rmse_azimuth: float
    rmse_elevation: float
    rmse_range: float
    positioning_error: float
    solver_iters: int
    wall_time_s: float
    seed: int
    status: str = "ok"

    def as_csv_values(self):
        return [
            self.method,
            _fmt(self.snr_db),
            str(self.k),
            str(self.trial),
            _fmt(self.rmse_azimuth),
            _fmt(self.rmse_elevation),
            _fmt(self.rmse_range),
            _fmt(self.positioning_error),
            str(self.solver_iters),
            _fmt(self.wall_time_s),
            str(self.seed),
            self.status,
        ]


def _fmt(x: float) -> str:
    return repr(float(x))


class TrialContext:
    """Per-config immutable state shared by all trials."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.geom = config.geometry.build()
        self.link = build_bs_channel(
            self.geom, m_antennas=config.bs.m_antennas, separation=config.bs.separation
        )
        if config.bs.phase_model == "iid":
            # static channel: one deterministic phase draw per experiment seed
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xB5]))
            phases = rng.uniform(0.0, 2.0 * math.pi, self.link.channel_matrix.shape)
            self.link = BsRisLink(
                m_antennas=self.link.m_antennas,
                bs_element_positions=self.link.bs_element_positions,
                ris_element_positions=self.link.ris_element_positions,
                channel_matrix=np.abs(self.link.channel_matrix) * np.exp(1j * phases),
            )
        elif config.bs.phase_model != "exact":
            raise ValueError(f"unknown phase model {config.bs.phase_model!r}")
        sub_cfg = config.subspace
        interval_h = gamma_interval_for_ranges(
            sub_cfg.r_min, sub_cfg.r_max, self.geom.wavelength, sub_cfg.guard
        )
        self.sub_h = build_subspace(
            self.geom.n_h, self.geom.d_h, interval_h, sub_cfg.j_h, sub_cfg.grid_size
        )
        self.sub_v = build_subspace(
            self.geom.n_v, self.geom.d_v, interval_h, sub_cfg.j_v, sub_cfg.grid_size
        )
        self.lifting = LiftingOperator(self.sub_h, self.sub_v, self.geom)

        scene = config.scene
        bounds = ((scene.az_min, scene.az_max), (scene.el_min, scene.el_max),
                  (scene.r_min, scene.r_max))
        over = config.baselines.angle_oversampling
        self.omp_grid = bl.GridSpec(
            n_az=over * self.geom.n_h,
            n_el=over * self.geom.n_v,
            n_range=config.baselines.omp_n_range,
            az_range=bounds[0],
            el_range=bounds[1],
            r_range=bounds[2],
        )
        self.music_grid = bl.GridSpec(
            n_az=over * self.geom.n_h,
            n_el=over * self.geom.n_v,
            n_range=config.baselines.music_n_range,
            az_range=bounds[0],
            el_range=bounds[1],
            r_range=bounds[2],
        )
        self.dictionary = (
            bl.build_polar_dictionary(self.geom, self.omp_grid)
            if "omp" in config.methods
            else None
        )


def derive_trial_seed(seed: int, snr_db: float, k: int, trial: int) -> int:
    snr_key = 2**31 - 1 if math.isinf(snr_db) else int(round(snr_db * 1000)) % (2**31)
    ss = np.random.SeedSequence([seed, snr_key, k, trial])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_scene(config: ExperimentConfig, geom: UpaGeometry, k: int, rng) -> list:
    """Draw k users; redraw until the separation rule holds."""
    scene_cfg = config.scene
    min_sep_h = 2.0 * math.pi / (2.0 * geom.n_h)
    min_sep_v = 2.0 * math.pi / (2.0 * geom.n_v)
    for _ in range(scene_cfg.max_redraws):
        azimuths = rng.uniform(scene_cfg.az_min, scene_cfg.az_max, size=k)
        elevations = rng.uniform(scene_cfg.el_min, scene_cfg.el_max, size=k)
        ranges = rng.uniform(scene_cfg.r_min, scene_cfg.r_max, size=k)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=k)
        scene = []
        for i in range(k):
            mag = (
                free_space_gain(float(ranges[i]), geom.wavelength)
                if scene_cfg.gain_model == "free_space"
                else 1.0
            )
            scene.append(
                UeGroundTruth(
                    azimuth=float(azimuths[i]),
                    elevation=float(elevations[i]),
                    range=float(ranges[i]),
                    path_gain=mag * complex(math.cos(phases[i]), math.sin(phases[i])),
                    power=scene_cfg.power,
                )
            )
        if k == 1:
            return scene
        freqs = [spatial_freqs_from_ue(ue, geom) for ue in scene]
        ok = True
        for i, jdx in itertools.combinations(range(k), 2):
            da = _wrap_dist(freqs[i].alpha - freqs[jdx].alpha)
            db = _wrap_dist(freqs[i].beta - freqs[jdx].beta)
            if da < min_sep_h or db < min_sep_v:
                ok = False
                break
        if ok:
            return scene
    raise RuntimeError(f"could not draw a separated scene after {scene_cfg.max_redraws} tries")


def _wrap_dist(delta: float) -> float:
    two_pi = 2.0 * math.pi
    d = abs(delta) % two_pi
    return min(d, two_pi - d)


def match_estimates(scene, estimates, geom: UpaGeometry):
    """Minimum-cost pairing of estimates to truth in the (alpha, beta) plane.

    Exhaustive over permutations (intended for k <= 6). Returns the list of
    estimate indices aligned with the scene order.
    """
    k = len(scene)
    if len(estimates) != k:
        raise ValueError("estimate count differs from the scene size")
    if k > 6:
        raise ValueError("exhaustive matching supports at most 6 users")
    truth = [spatial_freqs_from_ue(ue, geom) for ue in scene]
    est_ab = []
    for est in estimates:
        two_pi_over_lam = 2.0 * math.pi / geom.wavelength
        est_ab.append(
            (
                two_pi_over_lam * geom.d_h * math.sin(est.azimuth) * math.cos(est.elevation),
                two_pi_over_lam * geom.d_v * math.sin(est.elevation),
            )
        )
    best_perm, best_cost = None, math.inf
    for perm in itertools.permutations(range(k)):
        cost = sum(
            (truth[i].alpha - est_ab[perm[i]][0]) ** 2
            + (truth[i].beta - est_ab[perm[i]][1]) ** 2
            for i in range(k)
        )
        if cost < best_cost:
            best_cost, best_perm = cost, perm
    return list(best_perm)


def metrics_from_estimates(scene, estimates, geom: UpaGeometry):
    order = match_estimates(scene, estimates, geom)
    az_sq = el_sq = r_sq = pos_sq = 0.0
    for i, ue in enumerate(scene):
        est = estimates[order[i]]
        az_sq += (ue.azimuth - est.azimuth) ** 2
        el_sq += (ue.elevation - est.elevation) ** 2
        r_sq += (ue.range - est.range) ** 2
        pos_sq += float(np.sum((ue.position - est.position) ** 2))
    k = len(scene)
    return (
        math.sqrt(az_sq / k),
        math.sqrt(el_sq / k),
        math.sqrt(r_sq / k),
        math.sqrt(pos_sq / k),
    )


def run_trial(
    config: ExperimentConfig,
    snr_db: float,
    k: int,
    trial_seed: int,
    trial: int = 0,
    context: TrialContext | None = None,
) -> list:
    """One Monte Carlo trial; every enabled method sees identical data."""
    if context is None:
        context = TrialContext(config)
    geom, link = context.geom, context.link
    ss = np.random.SeedSequence(trial_seed)
    scene_seed, phase_seed, noise_seed, ris_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(4))

    scene = sample_scene(config, geom, k, np.random.default_rng(scene_seed))
    sched = PhaseSchedule.random(geom, config.n_slots, phase_seed)

    clean = synthesize(scene, geom, link, sched, 0.0, None, config.synthesis_model)
    ml = clean.y.shape[0]
    snr_lin = math.inf if math.isinf(snr_db) else 10.0 ** (snr_db / 10.0)
    noise_var = 0.0 if math.isinf(snr_db) else float(
        np.linalg.norm(clean.y) ** 2 / (ml * snr_lin)
    )
    stack = synthesize(scene, geom, link, sched, noise_var, noise_seed, config.synthesis_model)

    rows = []
    for method in config.methods:
        start = time.perf_counter()
        iters = 0
        status = "ok"
        metrics = (math.nan,) * 4
        try:
            if method == "proposed":
                sigma = math.sqrt(noise_var)
                if sigma > 0:
                    eps = config.solver.eps_scale * sigma * math.sqrt(ml) * (
                        1.0 + 2.0 / math.sqrt(ml)
                    )
                else:
                    eps = config.solver.noiseless_eps_rel * float(np.linalg.norm(stack.y))
                estimates, solution = localize(
                    stack.y,
                    stack.h_bar,
                    context.lifting,
                    k,
                    eps,
                    solver_opts=config.solver.admm_options(),
                    r_bounds=(config.scene.r_min, config.scene.r_max),
                    powers=[ue.power for ue in scene],
                )
                iters = solution.stats.iterations
            elif method == "omp":
                estimates = bl.omp_estimate(stack.y, stack.h_bar, context.dictionary, k, geom)
            elif method == "music":
                snaps_clean = bl.synthesize_ris_snapshots(
                    scene, geom, config.n_slots, 0.0, None, config.synthesis_model
                )
                ris_noise_var = 0.0 if math.isinf(snr_db) else float(
                    np.linalg.norm(snaps_clean) ** 2 / (snaps_clean.size * snr_lin)
                )
                snaps = bl.synthesize_ris_snapshots(
                    scene, geom, config.n_slots, ris_noise_var, ris_seed, config.synthesis_model
                )
                _, estimates = bl.music3d_ris(
                    snaps, k, context.music_grid, geom, steering=config.synthesis_model
                )
            else:
                raise ValueError(f"unknown method {method!r}")
            metrics = metrics_from_estimates(scene, estimates, geom)
        except Exception as exc:  # noqa: BLE001 - a failed method must not kill the trial
            status = f"error: {type(exc).__name__}: {exc}"
        wall = time.perf_counter() - start
        rows.append(
            MetricsRow(
                method=method,
                snr_db=snr_db,
                k=k,
                trial=trial,
                rmse_azimuth=metrics[0],
                rmse_elevation=metrics[1],
                rmse_range=metrics[2],
                positioning_error=metrics[3],
                solver_iters=iters,
                wall_time_s=wall,
                seed=trial_seed,
                status=status,
            )
        )
    return rows


_WORKER_CTX: TrialContext | None = None


def _worker_init(config: ExperimentConfig):
    global _WORKER_CTX
    _WORKER_CTX = TrialContext(config)


def _worker_run(args):
    config, snr_db, k, trial = args
    seed = derive_trial_seed(config.seed, snr_db, k, trial)
    return run_trial(config, snr_db, k, seed, trial, _WORKER_CTX)


def _run_tasks(config: ExperimentConfig, tasks, threads: int, progress=None):
    rows = []
    if threads <= 1:
        context = TrialContext(config)
        for i, (snr_db, k, trial) in enumerate(tasks):
            seed = derive_trial_seed(config.seed, snr_db, k, trial)
            rows.extend(run_trial(config, snr_db, k, seed, trial, context))
            if progress:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(
            max_workers=threads, initializer=_worker_init, initargs=(config,)
        ) as pool:
            args = [(config, snr_db, k, trial) for snr_db, k, trial in tasks]
            for i, chunk in enumerate(pool.map(_worker_run, args)):
                rows.extend(chunk)
                if progress:
                    progress(i + 1, len(tasks))
    rows.sort(key=lambda r: (r.method, r.snr_db, r.k, r.trial))
    return rows


AGG_FIELDS = (
    "method",
    "snr_db",
    "k",
    "n_trials",
    "rmse_azimuth_rms",
    "rmse_azimuth_median",
    "rmse_elevation_rms",
    "rmse_elevation_median",
    "rmse_range_rms",
    "rmse_range_median",
    "positioning_error_rms",
    "positioning_error_median",
)


def aggregate_rows(rows):
    """Group valid rows by (method, snr_db, k); root-mean and median stats."""
    groups: dict = {}
    for row in rows:
        if row.status != "ok":
            continue
        groups.setdefault((row.method, row.snr_db, row.k), []).append(row)
    out = []
    for (method, snr_db, k), members in sorted(groups.items()):
        entry = {"method": method, "snr_db": snr_db, "k": k, "n_trials": len(members)}
        for name in ("rmse_azimuth", "rmse_elevation", "rmse_range", "positioning_error"):
            vals = np.array([getattr(r, name) for r in members])
            entry[name + "_rms"] = float(np.sqrt(np.mean(vals**2)))
            entry[name + "_median"] = float(np.median(vals))
        out.append(entry)
    return out


def write_rows_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for row in rows:
            writer.writerow(row.as_csv_values())


def write_agg_csv(path, aggregated):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGG_FIELDS)
        for entry in aggregated:
            writer.writerow(
                [
                    entry["method"],
                    _fmt(entry["snr_db"]),
                    str(entry["k"]),
                    str(entry["n_trials"]),
                ]
                + [_fmt(entry[name]) for name in AGG_FIELDS[4:]]
            )


def _git_revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            check=False,
        )
        return out.stdout.strip() or "nogit"
    except OSError:
        return "nogit"


def write_metadata(path, config: ExperimentConfig, context: TrialContext, extra=None):
    meta = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "git_revision": _git_revision(),
        "separation_rule": SEPARATION_RULE,
        "omp_grid": asdict(context.omp_grid),
        "music_grid": asdict(context.music_grid),
        "subspace_worst_case_error": {
            "horizontal": context.sub_h.worst_case_error,
            "vertical": context.sub_v.worst_case_error,
        },
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, default=str)


def run_rmse_vs_snr(config: ExperimentConfig, out_dir, threads: int = 1, progress=None):
    """Sweep the SNR list at the fixed user count; write raw/aggregate CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [
        (snr_db, config.fig1_k, trial)
        for snr_db in config.snr_list_db
        for trial in range(config.trials)
    ]
    rows = _run_tasks(config, tasks, threads, progress)
    raw = out / "rmse_vs_snr.csv"
    agg = out / "rmse_vs_snr_agg.csv"
    meta = out / "rmse_vs_snr_meta.json"
    write_rows_csv(raw, rows)
    write_agg_csv(agg, aggregate_rows(rows))
    write_metadata(meta, config, TrialContext(config), {"experiment": "rmse_vs_snr"})
    return raw, agg, meta


def run_error_vs_k(config: ExperimentConfig, out_dir, threads: int = 1, progress=None):
    """Sweep the user count at the fixed SNR; write raw/aggregate CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [
        (config.fig2_snr_db, k, trial) for k in config.k_list for trial in range(config.trials)
    ]
    rows = _run_tasks(config, tasks, threads, progress)
    raw = out / "error_vs_k.csv"
    agg = out / "error_vs_k_agg.csv"
    meta = out / "error_vs_k_meta.json"
    write_rows_csv(raw, rows)
    write_agg_csv(agg, aggregate_rows(rows))
    write_metadata(meta, config, TrialContext(config), {"experiment": "error_vs_k"})
    return raw, agg, meta

"""Experiment orchestration: configuration, campaigns, sweeps, histograms, files.

Every output file carries the fully resolved configuration, so any run can
be repeated from its own output with ``oil-tune <subcommand> --config
<output file>``.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import optimize

from . import detection, fitness, ga, keyrate, plant
from ._validation import ConfigurationError, check_positive_int

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXPERIMENTS = ("tune-coherence", "tune-qber", "sweep", "histogram", "keyrate", "calibrate")
COHERENCE_GENES = plant.CONTROL_NAMES[:5]
QBER_GENES = plant.CONTROL_NAMES
FIXTURE_NAME = "plant_optimum.json"
LOW_SAMPLE_LIMIT = 10_000

# acceptance thresholds used by --check
COHERENCE_V_MIN = 0.96
RANDOM_V_MAX = 0.03
QBER_FACTOR = 1.1
LPR_MAX = 0.05
KS_MAX = 0.02
FAR_DETUNED_QBER = 0.45
REQUIRED_TRIALS = 0.8


@dataclass(frozen=True)
class SweepSettings:
    """Grid over detuning (GHz) and injection ratio (dB).

    Axes left as ``None`` span everything the control box can reach by
    moving slave_temp and injection_atten, on a lattice of the given steps
    that passes through the optimum, so the optimal row is on the grid.
    ``zoom`` shrinks both spans for the sub-grid around the optimum.
    """

    detuning_step: float = 0.5
    ratio_step: float = 0.5
    detuning_min: float = None
    detuning_max: float = None
    ratio_min: float = None
    ratio_max: float = None
    zoom: float = 0.2

    def __post_init__(self):
        bad = [name for name in ("detuning_step", "ratio_step") if not getattr(self, name) > 0]
        for lo, hi in (("detuning_min", "detuning_max"), ("ratio_min", "ratio_max")):
            a, b = getattr(self, lo), getattr(self, hi)
            if a is not None and b is not None and not a < b:
                bad.append(hi)
        if not 0 < self.zoom <= 1:
            bad.append("zoom")
        if bad:
            raise ConfigurationError(f"invalid sweep settings: {bad}", bad)


@dataclass(frozen=True)
class HistogramSettings:
    samples: int = 100_000
    bins: int = 50

    def __post_init__(self):
        bad = []
        try:
            check_positive_int(self.samples, "samples", minimum=1000)
        except ConfigurationError:
            bad.append("samples")
        try:
            check_positive_int(self.bins, "bins", minimum=2)
        except ConfigurationError:
            bad.append("bins")
        if bad:
            raise ConfigurationError(f"invalid histogram settings: {bad}", bad)


def _default_ga(experiment):
    if experiment == "tune-qber":
        return ga.GaConfig(population_schedule=((0, 60),), generations=10)
    return ga.GaConfig()


def _default_specs(experiment):
    names = QBER_GENES if experiment == "tune-qber" else COHERENCE_GENES
    return tuple(ga.GeneSpec(n, *plant.DEFAULT_RANGES[n]) for n in names)


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings of one experiment.

    ``seed`` is the campaign seed: trial ``k`` runs the GA with seed
    ``seed + k``. The sweep and histogram use ``seed`` directly.
    """

    experiment: str = "tune-coherence"
    ga: ga.GaConfig = None
    plant: plant.PlantConfig = field(default_factory=plant.PlantConfig)
    channel: detection.ChannelConfig = field(default_factory=detection.ChannelConfig)
    gene_specs: tuple = None
    trials: int = 5
    seed: int = 0
    output_dir: str = "results"
    noiseless: bool = False
    alpha: float = fitness.DEFAULT_ALPHA
    jobs: int = 1
    sweep: SweepSettings = field(default_factory=SweepSettings)
    histogram: HistogramSettings = field(default_factory=HistogramSettings)
    base_params: plant.ControlParams = None

    def __post_init__(self):
        bad = []
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}",
                                     ["experiment"])
        if self.ga is None:
            object.__setattr__(self, "ga", _default_ga(self.experiment))
        if self.gene_specs is None:
            object.__setattr__(self, "gene_specs", _default_specs(self.experiment))
        object.__setattr__(self, "gene_specs", tuple(self.gene_specs))
        names = [s.name for s in self.gene_specs]
        if not names or len(set(names)) != len(names) or set(names) - set(plant.CONTROL_NAMES):
            bad.append("gene_specs")
        for name in ("trials", "jobs"):
            try:
                check_positive_int(getattr(self, name), name)
            except ConfigurationError:
                bad.append(name)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            bad.append("seed")
        if not (isinstance(self.alpha, (int, float)) and self.alpha > 0):
            bad.append("alpha")
        if bad:
            raise ConfigurationError(f"invalid experiment settings: {bad}", bad)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "ga": self.ga.to_dict(),
            "plant": self.plant.to_dict(),
            "channel": self.channel.to_dict(),
            "gene_specs": [s.to_dict() for s in self.gene_specs],
            "trials": self.trials,
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "noiseless": self.noiseless,
            "alpha": self.alpha,
            "jobs": self.jobs,
            "sweep": dataclasses.asdict(self.sweep),
            "histogram": dataclasses.asdict(self.histogram),
            "base_params": None if self.base_params is None else self.base_params.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        """Validate a (possibly partial) config dict; collects every bad field."""
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys {unknown}", unknown)
        bad, kwargs = [], {}
        builders = {
            "ga": ga.GaConfig.from_dict,
            "plant": plant.PlantConfig.from_dict,
            "channel": detection.ChannelConfig.from_dict,
            "gene_specs": lambda specs: tuple(ga.GeneSpec.from_dict(s) for s in specs),
            "sweep": lambda d: SweepSettings(**d),
            "histogram": lambda d: HistogramSettings(**d),
            "base_params": lambda d: None if d is None else plant.ControlParams.from_dict(d),
        }
        for key, value in data.items():
            build = builders.get(key)
            if build is None:
                kwargs[key] = value
                continue
            try:
                kwargs[key] = build(value)
            except ConfigurationError as exc:
                bad.extend(f"{key}.{f}" for f in exc.fields) if exc.fields else bad.append(key)
            except (TypeError, ValueError, KeyError):
                bad.append(key)
        try:
            config = cls(**kwargs)
        except ConfigurationError as exc:
            bad.extend(exc.fields)
        if bad:
            raise ConfigurationError(f"invalid configuration fields: {bad}", bad)
        return config


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(experiment, file_data=None, overrides=None):
    """Layer built-in defaults, a config document and CLI overrides.

    ``file_data`` may be a config dict or any output file of this package
    (the embedded ``config`` is used). Only ``experiment`` from the command
    line decides the defaults; a different experiment in the file is an error.
    """
    file_data = dict(file_data or {})
    if "config" in file_data and isinstance(file_data["config"], dict):
        file_data = dict(file_data["config"])
    if file_data.get("experiment", experiment) != experiment:
        raise ConfigurationError(
            f"config is for {file_data['experiment']!r}, not {experiment!r}", ["experiment"]
        )
    layered = _merge(ExperimentConfig(experiment=experiment).to_dict(), file_data)
    layered = _merge(layered, {k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.from_dict(layered)


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not valid JSON: {exc}", ["config"]) from exc


# --- fixture -------------------------------------------------------------------


def load_fixture(path=None):
    """The calibrated plant optimum committed with the package."""
    if path is not None:
        return load_json(path)
    return json.loads(resources.files("oiltune").joinpath("data", FIXTURE_NAME).read_text(encoding="utf-8"))


def fixture_params(fixture=None, plant_cfg=None):
    """Optimal controls from the fixture, or the package's if ``fixture`` is None.

    With a non-default ``plant_cfg`` the stored optimum is only valid if the
    fixture was calibrated with the same constants; a mismatch is logged.
    """
    fixture = fixture or load_fixture()
    if plant_cfg is not None and plant_cfg.to_dict() != fixture["plant"]:
        logger.warning("plant constants differ from the calibration fixture; its optimum may be stale")
    return plant.ControlParams.from_dict(fixture["optimum"])


def noiseless_qber_fitness(params, plant_cfg, channel, alpha=fitness.DEFAULT_ALPHA):
    """Expected-value QBER fitness; vectorised over parameter arrays."""
    qber = detection.qber_expected(params, plant_cfg, channel)
    signal, side = detection.expected_peak_rates(params, plant_cfg, channel)
    l_pr = alpha * np.abs(signal - 2.0 * side) / signal
    return 1.0 / np.maximum(qber, fitness.QBER_EPS) + 1.0 / np.maximum(l_pr, fitness.LPR_EPS)


def calibrate(plant_cfg=None, channel=None, samples=200_000, starts=8, random_state=0):
    """Locate the global optimum of the noiseless QBER fitness.

    A dense quasi-random scan of the full control box is refined by
    Nelder-Mead from the best ``starts`` points. Returns the fixture document.
    """
    plant_cfg = plant_cfg or plant.PlantConfig()
    channel = channel or detection.ChannelConfig()
    names = plant.CONTROL_NAMES
    low = np.array([plant.DEFAULT_RANGES[n][0] for n in names])
    high = np.array([plant.DEFAULT_RANGES[n][1] for n in names])
    rng = np.random.default_rng(random_state)

    def cost(x):
        return -noiseless_qber_fitness(plant.ControlParams(**dict(zip(names, x))), plant_cfg, channel)

    points = low + (high - low) * rng.random((samples, len(names)))
    values = np.concatenate([cost(chunk.T) for chunk in np.array_split(points, max(1, samples // 20_000))])
    best = None
    for i in np.argsort(values)[:starts]:
        res = optimize.minimize(
            lambda x: float(cost(np.clip(x, low, high))), points[i], method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 20_000, "maxfev": 20_000},
        )
        if best is None or res.fun < best.fun:
            best = res
    x = np.clip(best.x, low, high)
    params = plant.ControlParams(**dict(zip(names, x.tolist())))
    v_coh = detection.measure_visibility(params, plant_cfg, channel, "coherent", noiseless=True)
    v_rand = detection.measure_visibility(params, plant_cfg, channel, "random", noiseless=True)
    counts = detection.expected_counts(params, plant_cfg, channel)
    return {
        "schema_version": SCHEMA_VERSION,
        "plant": plant_cfg.to_dict(),
        "channel": channel.to_dict(),
        "optimum": params.to_dict(),
        "qber": float(detection.qber_expected(params, plant_cfg, channel)),
        "psi_qber": float(-best.fun),
        "psi_coherence": fitness.coherence_score(v_coh, v_rand).psi,
        "v_coherent": v_coh,
        "v_random": v_rand,
        "detuning_ghz": float(plant.detuning(params, plant_cfg)),
        "injection_ratio_db": float(plant.injection_ratio_db(params, plant_cfg)),
        "l_pr": fitness.phase_randomisation_cost(counts.c_signal, counts.c_side),
        "search": {"samples": samples, "starts": starts, "seed": random_state},
    }


# --- files -----------------------------------------------------------------------


def prepare_output(output_dir):
    """Create ``output_dir`` and prove it is writable before any computation."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    with open(probe, "w", encoding="utf-8") as fh:
        fh.write("")
    probe.unlink()
    return out


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(path, document):
    Path(path).write_text(json.dumps(_jsonable(document), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- campaigns ---------------------------------------------------------------------


CAMPAIGN_COLUMNS = {
    "tune-coherence": ("trial", "generation", "best_fitness", "v_coherent", "v_random", "evaluations"),
    "tune-qber": ("trial", "generation", "best_fitness", "qber", "l_pr", "evaluations"),
}


class PlantOracle:
    """Fitness oracle over a subset of the controls; picklable for worker processes."""

    def __init__(self, objective, names, plant_cfg, channel, base_params=None, noiseless=False,
                 alpha=fitness.DEFAULT_ALPHA):
        if objective not in ("coherence", "qber"):
            raise ValueError(f"objective must be 'coherence' or 'qber', got {objective!r}")
        self.objective = objective
        self.names = tuple(names)
        self.plant_cfg = plant_cfg
        self.channel = channel
        self.base_params = base_params or plant.ControlParams()
        self.noiseless = noiseless
        self.alpha = alpha

    def params(self, genes):
        return plant.ControlParams.from_genes(genes, self.names, self.base_params)

    def __call__(self, genes, rng):
        p = self.params(genes)
        if self.objective == "coherence":
            return fitness.coherence_fitness(p, self.plant_cfg, self.channel, rng, self.noiseless)
        return fitness.qber_fitness(p, self.plant_cfg, self.channel, rng, self.noiseless, self.alpha)


def _oracle_for(config):
    objective = "qber" if config.experiment == "tune-qber" else "coherence"
    return PlantOracle(objective, [s.name for s in config.gene_specs], config.plant, config.channel,
                       config.base_params, config.noiseless, config.alpha)


@dataclass
class TrialResult:
    trial: int
    seed: int
    records: list
    diagnostics: ga.Diagnostics

    @property
    def final(self):
        return self.records[-1].best

    @property
    def convergence_generation(self):
        """First generation whose best fitness equals the final best."""
        target = self.final.fitness
        return next(r.generation for r in self.records if r.best.fitness >= target)


@dataclass
class CampaignResult:
    config: ExperimentConfig
    trials: list
    schema_version: int = SCHEMA_VERSION

    def summary(self):
        finals = [t.final for t in self.trials]
        return {
            "final_best_fitness": [f.fitness for f in finals],
            "final_reports": [_report_dict(f.report) for f in finals],
            "convergence_generation": [t.convergence_generation for t in self.trials],
            "seeds": [t.seed for t in self.trials],
        }

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "config": self.config.to_dict(),
            "summary": self.summary(),
            "trials": [
                {
                    "trial": t.trial,
                    "seed": t.seed,
                    "diagnostics": dataclasses.asdict(t.diagnostics),
                    "records": [_record_dict(r, self.config.gene_specs) for r in t.records],
                }
                for t in self.trials
            ],
        }


def _report_dict(report):
    if report is None:
        return None
    d = report.to_dict()
    d["diagnostics"] = {k: v for k, v in d["diagnostics"].items()}
    return d


def _record_dict(record, specs):
    return {
        "generation": record.generation,
        "evaluations": record.evaluations,
        "best_fitness": record.best.fitness,
        "best_genes": dict(zip((s.name for s in specs), record.best.genes)),
        "best_report": _report_dict(record.best.report),
        "population": [{"genes": list(ind.genes), "fitness": ind.fitness} for ind in record.population],
    }


def _trial_rows(trial, config):
    rows = []
    for r in trial.records:
        report = r.best.report
        row = {"trial": trial.trial, "generation": r.generation, "best_fitness": r.best.fitness,
               "evaluations": r.evaluations}
        if report is not None:
            row.update(v_coherent=report.v_coherent, v_random=report.v_random, qber=report.qber, l_pr=report.l_pr)
        row.update(zip((s.name for s in config.gene_specs), r.best.genes))
        rows.append(row)
    return rows


def campaign_columns(config):
    return CAMPAIGN_COLUMNS[config.experiment] + tuple(s.name for s in config.gene_specs)


def _run_trial(config, k):
    seed = config.seed + k
    diagnostics = ga.Diagnostics()
    records = ga.evolve(_oracle_for(config), config.gene_specs, dataclasses.replace(config.ga, rng_seed=seed),
                        diagnostics=diagnostics)
    return TrialResult(trial=k, seed=seed, records=records, diagnostics=diagnostics)


def run_campaign(config, progress=None):
    """Run ``config.trials`` seeded GA runs and write trial CSVs and ``result.json``."""
    if config.experiment not in CAMPAIGN_COLUMNS:
        raise ConfigurationError(f"{config.experiment!r} is not a campaign", ["experiment"])
    out = prepare_output(config.output_dir)
    say = progress or (lambda msg: None)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            trials = list(pool.map(_run_trial, [config] * config.trials, range(config.trials)))
    else:
        trials = []
        for k in range(config.trials):
            trials.append(_run_trial(config, k))
            say(_progress_line(trials[-1]))
    result = CampaignResult(config=config, trials=trials)
    for t in trials:
        write_csv(out / f"trial_{t.trial}.csv", campaign_columns(config), _trial_rows(t, config))
    write_json(out / "result.json", result.to_dict())
    return result


def _progress_line(trial):
    best = trial.final
    rep = best.report
    detail = ""
    if rep is not None and rep.qber is not None:
        detail = f" qber={rep.qber:.4f} l_pr={rep.l_pr:.5f}"
    elif rep is not None and rep.v_coherent is not None:
        detail = f" v_coherent={rep.v_coherent:.4f} v_random={rep.v_random:.4f}"
    return f"trial {trial.trial} (seed {trial.seed}): best fitness {best.fitness:.4f}{detail}"


def check_campaign(result, fixture=None):
    """Acceptance check of a campaign; returns ``(passed, message)``."""
    reports = [t.final.report for t in result.trials]
    if result.config.experiment == "tune-coherence":
        good = [r is not None and r.v_coherent is not None and r.v_coherent >= COHERENCE_V_MIN
                and r.v_random <= RANDOM_V_MAX for r in reports]
        what = f"V_coherent >= {COHERENCE_V_MIN} and V_random <= {RANDOM_V_MAX}"
    else:
        limit = QBER_FACTOR * (fixture or load_fixture())["qber"]
        good = [r is not None and r.qber is not None and r.qber <= limit and r.l_pr <= LPR_MAX for r in reports]
        what = f"QBER <= {limit:.4f} and L_PR <= {LPR_MAX}"
    n = sum(good)
    passed = n >= math.ceil(REQUIRED_TRIALS * len(good))
    return passed, f"{n}/{len(good)} trials reached {what}"


# --- sweep --------------------------------------------------------------------------


def controls_for(detuning_ghz, ratio_db, base, cfg):
    """Back-solve slave_temp and injection_atten for the given detuning and ratio.

    Both maps are affine: detuning moves only through the slave temperature
    and the ratio only through the attenuator.
    """
    d_other = cfg.g_master * (base.master_bias - cfg.ref_master_bias) + cfg.g_slave * (
        base.slave_bias - cfg.ref_slave_bias
    )
    slave_temp = cfg.ref_temp + (np.asarray(detuning_ghz, dtype=float) - d_other) / cfg.g_temp
    r_free = (
        cfg.ref_injection_db
        + cfg.injection_master_slope * (base.master_bias - cfg.ref_master_bias)
        - cfg.injection_slave_slope * (base.slave_bias - cfg.ref_slave_bias)
    )
    atten = r_free - np.asarray(ratio_db, dtype=float)
    return slave_temp, atten


def sweep_grid(base, cfg, channel, detuning_axis, ratio_axis, ranges=None):
    """Expected QBER on the (detuning, ratio) grid; out-of-range cells are NaN."""
    ranges = ranges or plant.DEFAULT_RANGES
    df, ratio = np.meshgrid(np.asarray(detuning_axis, float), np.asarray(ratio_axis, float), indexing="ij")
    temp, atten = controls_for(df, ratio, base, cfg)
    ok = ((temp >= ranges["slave_temp"][0]) & (temp <= ranges["slave_temp"][1])
          & (atten >= ranges["injection_atten"][0]) & (atten <= ranges["injection_atten"][1]))
    params = base.replace(slave_temp=np.clip(temp, *ranges["slave_temp"]),
                          injection_atten=np.clip(atten, *ranges["injection_atten"]))
    qber = np.where(ok, detection.qber_expected(params, cfg, channel), np.nan)
    return {"detuning": df, "ratio": ratio, "slave_temp": temp, "injection_atten": atten,
            "qber": qber, "available": ok}


SWEEP_COLUMNS = ("detuning_ghz", "injection_ratio_db", "slave_temp", "injection_atten", "qber", "available")


def _grid_rows(grid):
    rows = []
    for i, j in np.ndindex(grid["qber"].shape):
        ok = bool(grid["available"][i, j])
        rows.append({
            "detuning_ghz": grid["detuning"][i, j],
            "injection_ratio_db": grid["ratio"][i, j],
            "slave_temp": grid["slave_temp"][i, j],
            "injection_atten": grid["injection_atten"][i, j],
            "qber": grid["qber"][i, j] if ok else None,
            "available": ok,
        })
    return rows


def strict_local_minima(values):
    """Indices of strict interior local minima, ignoring NaN neighbours."""
    v = np.asarray(values, dtype=float)
    idx = np.arange(1, len(v) - 1)
    mask = (v[idx] < v[idx - 1]) & (v[idx] < v[idx + 1])
    return idx[mask]


@dataclass
class SweepResult:
    config: ExperimentConfig
    base: plant.ControlParams
    grid: dict
    zoom: dict
    optimal_ratio_db: float

    def optimal_row(self):
        """QBER versus detuning at the optimal injection ratio."""
        j = int(np.argmin(np.abs(self.grid["ratio"][0] - self.optimal_ratio_db)))
        return self.grid["detuning"][:, j], self.grid["qber"][:, j]

    def fringe_minima(self):
        """Detunings of the strict QBER minima inside the locking cone along the optimal row."""
        df, q = self.optimal_row()
        f_lock = float(plant.locking_range(self.optimal_ratio_db, self.config.plant))
        inside = (df >= -self.config.plant.a_neg * f_lock) & (df <= f_lock) & np.isfinite(q)
        minima = strict_local_minima(np.where(inside, q, np.nan))
        return df[minima]

    def corner_qber(self):
        q = self.grid["qber"]
        return [q[i, j] for i in (0, -1) for j in (0, -1)]

    def check(self):
        n = len(self.fringe_minima())
        corners = [c for c in self.corner_qber() if np.isfinite(c)]
        passed = n >= 2 and bool(corners) and min(corners) >= FAR_DETUNED_QBER
        return passed, f"{n} fringe minima inside the cone; far-detuned corner QBER min {min(corners, default=float('nan')):.4f}"


def _lattice(centre, step, lo, hi):
    """Points ``centre + k * step`` inside ``[lo, hi]`` (up to rounding)."""
    k_lo = math.ceil((lo - centre) / step - 1e-9)
    k_hi = math.floor((hi - centre) / step + 1e-9)
    return centre + step * np.arange(k_lo, k_hi + 1)


def sweep_axes(base, cfg, settings, ranges=None):
    ranges = ranges or plant.DEFAULT_RANGES
    t_lo, t_hi = ranges["slave_temp"]
    a_lo, a_hi = ranges["injection_atten"]
    # controls_for is affine, so the reachable box maps to the axis ranges
    df_ends = [float(plant.detuning(base.replace(slave_temp=t), cfg)) for t in (t_lo, t_hi)]
    r_ends = [float(plant.injection_ratio_db(base.replace(injection_atten=a), cfg)) for a in (a_lo, a_hi)]
    df_lo = min(df_ends) if settings.detuning_min is None else settings.detuning_min
    df_hi = max(df_ends) if settings.detuning_max is None else settings.detuning_max
    r_lo = min(r_ends) if settings.ratio_min is None else settings.ratio_min
    r_hi = max(r_ends) if settings.ratio_max is None else settings.ratio_max
    df_opt = float(plant.detuning(base, cfg))
    r_opt = float(plant.injection_ratio_db(base, cfg))
    return (_lattice(df_opt, settings.detuning_step, df_lo, df_hi),
            _lattice(r_opt, settings.ratio_step, r_lo, r_hi))


def run_sweep(config):
    """Write ``sweep.csv`` (full grid) and ``sweep_zoom.csv`` (around the optimum)."""
    out = prepare_output(config.output_dir)
    s = config.sweep
    base = config.base_params or fixture_params(plant_cfg=config.plant)
    cfg, channel = config.plant, config.channel
    r_opt = float(plant.injection_ratio_db(base, cfg))
    df_opt = float(plant.detuning(base, cfg))
    df_axis, r_axis = sweep_axes(base, cfg, s)
    grid = sweep_grid(base, cfg, channel, df_axis, r_axis)
    half_df = 0.5 * s.zoom * (df_axis[-1] - df_axis[0])
    half_r = 0.5 * s.zoom * (r_axis[-1] - r_axis[0])
    zoom = sweep_grid(base, cfg, channel,
                      _lattice(df_opt, s.zoom * s.detuning_step, df_opt - half_df, df_opt + half_df),
                      _lattice(r_opt, s.zoom * s.ratio_step, r_opt - half_r, r_opt + half_r))
    result = SweepResult(config=config, base=base, grid=grid, zoom=zoom, optimal_ratio_db=r_opt)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, _grid_rows(grid))
    write_csv(out / "sweep_zoom.csv", SWEEP_COLUMNS, _grid_rows(zoom))
    (out / "sweep.gp").write_text(gnuplot_script("sweep.csv"), encoding="utf-8")
    passed, message = result.check()
    write_json(out / "sweep_summary.json", {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "base_params": base.to_dict(),
        "optimal_ratio_db": r_opt,
        "fringe_minima_ghz": result.fringe_minima(),
        "corner_qber": result.corner_qber(),
        "check": {"passed": passed, "message": message},
    })
    return result


def gnuplot_script(csv_name, title="QBER"):
    """Heat-map script for a sweep CSV (gnuplot ``pm3d``)."""
    return (
        "set datafile separator ','\n"
        "set xlabel 'detuning (GHz)'\n"
        "set ylabel 'injection ratio (dB)'\n"
        f"set title '{title}'\n"
        "set view map\n"
        "set palette defined (0 'navy', 0.25 'cyan', 0.5 'yellow')\n"
        f"splot '{csv_name}' every ::1 using 1:2:($6 > 0 ? $5 : 1/0) with pm3d notitle\n"
    )


# --- histogram ------------------------------------------------------------------------


HISTOGRAM_COLUMNS = ("bin_left", "bin_right", "frequency", "density")


@dataclass
class HistogramResult:
    config: ExperimentConfig
    histogram: detection.IntensityHistogram
    ks_statistic: float
    ks_unit_visibility: float
    low_sample: bool

    @property
    def passed(self):
        return None if self.low_sample else self.ks_statistic < KS_MAX

    def check(self):
        if self.low_sample:
            return True, f"KS {self.ks_statistic:.4f} reported; fewer than {LOW_SAMPLE_LIMIT} samples, not checked"
        return self.passed, f"KS {self.ks_statistic:.4f} (threshold {KS_MAX})"


def run_histogram(config):
    """Random-phase interference histogram at the fixture optimum, attenuation removed."""
    out = prepare_output(config.output_dir)
    base = config.base_params or fixture_params(plant_cfg=config.plant)
    h = detection.intensity_histogram(base, config.plant, config.histogram.samples,
                                      np.random.default_rng(config.seed), config.histogram.bins)
    result = HistogramResult(config=config, histogram=h, ks_statistic=h.ks_statistic(),
                             ks_unit_visibility=h.ks_statistic(1.0),
                             low_sample=config.histogram.samples < LOW_SAMPLE_LIMIT)
    rows = [{"bin_left": lo, "bin_right": hi, "frequency": int(c), "density": d}
            for lo, hi, c, d in zip(h.edges[:-1], h.edges[1:], h.counts, h.density)]
    write_csv(out / "histogram.csv", HISTOGRAM_COLUMNS, rows)
    passed, message = result.check()
    write_json(out / "histogram_summary.json", {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "samples": int(config.histogram.samples),
        "visibility": h.visibility,
        "i0": h.i0,
        "mean_intensity": float(np.mean(h.samples)),
        "ks_statistic": result.ks_statistic,
        "ks_reference": "arcsine law at the plant's effective visibility",
        "ks_unit_visibility": result.ks_unit_visibility,
        "low_sample": result.low_sample,
        "check": {"passed": passed, "message": message, "threshold": KS_MAX},
    })
    return result


# --- key rate ----------------------------------------------------------------------------


def run_keyrate(config, inputs=None):
    """Key rate from given ``DecoyInputs``, or from an acquisition at the fixture optimum."""
    out = prepare_output(config.output_dir)
    document = {"schema_version": SCHEMA_VERSION, "config": config.to_dict()}
    if inputs is None:
        base = config.base_params or fixture_params(plant_cfg=config.plant)
        counts = detection.acquire_counts(base, config.plant, config.channel, np.random.default_rng(config.seed),
                                          noiseless=config.noiseless)
        inputs = keyrate.DecoyInputs.from_counts(counts, config.channel)
        document["counts"] = counts.to_dict()
    result = keyrate.key_rate(inputs)
    document["inputs"] = inputs.to_dict()
    document["result"] = result.to_dict()
    write_json(out / "keyrate.json", document)
    return result, document


def run_calibrate(config):
    out = prepare_output(config.output_dir)
    fixture = calibrate(config.plant, config.channel, random_state=config.seed)
    write_json(out / FIXTURE_NAME, fixture)
    return fixture

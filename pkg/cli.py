"""
Experiment runner.

    mckean-lab <experiment> --config PATH [--seed S] [--out DIR] [--validate]

A config is a strict JSON document:

    {
      "experiment": "phase-scan",
      "seed": 7,
      "output": "out/kuramoto",
      "model": {"domain": "torus", "confining": "zero",
                "interaction": {"family": "cosine_sum", "coefficients": [1.0]},
                "beta": 1.0},
      "numerics": {"betas": {"start": 1.0, "stop": 3.0, "step": 0.1}}
    }

Exit status: 0 ok, 2 numerical failure, 3 configuration error.
"""
import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from logging.handlers import RotatingFileHandler
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

import fluctuations
import meanfield
import metrics
import model as potentials
import particle
from errors import ConfigError, DependencyError, NumericalError, PreconditionError, UnsupportedModelError
from store import RunStore, config_hash

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3

TOP_LEVEL_KEYS = {"experiment", "model", "numerics", "seed", "output"}
REQUIRED_KEYS = ["experiment", "model"]
LOG_FILE = "run.log"

# ==================== NUMERICS DEFAULTS ====================
NUMERICS = {
    "simulate": {"N": 256, "dt": 1e-3, "t_end": 1.0, "record_every": 10, "init": "default", "M": 256, "snapshot": False},
    "gibbs": {"N": 16, "n_samples": 1000, "scheme": "MALA", "step": 0.01, "burn_in": 1000, "thin": 1, "n_chains": 1},
    "meanfield": {"M": 256, "dt": 1e-3, "t_end": 1.0, "record_every": 10, "init": "perturbed", "amplitude": 0.1},
    "steady-states": {"M": 256, "tol": 1e-10, "max_iter": 20000, "damping": 0.5, "k_max": 64},
    "phase-scan": {"M": 256, "tol": 1e-10, "max_iter": 20000, "damping": 0.5, "amplitude": 0.1,
                   "betas": {"start": 1.0, "stop": 3.0, "step": 0.1}},
    "lsi": {"M": 256, "N_values": [4, 8, 16, 32, 64], "lambda_single": None},
    "poc": {"M": 256, "N_values": [16, 32, 64, 128, 256, 512, 1024], "dt": 0.002, "t_end": 1.0,
            "replicas": 20, "record_every": 10, "init": "gaussian"},
    "talagrand": {"M": 256, "n_samples": 100, "lam": None, "max_amplitude": 0.5},
    "fluctuations": {"N": 2000, "dt": 1e-3, "t_end": 50.0, "k_max": 16, "record_every": 1,
                     "step": 0.05, "burn_in": 500},
    "spde": {"k_max": 16, "dt": 1e-3, "t_end": 100.0, "record_every": 1},
    "lln": {"N_values": [32, 64, 128, 256, 512, 1024, 2048], "s": 2.0, "replicas": 20, "k_max": 64,
            "step": 0.05, "burn_in": 500},
}
EXPERIMENTS = list(NUMERICS)


def worker_count():
    """MCKEAN_LAB_THREADS, falling back to 1 on missing or invalid values"""
    raw = os.environ.get("MCKEAN_LAB_THREADS", "1")
    try:
        workers = int(raw)
        if workers < 1:
            raise ValueError(raw)
        return workers
    except ValueError:
        logger.warning(f"Ignoring invalid MCKEAN_LAB_THREADS={raw!r}; using 1 worker")
        return 1


def setup_logging(out_dir=None):
    level = os.environ.get("MCKEAN_LAB_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        handler = RotatingFileHandler(Path(out_dir) / LOG_FILE, maxBytes=5 * 1024 * 1024, backupCount=2)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logging.getLogger().addHandler(handler)
        return handler
    return None


# ==================== CONFIG ====================
@dataclass
class ExperimentConfig:
    experiment: str
    model: dict
    numerics: dict
    seed: int = 0
    output: str = "out"
    base_dir: Path = field(default_factory=Path)

    def spec(self):
        return potentials.from_config(self.model, self.base_dir)

    def echo(self):
        return {"experiment": self.experiment, "model": self.model, "numerics": self.numerics,
                "seed": self.seed, "output": self.output}


COUNT_KEYS = {"N", "M", "k_max", "replicas", "n_samples", "burn_in", "thin", "n_chains", "record_every", "max_iter"}


def _is_count(value, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, int):
        return False
    return value >= 0 if allow_zero else value > 0


def _is_positive(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value) and value > 0


def _valid_betas(betas):
    if isinstance(betas, dict):
        return set(betas) == {"start", "stop", "step"} and all(_is_positive(betas[k]) for k in betas) \
            and betas["stop"] >= betas["start"]
    return isinstance(betas, list) and bool(betas) and all(_is_positive(b) for b in betas)


def _check_numerics(experiment, numerics):
    problems = []
    if not isinstance(numerics, dict):
        return ["numerics must be an object"]
    allowed = NUMERICS[experiment]
    for key, value in numerics.items():
        if key not in allowed:
            problems.append(f"numerics: unknown key '{key}' for experiment {experiment}")
            continue
        default = allowed[key]
        if isinstance(default, bool) and not isinstance(value, bool):
            problems.append(f"numerics.{key} must be true or false")
        elif key in COUNT_KEYS:
            if not _is_count(value, allow_zero=key == "burn_in"):
                problems.append(f"numerics.{key} must be a positive integer, got {value!r}")
        elif key == "N_values":
            if not isinstance(value, list) or not value or not all(_is_count(n) for n in value):
                problems.append(f"numerics.N_values must be a nonempty list of positive integers, got {value!r}")
        elif key == "betas":
            if not _valid_betas(value):
                problems.append(f"numerics.betas must be a list of numbers or {{start, stop, step}}, got {value!r}")
        elif default is None:
            if value is not None and not _is_positive(value):
                problems.append(f"numerics.{key} must be null or a positive number, got {value!r}")
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            if not _is_positive(value):
                problems.append(f"numerics.{key} must be a positive number, got {value!r}")
        elif isinstance(default, str) and not isinstance(value, str):
            problems.append(f"numerics.{key} must be a string, got {value!r}")
    return problems


def config_problems(raw):
    """Every error in a parsed config document, as messages"""
    if not isinstance(raw, dict):
        return ["config must be a JSON object"]
    problems = [f"missing required key '{key}'" for key in REQUIRED_KEYS if key not in raw]
    problems += [f"unknown key '{key}'" for key in sorted(set(raw) - TOP_LEVEL_KEYS)]
    experiment = raw.get("experiment")
    known = isinstance(experiment, str) and experiment in NUMERICS
    if "experiment" in raw and not known:
        problems.append(f"unknown experiment {experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        problems.append(f"seed must be a 64-bit nonnegative integer, got {seed!r}")
    if not isinstance(raw.get("output", "out"), str):
        problems.append(f"output must be a directory path string, got {raw['output']!r}")
    if known:
        problems += _check_numerics(experiment, raw.get("numerics", {}))
    block = raw.get("model")
    if isinstance(block, dict):
        problems += [f"missing required key 'model.{key}'" for key in potentials.REQUIRED_MODEL_KEYS if key not in block]
        if "beta" in block:
            try:
                if not potentials.parse_beta(block["beta"]) > 0:
                    problems.append(f"model.beta must be strictly positive, got {block['beta']}")
            except ConfigError as e:
                problems.append(str(e))
    elif "model" in raw:
        problems.append("model must be an object")
    return problems


def load_config(path, seed=None, out=None):
    """
    Parse and check a config file; command-line values override config keys.

    Raises:
        OSError: unreadable file
        ConfigError: every problem found, joined
    """
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})")
    problems = config_problems(raw)
    if problems:
        raise ConfigError("; ".join(problems))
    config = ExperimentConfig(
        raw["experiment"], raw["model"], dict(raw.get("numerics", {})),
        int(raw.get("seed", 0)), raw.get("output", "out"), path.parent,
    )
    if seed is not None:
        config.seed = int(seed)
    if out is not None:
        config.output = str(out)
    return config


def validate(path):
    """
    Parse-only check of a config file.

    Returns:
        list of (level, message); empty for a clean config

    Raises:
        OSError: unreadable file
    """
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        return [("error", f"not valid JSON: {e}")]
    diagnostics = [("error", message) for message in config_problems(raw)]
    if diagnostics:
        return diagnostics
    try:
        spec = potentials.from_config(raw["model"], path.parent)
    except (ConfigError, OSError) as e:
        return [("error", str(e))]
    return diagnostics + potentials.check_assumptions(spec)


# ==================== EXPERIMENTS ====================
def _numerics(config):
    return {**NUMERICS[config.experiment], **config.numerics}


def _initial_density(spec, kind, m, amplitude=0.1):
    if kind == "flat":
        return meanfield.flat_density(spec, m)
    if kind == "perturbed":
        if spec.domain.periodic:
            return meanfield.perturbed_flat(spec, m, amplitude)
        base = meanfield.gibbs_density(spec, m)
        return base.with_values(base.values * (1.0 + amplitude * np.tanh(2.0 * base.nodes))).normalized()
    if kind == "gaussian":
        return meanfield.gaussian_density(spec, m)
    if kind == "concentrated":
        return meanfield.concentrated_density(spec, m)
    if kind == "gibbs":
        return meanfield.gibbs_density(spec, m)
    raise ConfigError(f"Unknown initial density '{kind}'")


def run_simulate(config, spec, store, notes):
    p = _numerics(config)
    density = None if p["init"] == "default" else _initial_density(spec, p["init"], p["M"])
    ens = particle.initial_ensemble(spec, p["N"], config.seed, density, f"simulate/{p['N']}")
    n_steps = int(round(p["t_end"] / p["dt"]))
    ens, rows = particle.run_trajectory(ens, p["dt"], n_steps, p["record_every"])
    store.write_csv("trajectory.csv", ("time", "energy_per_particle", "order_parameter"), rows)
    if p["snapshot"]:
        store.write_snapshot("snapshot.bin", ens.positions, time=ens.time, seed=config.seed)


def run_gibbs(config, spec, store, notes):
    p = _numerics(config)
    samples = particle.sample_gibbs(spec, p["N"], p["n_samples"], p["scheme"], p["step"], p["burn_in"],
                                    config.seed, p["thin"], p["n_chains"])
    notes.extend(samples.warnings)
    energies = samples.energies()
    store.write_csv("gibbs_energies.csv", ("sample", "energy_per_particle"),
                    [(i, e / p["N"]) for i, e in enumerate(energies)])
    store.write_json("gibbs_summary.json", {
        "scheme": samples.scheme, "acceptance_rate": samples.acceptance_rate,
        "mean_energy_per_particle": float(np.mean(energies) / p["N"]), "warnings": samples.warnings,
    })


def run_meanfield(config, spec, store, notes):
    p = _numerics(config)
    rho0 = _initial_density(spec, p["init"], p["M"], p["amplitude"])
    flow = meanfield.solve_mckean_vlasov(rho0, spec, p["dt"], p["t_end"], p["record_every"])
    store.write_csv("flow.csv", ("time", "free_energy", "order_parameter"), flow.to_rows())
    store.write_csv("final_density.csv", ("x", "rho"), flow.densities[-1].to_rows())


def run_steady_states(config, spec, store, notes):
    p = _numerics(config)
    states = meanfield.multistart_steady_states(spec, p["M"], config.seed, p["tol"], p["max_iter"])
    rows = []
    for i, s in enumerate(states):
        rows.append((i, s.converged, s.iterations, s.residual, s.energy,
                     meanfield.dissipation(s.density, spec), meanfield.order_parameter(s.density)))
        if not s.converged:
            notes.append(f"start {i} did not converge")
    store.write_csv("steady_states.csv", ("start", "converged", "iterations", "residual", "energy",
                                          "dissipation", "order_parameter"), rows)
    energy, minimiser = meanfield.reference_free_energy(spec, p["M"], config.seed, states)
    if minimiser is None:
        raise DependencyError("No steady state converged")
    store.write_csv("minimiser.csv", ("x", "rho"), minimiser.to_rows())
    if spec.is_flat_torus:
        report = meanfield.check_properties(spec, p["k_max"], p["M"], config.seed)
        store.write_json("properties.json", report.summary())


def scan_betas(betas):
    if isinstance(betas, dict):
        count = int(round((betas["stop"] - betas["start"]) / betas["step"])) + 1
        return [round(betas["start"] + i * betas["step"], 12) for i in range(count)]
    return [float(b) for b in betas]


def run_phase_scan(config, spec, store, notes):
    p = _numerics(config)
    scan = meanfield.scan_phase_transition(spec, scan_betas(p["betas"]), p["amplitude"], p["M"], p["tol"],
                                           p["max_iter"], p["damping"], worker_count())
    notes.extend(f"beta={row.beta} did not converge" for row in scan.rows if not row.converged)
    store.write_csv("phase_scan.csv", scan.header, scan.to_rows())
    summary = {"beta_c": scan.beta_c}
    if spec.is_flat_torus:
        summary["beta_sharp"] = potentials.beta_sharp(spec)
    store.write_json("phase_scan_summary.json", summary)


def run_lsi(config, spec, store, notes):
    p = _numerics(config)
    states = meanfield.critical_states(meanfield.multistart_steady_states(spec, p["M"], config.seed), spec)
    if not states:
        raise DependencyError("No critical point available as a witness")
    witness = max(states, key=lambda s: s.energy).density
    scan = metrics.lsi_scan(spec, p["N_values"], witness, p["lambda_single"])
    store.write_csv("lsi_scan.csv", scan.header, scan.to_rows())
    store.write_json("lsi_summary.json", {"slope": scan.slope, "fisher_prefactor": "beta^2"})


def run_poc(config, spec, store, notes):
    p = _numerics(config)
    rho0 = _initial_density(spec, p["init"], p["M"])
    n_steps = int(round(p["t_end"] / p["dt"]))
    flow = meanfield.solve_mckean_vlasov(rho0, spec, p["dt"], n_steps * p["dt"])
    s = metrics.uniform_integrability_bound(flow, spec)
    rows, finals, violations = [], [], 0
    for n in p["N_values"]:
        series = particle.synchronous_coupling_run(spec, n, p["dt"], p["t_end"], flow, config.seed,
                                                   replicas=p["replicas"], record_every=p["record_every"],
                                                   workers=worker_count())
        for t, mean, err, bound, exceeded in metrics.coupling_against_bound(series, spec, s):
            rows.append((n, t, mean, err, bound))
            if exceeded:
                violations += 1
                notes.append(f"N={n}, t={t}: coupled distance {mean:.4g} exceeds the Gronwall bound {bound:.4g}")
        finals.append(series.mean[-1])
    store.write_csv("coupling.csv", ("N", "time", "mean_distance", "stderr", "gronwall_bound"), rows)
    slope = metrics.fit_loglog_slope(p["N_values"], finals) if len(finals) > 1 else math.nan
    store.write_json("coupling_summary.json", {"slope": slope, "S": s, "bound_exceeded": violations})


def run_talagrand(config, spec, store, notes):
    p = _numerics(config)
    lam = p["lam"] if p["lam"] is not None else 0.5 * metrics.linearized_gap(spec)
    energy, minimiser = meanfield.reference_free_energy(spec, p["M"], config.seed)
    if minimiser is None:
        raise DependencyError("No minimiser found")
    samples = metrics.random_perturbations(spec, p["n_samples"], p["M"], config.seed, p["max_amplitude"])
    margins = metrics.talagrand_check(spec, samples, lam, [minimiser])
    store.write_json("talagrand.json", {"lambda": lam, "margins": margins, "min_margin": min(margins)})


def run_fluctuations(config, spec, store, notes):
    p = _numerics(config)
    n_steps = int(round(p["t_end"] / p["dt"]))
    series = fluctuations.stationary_particle_run(spec, p["N"], p["dt"], n_steps, p["k_max"], config.seed,
                                                  p["record_every"], p["step"], p["burn_in"])
    stats = fluctuations.empirical_mode_covariance(series)
    rows = fluctuations.covariance_comparison(stats, fluctuations.normalized_mode_variance(spec, p["k_max"]))
    store.write_csv("covariance.csv", ("k", "empirical_var", "stderr", "theory_weight", "ratio"), rows)


def run_spde(config, spec, store, notes):
    p = _numerics(config)
    series = fluctuations.simulate_spde(spec, p["k_max"], p["dt"], p["t_end"], config.seed,
                                        record_every=p["record_every"])
    store.write_csv("spde.csv", series.header(), series.to_rows())
    stats = fluctuations.empirical_mode_covariance(series)
    rows = fluctuations.covariance_comparison(stats, fluctuations.stationary_covariance_theory(spec, p["k_max"]))
    store.write_csv("spde_covariance.csv", ("k", "empirical_var", "stderr", "theory_weight", "ratio"), rows)


def run_lln(config, spec, store, notes):
    p = _numerics(config)
    result = fluctuations.lln_decay_experiment(spec, p["N_values"], p["s"], p["replicas"], config.seed,
                                               p["k_max"], p["step"], p["burn_in"])
    store.write_csv("lln.csv", result.header, result.rows)
    summary = {"slope": result.slope}
    if spec.interaction.family == "zero" and spec.confining.family == "zero":
        summary["iid_expectation"] = [fluctuations.iid_lln_expectation(n, p["s"], p["k_max"]) for n in p["N_values"]]
    store.write_json("lln_summary.json", summary)


RUNNERS = {
    "simulate": run_simulate,
    "gibbs": run_gibbs,
    "meanfield": run_meanfield,
    "steady-states": run_steady_states,
    "phase-scan": run_phase_scan,
    "lsi": run_lsi,
    "poc": run_poc,
    "talagrand": run_talagrand,
    "fluctuations": run_fluctuations,
    "spde": run_spde,
    "lln": run_lln,
}


# ==================== RUN ====================
def package_versions():
    versions = {"python": platform.python_version()}
    for name in ("numpy", "scipy", "POT", "python-dotenv", "mckean-lab"):
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def run(config):
    """
    Execute one experiment and write its outputs plus manifest.json.

    Returns:
        (exit status, manifest dict)
    """
    started = time.perf_counter()
    store = RunStore(config.output)
    notes = []
    status, error = EXIT_OK, None
    try:
        spec = config.spec()
        logger.info(f"Running {config.experiment} with seed {config.seed}: {spec.describe()}")
        RUNNERS[config.experiment](config, spec, store, notes)
    except (ConfigError, OSError) as e:
        status, error = EXIT_CONFIG, f"configuration error: {e}"
    except (NumericalError, PreconditionError, UnsupportedModelError, DependencyError) as e:
        status, error = EXIT_NUMERICAL, f"{type(e).__name__}: {e}"
    if error:
        logger.error(f"{config.experiment} failed: {error}")
    manifest = {
        "experiment": config.experiment,
        "config": config.echo(),
        "config_hash": config_hash(config.echo()),
        "seed": config.seed,
        "wall_time": time.perf_counter() - started,
        "versions": package_versions(),
        "files": store.checksums(),
        "unchecksummed": sorted(p.name for p in store.out_dir.glob(f"{LOG_FILE}*")),
        "partial": status != EXIT_OK,
        "status": status,
        "error": error,
        "warnings": notes,
    }
    store.write_json("manifest.json", manifest)
    return status, manifest


def build_parser():
    parser = argparse.ArgumentParser(prog="mckean-lab", description="Weakly interacting diffusions and their mean-field limit")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--validate", action="store_true", help="check the config and exit")
    return parser


def main(argv=None):
    load_dotenv()
    args = build_parser().parse_args(argv)
    if args.validate:
        setup_logging()
        try:
            diagnostics = validate(args.config)
        except OSError as e:
            logger.error(f"Cannot read config {args.config}: {e}")
            return EXIT_CONFIG
        for level, message in diagnostics:
            print(f"{'❌' if level == 'error' else '⚠️ '} [{level}] {message}")
        if not diagnostics:
            print("✅ Config is valid")
        return EXIT_CONFIG if any(level == "error" for level, _ in diagnostics) else EXIT_OK
    try:
        config = load_config(args.config, args.seed, args.out)
    except (ConfigError, OSError) as e:
        setup_logging()
        logger.error(f"Invalid config {args.config}: {e}")
        return EXIT_CONFIG
    if config.experiment != args.experiment:
        setup_logging()
        logger.error(f"Config is for experiment '{config.experiment}', not '{args.experiment}'")
        return EXIT_CONFIG
    handler = setup_logging(config.output)
    try:
        status, _ = run(config)
    finally:
        if handler is not None:
            logging.getLogger().removeHandler(handler)
            handler.close()
    return status


if __name__ == "__main__":
    sys.exit(main())

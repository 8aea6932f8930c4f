"""Batch front-end: run configured experiments, write traces, plot them.

Configs are single JSON files; ``validate`` echoes them back with every
default made explicit so a run is reproducible from its artifacts alone.
Each seed yields one trace CSV with columns

    t, ess, n_met, cum_met_fraction, min_w, max_w, logsumexp_w,
    <one column per divergence name>[, t_physical][, moved_frac]

(``t_physical`` for the autoregressive Gaussian experiment, ``moved_frac``
for Metropolis-Hastings kernels).  A run directory also receives a
``summary.json`` (config echo, wall-clock time, per-seed final rows, and
mean/sd of every column across seeds) and, for the Gaussian experiment, the
closed-form oracle curve ``oracle.csv`` with columns t, chi2, kl, ess_star.

Exit codes: 0 success, 2 invalid config field(s), 3 unknown experiment,
4 unwritable output directory.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .divergences import spec_by_name
from .harmonizer import HarmonizerConfig, diagnostics, harmonize_step, init_system
from .kernels import KernelParams, build_kernel
from .oracle import gaussian_chi2, gaussian_kl, gaussian_marginal_t, standard_marginal
from .rng import INIT_LANE, StreamKey, stream
from .targets import (
    GaussianSpec,
    gaussian_target,
    laplace_approx,
    load_observations,
    stochvol_simulate,
    StochVolSpec,
    stochvol_target,
)

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_UNKNOWN_EXPERIMENT = 3
EXIT_UNWRITABLE_OUTPUT = 4

EXPERIMENTS = ("gaussian_ar1", "stochvol_mala", "synthetic", "rwmh_gaussian")
BASE_COLUMNS = ("t", "ess", "n_met", "cum_met_fraction", "min_w", "max_w", "logsumexp_w")


@dataclass
class ExperimentConfig:
    """One experiment run: kernel, target, divergences, seeds, output."""

    experiment: str
    n_pairs: int = 64
    steps: int = 200
    seeds: list = field(default_factory=lambda: [0])
    divergences: list = field(default_factory=lambda: ["chi2", "tv", "kl", "hellinger2"])
    reshuffle_policy: str = "derangement"
    out_dir: str = "runs"
    # Gaussian-family target and initial law
    dim: int = 10
    mu0_mean: float = 5.0
    mu0_variance: float = 2.0
    # kernel tunables
    rho: float = 0.9
    rho_max: float | None = None
    step_size: float | None = None
    coupling_prob: float = 0.5
    # stochastic volatility model
    sv_beta: float = 0.65
    sv_phi: float = 0.98
    sv_sigma: float = 0.15
    sv_len: int = 99
    data_seed: int = 0
    observations_csv: str | None = None

    def normalized(self) -> dict:
        """Config echo with every implicit default made explicit."""
        out = dataclasses.asdict(self)
        if out["rho_max"] is None:
            out["rho_max"] = out["rho"]
        if out["step_size"] is None:
            out["step_size"] = default_step_size(self)
        return out


def default_step_size(config: ExperimentConfig) -> float | None:
    """Kernel step size used when the config leaves it unset."""
    if config.experiment == "rwmh_gaussian":
        return 2.38**2 / config.dim
    if config.experiment == "stochvol_mala":
        return 2.89 * (config.sv_len + 1) ** (-1.0 / 3.0)
    return None


def validate_config(path) -> tuple[ExperimentConfig | None, list[str]]:
    """Load and validate a config file, collecting every violation."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return None, [f"cannot read config: {exc}"]
    if not isinstance(raw, dict):
        return None, ["config must be a JSON object"]

    errors: list[str] = []
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in raw:
        if key not in known:
            errors.append(f"unknown config field {key!r}")
    if "experiment" not in raw:
        errors.append("missing required field 'experiment'")
        return None, errors

    config = ExperimentConfig(experiment=raw["experiment"])
    for key, value in raw.items():
        if key in known:
            setattr(config, key, value)

    if config.experiment not in EXPERIMENTS:
        errors.append(
            f"unknown experiment {config.experiment!r}; valid: {', '.join(EXPERIMENTS)}"
        )

    def check(cond, message):
        if not cond:
            errors.append(message)

    check(isinstance(config.n_pairs, int) and config.n_pairs >= 1, "n_pairs must be an integer >= 1")
    check(isinstance(config.steps, int) and config.steps >= 0, "steps must be an integer >= 0")
    check(
        isinstance(config.seeds, list)
        and len(config.seeds) > 0
        and all(isinstance(s, int) and s >= 0 for s in config.seeds),
        "seeds must be a non-empty list of nonnegative integers",
    )
    if isinstance(config.divergences, list):
        for name in config.divergences:
            try:
                spec_by_name(name)
            except ValueError as exc:
                errors.append(str(exc))
    else:
        errors.append("divergences must be a list of divergence names")
    check(
        config.reshuffle_policy in ("derangement", "uniform_permutation"),
        "reshuffle_policy must be 'derangement' or 'uniform_permutation'",
    )
    check(isinstance(config.dim, int) and config.dim >= 1, "dim must be an integer >= 1")
    check(
        isinstance(config.mu0_mean, (int, float)),
        "mu0_mean must be a number (broadcast over all coordinates)",
    )
    check(
        isinstance(config.mu0_variance, (int, float)) and config.mu0_variance > 0,
        "mu0_variance must be positive",
    )
    check(0 < config.rho < 1, "rho must be in (0, 1)")
    if config.rho_max is not None:
        check(0 < config.rho_max < 1, "rho_max must be in (0, 1)")
    if config.step_size is not None:
        check(config.step_size > 0, "step_size must be positive")
    check(0 < config.coupling_prob <= 1, "coupling_prob must be in (0, 1]")
    check(config.sv_beta > 0, "sv_beta must be positive")
    check(abs(config.sv_phi) < 1, "sv_phi must satisfy |phi| < 1")
    check(config.sv_sigma > 0, "sv_sigma must be positive")
    check(isinstance(config.sv_len, int) and config.sv_len >= 1, "sv_len must be an integer >= 1")
    check(isinstance(config.data_seed, int) and config.data_seed >= 0, "data_seed must be >= 0")
    return (None, errors) if errors else (config, [])


def _prepare(config: ExperimentConfig) -> dict:
    """Inputs shared by all seeds: initial law factors, kernel arrays, data.

    Everything here is deterministic given the config, and plain arrays, so
    seed jobs can be dispatched to worker processes.
    """
    payload: dict = {}
    if config.experiment == "stochvol_mala":
        if config.observations_csv is not None:
            y = load_observations(config.observations_csv)
        else:
            gen = stream(StreamKey(config.data_seed, 0, INIT_LANE))
            _, y = stochvol_simulate(config.sv_beta, config.sv_phi, config.sv_sigma, config.sv_len, gen)
        spec = StochVolSpec(config.sv_beta, config.sv_phi, config.sv_sigma, y)
        laplace = laplace_approx(stochvol_target(spec), np.zeros(spec.dim))
        payload["observations"] = y
        payload["mu0_mean"] = laplace.mean
        payload["mu0_factor"] = laplace.cov_factor
    else:
        d = config.dim
        payload["mu0_mean"] = np.full(d, float(config.mu0_mean))
        payload["mu0_factor"] = np.sqrt(float(config.mu0_variance)) * np.eye(d)
    return payload


def _build_kernel_and_target(config: ExperimentConfig, payload: dict):
    step_size = config.step_size if config.step_size is not None else default_step_size(config)
    if config.experiment == "stochvol_mala":
        # preconditioned by the curvature factor of the initial law
        spec = StochVolSpec(config.sv_beta, config.sv_phi, config.sv_sigma, payload["observations"])
        target = stochvol_target(spec)
        params = KernelParams("mala", step_size=step_size, precond=payload["mu0_factor"])
        return build_kernel(params, target.dim, target), target
    target = gaussian_target(GaussianSpec.standard(config.dim))
    params = {
        "gaussian_ar1": lambda: KernelParams("ar1", rho=config.rho),
        "synthetic": lambda: KernelParams("synthetic", coupling_prob=config.coupling_prob),
        "rwmh_gaussian": lambda: KernelParams("rwmh", step_size=step_size),
    }[config.experiment]()
    return build_kernel(params, config.dim, target), target


def _trace_columns(config: ExperimentConfig) -> list[str]:
    cols = list(BASE_COLUMNS) + list(config.divergences)
    if config.experiment == "gaussian_ar1":
        cols.append("t_physical")
    if config.experiment in ("rwmh_gaussian", "stochvol_mala"):
        cols.append("moved_frac")
    return cols


def _seed_rows(config_dict: dict, payload: dict, seed: int) -> list[list[float]]:
    """Run one seed and return its trace rows. Pure function of its inputs."""
    config = ExperimentConfig(**config_dict)
    kernel, target = _build_kernel_and_target(config, payload)
    mu0 = GaussianSpec(payload["mu0_mean"], payload["mu0_factor"])
    specs = tuple(spec_by_name(name) for name in config.divergences)
    run_config = HarmonizerConfig(seed=seed, reshuffle_policy=config.reshuffle_policy)
    system = init_system(mu0, target, config.n_pairs, stream(StreamKey(seed, 0, INIT_LANE)))

    want_physical = config.experiment == "gaussian_ar1"
    want_moves = config.experiment in ("rwmh_gaussian", "stochvol_mala")
    rho_max = config.rho_max if config.rho_max is not None else config.rho
    time_factor = np.log(config.rho) / np.log(rho_max)

    def row(record, cum_met, moved):
        t = record.t
        out = [
            float(t),
            record.ess,
            float(record.n_met),
            cum_met / (config.n_pairs * t) if t > 0 else 0.0,
            record.min_weight,
            record.max_weight,
            record.logsumexp_w,
        ]
        out.extend(record.bounds[name] for name in config.divergences)
        if want_physical:
            out.append(t * time_factor)
        if want_moves:
            out.append(moved)
        return out

    rows = [row(diagnostics(system, specs, 0), 0, float("nan"))]
    cum_met = 0
    for _ in range(config.steps):
        previous = system.states
        system, report = harmonize_step(system, kernel, run_config)
        cum_met += report.n_met
        moved = float(np.mean(np.any(system.states != previous, axis=1)))
        rows.append(row(diagnostics(system, specs, report.n_met), cum_met, moved))
    return rows


def _format_cell(value: float) -> str:
    return repr(float(value))


def write_trace_csv(path, columns: list[str], rows: list[list[float]]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = [str(int(row[0])), *(_format_cell(v) for v in row[1:])]
            fh.write(",".join(cells) + "\n")


def write_oracle_csv(path, config: ExperimentConfig) -> None:
    """Closed-form chain-law curve for the autoregressive Gaussian setup."""
    mu0 = GaussianSpec.isotropic(np.full(config.dim, float(config.mu0_mean)), float(config.mu0_variance))
    target = standard_marginal(config.dim)
    m = 2 * config.n_pairs
    with open(path, "w") as fh:
        fh.write("t,chi2,kl,ess_star\n")
        for t in range(config.steps + 1):
            marginal = gaussian_marginal_t(mu0, config.rho, t)
            chi2 = gaussian_chi2(target, marginal)
            kl = gaussian_kl(target, marginal)
            ess_star = m / (chi2 + 1.0)
            fh.write(f"{t},{_format_cell(chi2)},{_format_cell(kl)},{_format_cell(ess_star)}\n")


def _aggregate(columns: list[str], per_seed_rows: list[list[list[float]]]) -> dict:
    """Across-seed mean and sample standard deviation, per column per step."""
    stacked = np.asarray(per_seed_rows, dtype=float)  # (seeds, steps+1, cols)
    mean = stacked.mean(axis=0)
    sd = stacked.std(axis=0, ddof=1) if stacked.shape[0] > 1 else np.zeros_like(mean)
    out = {}
    for j, name in enumerate(columns):
        out[name] = {"mean": mean[:, j].tolist(), "sd": sd[:, j].tolist()}
    return out


def run_experiment(config: ExperimentConfig, threads: int = 1) -> dict:
    """Execute all seeds of a config; write traces, oracle, and summary.

    Seeds are independent jobs; results are bit-identical for any thread
    count because every random draw is keyed by (seed, step, lane).
    """
    started = time.perf_counter()
    out_dir = Path(config.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise PermissionError(f"output directory {out_dir} is not writable: {exc}") from exc

    payload = _prepare(config)
    columns = _trace_columns(config)
    config_dict = config.normalized()

    per_seed_rows: dict[int, list] = {}
    if threads > 1 and len(config.seeds) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_seed_rows, config_dict, payload, seed): seed for seed in config.seeds
            }
            for future in concurrent.futures.as_completed(futures):
                per_seed_rows[futures[future]] = future.result()
    else:
        for seed in config.seeds:
            per_seed_rows[seed] = _seed_rows(config_dict, payload, seed)

    for seed in config.seeds:
        write_trace_csv(out_dir / f"trace_seed{seed}.csv", columns, per_seed_rows[seed])
    if config.experiment == "gaussian_ar1":
        write_oracle_csv(out_dir / "oracle.csv", config)

    ordered = [per_seed_rows[s] for s in config.seeds]
    summary = {
        "version": __version__,
        "config": config_dict,
        "columns": columns,
        "wall_clock_seconds": time.perf_counter() - started,
        "final": {
            str(seed): dict(zip(columns, per_seed_rows[seed][-1])) for seed in config.seeds
        },
        "aggregate": _aggregate(columns, ordered),
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def _read_trace(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def plot_traces(trace_paths, out_dir, oracle_path=None, log_scale: bool = False) -> dict:
    """One SVG line plot per statistic: faint per-seed lines, their mean,
    a +-2 sd band, and the oracle overlay where one exists.

    With ``log_scale``, divergence plots use a log y-axis and silently
    finite-positive data only; the number of dropped points is reported.
    Returns per-statistic metadata (series counts, dropped points, file).
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    traces = [_read_trace(p) for p in trace_paths]
    if not traces:
        raise ValueError("no trace files given")
    names = traces[0].dtype.names
    for t, p in zip(traces, trace_paths):
        if t.dtype.names != names:
            raise ValueError(f"trace {p} has columns {t.dtype.names}, expected {names}")
    skip = set(BASE_COLUMNS) | {"t_physical", "moved_frac"}
    stats = ["ess"] + [n for n in names if n not in skip]

    oracle = None
    if oracle_path is not None:
        oracle = np.genfromtxt(oracle_path, delimiter=",", names=True)
    oracle_column = {"ess": "ess_star", "chi2": "chi2", "kl": "kl"}

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    info = {}
    for stat in stats:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        t = traces[0]["t"]
        series = np.vstack([tr[stat] for tr in traces])
        dropped = 0
        use_log = log_scale and stat != "ess"
        if use_log:
            bad = ~np.isfinite(series) | (series <= 0)
            dropped = int(bad.sum())
            series = np.where(bad, np.nan, series)
            ax.set_yscale("log")
        for row in series:
            ax.plot(t, row, color="gray", alpha=0.35, linewidth=0.8)
        # slices can hold < 2 finite points after log-scale filtering
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(series, axis=0)
            sd = np.nanstd(series, axis=0, ddof=1) if series.shape[0] > 1 else np.zeros_like(mean)
        ax.plot(t, mean, color="black", linewidth=1.8, label="mean")
        ax.fill_between(t, mean - 2 * sd, mean + 2 * sd, color="black", alpha=0.15, label="+-2 sd")
        has_oracle = False
        if oracle is not None and oracle_column.get(stat) in (oracle.dtype.names or ()):
            ocol = oracle[oracle_column[stat]]
            if use_log:
                ocol = np.where(np.isfinite(ocol) & (ocol > 0), ocol, np.nan)
            ax.plot(oracle["t"], ocol, color="tab:red", linewidth=1.4, linestyle="--", label="oracle")
            has_oracle = True
        ax.set_xlabel("step")
        ax.set_ylabel(stat)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        out_file = out_dir / f"plot_{stat}.svg"
        fig.savefig(out_file)
        plt.close(fig)
        if dropped:
            print(f"warning: dropped {dropped} non-positive/non-finite points from {stat} plot", file=sys.stderr)
        info[stat] = {
            "file": str(out_file),
            "n_seed_lines": len(traces),
            "has_oracle": has_oracle,
            "dropped_points": dropped,
        }
    return info


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="harmonize-mcmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override the config's output directory")
    p_run.add_argument("--seeds", default=None, help="comma-separated seed override")
    p_run.add_argument("--threads", type=int, default=1)

    p_val = sub.add_parser("validate", help="validate a config and echo it with defaults")
    p_val.add_argument("--config", required=True)

    p_orc = sub.add_parser("oracle", help="write the closed-form oracle curve only")
    p_orc.add_argument("--config", required=True)
    p_orc.add_argument("--out", default=None)

    p_plot = sub.add_parser("plot", help="plot trace CSVs from a run directory")
    p_plot.add_argument("--run-dir", required=True)
    p_plot.add_argument("--out", default=None, help="plot output directory (default: run dir)")
    p_plot.add_argument("--log-scale", action="store_true")

    args = parser.parse_args(argv)

    if args.verb == "plot":
        run_dir = Path(args.run_dir)
        trace_paths = sorted(run_dir.glob("trace_seed*.csv"))
        if not trace_paths:
            print(f"error: no trace CSVs found in {run_dir}", file=sys.stderr)
            return EXIT_BAD_CONFIG
        oracle_path = run_dir / "oracle.csv"
        info = plot_traces(
            trace_paths,
            args.out or run_dir,
            oracle_path=oracle_path if oracle_path.exists() else None,
            log_scale=args.log_scale,
        )
        for stat, meta in info.items():
            print(f"wrote {meta['file']}")
        return EXIT_OK

    config, errors = validate_config(args.config)
    if errors:
        for err in errors:
            print(f"error: {err}", file=sys.stderr)
        unknown_exp = any("unknown experiment" in e for e in errors)
        return EXIT_UNKNOWN_EXPERIMENT if unknown_exp else EXIT_BAD_CONFIG

    if args.verb == "validate":
        print(json.dumps(config.normalized(), indent=2))
        return EXIT_OK

    if getattr(args, "out", None):
        config.out_dir = args.out
    if getattr(args, "seeds", None):
        try:
            config.seeds = [int(s) for s in args.seeds.split(",") if s != ""]
        except ValueError:
            print(f"error: malformed --seeds {args.seeds!r}", file=sys.stderr)
            return EXIT_BAD_CONFIG

    if args.verb == "oracle":
        if config.experiment != "gaussian_ar1":
            print("error: oracle curves exist only for gaussian_ar1", file=sys.stderr)
            return EXIT_BAD_CONFIG
        out_dir = Path(config.out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_oracle_csv(out_dir / "oracle.csv", config)
        except (OSError, PermissionError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_UNWRITABLE_OUTPUT
        print(f"wrote {out_dir / 'oracle.csv'}")
        return EXIT_OK

    try:
        summary = run_experiment(config, threads=args.threads)
    except PermissionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE_OUTPUT
    print(
        f"wrote {len(config.seeds)} trace(s) to {config.out_dir} "
        f"in {summary['wall_clock_seconds']:.2f}s"
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

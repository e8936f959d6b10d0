"""Pipeline stages: generate -> train -> simulate -> validate.

Each stage reads and writes files in an output directory and leaves a JSON
manifest recording the configuration, seeds and input hashes needed to
re-run it bit-identically.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

import qsn
from qsn import io
from qsn.config import ExperimentConfig, stream
from qsn.errors import ConfigurationError
from qsn.features import FeatureSpec, build_features, fit_bins, fit_scaler
from qsn.l96 import L96Params, generate_trajectory
from qsn.network import QSNArchitecture, init_network, misclassification_rate, train
from qsn.reduced import Surrogate, simulate_ensemble
from qsn.stats import Thresholds, validate

log = logging.getLogger("qsn")

TRAJECTORY = "trajectory.csv"
NETWORK = "network.json"
SCALER = "scaler.json"
BINS = "bins.json"
LOSS_HISTORY = "loss_history.csv"
TRAIN_MANIFEST = "train_manifest.json"
REDUCED = "reduced.csv"
REPORT = "stats_report.json"


def _manifest(stage: str, cfg: ExperimentConfig, **extra) -> dict:
    return {"stage": stage, "tool": "qsn", "version": qsn.__version__,
            "config": cfg.to_dict(), **extra}


def run_generate(cfg: ExperimentConfig, out: Path) -> Path:
    out = Path(out)
    rng = stream(cfg.seed, "data")
    log.info("generating %s trajectory: t_end=%g burn_in=%g h_x=%g",
             cfg.name, cfg.trajectory.t_end, cfg.trajectory.burn_in, cfg.params.h_x)
    traj = generate_trajectory(cfg.params, cfg.trajectory.t_end, cfg.trajectory.burn_in, rng=rng)
    path = out / TRAJECTORY
    io.write_trajectory(path, traj, _manifest(
        "generate", cfg, params=cfg.params.to_dict(), seed=cfg.seed, rng_stream="data",
        burn_in=cfg.trajectory.burn_in, rows=len(traj),
    ))
    log.info("wrote %s (%d rows)", path, len(traj))
    return path


def train_split_index(n_rows: int, fraction: float) -> int:
    """Last row index whose target is still training data."""
    return int(round(fraction * (n_rows - 1)))


def run_train(cfg: ExperimentConfig, trajectory_path: Path, out: Path) -> dict:
    out = Path(out)
    traj = io.read_trajectory(trajectory_path)
    spec = cfg.features.spec()
    stop = train_split_index(len(traj), cfg.train_fraction)
    fm = build_features(traj, spec, sites=cfg.features.train_sites, stop=stop)
    scaler = fit_scaler(fm.features)
    fm = fm.with_features(scaler.transform(fm.features))
    scheme = fit_bins(fm.targets, cfg.bins, cfg.bin_kind)
    fm = fm.with_labels(scheme)
    arch = QSNArchitecture(fm.features.shape[1], fm.n_heads, cfg.bins,
                           tuple(cfg.network.hidden_layers), cfg.network.alpha)
    log.info("training on %d rows, input %d, %d heads x %d bins, %d parameters",
             len(fm), arch.input_dim, arch.heads, arch.bins_per_head, arch.n_params)
    net = init_network(arch, stream(cfg.seed, "init"))
    net.seed = cfg.seed
    net, losses = train(net, fm, cfg.train, stream(cfg.seed, "train"),
                        log_every=max(1, cfg.train.iterations // 10), logger=log)
    rates = misclassification_rate(net, fm)
    feature_hash = io.artifact_hash(spec, scaler, scheme)
    net.meta = {
        "feature_hash": feature_hash,
        "feature_spec": spec.to_dict(),
        "train_config": cfg.train.to_dict(),
        "rng_streams": {"init": "init", "train": "train"},
    }
    io.save_network(out / NETWORK, net)
    io.save_scaler(out / SCALER, scaler)
    io.save_bins(out / BINS, scheme)
    io.write_curves(out / LOSS_HISTORY, {"iteration": np.arange(len(losses)), "loss": losses})
    summary = {
        "misclassification": rates.tolist(),
        "misclassification_mean": float(rates.mean()),
        "final_loss": float(losses[-100:].mean()),
        "training_rows": len(fm),
        "feature_hash": feature_hash,
    }
    io.write_json(out / TRAIN_MANIFEST, _manifest(
        "train", cfg, seed=cfg.seed, trajectory=Path(trajectory_path).name,
        trajectory_sha256=io.file_hash(trajectory_path), split_index=stop,
        artifacts={k: io.file_hash(out / k) for k in (NETWORK, SCALER, BINS)},
        **summary,
    ))
    return summary


def load_surrogate(artifacts: Path, mode: str, N: int | None = None) -> Surrogate:
    artifacts = Path(artifacts)
    net = io.load_network(artifacts / NETWORK)
    scaler = io.load_scaler(artifacts / SCALER)
    scheme = io.load_bins(artifacts / BINS)
    if "feature_spec" not in net.meta:
        raise ConfigurationError(f"{artifacts / NETWORK} carries no feature spec")
    spec = FeatureSpec.from_dict(net.meta["feature_spec"])
    return Surrogate(net, scheme, scaler, spec, mode, N=N)


def reduced_paths(out: Path, ensemble: int) -> list[Path]:
    if ensemble == 1:
        return [Path(out) / REDUCED]
    return [Path(out) / f"reduced_{k:03d}.csv" for k in range(ensemble)]


def run_simulate(cfg: ExperimentConfig, trajectory_path: Path, artifacts: Path, out: Path) -> list[Path]:
    out = Path(out)
    reference = io.read_trajectory(trajectory_path)
    surrogate = load_surrogate(artifacts, cfg.run.mode, cfg.params.N)
    spec = cfg.features.spec()
    if spec != surrogate.spec:
        raise ConfigurationError(
            f"configured feature spec {spec.to_dict()} differs from the trained one {surrogate.spec.to_dict()}"
        )
    run_cfg = cfg.run.reduced(cfg.params.dt, cfg.seed)
    n = cfg.run.ensemble
    seeds = [np.random.SeedSequence(cfg.seed, spawn_key=(3, k)) for k in range(n)]
    log.info("simulating %d reduced run(s), mode=%s, t=[%g, %g]", n, cfg.run.mode, run_cfg.t_start, run_cfg.t_end)
    runs = simulate_ensemble(run_cfg, surrogate, spec, reference, cfg.params, seeds, cfg.run.workers)
    paths = reduced_paths(out, n)
    artifact_hashes = {k: io.file_hash(Path(artifacts) / k) for k in (NETWORK, SCALER, BINS)}
    for k, (traj, path) in enumerate(zip(runs, paths)):
        io.write_trajectory(path, traj, _manifest(
            "simulate", cfg, seed=cfg.seed, rng_stream="simulate", member=k, mode=cfg.run.mode,
            feature_spec=spec.to_dict(), feature_hash=surrogate.hash,
            artifacts=artifact_hashes, reference_sha256=io.file_hash(trajectory_path),
            rows=len(traj),
        ))
        log.info("wrote %s (max |X| = %.2f)", path, np.abs(traj.X).max())
    return paths


def run_validate(cfg: ExperimentConfig, reference_path: Path, reduced_path: Path, out: Path,
                 misclassification=None) -> dict:
    out = Path(out)
    reference = io.read_trajectory(reference_path)
    reduced = io.read_trajectory(reduced_path)
    if reference.N != reduced.N:
        raise ConfigurationError(f"reference has N={reference.N}, reduced run N={reduced.N}")
    if abs(reference.dt - reduced.dt) > 1e-9 or abs(reference.times[-1] - reduced.times[-1]) > 1e-6:
        raise ConfigurationError("reference and reduced trajectories use different time grids")
    th: Thresholds = cfg.thresholds
    ref_rep, red_rep, summary = validate(reference, reduced, th, cfg.max_lag_time)
    red_rep.misclassification = misclassification
    io.write_json(out / "stats_reference.json", ref_rep.to_dict(), indent=None)
    io.write_json(out / "stats_reduced.json", red_rep.to_dict(), indent=None)
    for stat, grid in (("pdf_X", "pdf_grid_X"), ("pdf_r", "pdf_grid_r"), ("acf_X", "lags"),
                       ("acf_r", "lags"), ("ccf_X", "lags"), ("ccf_r", "lags")):
        io.write_curves(out / f"curve_{stat}.csv", {
            "grid": getattr(ref_rep, grid),
            "reference": getattr(ref_rep, stat),
            "surrogate": getattr(red_rep, stat),
        })
    summary = {**summary, "misclassification": misclassification,
               "reference": Path(reference_path).name, "reduced": Path(reduced_path).name,
               "reference_sha256": io.file_hash(reference_path),
               "reduced_sha256": io.file_hash(reduced_path)}
    io.write_json(out / REPORT, _manifest("validate", cfg, **summary))
    return summary

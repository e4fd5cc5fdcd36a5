"""
Configuration-driven experiment runner for the autosde pipeline.

🚀 **Quick Start:**
    $ autosde --config configs/parabolic2d.yaml --out runs/parabolic --stage full

🧩 **Stages** (each reads its predecessors' artifacts from ``--out``):
    - simulate: short-term ensemble → ``ensemble/``
    - identify: drift and diffusion → ``estimated_sde.json``, ``identification_table.csv``
    - train: recursive training → ``generations/``, ``run_manifest.json``, ``model.json``
    - reduce: manifold and reduced system → ``manifold.json``, ``reduced_system.json``
    - evaluate: reduced vs original → ``comparison_report.json`` and CSVs
    - full: all of the above in order

Exit codes: 0 success, 1 stage failure, 2 usage or configuration error.

📧 **Author:** F. Herbrand
📄 **License:** MIT
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import artifacts
from .basis import build_dictionary
from .config import ExperimentConfig, build_system, config_hash, config_to_dict, load_config
from .errors import AutoSdeError, ConfigError
from .evaluate import compare_distributions, noise_sweep, track_trajectory
from .km_ident import build_km_targets, fit_sde, print_identification_report
from .manifold import build_reduced, fit_manifold, manifold_residual_report
from .sde_core import InitSampler, coarse_grain, simulate_ensemble
from .training import run_recursive_training

__version__ = "1.0.0"
__author__ = "F. Herbrand"
__license__ = "MIT"

logger = logging.getLogger(__name__)

STAGES = ("simulate", "identify", "train", "reduce", "evaluate")
LOG_FORMAT = "%(asctime)s [%(levelname)8s] %(name)s: %(message)s"


class Pipeline:
    """Runs individual stages against one config and one output directory."""

    def __init__(self, config: ExperimentConfig, out: Path) -> None:
        self.config = config
        self.out = Path(out)
        self.system = build_system(config.system)
        self.hash = config_hash(config)
        self.seed = config.simulation.seed

    @property
    def var_names(self) -> List[str]:
        n = self.system.slow_dim
        slow = ["x"] if n == 1 else [f"x{k + 1}" for k in range(n)]
        fast = ["y"] if self.system.fast_dim == 1 else [f"y{k + 1}" for k in range(self.system.fast_dim)]
        return slow + fast

    def simulate(self) -> None:
        sim = self.config.simulation
        ensemble = simulate_ensemble(
            self.system, sim.init_sampler(), sim.n_traj, sim.dt, sim.n_steps, sim.seed,
            substeps=sim.substeps, on_blowup=sim.on_blowup,
        )
        if sim.coarse_stride > 1:
            ensemble = coarse_grain(ensemble, sim.coarse_stride)
        artifacts.save_ensemble(ensemble, self.out / "ensemble", self.system, self.hash)
        print(f"✅ simulate: {ensemble.n_traj} trajectories x {ensemble.n_steps + 1} rows (dt={ensemble.dt:g})")

    def identify(self) -> None:
        ident = self.config.identification
        ensemble, _ = artifacts.load_ensemble(self.out / "ensemble")
        dictionary = build_dictionary(ensemble.dim, ident.degree, ident.kind)
        targets = build_km_targets(ensemble, dictionary, ident.identified_dims, ident.drift_corrected)
        esde = fit_sde(targets, ident.threshold, ident.max_sweeps)
        artifacts.save_estimated_sde(self.out / "estimated_sde.json", esde, self.hash, self.seed)
        artifacts.write_identification_table(self.out / "identification_table.csv", esde, self.var_names)
        print_identification_report(esde, self.var_names)
        print(f"✅ identify: {targets.n_pairs} pairs, {dictionary.n_terms} terms")

    def train(self) -> None:
        ensemble, _ = artifacts.load_ensemble(self.out / "ensemble")
        esde = artifacts.load_estimated_sde(self.out / "estimated_sde.json")
        cfg = self.config.training
        snapshots, model, report = run_recursive_training(ensemble, esde, self.system, cfg)
        files = []
        for generation, snapshot in enumerate(snapshots):
            name = f"generations/snapshot_gen{generation:03d}.csv"
            artifacts.save_snapshot(self.out / name, snapshot)
            files.append(name)
        artifacts.save_run_manifest(
            self.out / "run_manifest.json", report, config_to_dict(self.config), self.hash, self.seed, files
        )
        artifacts.save_model(self.out / "model.json", model, self.hash, self.seed)
        print(
            f"✅ train: {report.generations} generations, status {report.status}, "
            f"final distance {report.final_distance:.4g}"
        )

    def _final_snapshot(self):
        manifest = artifacts.read_artifact(self.out / "run_manifest.json", "run_manifest")
        return artifacts.load_snapshot(self.out / manifest["snapshots"][-1], manifest["time_indices"][-1])

    def _drift_source(self):
        if self.config.manifold.drift_source == "known":
            return self.system, None
        return artifacts.load_estimated_sde(self.out / "estimated_sde.json"), "estimated_sde.json"

    def reduce(self) -> None:
        mcfg = self.config.manifold
        snapshot = self._final_snapshot()
        fit = fit_manifold(snapshot, self.system.slow_dims, mcfg.degree, mcfg.threshold, mcfg.kind)
        report = manifold_residual_report(fit, snapshot.points, system=self.system)
        artifacts.save_manifold(
            self.out / "manifold.json", fit, self.hash, self.seed,
            {"snapshot_time_index": snapshot.time_index, "n_points": snapshot.n_samples, "residual": report},
        )
        source, drift_file = self._drift_source()
        reduced = build_reduced(source, fit)
        artifacts.save_reduced_system(
            self.out / "reduced_system.json", reduced.source, reduced.sigma_slow, self.hash, self.seed,
            "manifold.json", drift_file,
        )
        print(f"✅ reduce: manifold residual rms {fit.residual_rms:.4g}, reduced drift from {reduced.source} source")

    def _reduced(self):
        data = artifacts.load_reduced_system(self.out / "reduced_system.json")
        fit = artifacts.load_manifold(self.out / data["manifold_file"])
        if data["drift_source"] == "known":
            return build_reduced(self.system, fit, data["sigma_slow"]), fit, None
        esde = artifacts.load_estimated_sde(self.out / data["drift_file"])
        return build_reduced(esde, fit, data["sigma_slow"]), fit, esde

    def evaluate(self) -> None:
        ecfg = self.config.evaluation
        reduced, fit, esde = self._reduced()
        if ecfg.x0 is not None:
            x0 = np.asarray(ecfg.x0, dtype=np.float64)
        else:
            x0 = self._final_snapshot().points[:, list(fit.slow_dims)].mean(axis=0)
        n_steps = max(ecfg.time_indices)

        reduced_ens = simulate_ensemble(
            reduced, InitSampler.fixed(x0), ecfg.n_samples, ecfg.dt, n_steps, ecfg.seed
        )
        original_ens = simulate_ensemble(
            self.system, InitSampler.fixed(fit.lift(x0)), ecfg.n_samples, ecfg.dt, n_steps, ecfg.seed + 1,
            substeps=ecfg.substeps, on_blowup="drop",
        )
        report = compare_distributions(reduced_ens, original_ens, fit.slow_dims, ecfg.time_indices)
        for t, hists in report.histograms.items():
            labels = []
            for k in range(len(fit.slow_dims)):
                labels += [f"reduced_x{k + 1}", f"original_x{k + 1}"]
            artifacts.write_histograms(self.out / f"distribution_nt{t:04d}.csv", hists, labels)

        tracking = track_trajectory(
            reduced, self.system, x0, ecfg.tracking_horizon, ecfg.dt, ecfg.seed, substeps=ecfg.substeps
        )
        artifacts.write_tracking(self.out / "tracking.csv", tracking)
        report.rmse = tracking.errors.tolist()

        sweep = noise_sweep(
            self.system, fit, list(ecfg.sigma_sweep), x0, ecfg.sweep_time_index, ecfg.n_samples,
            ecfg.dt, ecfg.seed, substeps=ecfg.substeps, drift_source=esde,
        )
        artifacts.write_sweep(self.out / "noise_sweep.csv", sweep)
        for row in sweep:
            tag = "_".join(f"{s:g}" for s in row.sigma)
            labels = []
            for k in range(len(fit.slow_dims)):
                labels += [f"reduced_x{k + 1}", f"original_x{k + 1}"]
            artifacts.write_histograms(self.out / f"noise_sweep_sigma{tag}.csv", row.histograms, labels)

        report.config = {**report.config, "x0": x0.tolist(), "n_samples": ecfg.n_samples, "dt": ecfg.dt,
                         "ks_threshold": 0.1}
        artifacts.save_comparison_report(
            self.out / "comparison_report.json", report, self.hash, self.seed,
            tracking_rmse=tracking.rmse,
            noise_sweep=[{"sigma": list(r.sigma), "reduced_std": r.reduced_std, "original_std": r.original_std}
                         for r in sweep],
        )
        worst = max(max(m["ks"]) for m in report.metrics)
        print(f"✅ evaluate: max KS {worst:.3f}, tracking RMSE {tracking.rmse:.4g}")

    def run(self, stage: str) -> None:
        stages: Dict[str, Callable[[], None]] = {
            "simulate": self.simulate,
            "identify": self.identify,
            "train": self.train,
            "reduce": self.reduce,
            "evaluate": self.evaluate,
        }
        for name in (STAGES if stage == "full" else (stage,)):
            logger.info("Running stage %s", name)
            stages[name]()


def run_subcommand(stage: str, config_path: Path, out: Path, seed: Optional[int] = None) -> int:
    """
    Run one stage (or ``full``) and return the process exit code.

    Partial artifacts of earlier stages stay in ``out`` when a stage fails.
    """
    try:
        config = load_config(config_path, seed=seed)
        pipeline = Pipeline(config, out)
    except ConfigError as e:
        print(f"❌ configuration error: {e}", file=sys.stderr)
        return 2
    try:
        pipeline.run(stage)
    except (AutoSdeError, ValueError, ArithmeticError, OSError) as e:
        logger.error("Stage %s failed: %s", stage, e)
        print(f"❌ {stage} failed: {e}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autosde",
        description="Identify, learn and reduce slow-fast SDEs from short-term ensemble data.",
    )
    parser.add_argument("stage_arg", nargs="?", choices=STAGES + ("full",), metavar="stage",
                        help="stage to run (alternative to --stage)")
    parser.add_argument("--config", required=True, type=Path, help="YAML experiment config")
    parser.add_argument("--out", required=True, type=Path, help="artifact directory")
    parser.add_argument("--seed", type=int, default=None, help="override simulation.seed")
    parser.add_argument("--stage", choices=STAGES + ("full",), default=None, help="stage to run")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.stage_arg and args.stage and args.stage_arg != args.stage:
        parser.error(f"conflicting stages {args.stage_arg!r} and {args.stage!r}")
    stage = args.stage or args.stage_arg or "full"
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error(f"--seed must be a 64-bit unsigned integer, got {args.seed}")
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    return run_subcommand(stage, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())

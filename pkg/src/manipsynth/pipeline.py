"""Stage orchestration: train -> gen-object -> gen-ee -> recover ->
optimize -> evaluate -> plot, with file artifacts between stages.

Every stage draws its randomness from a stream keyed by (run seed, stage
name), so adding or rerunning a stage never perturbs the others, and a
fixed seed reproduces every artifact byte for byte.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import torch

from .bps import BasisPointSet, ee_bps_from_jsonl, ee_bps_to_jsonl, sample_basis_points
from .denoiser import DenoiserConfig, ModelBundle
from .diffusion import NoiseSchedule, derive_seed, train_denoiser
from .errors import ConfigError, DependencyError, ParseError
from .metrics import evaluate_motion, metrics_csv
from .models import (
    build_ee_training,
    build_model,
    build_motion_training,
    build_object_training,
    part_bps_frame_cond,
)
from .motion import MotionSequence, decode_motion, motion_joint_positions, poses_to_csv
from .objects import ObjectTrajectory
from .optimize import (
    MotionContext,
    OptimizationConfig,
    history_to_csv,
    optimize_wholebody,
    targets_from_ee_trajectory,
)
from .bps import encode_object_bps
from .scenario import Scenario
from .serialization import read_text, sha256_file, write_atomic
from .skeleton import build_skeleton
from .synthesis import idle_first_frame, synthesize_training_data
from .trajectory import (
    EeTrajectory,
    generate_ee_bps,
    generate_object_trajectory,
    recover_ee_positions,
)

STAGES = ("train", "gen-object", "gen-ee", "recover", "optimize", "evaluate", "plot")
MODEL_FILES = {
    "object": "models/object.ckpt",
    "ee": "models/ee.ckpt",
    "body": "models/body.ckpt",
    "left_hand": "models/left_hand.ckpt",
    "right_hand": "models/right_hand.ckpt",
}


@dataclass
class TrainingConfig:
    k: int = 128
    t_train: int = 1000
    schedule: str = "cosine"
    trajectory_epochs: int = 300
    body_epochs: int = 3000
    hand_epochs: int = 1600
    batch_size: int = 32
    lr: float = 3e-4
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    t_infer_trajectory: int = 100


@dataclass
class PipelineConfig:
    training: TrainingConfig = field(default_factory=TrainingConfig)
    optimization: OptimizationConfig = field(default_factory=OptimizationConfig)

    @staticmethod
    def from_json(text: str) -> "PipelineConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"config is not valid JSON: {e}") from e
        tr = doc.get("training", {})
        try:
            den = DenoiserConfig(**tr.get("denoiser", {}))
            training = TrainingConfig(
                k=int(tr.get("k", 128)),
                t_train=int(tr.get("t_train", 1000)),
                schedule=str(tr.get("schedule", "cosine")),
                trajectory_epochs=int(tr.get("trajectory_epochs", 300)),
                body_epochs=int(tr.get("body_epochs", 3000)),
                hand_epochs=int(tr.get("hand_epochs", 1600)),
                batch_size=int(tr.get("batch_size", 32)),
                lr=float(tr.get("lr", 3e-4)),
                denoiser=den,
                t_infer_trajectory=int(tr.get("t_infer_trajectory", 100)),
            )
        except (TypeError, ValueError) as e:
            raise ParseError(f"invalid training config: {e}") from e
        opt = OptimizationConfig.from_json(json.dumps(doc.get("optimization", {})))
        return PipelineConfig(training, opt)


class PipelineRun:
    """One scenario run: resolves artifact paths and accumulates the manifest."""

    def __init__(self, scenario: Scenario, seed: int, out_dir: str, config: PipelineConfig = None):
        self.scenario = scenario
        self.seed = int(seed)
        self.out_dir = out_dir
        self.config = config or PipelineConfig()
        self.skeleton = build_skeleton()
        self.manifest = {"scenario": scenario.name, "seed": self.seed, "stages": {}}
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _record(self, stage: str, artifacts: dict, seconds: float):
        entry = {"artifacts": {}, "seconds": seconds}
        for name, rel in artifacts.items():
            entry["artifacts"][name] = {"path": rel, "sha256": sha256_file(self.path(rel))}
        self.manifest["stages"][stage] = entry
        write_atomic(self.path("manifest.json"), json.dumps(self.manifest, indent=2, sort_keys=True))

    def _basis(self) -> BasisPointSet:
        text = read_text(self.path("basis.json"), stage="train")
        return BasisPointSet.from_json(text)

    def _load_model(self, kind: str) -> ModelBundle:
        from .serialization import require_file

        return ModelBundle.load(require_file(self.path(MODEL_FILES[kind]), "train"))

    # ---- stages ----

    def stage_train(self):
        t_begin = time.perf_counter()
        cfg = self.config.training
        scenario = self.scenario
        basis = sample_basis_points(cfg.k, seed=0)
        write_atomic(self.path("basis.json"), basis.to_json())

        samples = synthesize_training_data(scenario, scenario.dataset.count, derive_seed(self.seed, "data"))
        schedule = (
            NoiseSchedule.cosine(cfg.t_train) if cfg.schedule == "cosine" else NoiseSchedule.linear(cfg.t_train)
        )

        loss_rows = ["model,epoch,loss"]

        def fit(kind, x, cond=None, frame_cond=None, poses=None, epochs=None):
            bundle = build_model(kind, cfg.k, schedule, cfg.denoiser, seed=derive_seed(self.seed, f"init:{kind}"))
            losses = train_denoiser(
                bundle,
                x,
                cond,
                frame_cond,
                poses,
                epochs=epochs,
                batch_size=cfg.batch_size,
                lr=cfg.lr,
                seed=derive_seed(self.seed, f"train:{kind}"),
            )
            os.makedirs(self.path("models"), exist_ok=True)
            bundle.save(self.path(MODEL_FILES[kind]))
            for e, l in enumerate(losses):
                loss_rows.append(f"{kind},{e},{l!r}")
            return bundle

        x, cond = build_object_training(samples, scenario, basis)
        fit("object", x, cond, epochs=cfg.trajectory_epochs)
        x, cond, frame_cond, poses = build_ee_training(samples, scenario, basis)
        fit("ee", x, cond, frame_cond, poses, epochs=cfg.trajectory_epochs)
        for kind in ("body", "left_hand", "right_hand"):
            x, cond = build_motion_training(samples, scenario, kind)
            fit(kind, x, cond, epochs=cfg.body_epochs if kind == "body" else cfg.hand_epochs)

        write_atomic(self.path("train_losses.csv"), "\n".join(loss_rows) + "\n")
        artifacts = {"basis": "basis.json", "train_losses": "train_losses.csv"}
        artifacts.update({f"model_{k}": v for k, v in MODEL_FILES.items()})
        self._record("train", artifacts, time.perf_counter() - t_begin)

    def stage_gen_object(self):
        t_begin = time.perf_counter()
        scenario = self.scenario
        basis = self._basis()
        bundle = self._load_model("object")
        geom_bps = encode_object_bps(scenario.geometry, scenario.initial_object_state.articulation, basis)
        traj = generate_object_trajectory(
            bundle,
            scenario.initial_object_state,
            scenario.text,
            geom_bps,
            scenario.frames,
            derive_seed(self.seed, "gen-object"),
            scenario.geometry,
            scenario.fps,
            t_infer=self.config.training.t_infer_trajectory,
        )
        write_atomic(self.path("object_trajectory.jsonl"), traj.to_jsonl())
        self._record("gen-object", {"object_trajectory": "object_trajectory.jsonl"}, time.perf_counter() - t_begin)

    def _object_trajectory(self) -> ObjectTrajectory:
        return ObjectTrajectory.from_jsonl(read_text(self.path("object_trajectory.jsonl"), stage="gen-object"))

    def stage_gen_ee(self):
        t_begin = time.perf_counter()
        scenario = self.scenario
        basis = self._basis()
        bundle = self._load_model("ee")
        traj = self._object_trajectory()
        frame_cond = part_bps_frame_cond(scenario.geometry, traj, basis)
        frames = generate_ee_bps(
            bundle,
            traj,
            frame_cond,
            scenario.text,
            derive_seed(self.seed, "gen-ee"),
            scenario.geometry.normalization_scale,
            t_infer=self.config.training.t_infer_trajectory,
        )
        write_atomic(self.path("ee_bps.jsonl"), ee_bps_to_jsonl(frames))
        self._record("gen-ee", {"ee_bps": "ee_bps.jsonl"}, time.perf_counter() - t_begin)

    def stage_recover(self):
        t_begin = time.perf_counter()
        basis = self._basis()
        frames = ee_bps_from_jsonl(read_text(self.path("ee_bps.jsonl"), stage="gen-ee"), basis.k)
        traj = self._object_trajectory()
        ee = recover_ee_positions(frames, basis, self.scenario.geometry.normalization_scale, traj)
        write_atomic(self.path("ee_trajectory.jsonl"), ee.to_jsonl())
        self._record("recover", {"ee_trajectory": "ee_trajectory.jsonl"}, time.perf_counter() - t_begin)

    def stage_optimize(self, targets_path: str = None):
        t_begin = time.perf_counter()
        scenario = self.scenario
        traj = self._object_trajectory()
        if targets_path is None:
            targets_path = self.path("ee_trajectory.jsonl")
            ee_text = read_text(targets_path, stage="recover")
        else:
            ee_text = read_text(targets_path)
        ee = EeTrajectory.from_jsonl(ee_text)
        config = OptimizationConfig(
            steps=self.config.optimization.steps,
            lr=self.config.optimization.lr,
            t_infer=self.config.optimization.t_infer,
            stage_boundaries=self.config.optimization.stage_boundaries,
            stage_weights=self.config.optimization.stage_weights,
            contact_margin=self.config.optimization.contact_margin,
            seed=derive_seed(self.seed, "optimize"),
        )
        targets = targets_from_ee_trajectory(ee, config.contact_margin)
        bundles = {k: self._load_model(k) for k in ("body", "left_hand", "right_hand")}
        b0, l0, r0, facing, xz = idle_first_frame(scenario, self.skeleton)
        ctx = MotionContext(self.skeleton, scenario.text, b0, l0, r0, facing, xz, scenario.fps)
        _, seq, history = optimize_wholebody(bundles, targets, scenario.geometry, traj, config, ctx)
        write_atomic(self.path("motion.jsonl"), seq.to_jsonl())
        write_atomic(self.path("poses.csv"), poses_to_csv(decode_motion(seq, self.skeleton)))
        write_atomic(self.path("loss_history.csv"), history_to_csv(history))
        self._record(
            "optimize",
            {"motion": "motion.jsonl", "poses": "poses.csv", "loss_history": "loss_history.csv"},
            time.perf_counter() - t_begin,
        )

    def stage_evaluate(self):
        t_begin = time.perf_counter()
        seq = MotionSequence.from_jsonl(read_text(self.path("motion.jsonl"), stage="optimize"))
        traj = self._object_trajectory()
        joints = motion_joint_positions(seq, self.skeleton)
        report = evaluate_motion(joints, self.skeleton, self.scenario.geometry, traj.states)
        write_atomic(self.path("metrics.json"), report.to_json())
        write_atomic(self.path("metrics.csv"), metrics_csv([(self.scenario.name, self.seed, report)]))
        self._record(
            "evaluate", {"metrics": "metrics.json", "metrics_csv": "metrics.csv"}, time.perf_counter() - t_begin
        )

    def stage_plot(self):
        from .plots import emit_plots

        t_begin = time.perf_counter()
        artifacts = emit_plots(self.out_dir)
        self._record("plot", artifacts, time.perf_counter() - t_begin)

    def run(self, stages=None, targets_path: str = None):
        stages = list(stages or STAGES)
        for s in stages:
            if s not in STAGES:
                raise ConfigError(f"unknown stage {s!r}; known: {STAGES}")
        for s in STAGES:  # dependency order regardless of request order
            if s not in stages:
                continue
            if s == "train":
                self.stage_train()
            elif s == "gen-object":
                self.stage_gen_object()
            elif s == "gen-ee":
                self.stage_gen_ee()
            elif s == "recover":
                self.stage_recover()
            elif s == "optimize":
                self.stage_optimize(targets_path)
            elif s == "evaluate":
                self.stage_evaluate()
            elif s == "plot":
                self.stage_plot()
        return self.manifest


def run_pipeline(scenario_path, stages, seed, out_dir, config_path=None, targets_path=None):
    scenario = Scenario.load(scenario_path)
    config = PipelineConfig.from_json(read_text(config_path)) if config_path else PipelineConfig()
    run = PipelineRun(scenario, seed, out_dir, config)
    return run.run(stages, targets_path=targets_path)

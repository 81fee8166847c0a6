"""Shared fixtures.

Training the five desk-scale models takes a few minutes, so trained
bundles are built once per session and cached on disk keyed by a hash of
the sources that define them; editing any of those files invalidates the
cache automatically.
"""

import hashlib
import importlib.resources
import os
import tempfile

import pytest
import torch

from manipsynth.bps import sample_basis_points
from manipsynth.denoiser import ModelBundle
from manipsynth.diffusion import NoiseSchedule, derive_seed, train_denoiser
from manipsynth.models import (
    build_ee_training,
    build_model,
    build_motion_training,
    build_object_training,
)
from manipsynth.scenario import Scenario
from manipsynth.skeleton import build_skeleton
from manipsynth.synthesis import synthesize_training_data

TRAIN_SEED = 2024
DATASET_COUNT = 40
TRAJECTORY_EPOCHS = 300
BODY_EPOCHS = 3000
HAND_EPOCHS = 1600
TRAIN_LR = 3e-4
K = 128


def open_box_text() -> str:
    return (importlib.resources.files("manipsynth") / "scenarios" / "open_box.json").read_text()


@pytest.fixture(scope="session")
def skeleton():
    return build_skeleton()


@pytest.fixture(scope="session")
def scenario():
    return Scenario.from_json(open_box_text())


@pytest.fixture(scope="session")
def basis():
    return sample_basis_points(K, seed=0)


@pytest.fixture(scope="session")
def training_samples(scenario):
    return synthesize_training_data(scenario, DATASET_COUNT, derive_seed(TRAIN_SEED, "data"))


def _source_hash() -> str:
    import manipsynth

    root = os.path.dirname(manipsynth.__file__)
    h = hashlib.sha256()
    for name in (
        "synthesis.py",
        "models.py",
        "diffusion.py",
        "denoiser.py",
        "motion.py",
        "skeleton.py",
        "bps.py",
        "objects.py",
        "scenario.py",
        os.path.join("scenarios", "open_box.json"),
    ):
        with open(os.path.join(root, name), "rb") as f:
            h.update(f.read())
    h.update(
        f"{TRAIN_SEED}:{DATASET_COUNT}:{TRAJECTORY_EPOCHS}:{BODY_EPOCHS}:{HAND_EPOCHS}:{TRAIN_LR}:{K}".encode()
    )
    return h.hexdigest()[:16]


@pytest.fixture(scope="session")
def trained_models(scenario, basis, training_samples):
    """Dict of the five trained bundles, disk-cached across test sessions."""
    cache = os.path.join(tempfile.gettempdir(), f"manipsynth-test-models-{_source_hash()}")
    kinds = ("object", "ee", "body", "left_hand", "right_hand")
    if os.path.isdir(cache):
        try:
            return {k: ModelBundle.load(os.path.join(cache, f"{k}.ckpt")) for k in kinds}
        except Exception:
            pass

    schedule = NoiseSchedule.cosine(1000)
    bundles = {}

    def fit(kind, x, cond=None, frame_cond=None, poses=None, epochs=TRAJECTORY_EPOCHS):
        b = build_model(kind, K, schedule, seed=derive_seed(TRAIN_SEED, f"init:{kind}"))
        train_denoiser(
            b, x, cond, frame_cond, poses,
            epochs=epochs, lr=TRAIN_LR, seed=derive_seed(TRAIN_SEED, f"train:{kind}"),
        )
        bundles[kind] = b

    x, cond = build_object_training(training_samples, scenario, basis)
    fit("object", x, cond)
    x, cond, frame_cond, poses = build_ee_training(training_samples, scenario, basis)
    fit("ee", x, cond, frame_cond, poses)
    for kind in ("body", "left_hand", "right_hand"):
        x, cond = build_motion_training(training_samples, scenario, kind)
        fit(kind, x, cond, epochs=BODY_EPOCHS if kind == "body" else HAND_EPOCHS)

    os.makedirs(cache, exist_ok=True)
    for kind, b in bundles.items():
        b.save(os.path.join(cache, f"{kind}.ckpt"))
    return bundles

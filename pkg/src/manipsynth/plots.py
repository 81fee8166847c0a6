"""Deterministic SVG plots of run artifacts."""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import EmptyInputError, ParseError  # noqa: E402
from .serialization import write_atomic  # noqa: E402

plt.rcParams["svg.hashsalt"] = "manipsynth"
plt.rcParams["svg.fonttype"] = "none"

_STAGE_COLORS = ("#dce9f5", "#f5eedc", "#e3f5dc")


def _save(fig, path):
    import io

    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    write_atomic(path, buf.getvalue())


def _parse_history_csv(text: str):
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise EmptyInputError("loss history is empty")
    header = lines[0].split(",")
    expected = ["step", "stage", "lr", "l_ee", "l_pen", "l_reg", "total"]
    if header != expected:
        raise ParseError(f"loss history line 1: expected header {expected}, got {header}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(expected):
            raise ParseError(f"loss history line {i}: expected {len(expected)} columns, got {len(parts)}")
        try:
            rows.append((int(parts[0]), int(parts[1]), *[float(p) for p in parts[2:]]))
        except ValueError as e:
            raise ParseError(f"loss history line {i}: {e}") from e
    if not rows:
        raise EmptyInputError("loss history has a header but no rows")
    return rows


def plot_loss_curve(history_text: str, path: str):
    rows = _parse_history_csv(history_text)
    steps = [r[0] for r in rows]
    stages = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    # stage bands
    start = steps[0]
    for i in range(1, len(rows) + 1):
        if i == len(rows) or stages[i] != stages[i - 1]:
            ax.axvspan(start, steps[i - 1] if i == len(rows) else steps[i], color=_STAGE_COLORS[stages[i - 1] % 3])
            if i < len(rows):
                start = steps[i]
    ax.plot(steps, [r[3] for r in rows], label="tracking", color="#1f77b4")
    ax.plot(steps, [r[4] for r in rows], label="penetration", color="#d62728")
    ax.plot(steps, [r[5] for r in rows], label="regularization", color="#2ca02c")
    ax.plot(steps, [r[6] for r in rows], label="total", color="#000000", linewidth=1.5)
    ax.set_xlabel("optimization step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(loc="upper right")
    fig.tight_layout()
    _save(fig, path)


def plot_metrics(metrics_text: str, path: str):
    try:
        doc = json.loads(metrics_text)
        names = ["foot_skating", "iv", "id", "cr"]
        values = [float(doc[n]) for n in names]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise ParseError(f"invalid metrics document: {e}") from e
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(names, values, color=["#1f77b4", "#d62728", "#9467bd", "#2ca02c"])
    ax.set_ylabel("value (mixed units)")
    fig.tight_layout()
    _save(fig, path)


def plot_trajectory_overlay(object_traj_text: str, ee_traj_text: str, motion_text: str, path: str):
    """Overhead (x-z) view of root path, wrist targets, and the object."""
    from .motion import MotionSequence, motion_joint_positions
    from .objects import ObjectTrajectory
    from .skeleton import build_skeleton
    from .trajectory import EeTrajectory

    traj = ObjectTrajectory.from_jsonl(object_traj_text)
    ee = EeTrajectory.from_jsonl(ee_traj_text)
    seq = MotionSequence.from_jsonl(motion_text)
    skeleton = build_skeleton()
    joints = motion_joint_positions(seq, skeleton)

    fig, ax = plt.subplots(figsize=(5, 5))
    root = joints[:, 0]
    ax.plot(root[:, 0], root[:, 2], color="#1f77b4", label="root")
    for w, name, color in ((0, "left wrist", "#2ca02c"), (1, "right wrist", "#d62728")):
        wr = joints[:, skeleton.wrist_indices[w]]
        ax.plot(wr[:, 0], wr[:, 2], color=color, label=name)
        ax.plot(ee.positions[:, w, 0], ee.positions[:, w, 2], color=color, linestyle=":", linewidth=1)
    obj = [s.translation for s in traj.states]
    ax.scatter([p[0] for p in obj], [p[2] for p in obj], s=6, color="#9467bd", label="object")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("z (m)")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def emit_plots(out_dir: str) -> dict:
    """Render whichever plots the present artifacts allow; returns the
    artifact map for the manifest. Requires at least one input."""
    artifacts = {}

    def read(name):
        p = os.path.join(out_dir, name)
        if not os.path.exists(p):
            return None
        with open(p, "r", encoding="utf-8") as f:
            return f.read()

    history = read("loss_history.csv")
    if history is not None:
        plot_loss_curve(history, os.path.join(out_dir, "loss_curve.svg"))
        artifacts["loss_curve"] = "loss_curve.svg"
    metrics = read("metrics.json")
    if metrics is not None:
        plot_metrics(metrics, os.path.join(out_dir, "metrics.svg"))
        artifacts["metrics_plot"] = "metrics.svg"
    obj_text = read("object_trajectory.jsonl")
    ee_text = read("ee_trajectory.jsonl")
    motion_text = read("motion.jsonl")
    if obj_text is not None and ee_text is not None and motion_text is not None:
        plot_trajectory_overlay(obj_text, ee_text, motion_text, os.path.join(out_dir, "trajectory_overlay.svg"))
        artifacts["trajectory_overlay"] = "trajectory_overlay.svg"
    if not artifacts:
        raise EmptyInputError(f"no plottable artifacts in {out_dir}")
    return artifacts

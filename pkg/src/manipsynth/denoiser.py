"""Sequence denoiser: a small pre-LN transformer predicting the clean sample.

The conditioning vector and diffusion timestep share a prefix token;
per-frame conditioning is concatenated to the input features. Trajectory
models additionally transform attention queries/keys by per-frame object
pose matrices (relative-pose attention) under a windowed mask.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import torch
from torch import nn

from .errors import DimensionError, ParseError
from .pose_attention import DEFAULT_WINDOW, apply_pose_encoding, windowed_attention_mask
from .rotations import DTYPE

CHECKPOINT_MAGIC = b"MSYNCKP1"


@dataclass(frozen=True)
class DenoiserConfig:
    """Desk-scale architecture knobs."""

    width: int = 64
    layers: int = 2
    heads: int = 4
    feedforward: int = 128
    window: int = DEFAULT_WINDOW
    max_frames: int = 512

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise DimensionError(f"width {self.width} not divisible by {self.heads} heads")
        if (self.width // self.heads) % 4 != 0:
            raise DimensionError("head dimension must be divisible by 4 for pose attention")


class SinusoidalEmbedding(nn.Module):
    def __init__(self, dim):
        super().__init__()
        self.dim = dim

    def forward(self, t):
        half = self.dim // 2
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype) / (half - 1))
        ang = t[..., None] * freqs
        return torch.cat([ang.sin(), ang.cos()], dim=-1)


class PoseAwareAttention(nn.Module):
    """Multi-head self-attention with optional per-token pose transforms on q/k."""

    def __init__(self, width, heads):
        super().__init__()
        self.heads = heads
        self.head_dim = width // heads
        self.q_proj = nn.Linear(width, width)
        self.k_proj = nn.Linear(width, width)
        self.v_proj = nn.Linear(width, width)
        self.out_proj = nn.Linear(width, width)

    def forward(self, x, poses=None, mask=None):
        # x: (B, T, W); poses: (B, T, 4, 4) or None; mask: (T, T) bool or None
        B, T, W = x.shape
        q = self.q_proj(x).reshape(B, T, self.heads, self.head_dim)
        k = self.k_proj(x).reshape(B, T, self.heads, self.head_dim)
        v = self.v_proj(x).reshape(B, T, self.heads, self.head_dim)
        if poses is not None:
            q = apply_pose_encoding(q, poses[:, :, None], "query")
            k = apply_pose_encoding(k, poses[:, :, None], "key")
        scores = torch.einsum("bihd,bjhd->bhij", q, k) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores.masked_fill(~mask[None, None], float("-inf"))
        attn = scores.softmax(dim=-1)
        out = torch.einsum("bhij,bjhd->bihd", attn, v).reshape(B, T, W)
        return self.out_proj(out)


class Block(nn.Module):
    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.width)
        self.attn = PoseAwareAttention(cfg.width, cfg.heads)
        self.ln2 = nn.LayerNorm(cfg.width)
        self.ff = nn.Sequential(
            nn.Linear(cfg.width, cfg.feedforward), nn.GELU(), nn.Linear(cfg.feedforward, cfg.width)
        )

    def forward(self, x, poses=None, mask=None):
        x = x + self.attn(self.ln1(x), poses, mask)
        return x + self.ff(self.ln2(x))


class Denoiser(nn.Module):
    """Predicts the clean sequence from a noisy one plus timestep/conditioning."""

    def __init__(self, in_dim, cond_dim=0, frame_cond_dim=0, use_pose_attention=False, config=None):
        super().__init__()
        cfg = config or DenoiserConfig()
        self.cfg = cfg
        self.in_dim = in_dim
        self.cond_dim = cond_dim
        self.frame_cond_dim = frame_cond_dim
        self.use_pose_attention = use_pose_attention

        w = cfg.width
        self.input_proj = nn.Linear(in_dim + frame_cond_dim, w)
        self.time_mlp = nn.Sequential(SinusoidalEmbedding(w), nn.Linear(w, w), nn.GELU(), nn.Linear(w, w))
        self.cond_proj = nn.Linear(cond_dim, w) if cond_dim > 0 else None
        pos = SinusoidalEmbedding(w)(torch.arange(cfg.max_frames, dtype=DTYPE))
        self.register_buffer("pos_emb", pos)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.layers))
        self.ln_out = nn.LayerNorm(w)
        self.output_proj = nn.Linear(w, in_dim)
        self.double()

    def forward(self, x, t, cond=None, frame_cond=None, poses=None):
        # x: (B, N, D); t: (B,); cond: (B, C); frame_cond: (B, N, F); poses: (B, N, 4, 4)
        B, N, D = x.shape
        if D != self.in_dim:
            raise DimensionError(f"input feature width {D} != model width {self.in_dim}")
        if self.frame_cond_dim:
            if frame_cond is None or frame_cond.shape != (B, N, self.frame_cond_dim):
                raise DimensionError("frame conditioning missing or mis-shaped")
            x = torch.cat([x, frame_cond], dim=-1)
        h = self.input_proj(x) + self.pos_emb[:N]

        tok = self.time_mlp(t.to(x.dtype))
        if self.cond_proj is not None:
            if cond is None or cond.shape != (B, self.cond_dim):
                raise DimensionError("conditioning vector missing or mis-shaped")
            tok = tok + self.cond_proj(cond)
        seq = torch.cat([tok[:, None], h], dim=1)  # (B, N+1, W)

        mask = windowed_attention_mask(N, self.cfg.window).to(x.device)
        full = torch.ones(N + 1, N + 1, dtype=torch.bool, device=x.device)
        full[1:, 1:] = mask

        pose_seq = None
        if self.use_pose_attention:
            if poses is None or poses.shape != (B, N, 4, 4):
                raise DimensionError("pose matrices missing or mis-shaped")
            eye = torch.eye(4, dtype=x.dtype, device=x.device).expand(B, 1, 4, 4)
            pose_seq = torch.cat([eye, poses.to(x.dtype)], dim=1)

        for block in self.blocks:
            seq = block(seq, pose_seq, full)
        return self.output_proj(self.ln_out(seq))[:, 1:]


class ModelBundle:
    """A denoiser plus everything needed to sample it: schedule, feature
    normalization statistics, and free-form metadata."""

    def __init__(self, denoiser: Denoiser, schedule, mean=None, std=None, meta=None, seed=0):
        self.denoiser = denoiser
        self.schedule = schedule
        d = denoiser.in_dim
        self.mean = torch.zeros(d, dtype=DTYPE) if mean is None else mean.to(DTYPE)
        self.std = torch.ones(d, dtype=DTYPE) if std is None else std.to(DTYPE)
        self.meta = dict(meta or {})
        self.seed = seed
        self.trained = bool(self.meta.get("trained", False))

    def normalize(self, x):
        return (x - self.mean) / self.std

    def denormalize(self, x):
        return x * self.std + self.mean

    def fit_normalization(self, x):
        # x: (S, N, D)
        flat = x.reshape(-1, x.shape[-1])
        self.mean = flat.mean(dim=0)
        self.std = flat.std(dim=0, unbiased=False).clamp_min(1e-6)

    def save(self, path):
        arch = {
            "in_dim": self.denoiser.in_dim,
            "cond_dim": self.denoiser.cond_dim,
            "frame_cond_dim": self.denoiser.frame_cond_dim,
            "use_pose_attention": self.denoiser.use_pose_attention,
            "config": asdict(self.denoiser.cfg),
        }
        sched = {"kind": self.schedule.kind, "t_train": self.schedule.t_train}
        if self.schedule.kind == "linear":
            sched["beta_start"] = self.schedule.beta_start
            sched["beta_end"] = self.schedule.beta_end

        tensors = [("__mean__", self.mean), ("__std__", self.std)]
        tensors += [(k, v.detach()) for k, v in self.denoiser.state_dict().items()]
        index = []
        offset = 0
        blobs = []
        for name, v in tensors:
            data = v.to(DTYPE).contiguous().numpy().tobytes()
            index.append({"name": name, "shape": list(v.shape), "offset": offset, "nbytes": len(data)})
            blobs.append(data)
            offset += len(data)
        header = json.dumps(
            {
                "format_version": 1,
                "arch": arch,
                "schedule": sched,
                "seed": self.seed,
                "meta": self.meta,
                "tensors": index,
            },
            sort_keys=True,
        ).encode("utf-8")
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<Q", len(header)))
            f.write(header)
            for b in blobs:
                f.write(b)

    @staticmethod
    def load(path) -> "ModelBundle":
        from .diffusion import NoiseSchedule

        with open(path, "rb") as f:
            magic = f.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise ParseError(f"{path}: not a model checkpoint (bad magic)")
            (hlen,) = struct.unpack("<Q", f.read(8))
            header = json.loads(f.read(hlen).decode("utf-8"))
            payload = f.read()

        arch = header["arch"]
        cfg = DenoiserConfig(**arch["config"])
        net = Denoiser(
            arch["in_dim"], arch["cond_dim"], arch["frame_cond_dim"], arch["use_pose_attention"], cfg
        )
        tensors = {}
        for entry in header["tensors"]:
            raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
            t = torch.frombuffer(bytearray(raw), dtype=DTYPE).reshape(entry["shape"]).clone()
            tensors[entry["name"]] = t
        mean = tensors.pop("__mean__")
        std = tensors.pop("__std__")
        net.load_state_dict(tensors)

        sched_doc = header["schedule"]
        if sched_doc["kind"] == "cosine":
            schedule = NoiseSchedule.cosine(sched_doc["t_train"])
        else:
            schedule = NoiseSchedule.linear(sched_doc["t_train"], sched_doc["beta_start"], sched_doc["beta_end"])
        return ModelBundle(net, schedule, mean, std, header["meta"], header["seed"])


def build_denoiser(in_dim, cond_dim=0, frame_cond_dim=0, use_pose_attention=False, config=None, seed=0):
    """Deterministically initialized denoiser (same seed -> same parameters)."""
    torch.manual_seed(seed)
    return Denoiser(in_dim, cond_dim, frame_cond_dim, use_pose_attention, config)

"""The N-component Conv-Block-Conv-TDC cascade with residual-in-residual blocks."""

import json
import struct
from dataclasses import dataclass, replace

import numpy as np
import torch
from torch import nn

from .kspace import tdc
from .searchspace import NUM_OPS, Cell, op_spec


@dataclass(frozen=True)
class NetworkConfig:
    """Structural knobs of the cascade.

    `n_components` is the number of stacked Conv-Block-Conv-TDC components,
    `cells_per_block` the number of cells in each basic block (4 = deeper
    ablation), `channels` the feature width. `homogeneous_op` forces every
    cell to a single operation (homogeneous ablation).
    """

    n_components: int = 5
    cells_per_block: int = 3
    channels: int = 19
    use_bn: bool = False
    use_rir: bool = True
    beta: float = 0.2
    leaky_slope: float = 0.2
    homogeneous_op: int | None = None

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.cells_per_block not in (3, 4):
            raise ValueError("cells_per_block must be 3 or 4")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.homogeneous_op is not None and not 1 <= self.homogeneous_op <= NUM_OPS:
            raise ValueError("homogeneous_op must be in [1, 8]")

    @property
    def num_cells(self):
        return self.n_components * self.cells_per_block

    def to_json(self):
        return {
            "n_components": self.n_components,
            "cells_per_block": self.cells_per_block,
            "channels": self.channels,
            "use_bn": self.use_bn,
            "use_rir": self.use_rir,
            "beta": self.beta,
            "leaky_slope": self.leaky_slope,
            "homogeneous_op": self.homogeneous_op,
        }

    @classmethod
    def from_json(cls, obj):
        unknown = set(obj) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown NetworkConfig keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class Genotype:
    """Discrete assignment of one operation index (1..8) to each cell."""

    ops: tuple
    cells_per_block: int = 3

    def __post_init__(self):
        if len(self.ops) % self.cells_per_block != 0:
            raise ValueError(
                f"genotype length {len(self.ops)} not divisible by "
                f"cells_per_block={self.cells_per_block}"
            )
        for o in self.ops:
            if not 1 <= o <= NUM_OPS:
                raise ValueError(f"operation index {o} outside [1, {NUM_OPS}]")

    def __len__(self):
        return len(self.ops)

    @property
    def n_components(self):
        return len(self.ops) // self.cells_per_block

    def pretty(self):
        """Human-readable form, e.g. "O5 O8 O8|O8 O8 O8"."""
        groups = []
        for b in range(self.n_components):
            cells = self.ops[b * self.cells_per_block:(b + 1) * self.cells_per_block]
            groups.append(" ".join(f"O{o}" for o in cells))
        return "|".join(groups)

    @classmethod
    def parse(cls, text, cells_per_block=3):
        ops = []
        for group in text.strip().split("|"):
            for tok in group.split():
                tok = tok.strip()
                if not tok.startswith("O"):
                    raise ValueError(f"bad operation token {tok!r}")
                ops.append(int(tok[1:]))
        return cls(ops=tuple(ops), cells_per_block=cells_per_block)

    def to_json(self):
        return {
            "cells_per_block": self.cells_per_block,
            "N": self.n_components,
            "ops": [f"O{o}" for o in self.ops],
            "pretty": self.pretty(),
        }

    @classmethod
    def from_json(cls, obj):
        ops = tuple(int(tok[1:]) for tok in obj["ops"])
        g = cls(ops=ops, cells_per_block=int(obj["cells_per_block"]))
        if "N" in obj and int(obj["N"]) != g.n_components:
            raise ValueError("genotype N inconsistent with ops length")
        return g

    @classmethod
    def homogeneous(cls, op_index, n_components, cells_per_block=3):
        return cls(ops=(op_index,) * (n_components * cells_per_block),
                   cells_per_block=cells_per_block)


# Searched architectures reported for the two clinical datasets; shipped
# as named presets for retraining on user data.
CARDIAC_GENOTYPE = Genotype.parse("O5 O8 O8|O8 O8 O8|O4 O1 O2|O8 O8 O8|O6 O8 O8")
BRAIN_GENOTYPE = Genotype.parse("O6 O6 O2|O4 O1 O2|O3 O8 O1|O3 O6 O3|O3 O1 O3")


class RIRBlock(nn.Module):
    """Chain of cells with an outer residual around the whole chain.

    With `use_rir`: out = x + beta * (chain(x) - x), where each cell keeps
    its own local residual. Without: a plain residual-free chain.
    """

    def __init__(self, cells, beta, use_rir):
        super().__init__()
        self.cells = nn.ModuleList(cells)
        self.beta = beta
        self.use_rir = use_rir

    def forward(self, x):
        h = x
        for cell in self.cells:
            h = cell(h)
        if self.use_rir:
            return x + self.beta * (h - x)
        return h


def build_cells(cfg, op_indices):
    return [
        Cell(op_spec(i), cfg.channels, beta=cfg.beta, leaky_slope=cfg.leaky_slope,
             use_bn=cfg.use_bn, use_residual=cfg.use_rir)
        for i in op_indices
    ]


class Component(nn.Module):
    """One Conv-Block-Conv-TDC stage.

    The c->2 conv output is a residual correction added onto the stage
    input before TDC, so a zero-weight component is identity-like.
    """

    def __init__(self, cfg, block):
        super().__init__()
        self.conv_in = nn.Conv2d(2, cfg.channels, 3, padding=1)
        self.act = nn.LeakyReLU(cfg.leaky_slope, inplace=False)
        self.block = block
        self.conv_out = nn.Conv2d(cfg.channels, 2, 3, padding=1)

    def forward(self, img, k0, mask):
        feat = self.act(self.conv_in(img))
        feat = self.block(feat)
        out = img + self.conv_out(feat)
        return tdc(out, k0, mask)


class CascadeNet(nn.Module):
    """Fixed-genotype cascade of N components, each with its own weights."""

    def __init__(self, cfg, genotype):
        super().__init__()
        if cfg.homogeneous_op is not None:
            genotype = Genotype.homogeneous(
                cfg.homogeneous_op, cfg.n_components, cfg.cells_per_block)
        if len(genotype) != cfg.num_cells:
            raise ValueError(
                f"genotype length {len(genotype)} != {cfg.num_cells} cells")
        self.cfg = cfg
        self.genotype = genotype
        comps = []
        for b in range(cfg.n_components):
            ops = genotype.ops[b * cfg.cells_per_block:(b + 1) * cfg.cells_per_block]
            comps.append(Component(cfg, RIRBlock(build_cells(cfg, ops),
                                                 cfg.beta, cfg.use_rir)))
        self.components = nn.ModuleList(comps)

    def forward(self, x, k0, mask):
        if x.shape[-3] != 2:
            raise ValueError("expected a 2-channel complex image")
        for comp in self.components:
            x = comp(x, k0, mask)
        return x


def l2_loss(pred, target):
    """Sum of squared differences per sample, averaged over the batch."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    diff = pred - target
    if diff.dim() == 3:
        return diff.pow(2).sum()
    return diff.pow(2).flatten(1).sum(dim=1).mean()


def _conv_params(in_ch, out_ch, k=3):
    return k * k * in_ch * out_ch + out_ch


def param_count(cfg, genotype=None):
    """Exact number of trainable scalars in a fixed-genotype cascade."""
    if cfg.homogeneous_op is not None:
        genotype = Genotype.homogeneous(
            cfg.homogeneous_op, cfg.n_components, cfg.cells_per_block)
    if genotype is None:
        raise ValueError("genotype required unless homogeneous_op is set")
    if len(genotype) != cfg.num_cells:
        raise ValueError("genotype length mismatch")
    c = cfg.channels
    total = cfg.n_components * (_conv_params(2, c) + _conv_params(c, 2))
    for i in genotype.ops:
        spec = op_spec(i)
        for layer in range(1, 5):
            total += _conv_params(c * spec.conv_in_multiplier(layer), c)
            if cfg.use_bn and layer < 4:
                total += 2 * c  # BN scale + shift
    return total


def calibrate_channels(target_params, genotype, cfg=None, search=range(4, 65)):
    """Channel width whose parameter count is closest to a target budget."""
    cfg = cfg or NetworkConfig(n_components=genotype.n_components,
                               cells_per_block=genotype.cells_per_block)
    best = None
    for c in search:
        n = param_count(replace(cfg, channels=c), genotype)
        if best is None or abs(n - target_params) < abs(best[1] - target_params):
            best = (c, n)
    return best


# --- checkpoint container -------------------------------------------------
#
# Single file: magic, u64 header length, JSON header, then the named
# float32 little-endian arrays in header order.

_CKPT_MAGIC = b"EMRCKPT1"


def save_checkpoint(path, model, *, config, genotype, seed, epoch, extra=None):
    state = model.state_dict()
    names = sorted(state.keys())
    header = {
        "config": config.to_json(),
        "genotype": genotype.to_json(),
        "seed": seed,
        "epoch": epoch,
        "arrays": [{"name": n, "shape": list(state[n].shape)} for n in names],
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for n in names:
            arr = state[n].detach().cpu().numpy().astype("<f4")
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (header dict, state_dict of float32 tensors)."""
    with open(path, "rb") as f:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode())
        state = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(4 * count)
            if len(raw) != 4 * count:
                raise ValueError(f"truncated checkpoint array {entry['name']}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
            state[entry["name"]] = torch.from_numpy(arr.copy())
    return header, state


def build_from_checkpoint(path):
    header, state = load_checkpoint(path)
    cfg = NetworkConfig.from_json(header["config"])
    genotype = Genotype.from_json(header["genotype"])
    model = CascadeNet(cfg, genotype)
    model.load_state_dict(state)
    return model, header

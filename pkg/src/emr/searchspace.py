"""The eight candidate cell operations and their forward computation.

Each operation is a 4-convolution dense cell (3x3 kernels throughout).
O1..O7 use dilations 1-2-4-1, O8 uses 1-1-1-1. The optional skip
connections 1, 2, 3 carry the cell input to the inputs of convs 2, 3, 4
by channel concatenation. A local residual scales the conv4 output by
beta and adds it back onto the cell input.
"""

from dataclasses import dataclass

import torch
from torch import nn

NUM_OPS = 8


@dataclass(frozen=True)
class OperationSpec:
    index: int  # 1-based, O1..O8
    dilations: tuple
    skips: frozenset

    @property
    def name(self):
        return f"O{self.index}"

    def conv_in_multiplier(self, layer):
        """Number of c-wide inputs feeding conv `layer` (1-based)."""
        if layer == 1:
            return 1
        return 2 if (layer - 1) in self.skips else 1


_DILATED = (1, 2, 4, 1)
_PLAIN = (1, 1, 1, 1)

_SKIP_SETS = {
    1: {1, 2, 3},
    2: {2, 3},
    3: {1, 3},
    4: {1, 2},
    5: {1},
    6: {2},
    7: {3},
    8: {1, 2, 3},
}

_TABLE = {
    i: OperationSpec(
        index=i,
        dilations=_PLAIN if i == 8 else _DILATED,
        skips=frozenset(_SKIP_SETS[i]),
    )
    for i in range(1, NUM_OPS + 1)
}


def op_table():
    """The fixed 8-entry operation table; key i returns O_i."""
    return dict(_TABLE)


def op_spec(index):
    if index not in _TABLE:
        raise ValueError(f"operation index must be in [1, {NUM_OPS}], got {index}")
    return _TABLE[index]


def receptive_field(spec):
    """Theoretical receptive field of the sequential conv chain."""
    return 1 + 2 * sum(spec.dilations)


class Cell(nn.Module):
    """One dense cell: 4 convs, optional input skips, local residual.

    Leaky ReLU (slope `leaky_slope`) follows convs 1-3; conv4 has no
    activation. With `use_residual` the output is x + beta * conv4_out,
    otherwise the raw conv4_out (residual-free ablation).
    """

    def __init__(self, spec, channels, beta=0.2, leaky_slope=0.2,
                 use_bn=False, use_residual=True):
        super().__init__()
        self.spec = spec
        self.channels = channels
        self.beta = beta
        self.use_residual = use_residual
        self.act = nn.LeakyReLU(leaky_slope, inplace=False)
        convs = []
        bns = []
        for layer, d in enumerate(spec.dilations, start=1):
            in_ch = channels * spec.conv_in_multiplier(layer)
            convs.append(nn.Conv2d(in_ch, channels, 3, padding=d, dilation=d))
            if use_bn and layer < 4:
                bns.append(nn.BatchNorm2d(channels))
        self.convs = nn.ModuleList(convs)
        self.bns = nn.ModuleList(bns) if use_bn else None

    def forward(self, x):
        if x.shape[-3] != self.channels:
            raise ValueError(
                f"expected {self.channels} input channels, got {x.shape[-3]}"
            )
        h = x
        for layer, conv in enumerate(self.convs, start=1):
            inp = h
            if layer > 1 and (layer - 1) in self.spec.skips:
                inp = torch.cat((h, x), dim=-3)
            h = conv(inp)
            if layer < 4:
                if self.bns is not None:
                    h = self.bns[layer - 1](h)
                h = self.act(h)
        if self.use_residual:
            return x + self.beta * h
        return h

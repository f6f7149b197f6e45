from __future__ import annotations

import torch
import torch.nn as nn

from reidnas.algorithms.partaware import PartAware, PartAwareConfig
from reidnas.datatypes.config import MacroConfig
from reidnas.datatypes.genotype import OpKind


class ReLUConvBN(nn.Sequential):
    '''ReLU, 1x1 convolution and batch norm, used to project cell inputs and outputs.'''

    def __init__(self, cin: int, cout: int, stride: int = 1):
        super().__init__(nn.ReLU(inplace=False),
                         nn.Conv2d(cin, cout, 1, stride=stride, bias=False),
                         nn.BatchNorm2d(cout))


class SepConv(nn.Sequential):
    '''ReLU, 3x3 depthwise convolution, 1x1 pointwise convolution and batch norm.'''

    def __init__(self, C: int, stride: int, dilation: int = 1):
        super().__init__(nn.ReLU(inplace=False),
                         nn.Conv2d(C, C, 3, stride=stride, padding=dilation, dilation=dilation,
                                   groups=C, bias=False),
                         nn.Conv2d(C, C, 1, bias=False),
                         nn.BatchNorm2d(C))


class Zero(nn.Module):

    def __init__(self, stride: int):
        super().__init__()
        self.stride = stride

    def forward(self, x):
        return x[:, :, ::self.stride, ::self.stride].mul(0.)


class Identity(nn.Module):
    '''Identity, or a parameter-free subsample at stride 2.'''

    def __init__(self, stride: int):
        super().__init__()
        self.stride = stride

    def forward(self, x):
        if self.stride == 1:
            return x
        return x[:, :, ::self.stride, ::self.stride]


OPS = {
    OpKind.PART_AWARE: lambda C, stride, macro: PartAware(PartAwareConfig(
        cin=C, cout=C, d=macro.part_dim(C), M=macro.part_count, heads=macro.part_heads, stride=stride)),
    OpKind.MAX_POOL_3x3: lambda C, stride, macro: nn.MaxPool2d(3, stride=stride, padding=1),
    OpKind.AVG_POOL_3x3: lambda C, stride, macro: nn.AvgPool2d(3, stride=stride, padding=1,
                                                               count_include_pad=False),
    OpKind.SEP_CONV_3x3: lambda C, stride, macro: SepConv(C, stride),
    OpKind.DIL_CONV_3x3: lambda C, stride, macro: SepConv(C, stride, dilation=2),
    OpKind.ZERO: lambda C, stride, macro: Zero(stride),
    OpKind.IDENTITY: lambda C, stride, macro: Identity(stride),
}


def build_op(op: OpKind, C: int, stride: int, macro: MacroConfig) -> nn.Module:
    '''
    Instantiate one candidate operation. Every op maps (N,C,H,W) to
    (N,C,H/stride,W/stride).
    '''
    if stride not in (1, 2):
        raise ValueError(f'stride must be 1 or 2 (given {stride})')
    return OPS[OpKind(op)](C, stride, macro)


class MixedEdge(nn.Module):
    '''
    One (candidate input, block) edge of the supernet: every op of the search
    space, mixed with externally supplied weights.
    '''

    def __init__(self, C: int, stride: int, ops: tuple, macro: MacroConfig):
        super().__init__()
        self.C = C
        self.stride = stride
        self.kinds = tuple(ops)
        self.ops = nn.ModuleList([build_op(op, C, stride, macro) for op in self.kinds])

    def forward(self, x: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.C:
            raise ValueError(f'mixed edge expects (N,{self.C},H,W), got {tuple(x.shape)}')
        if weights.shape != (len(self.ops),):
            raise ValueError(f'expected {len(self.ops)} mixing weights, got {tuple(weights.shape)}')
        return sum(w * op(x) for w, op in zip(weights, self.ops))


def mixed_edge_forward(x: torch.Tensor, edge: MixedEdge, alpha_logits: torch.Tensor,
                       mask: torch.Tensor = None) -> torch.Tensor:
    '''
    Softmax relaxation of one edge: sum over ops of softmax(alpha_logits)[o] * o(x).
    ``mask`` (bool, per op) disables ops by sending their logit to -inf.
    '''
    if mask is not None:
        alpha_logits = alpha_logits.masked_fill(~mask, float('-inf'))
    return edge(x, torch.softmax(alpha_logits, dim=-1))

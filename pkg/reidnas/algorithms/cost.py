from __future__ import annotations

from typing import NamedTuple

import torch

from reidnas.algorithms.network import CellSlot, cell_plan, edge_stride
from reidnas.algorithms.partaware import PartAwareConfig, part_aware_cost
from reidnas.algorithms.resnet import RESNET_LAYERS, RESNET_WIDTHS
from reidnas.datatypes.config import MacroConfig
from reidnas.datatypes.genotype import Genotype, OpKind


class Cost(NamedTuple):
    '''Parameter and multiply-accumulate counts. One MAC counts as one FLOP.'''
    params: int = 0
    macs: int = 0

    def __add__(self, other):
        return Cost(self.params + other.params, self.macs + other.macs)


def next_size(size: int, kernel: int, stride: int = 1, padding: int = 0, dilation: int = 1) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv_cost(cin: int, cout: int, kernel: int, out_hw: tuple, groups: int = 1, bias: bool = False) -> Cost:
    '''Convolution: cin/groups * cout * k^2 weights, applied at every output pixel.'''
    weights = cin // groups * cout * kernel * kernel
    return Cost(weights + (cout if bias else 0), weights * out_hw[0] * out_hw[1])


def bn_cost(channels: int) -> Cost:
    '''Batch norm: scale and shift per channel, folded into the preceding conv.'''
    return Cost(2 * channels, 0)


def linear_cost(din: int, dout: int, bias: bool = True) -> Cost:
    return Cost(din * dout + (dout if bias else 0), din * dout)


def op_cost(op: OpKind, C: int, stride: int, in_hw: tuple, macro: MacroConfig) -> Cost:
    '''
    Cost of one candidate operation on a (C, *in_hw) input. Pooling, zero and
    identity are free.
    '''
    op = OpKind(op)
    out_hw = (in_hw[0] // stride, in_hw[1] // stride)
    if op in (OpKind.SEP_CONV_3x3, OpKind.DIL_CONV_3x3):
        return conv_cost(C, C, 3, out_hw, groups=C) + conv_cost(C, C, 1, out_hw) + bn_cost(C)
    if op == OpKind.PART_AWARE:
        cfg = PartAwareConfig(cin=C, cout=C, d=macro.part_dim(C), M=macro.part_count,
                              heads=macro.part_heads, stride=stride)
        return Cost(*part_aware_cost(cfg, in_hw))
    return Cost()


def relu_conv_bn_cost(cin: int, cout: int, out_hw: tuple) -> Cost:
    return conv_cost(cin, cout, 1, out_hw) + bn_cost(cout)


def stem_cost(macro: MacroConfig) -> Cost:
    return conv_cost(3, macro.C, 3, macro.stage_hw[0]) + bn_cost(macro.C)


def head_cost(in_features: int, macro: MacroConfig) -> Cost:
    '''Embedding and classifier, once per stripe for the part-pooled head.'''
    one = linear_cost(in_features, macro.embed_dim) + linear_cost(macro.embed_dim, macro.num_ids)
    if macro.head == 'pcb':
        return Cost(one.params * macro.pcb_stripes, one.macs * macro.pcb_stripes)
    return one


def cell_cost(slot: CellSlot, blocks: tuple, macro: MacroConfig) -> Cost:
    '''
    One final cell: both input projections, two ops per block and the
    projection of the concatenated block outputs.
    '''
    width = slot.width
    total = relu_conv_bn_cost(slot.c_prev_prev, width, slot.in_hw)
    total += relu_conv_bn_cost(slot.c_prev, width, slot.in_hw)
    for spec in blocks:
        for idx, op in ((spec.input1, spec.op1), (spec.input2, spec.op2)):
            hw = slot.in_hw if idx < 2 else slot.out_hw
            total += op_cost(op, width, edge_stride(slot, idx), hw, macro)
    total += relu_conv_bn_cost(len(blocks) * width, width, slot.out_hw)
    return total


def cost_breakdown(g: Genotype, m: MacroConfig) -> list:
    '''
    Per-component costs of the final network of ``g``.

    Returns
    -------
    list
        ``(name, Cost)`` pairs: ``stem``, ``cell0`` ... ``cell{n-1}``, ``head``
    '''
    if g.B != m.B:
        raise ValueError(f'genotype has B={g.B} but the macro config expects B={m.B}')
    m.check_space(op for cell in (g.normal, g.reduction) for blk in cell for op in (blk.op1, blk.op2))
    rows = [('stem', stem_cost(m))]
    for slot in cell_plan(m):
        rows.append((f'cell{slot.index}', cell_cost(slot, g.cell(slot.reduction), m)))
    rows.append(('head', head_cost(m.feature_dim, m)))
    return rows


def count_params_flops(g: Genotype, m: MacroConfig) -> tuple:
    '''
    Static parameter and MAC counts of the final network of ``g`` at
    ``m.input_hw``. Convolutions carry no bias; batch norm contributes two
    parameters per channel and no MACs; linear layers of the head carry a bias.

    Returns
    -------
    (int, int)
        parameter count, MAC count
    '''
    total = Cost()
    for _, cost in cost_breakdown(g, m):
        total += cost
    return total.params, total.macs


def resnet_cost(macro: MacroConfig, arch: str = 'resnet18') -> tuple:
    '''Static counts of `ResNetReID` at ``macro.input_hw``.'''
    if arch not in RESNET_LAYERS:
        raise ValueError(f'unknown reference backbone {arch!r}, must be one of {list(RESNET_LAYERS)}')
    height, width = macro.input_hw
    hw = (next_size(height, 7, 2, 3), next_size(width, 7, 2, 3))
    total = conv_cost(3, 64, 7, hw) + bn_cost(64)
    hw = (next_size(hw[0], 3, 2, 1), next_size(hw[1], 3, 2, 1))

    cin = 64
    for k, (depth, cout) in enumerate(zip(RESNET_LAYERS[arch], RESNET_WIDTHS)):
        for j in range(depth):
            stride = 2 if k > 0 and j == 0 else 1
            hw = (next_size(hw[0], 3, stride, 1), next_size(hw[1], 3, stride, 1))
            total += conv_cost(cin, cout, 3, hw) + bn_cost(cout)
            total += conv_cost(cout, cout, 3, hw) + bn_cost(cout)
            if stride != 1 or cin != cout:
                total += conv_cost(cin, cout, 1, hw) + bn_cost(cout)
            cin = cout
    total += head_cost(RESNET_WIDTHS[-1], macro)
    return total.params, total.macs


def count_parameters(model: torch.nn.Module, exclude: tuple = ()) -> int:
    '''Runtime count of trainable tensors, skipping the parameters in ``exclude``.'''
    skip = {id(p) for p in exclude}
    return sum(p.numel() for p in model.parameters() if id(p) not in skip)

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn

from reidnas.algorithms.operations import ReLUConvBN, build_op
from reidnas.datatypes.config import MacroConfig
from reidnas.datatypes.genotype import Genotype


class CellSlot(NamedTuple):
    index: int
    stage: int
    reduction: bool
    width: int
    c_prev_prev: int
    c_prev: int
    reduction_prev: bool
    in_hw: tuple
    out_hw: tuple


def cell_plan(macro: MacroConfig) -> list:
    '''
    Widths and resolutions of every cell of the skeleton, in forward order.
    ``in_hw`` is the resolution of the nearer cell input.
    '''
    slots = []
    c_pp = c_p = macro.C
    hw_p = macro.stage_hw[0]
    reduction_prev = False
    for index, (stage, reduction) in enumerate(macro.cell_layout()):
        width = macro.stage_widths[stage]
        out_hw = macro.stage_hw[stage]
        slots.append(CellSlot(index, stage, reduction, width, c_pp, c_p, reduction_prev, hw_p, out_hw))
        c_pp, c_p = c_p, width
        hw_p = out_hw
        reduction_prev = reduction
    return slots


def edge_stride(slot: CellSlot, input_idx: int) -> int:
    '''Edges leaving the two cell inputs of a reduction cell have stride 2.'''
    return 2 if slot.reduction and input_idx < 2 else 1


class Stem(nn.Sequential):

    def __init__(self, macro: MacroConfig):
        super().__init__(nn.Conv2d(3, macro.C, 3, stride=macro.stem_stride, padding=1, bias=False),
                         nn.BatchNorm2d(macro.C))


class Head(nn.Module):
    '''
    Retrieval head: global average pool (f), dropout, embedding (g), dropout,
    identity classifier (h).
    '''

    def __init__(self, in_features: int, macro: MacroConfig):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.dropout_f = nn.Dropout(macro.dropout_f)
        self.embedding = nn.Linear(in_features, macro.embed_dim)
        self.dropout_g = nn.Dropout(macro.dropout_g)
        self.classifier = nn.Linear(macro.embed_dim, macro.num_ids)

    def forward(self, x: torch.Tensor) -> dict:
        f = self.pool(x).flatten(1)
        g = self.embedding(self.dropout_f(f))
        h = self.classifier(self.dropout_g(g))
        return dict(f=f, g=g, h=h)

    def classifier_layers(self) -> list:
        return [self.classifier]


class PCBHead(nn.Module):
    '''
    Part-pooled head: the feature map is average pooled into ``pcb_stripes``
    horizontal stripes, each with its own embedding and identity classifier.
    ``g`` concatenates the stripe embeddings, ``h`` stacks the stripe logits
    as (N, stripes, num_ids).
    '''

    def __init__(self, in_features: int, macro: MacroConfig):
        super().__init__()
        self.stripes = macro.pcb_stripes
        self.pool = nn.AdaptiveAvgPool2d((self.stripes, 1))
        self.dropout_f = nn.Dropout(macro.dropout_f)
        self.embeddings = nn.ModuleList([nn.Linear(in_features, macro.embed_dim) for _ in range(self.stripes)])
        self.dropout_g = nn.Dropout(macro.dropout_g)
        self.classifiers = nn.ModuleList([nn.Linear(macro.embed_dim, macro.num_ids) for _ in range(self.stripes)])

    def forward(self, x: torch.Tensor) -> dict:
        if x.shape[2] % self.stripes:
            raise ValueError(f'feature height {x.shape[2]} is not divisible by {self.stripes} stripes')
        parts = self.pool(x).flatten(2).transpose(1, 2)
        dropped = self.dropout_f(parts)
        g = [emb(dropped[:, i]) for i, emb in enumerate(self.embeddings)]
        h = [cls(self.dropout_g(gi)) for gi, cls in zip(g, self.classifiers)]
        return dict(f=parts.flatten(1), g=torch.cat(g, dim=1), h=torch.stack(h, dim=1))

    def classifier_layers(self) -> list:
        return list(self.classifiers)


def build_head(in_features: int, macro: MacroConfig) -> nn.Module:
    return PCBHead(in_features, macro) if macro.head == 'pcb' else Head(in_features, macro)


class CellBase(nn.Module):
    '''
    Input projections and output projection shared by search and final cells.
    Subclasses implement `block_outputs`.
    '''

    def __init__(self, slot: CellSlot, num_blocks: int):
        super().__init__()
        self.slot = slot
        self.num_blocks = num_blocks
        self.preprocess0 = ReLUConvBN(slot.c_prev_prev, slot.width, stride=2 if slot.reduction_prev else 1)
        self.preprocess1 = ReLUConvBN(slot.c_prev, slot.width)
        self.project = ReLUConvBN(num_blocks * slot.width, slot.width)

    @property
    def reduction(self) -> bool:
        return self.slot.reduction

    def block_outputs(self, states: list, *args) -> list:
        raise NotImplementedError

    def concat_blocks(self, s0, s1, *args) -> torch.Tensor:
        '''Concatenated block outputs, before the output projection.'''
        states = [self.preprocess0(s0), self.preprocess1(s1)]
        return torch.cat(self.block_outputs(states, *args), dim=1)

    def forward(self, s0, s1, *args):
        return self.project(self.concat_blocks(s0, s1, *args))


class FinalCell(CellBase):
    '''Discrete cell: each block applies one op to each of its two chosen inputs.'''

    def __init__(self, slot: CellSlot, blocks: tuple, macro: MacroConfig):
        super().__init__(slot, len(blocks))
        self.blocks_spec = tuple(blocks)
        self.blocks = nn.ModuleList()
        for spec in self.blocks_spec:
            self.blocks.append(nn.ModuleList([
                build_op(spec.op1, slot.width, edge_stride(slot, spec.input1), macro),
                build_op(spec.op2, slot.width, edge_stride(slot, spec.input2), macro),
            ]))

    def block_outputs(self, states: list) -> list:
        for spec, (op1, op2) in zip(self.blocks_spec, self.blocks):
            states.append(op1(states[spec.input1]) + op2(states[spec.input2]))
        return states[2:]


def init_weights(model: nn.Module, seed: int):
    '''
    Seeded initialization: fan-out scaled Gaussian for convolutions and
    linear layers, unit/zero batch norm, N(0, 0.001) classifier with zero bias.
    The global torch RNG state is left untouched.
    '''
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        for m in model.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_normal_(m.weight, mode='fan_out', nonlinearity='relu')
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
        head = getattr(model, 'head', None)
        if isinstance(head, (Head, PCBHead)):
            for layer in head.classifier_layers():
                nn.init.normal_(layer.weight, std=0.001)
                nn.init.zeros_(layer.bias)


class ReIDNetwork(nn.Module):
    '''
    Final network of a genotype: stem, four stages of normal/reduction cells
    and the f->g->h retrieval head. ``forward`` returns ``dict(f, g, h)``.
    '''

    def __init__(self, genotype: Genotype, macro: MacroConfig, seed: int = 0):
        super().__init__()
        if genotype.B != macro.B:
            raise ValueError(f'genotype has B={genotype.B} but the macro config expects B={macro.B}')
        macro.check_space(op for cell in (genotype.normal, genotype.reduction)
                          for blk in cell for op in (blk.op1, blk.op2))
        self.genotype = genotype
        self.macro = macro
        with torch.random.fork_rng(devices=[]):
            self.stem = Stem(macro)
            self.cells = nn.ModuleList([FinalCell(slot, genotype.cell(slot.reduction), macro)
                                        for slot in cell_plan(macro)])
            self.head = build_head(macro.feature_dim, macro)
        init_weights(self, seed)

    def backbone(self, x: torch.Tensor) -> torch.Tensor:
        s0 = s1 = self.stem(x)
        for cell in self.cells:
            s0, s1 = s1, cell(s0, s1)
        return s1

    def forward(self, x: torch.Tensor) -> dict:
        return self.head(self.backbone(x))

    def inherit_from(self, supernet):
        '''
        Copy weights (and batch-norm statistics) of the selected ops, the
        projections, the stem and the head from a supernet with the same macro
        configuration.
        '''
        if supernet.macro != self.macro:
            raise ValueError('supernet and network were built from different macro configurations')
        self.stem.load_state_dict(supernet.stem.state_dict())
        self.head.load_state_dict(supernet.head.state_dict())
        for cell, scell in zip(self.cells, supernet.cells):
            for name in ('preprocess0', 'preprocess1', 'project'):
                getattr(cell, name).load_state_dict(getattr(scell, name).state_dict())
            for i, (spec, ops) in enumerate(zip(cell.blocks_spec, cell.blocks)):
                for op, (idx, kind) in zip(ops, ((spec.input1, spec.op1), (spec.input2, spec.op2))):
                    edge = scell.edges[i][idx]
                    op.load_state_dict(edge.ops[edge.kinds.index(kind)].state_dict())
        return self

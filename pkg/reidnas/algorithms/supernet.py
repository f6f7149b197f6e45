from __future__ import annotations

import torch
import torch.nn as nn

from reidnas.algorithms.network import CellBase, CellSlot, Stem, build_head, cell_plan, edge_stride, init_weights
from reidnas.algorithms.operations import MixedEdge
from reidnas.datatypes.alpha import AlphaParams, CELL_TYPES, edge_index, num_edges
from reidnas.datatypes.config import MacroConfig
from reidnas.datatypes.genotype import Genotype, num_candidate_inputs, space_ops


class SearchCell(CellBase):
    '''
    Relaxed cell. Block i sums the mixed edges from all of its candidate
    inputs; ``weights`` holds one row of mixing weights per edge.
    '''

    def __init__(self, slot: CellSlot, macro: MacroConfig, ops: tuple):
        super().__init__(slot, macro.B)
        self.edges = nn.ModuleList()
        for i in range(macro.B):
            self.edges.append(nn.ModuleList([
                MixedEdge(slot.width, edge_stride(slot, h), ops, macro)
                for h in range(num_candidate_inputs(i))
            ]))

    def block_outputs(self, states: list, weights: torch.Tensor) -> list:
        for i, edges in enumerate(self.edges):
            states.append(sum(edge(states[h], weights[edge_index(i, h)]) for h, edge in enumerate(edges)))
        return states[2:]


class Supernet(nn.Module):
    '''
    Search network holding both the operation weights (omega) and the
    architecture logits (alpha, initialized to zero).

    ``forward(x)`` mixes every edge with softmax(alpha); ``forward(x, weights)``
    uses the given per-cell-type mixing weights instead.
    '''

    def __init__(self, macro: MacroConfig, space: str = 'reid', seed: int = 0):
        super().__init__()
        self.macro = macro
        self.space = space
        self.ops = space_ops(space)
        macro.check_space(self.ops)
        with torch.random.fork_rng(devices=[]):
            self.stem = Stem(macro)
            self.cells = nn.ModuleList([SearchCell(slot, macro, self.ops) for slot in cell_plan(macro)])
            self.head = build_head(macro.feature_dim, macro)
        init_weights(self, seed)

        shape = (num_edges(macro.B), len(self.ops))
        self.alpha_normal = nn.Parameter(torch.zeros(shape))
        self.alpha_reduction = nn.Parameter(torch.zeros(shape))

    def arch_parameters(self) -> list:
        return [self.alpha_normal, self.alpha_reduction]

    def weight_parameters(self) -> list:
        arch = {id(p) for p in self.arch_parameters()}
        return [p for p in self.parameters() if id(p) not in arch]

    @property
    def alpha(self) -> AlphaParams:
        return AlphaParams(self.alpha_normal.detach().clone(), self.alpha_reduction.detach().clone(), self.space)

    def load_alpha(self, alpha: AlphaParams):
        if alpha.space != self.space or alpha.B != self.macro.B:
            raise ValueError(f'alpha (space={alpha.space}, B={alpha.B}) does not fit this supernet '
                             f'(space={self.space}, B={self.macro.B})')
        with torch.no_grad():
            self.alpha_normal.copy_(alpha.normal)
            self.alpha_reduction.copy_(alpha.reduction)

    def mixing_weights(self) -> dict:
        return dict(normal=torch.softmax(self.alpha_normal, dim=-1),
                    reduction=torch.softmax(self.alpha_reduction, dim=-1))

    def discretize(self, genotype: Genotype) -> dict:
        '''
        Mixing weights that turn the supernet into the network of ``genotype``:
        one-hot on the selected op of each selected edge, zero elsewhere.
        '''
        if genotype.B != self.macro.B:
            raise ValueError(f'genotype has B={genotype.B}, supernet has B={self.macro.B}')
        weights = dict()
        for name in CELL_TYPES:
            w = torch.zeros_like(self.alpha_normal)
            for i, spec in enumerate(genotype.cell(name == 'reduction')):
                for idx, op in ((spec.input1, spec.op1), (spec.input2, spec.op2)):
                    if op not in self.ops:
                        raise ValueError(f'{op.tag} is not part of the {self.space} search space')
                    w[edge_index(i, idx), self.ops.index(op)] += 1.
            weights[name] = w.detach()
        return weights

    def backbone(self, x: torch.Tensor, weights: dict = None) -> torch.Tensor:
        weights = self.mixing_weights() if weights is None else weights
        s0 = s1 = self.stem(x)
        for cell in self.cells:
            w = weights['reduction'] if cell.reduction else weights['normal']
            s0, s1 = s1, cell(s0, s1, w)
        return s1

    def forward(self, x: torch.Tensor, weights: dict = None) -> dict:
        return self.head(self.backbone(x, weights))

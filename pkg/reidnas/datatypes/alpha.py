from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from reidnas.datatypes.genotype import num_candidate_inputs, space_ops

CELL_TYPES = ('normal', 'reduction')


def num_edges(num_blocks: int) -> int:
    '''Total (candidate-input, block) edges of one cell.'''
    return sum(num_candidate_inputs(i) for i in range(num_blocks))


def edge_index(block: int, input_idx: int) -> int:
    '''Row of the logit matrix holding the edge from ``input_idx`` into ``block``.'''
    return num_edges(block) + input_idx


@dataclass
class AlphaParams:
    '''
    Architecture logits. Each cell type holds a matrix with one row per
    (candidate input, block) edge and one column per operation of the search
    space, in ``space_ops(space)`` order.

    Shapes
    ------
    normal, reduction: (num_edges(B), len(space_ops(space)))
    '''
    normal: torch.Tensor
    reduction: torch.Tensor
    space: str = 'reid'

    def __post_init__(self):
        shape = (num_edges(self.B), len(self.ops))
        for name in CELL_TYPES:
            logits = torch.as_tensor(getattr(self, name))
            if tuple(logits.shape) != shape:
                raise ValueError(f'{name} logits must have shape {shape}, got {tuple(logits.shape)}')
            setattr(self, name, logits)

    @property
    def ops(self) -> tuple:
        return space_ops(self.space)

    @property
    def B(self) -> int:
        rows = self.normal.shape[0]
        b = 0
        while num_edges(b) < rows:
            b += 1
        if num_edges(b) != rows:
            raise ValueError(f'{rows} logit rows do not correspond to a whole number of blocks')
        return b

    @classmethod
    def zeros(cls, num_blocks: int, space: str = 'reid', dtype=torch.float32) -> AlphaParams:
        shape = (num_edges(num_blocks), len(space_ops(space)))
        return cls(torch.zeros(shape, dtype=dtype), torch.zeros(shape, dtype=dtype), space)

    def cell(self, name: str) -> torch.Tensor:
        if name not in CELL_TYPES:
            raise ValueError(f'unknown cell type {name!r}')
        return getattr(self, name)

    def edge_logits(self, name: str, block: int, input_idx: int) -> torch.Tensor:
        return self.cell(name)[edge_index(block, input_idx)]

    def is_finite(self) -> bool:
        return all(bool(torch.isfinite(self.cell(n)).all()) for n in CELL_TYPES)

    def numpy(self) -> dict:
        return {n: self.cell(n).detach().cpu().double().numpy() for n in CELL_TYPES}

    def clone(self) -> AlphaParams:
        return AlphaParams(self.normal.detach().clone(), self.reduction.detach().clone(), self.space)

    def state_dict(self) -> dict:
        return dict(space=self.space, normal=self.normal.detach().cpu(), reduction=self.reduction.detach().cpu())

    @classmethod
    def from_state_dict(cls, state: dict) -> AlphaParams:
        return cls(state['normal'], state['reduction'], state.get('space', 'reid'))

    @classmethod
    def random(cls, num_blocks: int, rng: np.random.Generator, space: str = 'reid', scale=1.0) -> AlphaParams:
        shape = (num_edges(num_blocks), len(space_ops(space)))
        return cls(torch.as_tensor(rng.normal(0., scale, shape)),
                   torch.as_tensor(rng.normal(0., scale, shape)), space)

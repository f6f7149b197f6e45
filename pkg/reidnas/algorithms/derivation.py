from __future__ import annotations

import numpy as np

from reidnas.datatypes.alpha import AlphaParams, CELL_TYPES, edge_index
from reidnas.datatypes.genotype import BlockSpec, Genotype, OpKind, num_candidate_inputs


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def edge_strengths(alpha: AlphaParams, cell: str) -> tuple:
    '''
    Mixing weights and per-edge strength of one cell type.

    Returns
    -------
    weights : np.ndarray
        softmax over ops, shape (num_edges, num_ops), float64
    strength : np.ndarray
        max weight over non-ZERO ops, shape (num_edges,)
    best_op : np.ndarray
        column of that max (first one on ties), shape (num_edges,)
    '''
    weights = _softmax(alpha.numpy()[cell])
    nonzero = np.array([op != OpKind.ZERO for op in alpha.ops])
    masked = np.where(nonzero[None, :], weights, -np.inf)
    best_op = masked.argmax(axis=1)
    strength = masked[np.arange(len(masked)), best_op]
    return weights, strength, best_op


def _derive_cell(alpha: AlphaParams, cell: str) -> list:
    _, strength, best_op = edge_strengths(alpha, cell)
    ops = alpha.ops
    blocks = []
    for i in range(alpha.B):
        candidates = list(range(num_candidate_inputs(i)))
        candidates.sort(key=lambda h: (-strength[edge_index(i, h)], h))
        first, second = candidates[:2]
        blocks.append(BlockSpec(first, second,
                                ops[best_op[edge_index(i, first)]],
                                ops[best_op[edge_index(i, second)]]))
    return blocks


def derive_genotype(alpha: AlphaParams) -> Genotype:
    '''
    Discretize architecture logits. Per block, the two candidate inputs with the
    largest strength (max softmax weight over non-ZERO ops) are kept, each with
    its strongest non-ZERO op. Ties go to the lower input index, then to the
    lower OpKind ordinal.

    Parameters
    ----------
    alpha : AlphaParams
        Finite architecture logits.

    Returns
    -------
    Genotype
    '''
    if not alpha.is_finite():
        raise ValueError('architecture logits contain non-finite values')
    if OpKind.ZERO in alpha.ops and len(alpha.ops) == 1:
        raise ValueError('search space holds no operation besides zero')
    normal, reduction = (_derive_cell(alpha, name) for name in CELL_TYPES)
    return Genotype(normal, reduction, space=alpha.space)

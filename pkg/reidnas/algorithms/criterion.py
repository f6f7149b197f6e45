from __future__ import annotations

import torch
import torch.nn.functional as F

from reidnas.datatypes.config import LossWeights


class DivergenceError(RuntimeError):
    '''A loss became non-finite during search or training.'''

    def __init__(self, message: str, epoch: int = -1, step: int = -1):
        super().__init__(f'{message} (epoch {epoch}, step {step})')
        self.epoch = epoch
        self.step = step


def check_finite(loss: torch.Tensor, where: str, epoch: int = -1, step: int = -1):
    if not bool(torch.isfinite(loss).all()):
        raise DivergenceError(f'non-finite {where} loss {loss.detach().cpu().tolist()}', epoch, step)


def _reduce(loss: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == 'sum':
        return loss.sum()
    if reduction == 'mean':
        return loss.mean()
    raise ValueError(f'reduction must be sum or mean (given {reduction})')


def softmax_ce(h: torch.Tensor, labels: torch.Tensor, reduction: str = 'sum') -> torch.Tensor:
    '''
    Softmax cross-entropy over identity logits, summed over the batch by
    default.

    Parameters
    ----------
    h : torch.Tensor
        (N,C) logits
    labels : torch.Tensor
        (N,) identity indices in [0,C)
    '''
    labels = torch.as_tensor(labels, device=h.device).long()
    if labels.numel() and (labels.min() < 0 or labels.max() >= h.shape[1]):
        raise ValueError(f'labels must be in [0,{h.shape[1]}), got range '
                         f'[{labels.min().item()},{labels.max().item()}]')
    return _reduce(F.cross_entropy(h, labels, reduction='none'), reduction)


def stripe_ce(h: torch.Tensor, labels: torch.Tensor, reduction: str = 'sum') -> torch.Tensor:
    '''Cross-entropy summed over the (N,P,C) stripe logits of a part-pooled head.'''
    if h.dim() != 3:
        raise ValueError(f'expected stripe logits of shape (N,P,C), got {tuple(h.shape)}')
    return sum(softmax_ce(h[:, i], labels, reduction) for i in range(h.shape[1]))


def pairwise_distances(f: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    '''Euclidean distances (N,N) with the square root stabilized at ``eps``.'''
    diff = f[:, None, :] - f[None, :, :]
    return diff.pow(2).sum(dim=-1).clamp(min=eps).sqrt()


def hard_example_mining(dist: torch.Tensor, labels: torch.Tensor) -> tuple:
    '''
    Hardest positive (largest same-identity distance, self excluded) and
    hardest negative (smallest different-identity distance) per anchor.

    Returns
    -------
    (torch.Tensor, torch.Tensor)
        d_p, d_n of shape (N,)
    '''
    labels = torch.as_tensor(labels, device=dist.device)
    same = labels[:, None] == labels[None, :]
    eye = torch.eye(len(labels), dtype=torch.bool, device=dist.device)
    positive = same & ~eye
    negative = ~same
    if not bool(positive.any(dim=1).all()):
        raise ValueError('every identity in the batch needs at least two samples for triplet mining')
    if not bool(negative.any(dim=1).all()):
        raise ValueError('triplet mining needs at least two identities in the batch')
    d_p = dist.masked_fill(~positive, float('-inf')).max(dim=1).values
    d_n = dist.masked_fill(~negative, float('inf')).min(dim=1).values
    return d_p, d_n


def batch_hard_triplet(f: torch.Tensor, labels: torch.Tensor, margin: float = 0.3,
                       reduction: str = 'sum', literal: bool = False) -> torch.Tensor:
    '''
    Batch-hard triplet loss, summed over anchors by default.

    The per-anchor term is the hinge max(0, margin + d_p - d_n). With
    ``literal=True`` it is max(margin, d_p - d_n) instead.
    '''
    if margin < 0:
        raise ValueError(f'margin must be non-negative (given {margin})')
    d_p, d_n = hard_example_mining(pairwise_distances(f), labels)
    if literal:
        loss = torch.clamp(d_p - d_n, min=margin)
    else:
        loss = F.relu(margin + d_p - d_n)
    return _reduce(loss, reduction)


def mixture_loss(ce, tri, w: LossWeights):
    '''lambda * ce + (1 - lambda) * tri'''
    return w.lam * ce + (1. - w.lam) * tri


class RetrievalLoss(torch.nn.Module):
    """
    Retrieval objective on the network output dict (``g`` embeddings and
    ``h`` logits).

    ``mode`` selects the objective: ``mixture`` (cross-entropy on h plus
    batch-hard triplet on g), ``triplet`` or ``softmax`` alone. Stripe
    logits (N,P,C) of a part-pooled head sum their cross-entropies.
    """

    def __init__(self, weights: LossWeights = LossWeights(), mode: str = 'mixture',
                 reduction: str = 'mean', literal: bool = False):
        super().__init__()
        if mode not in ('mixture', 'triplet', 'softmax'):
            raise ValueError(f'loss mode must be mixture, triplet or softmax (given {mode})')
        self.weights = weights
        self.mode = mode
        self.reduction = reduction
        self.literal = literal

    def forward(self, out: dict, labels: torch.Tensor) -> tuple:
        '''
        Returns
        -------
        (torch.Tensor, dict)
            the loss and its ``ce``/``tri`` parts as floats
        '''
        parts = dict()
        if self.mode in ('mixture', 'softmax'):
            h = out['h']
            ce = stripe_ce(h, labels, self.reduction) if h.dim() == 3 else softmax_ce(h, labels, self.reduction)
            parts['ce'] = ce.item()
        if self.mode in ('mixture', 'triplet'):
            tri = batch_hard_triplet(out['g'], labels, self.weights.margin, self.reduction, self.literal)
            parts['tri'] = tri.item()
        if self.mode == 'mixture':
            loss = mixture_loss(ce, tri, self.weights)
        else:
            loss = ce if self.mode == 'softmax' else tri
        return loss, parts

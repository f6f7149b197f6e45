from __future__ import annotations

import numpy as np
from torch.utils.data import Sampler


def pk_sample(labels, P: int, K: int, rng: np.random.Generator, identities=None) -> np.ndarray:
    '''
    Class-balanced draw of P identities times K images.

    Identities are drawn uniformly without replacement (from ``identities`` if
    given). Each identity contributes K images, without replacement when it
    has at least K, otherwise all of its images once plus random repeats.

    Parameters
    ----------
    labels : array-like
        identity label of every dataset entry
    P, K : int
    rng : np.random.Generator

    Returns
    -------
    np.ndarray
        (P*K,) dataset positions, grouped by identity
    '''
    labels = np.asarray(labels)
    if P < 1 or K < 1:
        raise ValueError(f'P and K must be positive (given P={P}, K={K})')
    if identities is None:
        identities = np.unique(labels)
        if len(identities) < P:
            raise ValueError(f'dataset has {len(identities)} identities, fewer than P={P}')
        identities = rng.choice(identities, P, replace=False)
    if len(identities) != P:
        raise ValueError(f'expected {P} identities, got {len(identities)}')

    batch = []
    for pid in identities:
        pool = np.flatnonzero(labels == pid)
        if len(pool) == 0:
            raise ValueError(f'identity {pid} has no images')
        if len(pool) >= K:
            picks = rng.choice(pool, K, replace=False)
        else:
            picks = np.concatenate([pool, rng.choice(pool, K - len(pool), replace=True)])
            picks = rng.permutation(picks)
        batch.append(picks)
    return np.concatenate(batch)


class PKSampler(Sampler):
    """
    Batch sampler for `torch.utils.data.DataLoader` yielding P*K positions per
    batch. An epoch visits every identity at most once, in an order fixed by
    ``(seed, epoch)``, giving ``#identities // P`` batches.
    """

    def __init__(self, labels, P: int, K: int, seed: int = 0):
        self.labels = np.asarray(labels)
        self.P = P
        self.K = K
        self.seed = seed
        self.epoch = 0
        self.identities = np.unique(self.labels)
        if len(self.identities) < P:
            raise ValueError(f'dataset has {len(self.identities)} identities, fewer than P={P}')

    def set_epoch(self, epoch: int):
        self.epoch = epoch

    def __len__(self):
        return len(self.identities) // self.P

    def __iter__(self):
        rng = np.random.default_rng([self.seed, self.epoch])
        order = rng.permutation(self.identities)
        for b in range(len(self)):
            ids = order[b * self.P:(b + 1) * self.P]
            yield pk_sample(self.labels, self.P, self.K, rng, identities=ids).tolist()

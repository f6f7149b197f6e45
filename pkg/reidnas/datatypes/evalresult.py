from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REPORT_RANKS = (1, 5, 10)


class NoValidQueryError(ValueError):
    '''No query has a matching gallery entry, so CMC and mAP are undefined.'''


@dataclass
class EvalResult:
    '''
    Retrieval metrics of one query/gallery evaluation.

    Shapes
    ------
    dist: (Q,G) Euclidean distances
    cmc: (G,) fraction of valid queries matched within the top k+1
    ap: (Q,) average precision, 0 for invalid queries
    valid: (Q,) whether the query had a match in the filtered gallery
    '''
    dist: np.ndarray
    cmc: np.ndarray
    map: float
    ap: np.ndarray
    valid: np.ndarray

    @property
    def valid_queries(self) -> int:
        return int(self.valid.sum())

    def rank(self, k: int) -> float:
        '''CMC at rank k (1-based), saturating at the gallery size.'''
        if k < 1:
            raise ValueError(f'rank must be >= 1 (given {k})')
        return float(self.cmc[min(k, len(self.cmc)) - 1])

    def report(self) -> dict:
        return dict(cmc={str(k): self.rank(k) for k in REPORT_RANKS},
                    map=float(self.map),
                    valid_queries=self.valid_queries)

    def __str__(self):
        ranks = ', '.join(f'rank-{k} {self.rank(k):.1%}' for k in REPORT_RANKS)
        return f'mAP {self.map:.1%}, {ranks} ({self.valid_queries} valid queries)'

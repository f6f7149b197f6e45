from __future__ import annotations

import numpy as np
import torch

from reidnas.datatypes.evalresult import EvalResult, NoValidQueryError


@torch.no_grad()
def extract_features(network: torch.nn.Module, images, batch_size: int = 32, device=None) -> torch.Tensor:
    '''
    Embedding features (g) of ``images`` with the network in evaluation mode.
    The previous train/eval mode is restored afterwards.

    Parameters
    ----------
    network : torch.nn.Module
        returns a dict holding ``g`` from its forward pass
    images : torch.Tensor
        (N,3,H,W)
    batch_size : int
        forward pass chunk size; the result does not depend on it

    Returns
    -------
    torch.Tensor
        (N, macro.retrieval_dim) on the CPU
    '''
    if images.dim() != 4 or images.shape[1] != 3:
        raise ValueError(f'expected images of shape (N,3,H,W), got {tuple(images.shape)}')
    if batch_size < 1:
        raise ValueError(f'batch_size must be positive (given {batch_size})')
    if device is None:
        device = next(network.parameters()).device
    dtype = next(network.parameters()).dtype

    was_training = network.training
    network.eval()
    try:
        feats = [network(images[i:i + batch_size].to(device=device, dtype=dtype))['g'].cpu()
                 for i in range(0, len(images), batch_size)]
    finally:
        network.train(was_training)
    if not feats:
        return torch.zeros(0, 0)
    return torch.cat(feats)


def euclidean_distances(qf, gf, chunk: int = 256) -> np.ndarray:
    '''(Q,G) Euclidean distances in float64, computed in query chunks.'''
    qf = np.asarray(qf, dtype=np.float64)
    gf = np.asarray(gf, dtype=np.float64)
    if qf.ndim != 2 or gf.ndim != 2 or qf.shape[1] != gf.shape[1]:
        raise ValueError(f'feature shapes do not match: {qf.shape} vs {gf.shape}')
    dist = np.empty((len(qf), len(gf)))
    for i in range(0, len(qf), chunk):
        diff = qf[i:i + chunk, None, :] - gf[None, :, :]
        dist[i:i + chunk] = np.sqrt((diff ** 2).sum(axis=-1))
    return dist


def average_precision(matches: np.ndarray) -> float:
    '''Mean of the precision at each correct hit of a ranked 0/1 list.'''
    hits = np.flatnonzero(matches)
    if len(hits) == 0:
        return 0.
    return float(np.mean(np.arange(1, len(hits) + 1) / (hits + 1)))


def evaluate(qf, q_ids, q_cams, gf, g_ids, g_cams, camera_filter: bool = True) -> EvalResult:
    '''
    CMC curve and mAP of a query set against a gallery.

    Gallery entries with the query's identity and camera are dropped from that
    query's ranking when ``camera_filter`` is on and both camera ids are known
    (>= 0). A query is valid when a matching identity remains. Distance ties
    are ranked by gallery index.

    Returns
    -------
    EvalResult

    Raises
    ------
    NoValidQueryError
        when no query is valid
    '''
    q_ids, q_cams = np.asarray(q_ids), np.asarray(q_cams)
    g_ids, g_cams = np.asarray(g_ids), np.asarray(g_cams)
    dist = euclidean_distances(qf, gf)
    num_q, num_g = dist.shape
    if len(q_ids) != num_q or len(q_cams) != num_q or len(g_ids) != num_g or len(g_cams) != num_g:
        raise ValueError('identity/camera arrays do not match the feature counts')

    order = np.argsort(dist, axis=1, kind='stable')
    ap = np.zeros(num_q)
    valid = np.zeros(num_q, dtype=bool)
    cmc = np.zeros(num_g)
    for i in range(num_q):
        ranked = order[i]
        keep = np.ones(num_g, dtype=bool)
        if camera_filter and q_cams[i] >= 0:
            keep = ~((g_ids[ranked] == q_ids[i]) & (g_cams[ranked] == q_cams[i]))
        matches = (g_ids[ranked] == q_ids[i])[keep]
        if not matches.any():
            continue
        valid[i] = True
        ap[i] = average_precision(matches)
        first = np.argmax(matches)
        cmc[first:] += 1.

    num_valid = int(valid.sum())
    if num_valid == 0:
        raise NoValidQueryError('no query has a matching identity in the gallery')
    return EvalResult(dist=dist, cmc=cmc / num_valid, map=float(ap[valid].mean()), ap=ap, valid=valid)


def split_query_gallery(labels, cams) -> tuple:
    '''
    First image of every (identity, camera) pair becomes a query, the rest
    the gallery.

    Returns
    -------
    (np.ndarray, np.ndarray)
        query positions, gallery positions
    '''
    labels, cams = np.asarray(labels), np.asarray(cams)
    seen = set()
    query, gallery = [], []
    for i, key in enumerate(zip(labels.tolist(), cams.tolist())):
        if key in seen:
            gallery.append(i)
        else:
            seen.add(key)
            query.append(i)
    return np.array(query, dtype=np.int64), np.array(gallery, dtype=np.int64)

import math

import numpy as np
import pytest
import torch

from reidnas.algorithms import (DivergenceError, RetrievalLoss, batch_hard_triplet, mixture_loss, softmax_ce,
                                stripe_ce)
from reidnas.algorithms.criterion import check_finite, hard_example_mining, pairwise_distances
from reidnas.datatypes import LossWeights
from tests.fixtures import rng, torch_rng


def test_softmax_ce_examples(rng):
    assert softmax_ce(torch.zeros(1, 4), torch.tensor([0])).item() == pytest.approx(math.log(4))
    h = torch.tensor([[100., 0., 0.]], dtype=torch.float64)
    assert softmax_ce(h, torch.tensor([0])).item() < 1e-30

    h = rng.normal(size=(8, 5))
    labels = rng.integers(5, size=8)
    expected = 0.
    for i in range(8):
        expected -= h[i, labels[i]] - math.log(sum(math.exp(v) for v in h[i]))
    loss = softmax_ce(torch.as_tensor(h), torch.as_tensor(labels))
    assert loss.item() == pytest.approx(expected, abs=1e-10)
    assert softmax_ce(torch.as_tensor(h), torch.as_tensor(labels), 'mean').item() == pytest.approx(expected / 8)
    shifted = torch.as_tensor(h + rng.normal(size=(8, 1)))
    assert softmax_ce(shifted, torch.as_tensor(labels)).item() == pytest.approx(expected, abs=1e-10)


def test_softmax_ce_invalid():
    with pytest.raises(ValueError):
        softmax_ce(torch.zeros(2, 4), torch.tensor([0, 4]))
    with pytest.raises(ValueError):
        softmax_ce(torch.zeros(2, 4), torch.tensor([-1, 0]))
    with pytest.raises(ValueError):
        softmax_ce(torch.zeros(2, 4), torch.tensor([0, 1]), 'max')


def test_triplet_examples():
    labels = torch.tensor([0, 0, 1, 1])
    inactive = torch.tensor([[0., 0.], [1., 0.], [0., 2.], [1., 2.]], dtype=torch.float64)
    d_p, d_n = hard_example_mining(pairwise_distances(inactive), labels)
    assert torch.allclose(d_p, torch.ones(4, dtype=torch.float64))
    assert torch.allclose(d_n, torch.full((4,), 2., dtype=torch.float64))
    assert batch_hard_triplet(inactive, labels, 0.3).item() == 0.

    active = torch.tensor([[0., 0.], [0., 2.], [1., 0.], [1., 2.]], dtype=torch.float64)
    assert batch_hard_triplet(active, labels, 0.3).item() == pytest.approx(5.2)
    assert batch_hard_triplet(active, labels, 0.3, 'mean').item() == pytest.approx(1.3)
    assert batch_hard_triplet(inactive, labels, 0.3, literal=True).item() == pytest.approx(4 * 0.3)
    assert batch_hard_triplet(active, labels, 0.3, literal=True).item() == pytest.approx(4.)


def test_triplet_mining_oracle(rng):
    labels = np.repeat(np.arange(4), 4)
    for _ in range(100):
        f = rng.normal(size=(16, 8))
        d_p, d_n = hard_example_mining(pairwise_distances(torch.as_tensor(f)), torch.as_tensor(labels))
        for i in range(16):
            pos = [np.linalg.norm(f[i] - f[j]) for j in range(16) if j != i and labels[j] == labels[i]]
            neg = [np.linalg.norm(f[i] - f[j]) for j in range(16) if labels[j] != labels[i]]
            assert d_p[i].item() == pytest.approx(max(pos), abs=1e-10)
            assert d_n[i].item() == pytest.approx(min(neg), abs=1e-10)


def test_triplet_permutation_invariance(rng):
    labels = np.repeat(np.arange(4), 4)
    for _ in range(20):
        f = rng.normal(size=(16, 8))
        perm = rng.permutation(16)
        loss = batch_hard_triplet(torch.as_tensor(f), torch.as_tensor(labels), 1.0)
        permuted = batch_hard_triplet(torch.as_tensor(f[perm]), torch.as_tensor(labels[perm]), 1.0)
        assert loss.item() == pytest.approx(permuted.item(), abs=1e-10)


def test_triplet_invalid():
    f = torch.zeros(3, 2)
    with pytest.raises(ValueError):
        batch_hard_triplet(f, torch.tensor([0, 0, 1]))
    with pytest.raises(ValueError):
        batch_hard_triplet(f, torch.tensor([0, 0, 0]))
    with pytest.raises(ValueError):
        batch_hard_triplet(torch.zeros(4, 2), torch.tensor([0, 0, 1, 1]), margin=-1.)


def test_mixture_loss():
    assert mixture_loss(2., 1., LossWeights(lam=0.5)) == 1.5
    assert mixture_loss(2., 1., LossWeights(lam=1.)) == 2.
    assert mixture_loss(2., 1., LossWeights(lam=0.)) == 1.
    values = [mixture_loss(3., -1., LossWeights(lam=lam)) for lam in (0., 0.25, 0.5)]
    assert values[1] - values[0] == pytest.approx(values[2] - values[1])
    with pytest.raises(ValueError):
        LossWeights(lam=1.5)
    with pytest.raises(ValueError):
        LossWeights(margin=-0.1)


def test_retrieval_loss(torch_rng):
    labels = torch.tensor([0, 0, 1, 1])
    out = dict(g=torch.randn(4, 8, generator=torch_rng), h=torch.randn(4, 3, generator=torch_rng))
    w = LossWeights(lam=0.25, margin=0.3)
    loss, parts = RetrievalLoss(w, 'mixture', 'sum')(out, labels)
    assert set(parts) == {'ce', 'tri'}
    assert loss.item() == pytest.approx(0.25 * parts['ce'] + 0.75 * parts['tri'], rel=1e-5)
    loss, parts = RetrievalLoss(w, 'softmax')(out, labels)
    assert set(parts) == {'ce'} and loss.item() == pytest.approx(parts['ce'])
    loss, parts = RetrievalLoss(w, 'triplet')(out, labels)
    assert set(parts) == {'tri'} and loss.item() == pytest.approx(parts['tri'])
    with pytest.raises(ValueError):
        RetrievalLoss(w, 'contrastive')


def test_stripe_ce(torch_rng):
    labels = torch.tensor([0, 0, 1, 1, 2, 2])
    h = torch.randn(6, 3, 4, generator=torch_rng)
    expected = sum(softmax_ce(h[:, i], labels, 'mean') for i in range(3))
    assert torch.allclose(stripe_ce(h, labels, 'mean'), expected)
    assert torch.allclose(stripe_ce(h[:, :1], labels), softmax_ce(h[:, 0], labels))
    with pytest.raises(ValueError):
        stripe_ce(h[:, 0], labels)

    out = dict(g=torch.randn(6, 8, generator=torch_rng), h=h)
    w = LossWeights(lam=0.5)
    loss, parts = RetrievalLoss(w)(out, labels)
    assert parts['ce'] == pytest.approx(expected.item(), rel=1e-6)
    assert loss.item() == pytest.approx(0.5 * parts['ce'] + 0.5 * parts['tri'], rel=1e-5)


def test_check_finite():
    check_finite(torch.tensor(1.), 'training')
    with pytest.raises(DivergenceError) as err:
        check_finite(torch.tensor(float('nan')), 'training', epoch=3, step=7)
    assert err.value.epoch == 3 and err.value.step == 7
    assert isinstance(err.value, RuntimeError)
    with pytest.raises(DivergenceError):
        check_finite(torch.tensor(float('inf')), 'validation')

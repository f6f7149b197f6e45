import numpy as np
import pytest
import torch

from reidnas.datatypes import EvalResult, RetrievalBatch


def test_evalresult_report():
    result = EvalResult(dist=np.zeros((2, 3)), cmc=np.array([0.5, 1., 1.]), map=0.75,
                        ap=np.array([0.5, 1.]), valid=np.array([True, True]))
    assert result.rank(1) == 0.5
    assert result.rank(10) == 1.
    assert result.report() == dict(cmc={'1': 0.5, '5': 1., '10': 1.}, map=0.75, valid_queries=2)
    assert 'mAP 75.0%' in str(result)
    with pytest.raises(ValueError):
        result.rank(0)


def test_retrieval_batch():
    labels = torch.tensor([0, 0, 1, 1, 2, 2])
    batch = RetrievalBatch(torch.zeros(6, 3, 8, 4), labels, torch.arange(6))
    assert len(batch) == 6
    assert torch.equal(batch.cams, torch.full((6,), -1))
    assert batch.is_pk(3, 2)
    assert not batch.is_pk(2, 3)
    assert batch.to(dtype=torch.float64).images.dtype == torch.float64
    with pytest.raises(ValueError):
        RetrievalBatch(torch.zeros(6, 3, 8, 4), labels[:5], torch.arange(6))

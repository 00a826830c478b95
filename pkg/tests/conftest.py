import numpy as np
import pytest

from pvli.embed_index import EncoderSpace, Ranking


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_ranking(query_id: str, model_id: str, ids, start=0.1, step=0.1) -> Ranking:
    """Ranking with synthetic increasing distances in listed order."""
    entries = tuple((cid, round(start + i * step, 10)) for i, cid in enumerate(ids))
    return Ranking(query_id=query_id, model_id=model_id, entries=entries)


def make_space(model_id="m", dim=4, metric="cosine-distance") -> EncoderSpace:
    return EncoderSpace(model_id=model_id, dim=dim, metric=metric)

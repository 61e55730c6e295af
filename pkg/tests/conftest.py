import json

import numpy as np
import pytest

from layercodec.corpus import default_dictionary, make_item
from layercodec.imagery import RgbImage, parse_annotations
from layercodec.networks import build_model


@pytest.fixture(scope="session")
def dictionary():
    return default_dictionary()


def make_corpus_items(seed, count, size=64, max_instances=5, min_instances=1):
    """(name, RgbImage, InstanceMap) triples from the synthetic generator."""
    rng = np.random.default_rng(seed)
    dic = default_dictionary()
    items = []
    for i in range(count):
        samples, objects = make_item(rng, size, max_instances=max_instances,
                                     min_instances=min_instances)
        image = RgbImage.from_array(samples)
        imap = parse_annotations("\n".join(json.dumps(o) for o in objects),
                                 dic, size, size)
        items.append((f"im_{i:03d}", image, imap))
    return items


@pytest.fixture(scope="session")
def desk_model():
    """Untrained desk-width model with fixed seed, shared where training
    is not the point."""
    return build_model(width_divisor=8, seed=0)


@pytest.fixture(scope="session")
def corpus_items():
    return make_corpus_items(seed=42, count=4)

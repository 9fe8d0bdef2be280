"""Shared fixtures: the synthetic corpus and a model trained on it.

The corpus fixture is session-scoped because several suites (maps, feedback,
service, acceptance) need a model that genuinely learned the distortions.
Everything is seeded; fixture values are identical on every run.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

import synthimg
from piqflow.features import extract_feature_matrix
from piqflow.model import fit_arrays, save_model

CORPUS_SEED = 101
SPLIT_SEED = 5
N_PHOTOS = 50
VARIANTS = 6
MODEL_KW = dict(hidden_dim=48, epochs=600, base_lr=2.0, seed=3, mode="mlp")


class CorpusBundle:
    """Corpus images with ground truth, features, split, and trained model."""

    def __init__(self):
        t0 = time.time()
        self.images, self.qualities, self.labels, self.specs = \
            synthimg.build_corpus(N_PHOTOS, VARIANTS, seed=CORPUS_SEED)
        t1 = time.time()
        self.features = extract_feature_matrix(self.images)
        t2 = time.time()
        photos = np.array([s["photo"] for s in self.specs])
        perm = np.random.default_rng(SPLIT_SEED).permutation(N_PHOTOS)
        train_photos = set(perm[: int(N_PHOTOS * 0.8)].tolist())
        self.train_mask = np.array([p in train_photos for p in photos])
        self.test_mask = ~self.train_mask
        self.params = fit_arrays(
            self.features[self.train_mask],
            self.qualities[self.train_mask] / 100.0,
            self.labels[self.train_mask],
            **MODEL_KW,
        )
        t3 = time.time()
        self.timings = {"build": t1 - t0, "features": t2 - t1,
                        "train": t3 - t2, "total": t3 - t0}


@pytest.fixture(scope="session")
def corpus():
    return CorpusBundle()


@pytest.fixture(scope="session")
def corpus_model(corpus):
    return corpus.params


@pytest.fixture(scope="session")
def model_path(corpus_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "corpus-model.json"
    save_model(corpus_model, path)
    return path


@pytest.fixture()
def photo():
    return synthimg.base_photo(4242)


@pytest.fixture()
def small_photo():
    return synthimg.base_photo(4243, size=(48, 64))

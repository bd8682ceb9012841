"""Builders shared by several test modules."""

import numpy as np

from memhmax.hmax import PatchPrototype
from memhmax.imaging import GrayImage
from memhmax.memory import MemoryRecord, MemoryStore, StoreConfig, StoredSample, ThresholdPair
from memhmax.recognition import encode
from memhmax.semantic import ATTRIBUTE_PART, DominantAttribute, normalize, population_stats

PART_ATTRS = {p: [j for j, q in enumerate(ATTRIBUTE_PART) if q == p] for p in ("eyes", "nose", "mouth")}


def random_store(rng, parts, n_samples=None, config=None) -> MemoryStore:
    """A consistent store assembled directly from random parts (no HMAX run).

    ``parts`` maps identity -> dominant part.
    """
    config = config or StoreConfig(lam=float(rng.uniform(0.5, 4)), top_k=int(rng.integers(1, 5)),
                                   beta=float(rng.uniform(0.2, 3)), seed=int(rng.integers(0, 1000)))
    store = MemoryStore(config)
    raws = {i: rng.normal(10, 3, size=(n_samples or int(rng.integers(1, 4)), 13)) for i in parts}
    store.stats = population_stats(np.concatenate([raws[i] for i in sorted(raws)]))
    for i, part in parts.items():
        samples = []
        for r in raws[i]:
            side = int(rng.integers(3, 9))
            samples.append(StoredSample(r, normalize(r, store.stats), GrayImage(rng.random((side, side + 1)))))
        j = int(rng.choice(PART_ATTRS[part]))
        protos = [[PatchPrototype(int(s), 4, rng.random((s, s, 4)), int(rng.integers(2)),
                                  int(rng.integers(5)), int(rng.integers(5)))
                   for s in rng.choice([4, 6], size=int(rng.integers(1, 3)))]
                  for _ in samples]
        rec = MemoryRecord(i, f"person-{i}", samples, DominantAttribute(j, part, float(rng.random())),
                           np.stack([s.semantic for s in samples]).mean(axis=0), protos)
        rec.attr_threshold = ThresholdPair.from_bounds(rng.random(), rng.random() * 3, config.lam)
        rec.patch_threshold = ThresholdPair.from_bounds(rng.random(), rng.random(), config.lam)
        rec.patch_center = rng.random(len(rec.library))
        store.records[i] = rec
    return store


def encode_all(face_samples):
    return {i: [encode(img, lm) for img, lm in pairs] for i, pairs in face_samples.items()}

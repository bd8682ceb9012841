"""Two-stage recognition: familiarity discrimination over episodic-patch C2
features, then recollective matching over attribute vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, EmptyStoreError, ParamError
from .hmax import FeatureMaps, c1_of, c2_dissimilarity, s2_c2
from .hmax.params import PATCH_HEIGHT, PATCH_WIDTH
from .imaging import GrayImage, LandmarkSet, crop_resample
from .memory import FaceSample, MemoryStore
from .semantic import (
    N_ATTRIBUTES,
    PARTS,
    DominantAttribute,
    dominant_attribute,
    episodic_region,
    geometric_features,
    normalize,
)

PASS = "pass"
REJECTED_UNFAMILIAR = "rejected_unfamiliar"

FAMILIARITY_REJECT = "familiarity_reject"
RECOLLECTIVE_REJECT = "recollective_reject"
ACCEPTED = "accepted"


@dataclass(frozen=True)
class RankEntry:
    id: int
    c2_distance: float
    posterior: float


@dataclass(frozen=True)
class FamiliarityResult:
    ranking: tuple
    outcome: str

    @property
    def passed(self) -> bool:
        return self.outcome == PASS


@dataclass(frozen=True)
class RecognitionResult:
    label: int | None
    stage: str
    best_similarity: float | None
    familiarity: FamiliarityResult
    memorized_id: int | None = None

    @property
    def known(self) -> bool:
        return self.label is not None

    def to_json(self) -> dict:
        return {
            "label": "unknown" if self.label is None else self.label,
            "stage": self.stage,
            "best_similarity": self.best_similarity,
            "ranking": [{"id": e.id, "c2_distance": e.c2_distance, "posterior": e.posterior}
                        for e in self.familiarity.ranking],
        }


@dataclass(eq=False)
class Candidate:
    semantic: np.ndarray
    dominant: DominantAttribute
    patch: GrayImage
    c1: FeatureMaps
    source: str | None = None
    sample: FaceSample | None = field(default=None, repr=False)
    _c1: dict = field(default_factory=dict, repr=False)

    def c1_for(self, part: str) -> FeatureMaps:
        """C1 maps of the candidate's episodic patch for ``part``."""
        if part == self.dominant.part or self.sample is None:
            return self.c1
        if part not in self._c1:
            self._c1[part] = c1_of(self.sample.patches[part])
        return self._c1[part]


# ---------------------------------------------------------------------------
# encoding

def encode(img: GrayImage, lm: LandmarkSet) -> FaceSample:
    """Raw attributes plus one resampled episodic patch per part."""
    lm.check_inside(img)
    patches = {part: crop_resample(img, episodic_region(lm, part, img), PATCH_WIDTH, PATCH_HEIGHT)
               for part in PARTS}
    return FaceSample(geometric_features(lm), patches)


def make_candidate(sample: FaceSample, store: MemoryStore, source: str | None = None) -> Candidate:
    if store.stats is None:
        semantic = np.zeros(N_ATTRIBUTES)
    else:
        semantic = normalize(sample.raw, store.stats)
    dom = dominant_attribute(semantic)
    patch = sample.patches[dom.part]
    return Candidate(semantic, dom, patch, c1_of(patch), source, sample)


# ---------------------------------------------------------------------------
# familiarity

def posterior(distances) -> list:
    """Uniform-prior Bayes posterior with likelihood ``exp(-d)``.

    ``distances`` is a sequence of ``(identity, d)``; returns
    ``[(identity, p), ...]`` in input order.
    """
    distances = list(distances)
    if not distances:
        raise EmptyInputError("posterior needs at least one distance")
    d = np.array([float(x) for _, x in distances])
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ParamError("distances must be finite and >= 0")
    e = np.exp(-(d - d.min()))
    p = e / e.sum()
    return [(ident, float(pi)) for (ident, _), pi in zip(distances, p)]


def familiarity_gate(distances, thresholds) -> str:
    """Reject only when the closest distance exceeds every compared threshold."""
    if min(distances) > max(thresholds):
        return REJECTED_UNFAMILIAR
    return PASS


def exceeds_threshold(distance: float, threshold: float) -> bool:
    return distance > threshold


def _compared_records(cand: Candidate, store: MemoryStore) -> list:
    part = cand.dominant.part
    # an identity also joins the group when one of its own samples showed this
    # part as dominant, so every memorized image can reach its own record
    recs = [store.records[i] for i in sorted(store.records)
            if store.records[i].part == part
            or any(dominant_attribute(s.semantic).part == part for s in store.records[i].samples)]
    # no identity shares the candidate's dominant part: compare against everyone
    return recs or [store.records[i] for i in sorted(store.records)]


def familiarity(cand: Candidate, store: MemoryStore, shared_library: bool = False) -> FamiliarityResult:
    if not store.records:
        raise EmptyStoreError("familiarity discrimination needs a non-empty store")
    recs = _compared_records(cand, store)
    beta = store.config.beta
    if shared_library:
        owners = [r.id for r in recs]
        dists = []
        for r in recs:
            cand_c2 = np.concatenate([s2_c2(cand.c1_for(r.part), store.records[o].library, beta)
                                      for o in owners])
            center = np.concatenate([
                np.mean([store.sample_c2(o, r.id, k) for k in range(len(r.samples))], axis=0)
                for o in owners])
            dists.append(c2_dissimilarity(cand_c2, center))
    else:
        dists = [c2_dissimilarity(s2_c2(cand.c1_for(r.part), r.library, beta), r.patch_center) for r in recs]
    outcome = familiarity_gate(dists, [r.patch_threshold.thres for r in recs])
    probs = dict(posterior([(r.id, d) for r, d in zip(recs, dists)]))
    ranking = sorted((RankEntry(r.id, d, probs[r.id]) for r, d in zip(recs, dists)),
                     key=lambda e: (-e.posterior, e.id))
    return FamiliarityResult(tuple(ranking), outcome)


# ---------------------------------------------------------------------------
# recollection

def recollective_decision(similarity: float, threshold: float) -> bool:
    """Accept when the semantic dissimilarity does not exceed the threshold."""
    return similarity <= threshold


def recollective_match(cand: Candidate, top, store: MemoryStore,
                       familiarity_result: FamiliarityResult | None = None) -> RecognitionResult:
    top = list(top)
    if not top:
        raise EmptyInputError("recollective matching needs at least one candidate identity")
    sims = []
    for e in top:
        ident = e.id if isinstance(e, RankEntry) else int(e)
        rec = store.records[ident]
        sims.append((float(np.sqrt(np.sum((cand.semantic - rec.mean_semantic) ** 2))), ident))
    best, ident = min(sims)
    fam = familiarity_result or FamiliarityResult(tuple(e for e in top if isinstance(e, RankEntry)), PASS)
    if recollective_decision(best, store.records[ident].attr_threshold.thres):
        return RecognitionResult(ident, ACCEPTED, best, fam)
    return RecognitionResult(None, RECOLLECTIVE_REJECT, best, fam)


def recognize_sample(sample: FaceSample, store: MemoryStore, zero_shot: bool = False,
                     shared_library: bool = False, source: str | None = None) -> RecognitionResult:
    if not store.records:
        result = RecognitionResult(None, FAMILIARITY_REJECT, None, FamiliarityResult((), REJECTED_UNFAMILIAR))
    else:
        cand = make_candidate(sample, store, source)
        fam = familiarity(cand, store, shared_library)
        if fam.passed:
            result = recollective_match(cand, fam.ranking[:store.config.top_k], store, fam)
        else:
            result = RecognitionResult(None, FAMILIARITY_REJECT, None, fam)
    if zero_shot and not result.known:
        new_id = store.next_id()
        store.memorize(new_id, f"zero-shot-{new_id}", [sample])
        result = RecognitionResult(result.label, result.stage, result.best_similarity,
                                   result.familiarity, new_id)
    return result


def recognize(img: GrayImage, lm: LandmarkSet, store: MemoryStore, zero_shot: bool = False,
              shared_library: bool = False) -> RecognitionResult:
    """Full retrieval pass; with ``zero_shot`` an unknown face is memorized as a new identity."""
    return recognize_sample(encode(img, lm), store, zero_shot, shared_library)

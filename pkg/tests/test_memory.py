import json
import math

import numpy as np
import pytest

from memhmax.errors import (
    ConsistencyError,
    DuplicateIdError,
    EmptyInputError,
    MemHmaxIOError,
    ParamError,
    SchemaError,
    ShapeError,
)
from memhmax.memory import (
    MemoryStore,
    StoreConfig,
    ThresholdPair,
    learn_threshold,
    load,
    loads,
    query_by_part,
)

from .helpers import encode_all, random_store


def norm(u, v):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v)))


def threshold_oracle(own, others, lam):
    """Exhaustive pairwise version of the intra/inter threshold rule."""
    n = len(own[0])
    center = [sum(s[k] for s in own) / len(own) for k in range(n)]
    t1 = max(norm(s, center) for s in own)
    t2 = t1 if not others else min(norm(s, m) for _, m in others for s in own)
    return t1, t2, t1 + abs(t2 - t1) / lam


class TestLearnThreshold:
    def test_forced_example(self):
        own = np.ones((3, 4))
        other = np.ones(4)
        other[0] += 2.0
        t = learn_threshold(own, [(9, other)], lam=2.0)
        assert (t.thres1, t.thres2, t.thres) == (0.0, 2.0, 1.0)

    def test_no_others(self, rng):
        own = rng.random((5, 6))
        t = learn_threshold(own, [], lam=3.0)
        assert t.thres == t.thres1 == t.thres2

    def test_matches_oracle(self, rng):
        for _ in range(20):
            dim = int(rng.integers(1, 17))
            own = rng.normal(size=(int(rng.integers(1, 9)), dim))
            others = [(i, rng.normal(size=dim)) for i in range(int(rng.integers(0, 5)))]
            lam = float(rng.uniform(0.1, 10))
            t = learn_threshold(own, others, lam)
            for got, want in zip((t.thres1, t.thres2, t.thres), threshold_oracle(own.tolist(),
                                 [(i, m.tolist()) for i, m in others], lam)):
                assert got == pytest.approx(want, abs=1e-12)

    def test_monotone_in_lambda(self, rng):
        own = rng.normal(size=(6, 5)) * 0.1
        others = [(1, rng.normal(size=5) + 3.0)]
        values = [learn_threshold(own, others, lam).thres for lam in (1, 2, 4, 8)]
        t = learn_threshold(own, others, 1.0)
        assert t.thres2 > t.thres1
        assert values == sorted(values, reverse=True)
        assert all(v >= t.thres1 for v in values)
        assert learn_threshold(own, others, 1e12).thres == pytest.approx(t.thres1, abs=1e-9)

    def test_inter_max_escape_hatch(self, rng):
        own = rng.normal(size=(3, 4))
        others = [(1, rng.normal(size=4)), (2, rng.normal(size=4) + 5)]
        lo = learn_threshold(own, others, inter="min")
        hi = learn_threshold(own, others, inter="max")
        assert hi.thres2 > lo.thres2

    def test_errors(self, rng):
        with pytest.raises(ParamError):
            learn_threshold(rng.random((2, 3)), [], lam=0.0)
        with pytest.raises(ShapeError):
            learn_threshold(rng.random((2, 3)), [(1, rng.random(4))])
        with pytest.raises(ShapeError):
            learn_threshold([], [])


@pytest.fixture(scope="module")
def encoded(face_samples):
    return encode_all(face_samples)


def small_store(**kw):
    return MemoryStore(StoreConfig(**kw), prototypes_per_size=2)


class TestMemorize:
    def test_first_identity_is_degenerate(self, encoded):
        store = small_store().memorize(1, "a", encoded[1][:4])
        rec = store.records[1]
        assert rec.attr_threshold.thres == rec.attr_threshold.thres1 == rec.attr_threshold.thres2
        assert rec.patch_threshold.thres == rec.patch_threshold.thres1
        assert len(rec.library) == 4 * 2 * 4
        store.check_consistency()

    def test_second_identity_updates_first(self, encoded):
        store = small_store().memorize(1, "a", encoded[1][:4])
        before = store.records[1].attr_threshold
        store.memorize(2, "b", encoded[2][:4])
        r1, r2 = store.records[1], store.records[2]
        after = r1.attr_threshold
        assert after != before
        own = [s.semantic.tolist() for s in r1.samples]
        t1, t2, t = threshold_oracle(own, [(2, r2.mean_semantic.tolist())], store.config.lam)
        assert (after.thres1, after.thres2, after.thres) == pytest.approx((t1, t2, t), abs=1e-12)
        # patch threshold, recomputed in identity 1's prototype space
        own_c2 = [store.sample_c2(1, 1, k).tolist() for k in range(4)]
        other_c2 = np.mean([store.sample_c2(1, 2, k) for k in range(4)], axis=0)
        t1, t2, t = threshold_oracle(own_c2, [(2, other_c2.tolist())], store.config.lam)
        p = r1.patch_threshold
        assert (p.thres1, p.thres2, p.thres) == pytest.approx((t1, t2, t), abs=1e-12)

    def test_consistency_after_sequences(self, encoded, rng):
        for _ in range(3):
            store = small_store(seed=int(rng.integers(100)))
            order = rng.permutation([1, 2, 3])
            for i in order:
                n = int(rng.integers(1, 5))
                store.memorize(int(i), f"p{i}", encoded[int(i)][:n])
                store.check_consistency()
                cols = store.attribute_stores
                for j, name in enumerate(cols):
                    for ident, rec in store.records.items():
                        assert cols[name][ident] == rec.mean_semantic[j]

    def test_batch_equals_parts_on_population(self, encoded):
        store = small_store().memorize_many([(i, str(i), encoded[i][:4]) for i in (1, 2, 3)])
        assert store.stats.count == 12
        assert {r.part for r in store.records.values()} <= {"eyes", "nose", "mouth"}

    def test_duplicate_id(self, encoded):
        store = small_store().memorize(1, "a", encoded[1][:1])
        with pytest.raises(DuplicateIdError):
            store.memorize(1, "again", encoded[1][1:2])

    def test_empty_and_bad_samples(self, encoded):
        store = small_store()
        with pytest.raises(EmptyInputError):
            store.memorize(1, "a", [])
        bad = type(encoded[1][0])(np.zeros(5), encoded[1][0].patches)
        with pytest.raises(ShapeError):
            store.memorize(1, "a", [bad])
        assert len(store) == 0

    def test_failed_memorize_leaves_store_untouched(self, encoded):
        store = small_store().memorize(1, "a", encoded[1][:2])
        before = store.dumps()
        bad = type(encoded[2][0])(encoded[2][0].raw, {"eyes": None})
        with pytest.raises(ShapeError):
            store.memorize(2, "b", [bad])
        assert store.dumps() == before


class TestQueryByPart:
    def test_empty(self):
        assert query_by_part(MemoryStore(), "eyes") == []

    def test_filter(self, rng):
        store = random_store(rng, {1: "mouth", 3: "eyes"})
        assert [r.id for r in query_by_part(store, "eyes")] == [3]

    def test_three_mouth_two_eyes_grouping(self, rng):
        store = random_store(rng, {1: "mouth", 2: "mouth", 4: "mouth", 3: "eyes", 5: "eyes"})
        assert [r.id for r in store.query_by_part("mouth")] == [1, 2, 4]
        assert [r.id for r in store.query_by_part("eyes")] == [3, 5]
        assert store.query_by_part("nose") == []

    def test_unknown_part(self):
        with pytest.raises(ParamError):
            MemoryStore().query_by_part("ears")


def deep_equal(a: MemoryStore, b: MemoryStore) -> bool:
    if a.config != b.config or a.stats != b.stats or sorted(a.records) != sorted(b.records):
        return False
    for i in a.records:
        x, y = a.records[i], b.records[i]
        if (x.name, x.dominant, x.attr_threshold, x.patch_threshold) != \
                (y.name, y.dominant, y.attr_threshold, y.patch_threshold):
            return False
        if x.mean_semantic.tobytes() != y.mean_semantic.tobytes() or \
                x.patch_center.tobytes() != y.patch_center.tobytes():
            return False
        for s, t in zip(x.samples, y.samples, strict=True):
            if s.raw.tobytes() != t.raw.tobytes() or s.semantic.tobytes() != t.semantic.tobytes() \
                    or s.patch != t.patch:
                return False
        if x.prototypes != y.prototypes:
            return False
    return True


class TestPersistence:
    def test_empty_roundtrip(self, tmp_path):
        store = MemoryStore()
        store.save(tmp_path / "s.json")
        back = load(tmp_path / "s.json")
        assert deep_equal(store, back) and len(back) == 0

    def test_random_roundtrip(self, tmp_path, rng):
        for k in range(10):
            store = random_store(rng, {int(i): p for i, p in zip(rng.permutation(20)[:4],
                                                                   rng.choice(["eyes", "nose", "mouth"], 4))})
            store.check_consistency()
            store.save(tmp_path / f"{k}.json")
            assert deep_equal(store, load(tmp_path / f"{k}.json"))

    def test_memorized_roundtrip(self, tmp_path, encoded):
        store = small_store().memorize_many([(i, str(i), encoded[i][:2]) for i in (1, 2, 3)])
        store.save(tmp_path / "m.json")
        back = load(tmp_path / "m.json")
        assert deep_equal(store, back)
        assert back.dumps() == store.dumps()

    def test_missing_file(self, tmp_path):
        with pytest.raises(MemHmaxIOError):
            load(tmp_path / "absent.json")

    def test_not_json(self):
        with pytest.raises(SchemaError):
            loads("{not json")


@pytest.fixture
def doc(rng):
    store = random_store(rng, {1: "mouth", 2: "eyes", 3: "eyes"}, n_samples=2)
    return json.loads(store.dumps())


def reload(doc):
    return loads(json.dumps(doc))


class TestCorruption:
    def test_baseline_loads(self, doc):
        reload(doc)

    def test_unknown_top_level_field(self, doc):
        doc["extra"] = 1
        with pytest.raises(SchemaError):
            reload(doc)

    def test_unknown_record_field(self, doc):
        doc["records"][0]["note"] = "x"
        with pytest.raises(SchemaError):
            reload(doc)

    def test_schema_version(self, doc):
        doc["schema_version"] = 2
        with pytest.raises(SchemaError):
            reload(doc)

    def test_attribute_store_disagrees(self, doc):
        doc["attribute_stores"]["nose_width"]["2"] += 1e-9
        with pytest.raises(ConsistencyError):
            reload(doc)

    def test_stale_semantic_vector(self, doc):
        doc["records"][1]["samples"][0]["semantic"][3] += 0.5
        with pytest.raises(ConsistencyError):
            reload(doc)

    def test_population_stats_disagree(self, doc):
        doc["population_stats"]["mean"][0] += 1.0
        with pytest.raises(ConsistencyError):
            reload(doc)

    def test_threshold_formula(self, doc):
        doc["records"][0]["attr_threshold"]["thres"] += 0.1
        with pytest.raises(ConsistencyError):
            reload(doc)

    def test_library_filed_under_wrong_part(self, doc):
        doc["patch_library"]["nose"].append(doc["patch_library"]["eyes"].pop())
        with pytest.raises(ConsistencyError):
            reload(doc)

    def test_record_without_library(self, doc):
        doc["patch_library"]["mouth"] = []
        with pytest.raises(ConsistencyError):
            reload(doc)

    def test_wrong_type(self, doc):
        doc["config"]["top_k"] = "three"
        with pytest.raises(SchemaError):
            reload(doc)

    def test_bad_config_value(self, doc):
        doc["config"]["lambda"] = -1.0
        with pytest.raises(SchemaError):
            reload(doc)

    def test_pixel_out_of_range(self, doc):
        doc["records"][0]["samples"][0]["patch"]["data"][0] = 7.0
        with pytest.raises(ConsistencyError):
            reload(doc)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"lam": 0}, {"top_k": 0}, {"beta": -1.0}, {"seed": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ParamError):
            StoreConfig(**kw)

    def test_threshold_pair(self):
        t = ThresholdPair.from_bounds(1.0, 3.0, 4.0)
        assert t.thres == 1.5

"""Distributed memory store.

A store keeps, per identity, the raw and normalized attribute vectors of each
memorized sample, the episodic patch of the identity's dominant part, the
C1 prototypes cut from those patches, and two learned thresholds (one over
attribute vectors, one over C2 vectors). Attribute columns (one store per
attribute, keyed by identity) and the part-grouped prototype library are
views over the records and are checked against them on load.

Store file layout (UTF-8 JSON, ``schema_version`` 1)::

    {
      "schema_version": 1,
      "config": {"lambda": 2.0, "top_k": 3, "beta": 1.0, "seed": 0},
      "population_stats": {"mean": [13], "std": [13], "count": n},
      "attribute_stores": {"<attribute>": {"<id>": value, ...}, ...},
      "records": [
        {"id", "name", "dominant": {"index", "part", "deviation"},
         "mean_semantic": [13],
         "attr_threshold": {"thres1", "thres2", "thres", "lambda"},
         "patch_threshold": {...}, "patch_center": [n_prototypes],
         "samples": [{"raw": [13], "semantic": [13],
                      "patch": {"width", "height", "data": [...]}}]}
      ],
      "patch_library": {"eyes"|"nose"|"mouth": [
         {"identity", "sample", "size", "depth", "band", "row", "col", "weights": [...]}]}
    }

Floats are written with Python's shortest round-trip repr, so ``load(save(s))``
reproduces every value bit for bit.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConsistencyError,
    DuplicateIdError,
    EmptyInputError,
    MemHmaxIOError,
    ParamError,
    SchemaError,
    ShapeError,
)
from .hmax import PatchPrototype, c1_of, extract_prototypes, s2_c2
from .hmax.params import PROTOTYPE_SIZES, PROTOTYPES_PER_SIZE
from .imaging import GrayImage
from .semantic import (
    ATTRIBUTES,
    N_ATTRIBUTES,
    PARTS,
    DominantAttribute,
    PopulationStats,
    dominant_attribute,
    normalize,
    population_stats,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class StoreConfig:
    lam: float = 2.0
    top_k: int = 3
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.lam, (int, float)) and math.isfinite(self.lam) and self.lam > 0):
            raise ParamError(f"lambda must be a positive number, got {self.lam!r}")
        if not (isinstance(self.top_k, int) and self.top_k >= 1):
            raise ParamError(f"top_k must be a positive integer, got {self.top_k!r}")
        if not (isinstance(self.beta, (int, float)) and math.isfinite(self.beta) and self.beta > 0):
            raise ParamError(f"beta must be a positive number, got {self.beta!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ParamError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass(frozen=True)
class ThresholdPair:
    thres1: float
    thres2: float
    thres: float
    lam: float

    @classmethod
    def from_bounds(cls, thres1: float, thres2: float, lam: float) -> "ThresholdPair":
        return cls(float(thres1), float(thres2), float(thres1 + abs(thres2 - thres1) / lam), float(lam))


def _as_matrix(vectors, what: str) -> np.ndarray:
    a = np.asarray(vectors, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0:
        raise ShapeError(f"{what} must be a non-empty list of equal-length vectors")
    return a


def learn_threshold(own_samples, others, lam: float = 2.0, inter: str = "min") -> ThresholdPair:
    """Intra/inter-class distance bounds and the blended acceptance threshold.

    ``thres1`` is the largest distance from an own sample to the own mean;
    ``thres2`` is the smallest distance from an own sample to any other
    identity's mean (``inter="max"`` takes the largest instead);
    ``thres = thres1 + |thres2 - thres1| / lam``. With no other identities,
    ``thres2 = thres1``.
    """
    if not lam > 0:
        raise ParamError(f"lambda must be positive, got {lam}")
    if inter not in ("min", "max"):
        raise ParamError(f"inter must be 'min' or 'max', got {inter!r}")
    own = _as_matrix(own_samples, "own_samples")
    # mean taken relative to the first sample: exact when all samples coincide
    center = own[0] + (own - own[0]).mean(axis=0)
    thres1 = float(np.sqrt(((own - center) ** 2).sum(axis=1)).max())
    if not others:
        return ThresholdPair.from_bounds(thres1, thres1, lam)
    dists = []
    for _, vec in others:
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != center.shape:
            raise ShapeError(f"other identity vector has shape {v.shape}, expected {center.shape}")
        dists.append(np.sqrt(((own - v) ** 2).sum(axis=1)))
    d = np.concatenate(dists)
    thres2 = float(d.min() if inter == "min" else d.max())
    return ThresholdPair.from_bounds(thres1, thres2, lam)


@dataclass(frozen=True)
class FaceSample:
    """Encoded input for memorize: raw attributes and one patch per part."""

    raw: np.ndarray
    patches: dict


@dataclass(eq=False)
class StoredSample:
    raw: np.ndarray
    semantic: np.ndarray
    patch: GrayImage


@dataclass(eq=False)
class MemoryRecord:
    id: int
    name: str
    samples: list
    dominant: DominantAttribute
    mean_semantic: np.ndarray
    prototypes: list  # one list of PatchPrototype per sample
    attr_threshold: ThresholdPair | None = None
    patch_threshold: ThresholdPair | None = None
    patch_center: np.ndarray | None = None

    @property
    def part(self) -> str:
        return self.dominant.part

    @property
    def library(self) -> list:
        return [p for plist in self.prototypes for p in plist]

    def semantic_matrix(self) -> np.ndarray:
        return np.stack([s.semantic for s in self.samples])


class MemoryStore:
    """Records keyed by identity plus derived views. Single writer."""

    def __init__(self, config: StoreConfig | None = None, *, inter: str = "min",
                 prototypes_per_size: int = PROTOTYPES_PER_SIZE, prototype_sizes=PROTOTYPE_SIZES):
        self.config = config or StoreConfig()
        self.records: dict[int, MemoryRecord] = {}
        self.stats: PopulationStats | None = None
        self.inter = inter
        self.prototypes_per_size = prototypes_per_size
        self.prototype_sizes = tuple(prototype_sizes)
        self._c1_cache: dict = {}
        self._c2_cache: dict = {}

    def __len__(self):
        return len(self.records)

    def __contains__(self, ident):
        return ident in self.records

    # -- views --------------------------------------------------------------

    @property
    def attribute_stores(self) -> dict:
        """``{attribute: {identity: mean normalized value}}`` (one column per attribute)."""
        ids = sorted(self.records)
        return {name: {i: float(self.records[i].mean_semantic[j]) for i in ids}
                for j, name in enumerate(ATTRIBUTES)}

    @property
    def patch_library(self) -> dict:
        """``{part: [(identity, sample_index, PatchPrototype), ...]}``."""
        lib = {p: [] for p in PARTS}
        for i in sorted(self.records):
            rec = self.records[i]
            for k, plist in enumerate(rec.prototypes):
                lib[rec.part].extend((i, k, p) for p in plist)
        return lib

    def query_by_part(self, part: str) -> list:
        if part not in PARTS:
            raise ParamError(f"unknown part {part!r}")
        return [self.records[i] for i in sorted(self.records) if self.records[i].part == part]

    def next_id(self) -> int:
        return max(self.records, default=0) + 1

    # -- feature caches (derived, never persisted) --------------------------

    def sample_c1(self, ident: int, k: int):
        key = (ident, k)
        if key not in self._c1_cache:
            self._c1_cache[key] = c1_of(self.records[ident].samples[k].patch)
        return self._c1_cache[key]

    def sample_c2(self, lib_owner: int, ident: int, k: int) -> np.ndarray:
        key = (lib_owner, ident, k)
        if key not in self._c2_cache:
            self._c2_cache[key] = s2_c2(self.sample_c1(ident, k), self.records[lib_owner].library,
                                        self.config.beta)
        return self._c2_cache[key]

    # -- learning -----------------------------------------------------------

    def memorize(self, ident: int, name: str, samples) -> "MemoryStore":
        """Add a new identity and re-learn everything that depends on the population.

        Population statistics, every stored normalized vector and every
        identity's thresholds are recomputed. Dominant parts of identities
        already stored are kept, because their episodic patches were cut for
        that part.
        """
        return self.memorize_many([(ident, name, samples)])

    def memorize_many(self, entries) -> "MemoryStore":
        """Memorize several identities at once.

        Dominant attributes of all new identities are chosen against the
        population statistics of the whole batch, which is what a first
        training pass wants; thresholds are learned once at the end.
        """
        entries = [(ident, name, list(samples)) for ident, name, samples in entries]
        if not entries:
            raise EmptyInputError("nothing to memorize")
        new_raws = {}
        for ident, name, samples in entries:
            if not isinstance(ident, int) or isinstance(ident, bool):
                raise ShapeError(f"identity must be an integer, got {ident!r}")
            if ident in self.records or ident in new_raws:
                raise DuplicateIdError(f"identity {ident} is already memorized")
            if not samples:
                raise EmptyInputError(f"identity {ident}: memorize needs at least one sample")
            raws = []
            for s in samples:
                r = np.asarray(s.raw, dtype=np.float64)
                if r.shape != (N_ATTRIBUTES,) or not np.all(np.isfinite(r)):
                    raise ShapeError(f"raw attribute vectors must hold {N_ATTRIBUTES} finite values")
                missing = [p for p in PARTS if p not in s.patches]
                if missing:
                    raise ShapeError(f"sample lacks episodic patches for {missing}")
                raws.append(r)
            new_raws[ident] = raws

        # identity order, so the statistics do not depend on insertion history
        by_id = {rec.id: [s.raw for s in rec.samples] for rec in self._ordered()}
        by_id.update(new_raws)
        stats = population_stats([r for i in sorted(by_id) for r in by_id[i]])

        prev_stats = self.stats
        added = []
        try:
            for ident, name, samples in entries:
                raws = new_raws[ident]
                semantic = [normalize(r, stats) for r in raws]
                dom = dominant_attribute(np.mean(semantic, axis=0))
                stored = []
                for s, r, a in zip(samples, raws, semantic):
                    patch = s.patches[dom.part]
                    if not isinstance(patch, GrayImage):
                        patch = GrayImage(patch)
                    stored.append(StoredSample(r, a, patch))
                protos = []
                self.records[ident] = MemoryRecord(ident, str(name), stored, dom,
                                                   np.mean(semantic, axis=0), protos)
                added.append(ident)
                for k in range(len(stored)):
                    protos.append(extract_prototypes(self.sample_c1(ident, k), self.prototype_sizes,
                                                     self.prototypes_per_size,
                                                     seed=[self.config.seed, ident, k]))
            self.stats = stats
            self._refresh()
        except Exception:
            for ident in added:
                del self.records[ident]
                self._forget(ident)
            self.stats = prev_stats
            if self.records:
                self._refresh()
            raise
        return self

    def _forget(self, ident: int) -> None:
        self._c1_cache = {k: v for k, v in self._c1_cache.items() if k[0] != ident}
        self._c2_cache = {k: v for k, v in self._c2_cache.items() if ident not in k[:2]}

    def _ordered(self):
        return [self.records[i] for i in sorted(self.records)]

    def _refresh(self):
        recs = self._ordered()
        for rec in recs:
            for s in rec.samples:
                s.semantic = normalize(s.raw, self.stats)
            rec.mean_semantic = rec.semantic_matrix().mean(axis=0)
        lam = self.config.lam
        for rec in recs:
            others = [(o.id, o.mean_semantic) for o in recs if o.id != rec.id]
            rec.attr_threshold = learn_threshold(rec.semantic_matrix(), others, lam, self.inter)
        for rec in recs:
            feats = {o.id: np.stack([self.sample_c2(rec.id, o.id, k) for k in range(len(o.samples))])
                     for o in recs}
            own = feats[rec.id]
            rec.patch_center = own.mean(axis=0)
            others = [(o.id, feats[o.id].mean(axis=0)) for o in recs if o.id != rec.id]
            rec.patch_threshold = learn_threshold(own, others, lam, self.inter)

    # -- validation ---------------------------------------------------------

    def check_consistency(self) -> None:
        """Raise ConsistencyError if any derived view disagrees with the records."""
        recs = self._ordered()
        if not recs:
            if self.stats is not None:
                raise ConsistencyError("empty store carries population statistics")
            return
        if self.stats is None:
            raise ConsistencyError("populated store lacks population statistics")
        expect = population_stats([s.raw for rec in recs for s in rec.samples])
        if expect != self.stats:
            raise ConsistencyError("population statistics disagree with stored samples")
        lam = self.config.lam
        for rec in recs:
            if not rec.samples:
                raise ConsistencyError(f"identity {rec.id} has no samples")
            for k, s in enumerate(rec.samples):
                if not np.array_equal(s.semantic, normalize(s.raw, self.stats)):
                    raise ConsistencyError(f"identity {rec.id} sample {k}: normalized vector is stale")
            if not np.array_equal(rec.mean_semantic, rec.semantic_matrix().mean(axis=0)):
                raise ConsistencyError(f"identity {rec.id}: mean vector is not the sample mean")
            if len(rec.prototypes) != len(rec.samples):
                raise ConsistencyError(f"identity {rec.id}: prototype lists do not match samples")
            if not rec.library:
                raise ConsistencyError(f"identity {rec.id} has no entry in the {rec.part} library")
            for t in (rec.attr_threshold, rec.patch_threshold):
                if t is None:
                    raise ConsistencyError(f"identity {rec.id}: missing threshold")
                vals = (t.thres1, t.thres2, t.thres)
                if not all(math.isfinite(v) and v >= 0 for v in vals):
                    raise ConsistencyError(f"identity {rec.id}: thresholds must be finite and >= 0")
                if t.lam != lam or t.thres != t.thres1 + abs(t.thres2 - t.thres1) / t.lam:
                    raise ConsistencyError(f"identity {rec.id}: threshold does not follow its bounds")
            if rec.patch_center is None or rec.patch_center.shape != (len(rec.library),):
                raise ConsistencyError(f"identity {rec.id}: patch centre does not match its library")

    # -- persistence --------------------------------------------------------

    def to_json(self) -> dict:
        return _encode_store(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, allow_nan=False, separators=(",", ":"))

    def save(self, path) -> None:
        """Write atomically: nothing is left behind if serialization fails."""
        text = self.dumps()
        path = Path(path)
        tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
        try:
            tmp.write_text(text, encoding="utf-8")
            os.replace(tmp, path)
        except OSError as exc:
            tmp.unlink(missing_ok=True)
            raise MemHmaxIOError(f"cannot write {path}: {exc}") from exc

    def __eq__(self, other):
        if not isinstance(other, MemoryStore):
            return NotImplemented
        return self.to_json() == other.to_json()

    __hash__ = None


def memorize(store: MemoryStore, ident: int, name: str, samples) -> MemoryStore:
    return store.memorize(ident, name, samples)


def query_by_part(store: MemoryStore, part: str) -> list:
    return store.query_by_part(part)


def save(store: MemoryStore, path) -> None:
    store.save(path)


def load(path) -> MemoryStore:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise MemHmaxIOError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def loads(text: str) -> MemoryStore:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"store is not valid JSON: {exc}") from exc
    store = _decode_store(doc)
    store.check_consistency()
    return store


# ---------------------------------------------------------------------------
# JSON encoding

def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def _thres_json(t: ThresholdPair) -> dict:
    return {"thres1": t.thres1, "thres2": t.thres2, "thres": t.thres, "lambda": t.lam}


def _encode_store(store: MemoryStore) -> dict:
    cfg = store.config
    stats = None if store.stats is None else {
        "mean": _floats(store.stats.mean), "std": _floats(store.stats.std), "count": store.stats.count}
    records = []
    for rec in store._ordered():
        records.append({
            "id": rec.id,
            "name": rec.name,
            "dominant": {"index": rec.dominant.index, "part": rec.dominant.part,
                         "deviation": rec.dominant.deviation},
            "mean_semantic": _floats(rec.mean_semantic),
            "attr_threshold": _thres_json(rec.attr_threshold),
            "patch_threshold": _thres_json(rec.patch_threshold),
            "patch_center": _floats(rec.patch_center),
            "samples": [{"raw": _floats(s.raw), "semantic": _floats(s.semantic),
                         "patch": {"width": s.patch.width, "height": s.patch.height,
                                   "data": _floats(s.patch.data)}}
                        for s in rec.samples],
        })
    library = {part: [{"identity": i, "sample": k, "size": p.size, "depth": p.depth, "band": p.band,
                       "row": p.row, "col": p.col, "weights": _floats(p.weights)}
                      for i, k, p in entries]
               for part, entries in store.patch_library.items()}
    return {
        "schema_version": SCHEMA_VERSION,
        "config": {"lambda": cfg.lam, "top_k": cfg.top_k, "beta": cfg.beta, "seed": cfg.seed},
        "population_stats": stats,
        "attribute_stores": {name: {str(i): v for i, v in col.items()}
                             for name, col in store.attribute_stores.items()},
        "records": records,
        "patch_library": library,
    }


# ---------------------------------------------------------------------------
# JSON decoding; shape problems are SchemaError, disagreement between views
# is ConsistencyError

def _obj(doc, keys, where):
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected an object")
    got = set(doc)
    if got != set(keys):
        extra, missing = sorted(got - set(keys)), sorted(set(keys) - got)
        raise SchemaError(f"{where}: unexpected fields {extra}, missing fields {missing}")
    return doc


def _num(v, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{where}: expected a number")
    return float(v)


def _int(v, where) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{where}: expected an integer")
    return v


def _vec(v, where, n=None) -> np.ndarray:
    if not isinstance(v, list):
        raise SchemaError(f"{where}: expected an array")
    a = np.array([_num(x, where) for x in v], dtype=np.float64)
    if n is not None and a.shape != (n,):
        raise SchemaError(f"{where}: expected {n} values, got {a.size}")
    return a


def _thres(doc, where) -> ThresholdPair:
    d = _obj(doc, ("thres1", "thres2", "thres", "lambda"), where)
    return ThresholdPair(_num(d["thres1"], where), _num(d["thres2"], where), _num(d["thres"], where),
                         _num(d["lambda"], where))


def _decode_store(doc) -> MemoryStore:
    top = _obj(doc, ("schema_version", "config", "population_stats", "attribute_stores", "records",
                     "patch_library"), "store")
    if top["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {top['schema_version']!r}")
    c = _obj(top["config"], ("lambda", "top_k", "beta", "seed"), "config")
    try:
        cfg = StoreConfig(_num(c["lambda"], "config.lambda"), _int(c["top_k"], "config.top_k"),
                          _num(c["beta"], "config.beta"), _int(c["seed"], "config.seed"))
    except ParamError as exc:
        raise SchemaError(f"config: {exc}") from exc
    store = MemoryStore(cfg)

    ps = top["population_stats"]
    if ps is not None:
        ps = _obj(ps, ("mean", "std", "count"), "population_stats")
        try:
            store.stats = PopulationStats(_vec(ps["mean"], "population_stats.mean", N_ATTRIBUTES),
                                          _vec(ps["std"], "population_stats.std", N_ATTRIBUTES),
                                          _int(ps["count"], "population_stats.count"))
        except (ShapeError, ValueError) as exc:
            raise SchemaError(f"population_stats: {exc}") from exc

    if not isinstance(top["records"], list):
        raise SchemaError("records: expected an array")
    for n, r in enumerate(top["records"]):
        where = f"records[{n}]"
        r = _obj(r, ("id", "name", "dominant", "mean_semantic", "attr_threshold", "patch_threshold",
                     "patch_center", "samples"), where)
        ident = _int(r["id"], f"{where}.id")
        if ident in store.records:
            raise ConsistencyError(f"{where}: duplicate identity {ident}")
        if not isinstance(r["name"], str):
            raise SchemaError(f"{where}.name: expected a string")
        d = _obj(r["dominant"], ("index", "part", "deviation"), f"{where}.dominant")
        idx = _int(d["index"], f"{where}.dominant.index")
        if not 0 <= idx < N_ATTRIBUTES or d["part"] not in PARTS:
            raise SchemaError(f"{where}.dominant: index or part out of range")
        dom = DominantAttribute(idx, d["part"], _num(d["deviation"], f"{where}.dominant.deviation"))
        if not isinstance(r["samples"], list):
            raise SchemaError(f"{where}.samples: expected an array")
        samples = []
        for k, s in enumerate(r["samples"]):
            sw = f"{where}.samples[{k}]"
            s = _obj(s, ("raw", "semantic", "patch"), sw)
            p = _obj(s["patch"], ("width", "height", "data"), f"{sw}.patch")
            w, h = _int(p["width"], f"{sw}.patch.width"), _int(p["height"], f"{sw}.patch.height")
            if w < 1 or h < 1:
                raise SchemaError(f"{sw}.patch: empty raster")
            data = _vec(p["data"], f"{sw}.patch.data", w * h).reshape(h, w)
            try:
                patch = GrayImage(data)
            except ValueError as exc:
                raise ConsistencyError(f"{sw}.patch: {exc}") from exc
            samples.append(StoredSample(_vec(s["raw"], f"{sw}.raw", N_ATTRIBUTES),
                                        _vec(s["semantic"], f"{sw}.semantic", N_ATTRIBUTES), patch))
        store.records[ident] = MemoryRecord(
            ident, r["name"], samples, dom,
            _vec(r["mean_semantic"], f"{where}.mean_semantic", N_ATTRIBUTES),
            [[] for _ in samples],
            _thres(r["attr_threshold"], f"{where}.attr_threshold"),
            _thres(r["patch_threshold"], f"{where}.patch_threshold"),
            _vec(r["patch_center"], f"{where}.patch_center"),
        )

    lib = _obj(top["patch_library"], PARTS, "patch_library")
    for part in PARTS:
        if not isinstance(lib[part], list):
            raise SchemaError(f"patch_library.{part}: expected an array")
        for n, e in enumerate(lib[part]):
            where = f"patch_library.{part}[{n}]"
            e = _obj(e, ("identity", "sample", "size", "depth", "band", "row", "col", "weights"), where)
            ident, k = _int(e["identity"], where), _int(e["sample"], where)
            rec = store.records.get(ident)
            if rec is None:
                raise ConsistencyError(f"{where}: unknown identity {ident}")
            if rec.part != part:
                raise ConsistencyError(f"{where}: identity {ident} is filed under {rec.part}, not {part}")
            if not 0 <= k < len(rec.samples):
                raise ConsistencyError(f"{where}: identity {ident} has no sample {k}")
            size, depth = _int(e["size"], where), _int(e["depth"], where)
            if size < 1 or depth < 1:
                raise SchemaError(f"{where}: size and depth must be positive")
            weights = _vec(e["weights"], f"{where}.weights", size * size * depth)
            rec.prototypes[k].append(PatchPrototype(size, depth, weights.reshape(size, size, depth),
                                                    _int(e["band"], where), _int(e["row"], where),
                                                    _int(e["col"], where)))

    stores = _obj(top["attribute_stores"], ATTRIBUTES, "attribute_stores")
    expect = store.attribute_stores
    for j, name in enumerate(ATTRIBUTES):
        col = stores[name]
        if not isinstance(col, dict):
            raise SchemaError(f"attribute_stores.{name}: expected an object")
        if set(col) != {str(i) for i in store.records}:
            raise ConsistencyError(f"attribute_stores.{name}: identities disagree with records")
        for i, v in expect[name].items():
            if _num(col[str(i)], f"attribute_stores.{name}") != v:
                raise ConsistencyError(f"attribute_stores.{name}[{i}] disagrees with the record view")
    return store

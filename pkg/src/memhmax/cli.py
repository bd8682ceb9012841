"""Command-line entry point.

Exit codes: 0 success, 1 I/O failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import MemHmaxError, MemHmaxIOError, ValidationError
from .imaging import load_image, parse_landmarks
from .manifest import load_manifest
from .memory import MemoryStore, StoreConfig, load
from .recognition import (
    ACCEPTED,
    FAMILIARITY_REJECT,
    RECOLLECTIVE_REJECT,
    encode,
    recognize_sample,
)
from .semantic import ATTRIBUTES
from .synthetic import benchmark_specs, gen_synthetic, specs_from_json


def _ingest(row):
    try:
        img = load_image(row.image)
        lm = parse_landmarks(row.landmarks)
        return encode(img, lm)
    except ValidationError as exc:
        raise type(exc)(f"manifest line {row.line}: {exc}") from exc


def build_store(rows, config: StoreConfig) -> MemoryStore:
    groups: dict[int, tuple] = {}
    for row in rows:
        if row.split != "memory":
            continue
        groups.setdefault(row.id, (row.name, []))[1].append(_ingest(row))
    if not groups:
        raise ValidationError("manifest has no memory-split rows")
    store = MemoryStore(config)
    store.memorize_many([(i, name, samples) for i, (name, samples) in sorted(groups.items())])
    return store


def store_summary(store: MemoryStore) -> list[dict]:
    return [{
        "id": rec.id,
        "name": rec.name,
        "samples": len(rec.samples),
        "dominant_attribute": ATTRIBUTES[rec.dominant.index],
        "part": rec.part,
        "attr_threshold": rec.attr_threshold.thres,
        "patch_threshold": rec.patch_threshold.thres,
    } for rec in (store.records[i] for i in sorted(store.records))]


def _print_summary(rows: list[dict]) -> None:
    print(f"{'id':>4}  {'name':<16} {'n':>3}  {'dominant':<18} {'part':<6} {'attri_thres':>12} {'patch_thres':>12}")
    for r in rows:
        print(f"{r['id']:>4}  {r['name']:<16} {r['samples']:>3}  {r['dominant_attribute']:<18} "
              f"{r['part']:<6} {r['attr_threshold']:>12.4f} {r['patch_threshold']:>12.6f}")


def evaluate(rows, store: MemoryStore) -> dict:
    """Recognize every test row; return per-sample reports and metrics."""
    samples = []
    for row in rows:
        if row.split != "test":
            continue
        res = recognize_sample(_ingest(row), store)
        report = res.to_json()
        report.update({"id": row.id, "image": str(row.image), "known": row.id in store})
        samples.append(report)
    return {"metrics": metrics_from_reports(samples), "samples": samples}


def metrics_from_reports(samples: list[dict]) -> dict:
    known = [s for s in samples if s["known"]]
    unknown = [s for s in samples if not s["known"]]

    def stages(group):
        return {st: sum(1 for s in group if s["stage"] == st)
                for st in (ACCEPTED, FAMILIARITY_REJECT, RECOLLECTIVE_REJECT)}

    correct = sum(1 for s in known if s["label"] == s["id"])
    false_accepts = sum(1 for s in unknown if s["label"] != "unknown")
    return {
        "n_known": len(known),
        "n_unknown": len(unknown),
        "accuracy": correct / len(known) if known else None,
        "false_accept_rate": false_accepts / len(unknown) if unknown else 0.0,
        "known_stages": stages(known),
        "unknown_stages": stages(unknown),
    }


def _print_eval(result: dict) -> None:
    print(f"{'image':<28} {'id':>4} {'label':>8}  {'stage':<20} {'sim':>8}")
    for s in result["samples"]:
        sim = "-" if s["best_similarity"] is None else f"{s['best_similarity']:.4f}"
        print(f"{Path(s['image']).name:<28} {s['id']:>4} {str(s['label']):>8}  {s['stage']:<20} {sim:>8}")
    m = result["metrics"]
    acc = "n/a" if m["accuracy"] is None else f"{m['accuracy']:.3f}"
    print(f"\nknown accuracy     {acc}  ({m['n_known']} images)")
    print(f"false-accept rate  {m['false_accept_rate']:.3f}  ({m['n_unknown']} images)")
    for group in ("known_stages", "unknown_stages"):
        counts = ", ".join(f"{k}={v}" for k, v in m[group].items())
        print(f"{group.replace('_', ' '):<18} {counts}")


# ---------------------------------------------------------------------------
# commands

def cmd_memorize(args) -> int:
    config = StoreConfig(args.lam, args.top_k, args.beta, args.seed)
    store = build_store(load_manifest(args.manifest), config)
    store.save(args.store)
    summary = store_summary(store)
    if args.json:
        print(json.dumps({"store": str(args.store), "identities": summary}, indent=2))
    else:
        _print_summary(summary)
    return 0


def cmd_recognize(args) -> int:
    store = load(args.store)
    sample = encode(load_image(args.image), parse_landmarks(args.landmarks))
    res = recognize_sample(sample, store, zero_shot=args.zero_shot)
    if res.memorized_id is not None:
        store.save(args.store)
        print(f"memorized as identity {res.memorized_id}", file=sys.stderr)
    print(json.dumps(res.to_json(), indent=2))
    return 0


def cmd_eval(args) -> int:
    rows = load_manifest(args.manifest)
    if not any(r.split == "test" for r in rows):
        raise ValidationError("manifest has no test-split rows")
    store = load(args.store)
    result = evaluate(rows, store)
    if args.json:
        print(json.dumps(result, indent=2))
    else:
        _print_eval(result)
    return 0


def cmd_gen_synthetic(args) -> int:
    if args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except OSError as exc:
            raise MemHmaxIOError(f"cannot read {args.spec}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.spec}: invalid JSON: {exc}") from exc
        specs = specs_from_json(doc)
    else:
        specs = benchmark_specs(args.seed)
    manifest = gen_synthetic(specs, args.out_dir)
    print(manifest)
    return 0


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=2.0, help="threshold ratio (default 2.0)")
    p.add_argument("--top-k", type=int, default=3, help="identities kept for recollection (default 3)")
    p.add_argument("--beta", type=float, default=1.0, help="S2 radial-basis sharpness (default 1.0)")
    p.add_argument("--seed", type=int, default=0, help="prototype sampling seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memhmax", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("memorize", help="build a memory store from a manifest's memory split")
    p.add_argument("manifest")
    p.add_argument("--store", required=True)
    _config_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_memorize)

    p = sub.add_parser("recognize", help="recognize one image against a store")
    p.add_argument("image")
    p.add_argument("landmarks")
    p.add_argument("--store", required=True)
    p.add_argument("--zero-shot", action="store_true", help="memorize the face if it is unknown")
    p.add_argument("--json", action="store_true", help="accepted for symmetry; output is always JSON")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("eval", help="evaluate a store on a manifest's test split")
    p.add_argument("manifest")
    p.add_argument("--store", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-synthetic", help="render a synthetic face dataset")
    p.add_argument("out_dir")
    p.add_argument("--spec", help="JSON list of face specs (default: the 7-identity benchmark)")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MemHmaxIOError as exc:
        print(f"memhmax: error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, MemHmaxError) as exc:
        print(f"memhmax: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

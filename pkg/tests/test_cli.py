import json
import shutil
import subprocess
import sys

import pytest

from memhmax.cli import main, metrics_from_reports
from memhmax.memory import MemoryStore, load
from memhmax.synthetic import SyntheticFaceSpec, gen_synthetic

GEOMS = [{"mouth_scale": 1.35}, {"nose_width": 1.45}, {"eye_scale": 1.35},
         {"philtrum": 1.8}, {"eye_aspect": 0.6}]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("faces")
    specs = [SyntheticFaceSpec(i + 1, f"p{i + 1}", 11, g, n_memory=3, n_test=1, image_size=96)
             for i, g in enumerate(GEOMS)]
    specs.append(SyntheticFaceSpec(9, "stranger", 11, {"mouth_scale": 0.6}, n_memory=0, n_test=2,
                                   image_size=96))
    return gen_synthetic(specs, out)


@pytest.fixture(scope="module")
def store_path(dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("store") / "store.json"
    assert main(["memorize", str(dataset), "--store", str(path)]) == 0
    return path


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def subset_manifest(dataset, tmp_path, keep, split_map=None):
    lines = dataset.read_text().splitlines()
    body = [ln for ln in lines[1:] if keep(ln.split(","))]
    if split_map:
        body = [",".join(split_map(ln.split(","))) for ln in body]
    for ln in body:
        for name in ln.split(",")[2:4]:
            shutil.copy(dataset.parent / name, tmp_path / name)
    path = tmp_path / "manifest.csv"
    path.write_text("\n".join([lines[0], *body]) + "\n")
    return path


class TestMemorize:
    def test_one_identity_one_image(self, dataset, tmp_path, capsys):
        m = subset_manifest(dataset, tmp_path, lambda f: f[2] == "id001_00.png")
        code, out = run_json(capsys, ["memorize", str(m), "--store", str(tmp_path / "s.json"), "--json"])
        assert code == 0 and len(out["identities"]) == 1
        rec = load(tmp_path / "s.json").records[1]
        assert rec.attr_threshold.thres == rec.attr_threshold.thres1 == rec.attr_threshold.thres2 == 0.0
        assert rec.patch_threshold.thres == 0.0

    def test_five_identities_table(self, dataset, store_path, tmp_path, capsys):
        assert main(["memorize", str(dataset), "--store", str(tmp_path / "s.json")]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].split() == ["id", "name", "n", "dominant", "part", "attri_thres", "patch_thres"]
        assert [ln.split()[0] for ln in lines[1:]] == ["1", "2", "3", "4", "5"]
        store = load(store_path)
        assert all(r.attr_threshold.thres2 > 0 for r in store.records.values())

    def test_rerun_is_byte_identical(self, dataset, store_path, tmp_path):
        assert main(["memorize", str(dataset), "--store", str(tmp_path / "again.json")]) == 0
        assert (tmp_path / "again.json").read_bytes() == store_path.read_bytes()

    def test_config_flags_are_stored(self, dataset, tmp_path):
        path = tmp_path / "s.json"
        assert main(["memorize", str(dataset), "--store", str(path), "--lambda", "4", "--top-k", "2",
                     "--beta", "0.5", "--seed", "3"]) == 0
        cfg = json.loads(path.read_text())["config"]
        assert cfg == {"lambda": 4.0, "top_k": 2, "beta": 0.5, "seed": 3}


class TestRecognize:
    def test_memorized_image_accepted(self, dataset, store_path, capsys):
        d = dataset.parent
        code, out = run_json(capsys, ["recognize", str(d / "id002_01.png"), str(d / "id002_01.pts"),
                                      "--store", str(store_path)])
        assert code == 0 and out["label"] == 2 and out["stage"] == "accepted"

    def test_unknown_identity(self, dataset, store_path, capsys):
        d = dataset.parent
        code, out = run_json(capsys, ["recognize", str(d / "id009_00.png"), str(d / "id009_00.pts"),
                                      "--store", str(store_path), "--json"])
        assert code == 0 and out["label"] == "unknown"
        assert out["stage"] in ("familiarity_reject", "recollective_reject")

    def test_zero_shot_updates_store(self, dataset, store_path, tmp_path, capsys):
        d = dataset.parent
        path = tmp_path / "s.json"
        shutil.copy(store_path, path)
        argv = ["recognize", str(d / "id009_00.png"), str(d / "id009_00.pts"), "--store", str(path)]
        code, out = run_json(capsys, argv + ["--zero-shot"])
        assert code == 0 and out["label"] == "unknown"
        store = load(path)
        assert sorted(store.records) == [1, 2, 3, 4, 5, 6]
        assert store.records[6].name == "zero-shot-6"
        code, out = run_json(capsys, argv)
        assert out["label"] == 6 and out["stage"] == "accepted"

    def test_no_zero_shot_leaves_store(self, dataset, store_path, tmp_path, capsys):
        d = dataset.parent
        path = tmp_path / "s.json"
        shutil.copy(store_path, path)
        run_json(capsys, ["recognize", str(d / "id009_00.png"), str(d / "id009_00.pts"), "--store", str(path)])
        assert path.read_bytes() == store_path.read_bytes()


class TestEval:
    def test_memory_split_as_test_split(self, dataset, store_path, tmp_path, capsys):
        m = subset_manifest(dataset, tmp_path, lambda f: f[4] == "memory",
                            lambda f: f[:4] + ["test"])
        code, out = run_json(capsys, ["eval", str(m), "--store", str(store_path), "--json"])
        assert code == 0 and out["metrics"]["accuracy"] == 1.0

    def test_all_unknown_against_empty_store(self, dataset, tmp_path, capsys):
        MemoryStore().save(tmp_path / "empty.json")
        code, out = run_json(capsys, ["eval", str(dataset), "--store", str(tmp_path / "empty.json"), "--json"])
        m = out["metrics"]
        assert code == 0 and m["n_known"] == 0 and m["accuracy"] is None
        assert m["false_accept_rate"] == 0.0
        assert m["unknown_stages"]["familiarity_reject"] == m["n_unknown"] == 7

    def test_metrics_match_recount(self, dataset, store_path, capsys):
        code, out = run_json(capsys, ["eval", str(dataset), "--store", str(store_path), "--json"])
        samples, m = out["samples"], out["metrics"]
        known = [s for s in samples if s["id"] in (1, 2, 3, 4, 5)]
        unknown = [s for s in samples if s["id"] == 9]
        assert m["n_known"] == len(known) == 5 and m["n_unknown"] == len(unknown) == 2
        assert m["accuracy"] == sum(s["label"] == s["id"] for s in known) / 5
        assert m["false_accept_rate"] == sum(s["label"] != "unknown" for s in unknown) / 2
        for group, name in ((known, "known_stages"), (unknown, "unknown_stages")):
            for stage, n in m[name].items():
                assert n == sum(s["stage"] == stage for s in group)
        assert metrics_from_reports(samples) == m

    def test_human_table(self, dataset, store_path, capsys):
        assert main(["eval", str(dataset), "--store", str(store_path)]) == 0
        out = capsys.readouterr().out
        assert "known accuracy" in out and "false-accept rate" in out

    def test_needs_test_rows(self, dataset, store_path, tmp_path, capsys):
        m = subset_manifest(dataset, tmp_path, lambda f: f[4] == "memory")
        assert main(["eval", str(m), "--store", str(store_path)]) == 2


class TestErrors:
    def test_missing_store_is_io(self, dataset, tmp_path, capsys):
        d = dataset.parent
        code = main(["recognize", str(d / "id001_00.png"), str(d / "id001_00.pts"),
                     "--store", str(tmp_path / "absent.json")])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_corrupted_store_is_validation(self, dataset, store_path, tmp_path):
        doc = json.loads(store_path.read_text())
        doc["records"][0]["attr_threshold"]["thres"] += 1.0
        (tmp_path / "bad.json").write_text(json.dumps(doc))
        d = dataset.parent
        assert main(["recognize", str(d / "id001_00.png"), str(d / "id001_00.pts"),
                     "--store", str(tmp_path / "bad.json")]) == 2

    def test_bad_manifest_row_reports_line(self, dataset, tmp_path, capsys):
        text = dataset.read_text().splitlines()
        text[3] = text[3].replace(",memory", ",training")
        (dataset.parent / "broken.csv").write_text("\n".join(text) + "\n")
        store = tmp_path / "s.json"
        assert main(["memorize", str(dataset.parent / "broken.csv"), "--store", str(store)]) == 2
        assert "line 4" in capsys.readouterr().err
        assert not store.exists()

    def test_missing_image_is_io_with_line(self, dataset, tmp_path, capsys):
        m = subset_manifest(dataset, tmp_path, lambda f: f[0] == "1")
        (tmp_path / "id001_01.png").unlink()
        store = tmp_path / "s.json"
        assert main(["memorize", str(m), "--store", str(store)]) == 1
        assert "line 3" in capsys.readouterr().err
        assert not store.exists()

    def test_bad_landmarks_leave_no_store(self, dataset, tmp_path, capsys):
        m = subset_manifest(dataset, tmp_path, lambda f: f[0] in ("1", "2"))
        (tmp_path / "id002_00.pts").write_text("1 2\n3 4\n")
        store = tmp_path / "s.json"
        assert main(["memorize", str(m), "--store", str(store)]) == 2
        err = capsys.readouterr().err
        assert "line 6" in err
        assert not store.exists() and not list(tmp_path.glob(".*.tmp"))

    def test_existing_store_untouched_on_failure(self, dataset, store_path, tmp_path):
        m = subset_manifest(dataset, tmp_path, lambda f: f[0] == "1")
        (tmp_path / "id001_02.pts").write_text("garbage\n")
        store = tmp_path / "s.json"
        shutil.copy(store_path, store)
        assert main(["memorize", str(m), "--store", str(store)]) == 2
        assert store.read_bytes() == store_path.read_bytes()

    def test_bad_flag_value(self, dataset, tmp_path):
        assert main(["memorize", str(dataset), "--store", str(tmp_path / "s.json"), "--top-k", "0"]) == 2

    def test_missing_manifest(self, tmp_path):
        assert main(["eval", str(tmp_path / "none.csv"), "--store", str(tmp_path / "s.json")]) == 1


def test_gen_synthetic_command(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps([{"id": 1, "name": "a", "seed": 2, "n_memory": 1, "n_test": 1,
                                 "image_size": 64}]))
    assert main(["gen-synthetic", str(tmp_path / "out"), "--spec", str(spec)]) == 0
    assert capsys.readouterr().out.strip().endswith("manifest.csv")
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == [
        "id001_00.png", "id001_00.pts", "id001_01.png", "id001_01.pts", "manifest.csv"]
    spec.write_text("[{")
    assert main(["gen-synthetic", str(tmp_path / "out2"), "--spec", str(spec)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "memhmax", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("memhmax ")

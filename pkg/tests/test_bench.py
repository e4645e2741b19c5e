import hashlib
import json

import numpy as np
import pytest
from PIL import Image

from huealign.bench import (
    DatasetError,
    Manifest,
    SampleRecord,
    SeedPolicy,
    build_generated_manifest,
    expand_prompts,
    load_colorbench,
    write_colorbench_scaffold,
)
from huealign.bench_data import (
    COLOR_NAMES,
    COLORBENCH_SUBJECTS,
    GENERATED_SUBJECTS,
    PROMPT_TEMPLATES,
)
from huealign.metrics import (
    BenchmarkMismatchError,
    MetricProviders,
    evaluate_benchmark,
)


def test_roster_cardinalities():
    assert len(GENERATED_SUBJECTS) == 160
    assert len(COLORBENCH_SUBJECTS) == 100
    assert len(PROMPT_TEMPLATES) == 7
    assert len(COLOR_NAMES) == 7
    assert len(set(GENERATED_SUBJECTS)) == 160
    assert len(set(COLORBENCH_SUBJECTS)) == 100


def test_expand_prompts_verbatim():
    prompts = expand_prompts("apple")
    assert prompts == [
        "a photo of a apple",
        "an image of a apple",
        "a photo of a nice apple",
        "a photo of a large apple",
        "a good photo of a apple",
        "a rendition of a apple",
        "a toy of a apple",
    ]


def test_expand_prompts_empty_subject_rejected():
    with pytest.raises(ValueError, match="non-empty"):
        expand_prompts("")


def test_full_generated_manifest_counts():
    manifest = build_generated_manifest()
    assert len(manifest.records) == 7840
    prompts = {(r.subject, r.prompt) for r in manifest.records}
    assert len(prompts) == 1120


def test_small_manifest_counts():
    manifest = build_generated_manifest(["apple"], (PROMPT_TEMPLATES[0],), ("red",))
    assert len(manifest.records) == 1
    record = manifest.records[0]
    assert record.id == "apple--t1--red"
    assert record.prompt == "a photo of a apple"
    assert record.seed is not None


def test_duplicate_subject_rejected():
    with pytest.raises(ValueError, match="duplicate subject 'apple'"):
        build_generated_manifest(["apple", "apple"])


def test_manifest_reproducible_hash(tmp_path):
    a = build_generated_manifest(seed_policy=SeedPolicy(7))
    b = build_generated_manifest(seed_policy=SeedPolicy(7))
    ha = hashlib.sha256(a.to_json().encode()).hexdigest()
    hb = hashlib.sha256(b.to_json().encode()).hexdigest()
    assert ha == hb
    c = build_generated_manifest(seed_policy=SeedPolicy(8))
    assert hashlib.sha256(c.to_json().encode()).hexdigest() != ha


def test_seeds_shared_across_colors_of_one_source():
    manifest = build_generated_manifest(["apple"], None, None)
    by_source = {}
    for record in manifest.records:
        by_source.setdefault(record.prompt, set()).add(record.seed)
    for seeds in by_source.values():
        assert len(seeds) == 1


def test_manifest_round_trip(tmp_path):
    manifest = build_generated_manifest(["apple", "bench"], (PROMPT_TEMPLATES[0],), ("red", "blue"))
    path = tmp_path / "manifest.json"
    manifest.save(path)
    loaded = Manifest.load(path)
    assert loaded.kind == manifest.kind
    assert loaded.records == manifest.records


# -- real-image benchmark validation ------------------------------------------


@pytest.fixture(scope="module")
def colorbench_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("colorbench")
    write_colorbench_scaffold(root)
    return root


def test_intact_fixture_validates(colorbench_root):
    manifest = load_colorbench(colorbench_root)
    assert len(manifest.records) == 2842
    assert len({r.source_path for r in manifest.records}) == 406


def test_empty_root_reports_zero_sources(tmp_path):
    with pytest.raises(DatasetError, match="0 sources found"):
        load_colorbench(tmp_path)


def test_missing_target_named(tmp_path):
    names = write_colorbench_scaffold(tmp_path, names=["apple_1", "apple_2"])
    (tmp_path / "targets" / "blue" / "apple_2.png").unlink()
    with pytest.raises(DatasetError) as err:
        load_colorbench(tmp_path)
    assert any("target 'blue' missing for 'apple_2'" in p for p in err.value.problems)


def test_missing_mask_and_count_mismatch_all_reported(tmp_path):
    write_colorbench_scaffold(tmp_path, names=["pear_1"])
    (tmp_path / "masks" / "pear_1.png").unlink()
    with pytest.raises(DatasetError) as err:
        load_colorbench(tmp_path)
    problems = err.value.problems
    assert any("mask missing for 'pear_1'" in p for p in problems)
    assert any("expected 406 sources" in p for p in problems)


def test_index_disagreement_reported(tmp_path):
    write_colorbench_scaffold(tmp_path, names=["fig_1"])
    (tmp_path / "index.json").write_text(json.dumps({"format_version": 1, "sources": ["fig_1", "ghost_9"]}))
    with pytest.raises(DatasetError) as err:
        load_colorbench(tmp_path)
    assert any("ghost_9" in p for p in err.value.problems)


# -- harness over a run directory ----------------------------------------------


def small_benchmark(tmp_path, n=4):
    root = tmp_path / "data"
    (root / "sources").mkdir(parents=True)
    (root / "masks").mkdir()
    rng = np.random.default_rng(0)
    records = []
    for i in range(n):
        name = f"s{i}"
        img = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        Image.fromarray(img).save(root / "sources" / f"{name}.png")
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[8:24, 8:24] = 255
        Image.fromarray(mask).convert("1").save(root / "masks" / f"{name}.png")
        records.append(
            SampleRecord(
                id=f"{name}--red",
                subject="thing",
                prompt="a photo of a thing",
                color="red",
                source_path=f"sources/{name}.png",
                mask_path=f"masks/{name}.png",
            )
        )
    return Manifest(kind="generated", records=records, root=root)


def test_identity_run_scores_unity_ssim(tmp_path):
    manifest = small_benchmark(tmp_path)
    run = tmp_path / "run"
    run.mkdir()
    for record in manifest.records:
        src = Image.open(manifest.resolve(record.source_path))
        src.save(run / f"{record.id}.png")
    result = evaluate_benchmark(run, manifest, MetricProviders.desk())
    assert result.missing == []
    assert result.means["ssim"] == pytest.approx(1.0)
    assert result.means["lpips_bg"] == pytest.approx(0.0)
    assert all(r.ds == pytest.approx(1.0, abs=1e-4) for r in result.reports)


def test_empty_run_dir_fails_listing_missing(tmp_path):
    manifest = small_benchmark(tmp_path)
    run = tmp_path / "empty"
    run.mkdir()
    with pytest.raises(BenchmarkMismatchError) as err:
        evaluate_benchmark(run, manifest)
    assert len(err.value.missing) == 4


def test_below_tolerance_missing_is_listed_not_fatal(tmp_path):
    manifest = small_benchmark(tmp_path, n=30)
    run = tmp_path / "run"
    run.mkdir()
    for record in manifest.records[:-1]:
        Image.open(manifest.resolve(record.source_path)).save(run / f"{record.id}.png")
    result = evaluate_benchmark(run, manifest, MetricProviders.desk())
    assert result.missing == [manifest.records[-1].id]


def test_aggregation_is_order_invariant(tmp_path, rng):
    manifest = small_benchmark(tmp_path, n=5)
    run = tmp_path / "run"
    run.mkdir()
    for record in manifest.records:
        img = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        Image.fromarray(img).save(run / f"{record.id}.png")
    forward = evaluate_benchmark(run, manifest, MetricProviders.desk())
    shuffled = Manifest(kind=manifest.kind, records=list(reversed(manifest.records)), root=manifest.root)
    backward = evaluate_benchmark(run, shuffled, MetricProviders.desk())
    for column in ("ssim", "ds", "l1_hue_obj"):
        assert forward.means[column] == pytest.approx(backward.means[column], rel=1e-12)


def test_csv_and_json_outputs_are_deterministic(tmp_path):
    manifest = small_benchmark(tmp_path, n=2)
    run = tmp_path / "run"
    run.mkdir()
    for record in manifest.records:
        Image.open(manifest.resolve(record.source_path)).save(run / f"{record.id}.png")
    a = evaluate_benchmark(run, manifest, MetricProviders.desk())
    b = evaluate_benchmark(run, manifest, MetricProviders.desk())
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()
    assert a.to_csv().startswith("id,ds,ssim,cs,l1_hue_obj,l1_hsv_obj,lpips_bg,lpips_obj\n")

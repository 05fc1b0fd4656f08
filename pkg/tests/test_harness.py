"""Pair pipeline and dataset evaluation: statuses, aggregation, reports."""

from __future__ import annotations

import json

import numpy as np
import pytest

from xfidelity.attack import AttackBudget
from xfidelity.errors import ParameterError, ValidationError
from xfidelity.harness import (
    CallableTool,
    FileTool,
    HarnessConfig,
    LimeTool,
    RiseTool,
    SobolTool,
    evaluate_dataset,
    format_percent,
    load_manifest,
    parse_tool_spec,
    render_report,
    run_pair,
)
from xfidelity.predictor import CountingPredictor, make_planted_detector
from xfidelity.segmentation import SlicParams
from xfidelity.tensor import (
    ImageTensor,
    SaliencyMap,
    encode_image,
    encode_saliency,
)

DET = make_planted_detector((4, 4, 4, 4), "R", 0.5, 20.0)

CONFIG = HarnessConfig(
    slic=SlicParams(requested_segments=16),
    budget=AttackBudget(
        sigma=0.001, samples=20, max_iters=40, epsilon=0.5, alpha=0.05
    ),
)


def scene(region_value: float, bg: float = 0.2) -> ImageTensor:
    px = np.full((16, 16, 3), bg)
    px[4:8, 4:8, 0] = region_value
    return ImageTensor.from_pixels(px)


def saliency_on(rows: slice, cols: slice) -> SaliencyMap:
    grid = np.zeros((16, 16), np.float32)
    grid[rows, cols] = 1.0
    return SaliencyMap.from_grid(grid)


ORACLE_SAL = saliency_on(slice(4, 8), slice(4, 8))
ANTI_SAL = saliency_on(slice(0, 4), slice(0, 4))


def oracle_tool(name: str = "oracle") -> CallableTool:
    return CallableTool(name, lambda img: ORACLE_SAL)


# ---------------------------------------------------------------- manifests


def write_dataset(tmp_path, pair_count: int, region_value: float = 0.9):
    """PNG pairs plus stored oracle/anti saliency files and a manifest."""
    pairs = []
    for i in range(pair_count):
        real_p = tmp_path / f"real_{i}.png"
        fake_p = tmp_path / f"fake_{i}.png"
        real_p.write_bytes(encode_image(scene(0.2)))
        fake_p.write_bytes(encode_image(scene(region_value)))
        oracle_p = tmp_path / f"oracle_{i}.salm"
        anti_p = tmp_path / f"anti_{i}.salm"
        oracle_p.write_bytes(encode_saliency(ORACLE_SAL))
        anti_p.write_bytes(encode_saliency(ANTI_SAL))
        pairs.append(
            {
                "id": f"pair-{i}",
                "real": real_p.name,
                "fake": fake_p.name,
                "saliency": {"oracle": oracle_p.name, "anti": anti_p.name},
            }
        )
    manifest_p = tmp_path / "manifest.json"
    manifest_p.write_text(json.dumps({"dataset": "toy", "pairs": pairs}))
    return manifest_p


def test_manifest_resolves_relative_paths(tmp_path):
    path = write_dataset(tmp_path, 2)
    manifest = load_manifest(path)
    assert manifest.dataset_label == "toy"
    assert [e.pair_id for e in manifest.entries] == ["pair-0", "pair-1"]
    assert manifest.entries[0].real_path.is_absolute()
    assert manifest.entries[0].real_path.read_bytes()[:4] == b"\x89PNG"
    assert set(manifest.entries[0].saliency) == {"oracle", "anti"}


def test_manifest_rejects_duplicate_ids(tmp_path):
    path = write_dataset(tmp_path, 1)
    raw = json.loads(path.read_text())
    raw["pairs"].append(dict(raw["pairs"][0]))
    path.write_text(json.dumps(raw))
    with pytest.raises(ValidationError, match="duplicate"):
        load_manifest(path)


def test_manifest_rejects_missing_files(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(
        json.dumps({"pairs": [{"id": "a", "real": "no.png", "fake": "no.png"}]})
    )
    with pytest.raises(ValidationError, match="does not exist"):
        load_manifest(path)


def test_manifest_shape_errors(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("not json")
    with pytest.raises(ValidationError):
        load_manifest(path)
    path.write_text(json.dumps({"pairs": "nope"}))
    with pytest.raises(ValidationError, match="'pairs' array"):
        load_manifest(path)
    path.write_text(json.dumps({"pairs": [{"id": 7}]}))
    with pytest.raises(ValidationError, match="non-empty string"):
        load_manifest(path)


def test_tool_spec_parsing():
    assert isinstance(parse_tool_spec("rise"), RiseTool)
    assert isinstance(parse_tool_spec("sobol"), SobolTool)
    assert isinstance(parse_tool_spec("lime"), LimeTool)
    tool = parse_tool_spec("file:gradcam")
    assert isinstance(tool, FileTool) and tool.name == "file:gradcam"
    with pytest.raises(ParameterError):
        parse_tool_spec("file:")
    with pytest.raises(ParameterError):
        parse_tool_spec("shap")


# ----------------------------------------------------------------- run_pair


def test_run_pair_attacks_and_flips_the_planted_pair():
    rec = run_pair(DET, scene(0.2), scene(0.9), oracle_tool(), CONFIG, seed=0)
    assert rec.status == "attacked" and rec.attacked
    assert rec.success and rec.final_prob_fake < 0.5
    assert rec.real_prob_fake < 0.5 <= rec.fake_prob_fake
    assert rec.segment_count == 16
    assert rec.attacked_pixels == 16
    assert len(rec.attacked_segments) == 1
    assert rec.queries_issued == rec.iterations_used * 41 + 1
    assert rec.explain_seconds is not None and rec.attack_seconds is not None
    assert "explain_seconds" not in rec.to_json_dict()


def test_run_pair_skips_a_misclassified_real_after_two_queries():
    counter = CountingPredictor(DET)
    rec = run_pair(counter, scene(0.9), scene(0.9), oracle_tool(), CONFIG)
    assert rec.status == "skipped: real misclassified"
    assert rec.skip_stage == "verdict"
    assert counter.queries == 2
    assert rec.success is None and rec.final_prob_fake is None


def test_run_pair_takes_the_early_exit_when_the_fake_reads_real():
    counter = CountingPredictor(DET)
    rec = run_pair(counter, scene(0.2), scene(0.3), oracle_tool(), CONFIG)
    assert rec.attacked and rec.success
    assert rec.iterations_used == 0 and rec.queries_issued == 1
    assert rec.linf_distortion == 0.0
    assert counter.queries == 3  # verdict pair + the attack's first check


def test_run_pair_records_explain_stage_failures():
    def boom(img):
        raise RuntimeError("boom")

    rec = run_pair(DET, scene(0.2), scene(0.9), CallableTool("bad", boom), CONFIG)
    assert rec.status == "skipped: boom"
    assert rec.skip_stage == "explain"
    assert rec.fake_prob_fake is not None  # verdicts were still recorded


def test_run_pair_rejects_mismatched_pair_sizes():
    small = ImageTensor.from_pixels(np.full((16, 12, 3), 0.2))
    rec = run_pair(DET, scene(0.2), small, oracle_tool(), CONFIG)
    assert rec.status == "skipped: pair images differ in size"
    assert rec.skip_stage == "validate"


def test_run_pair_surfaces_segmentation_failures():
    det = make_planted_detector((0, 0, 1, 1), "R", 0.5, 20.0)
    tiny_real = ImageTensor.from_pixels(np.full((2, 2, 3), 0.2))
    tiny_fake = ImageTensor.from_pixels(np.full((2, 2, 3), 0.2))
    tool = CallableTool("flat", lambda img: SaliencyMap.from_grid(np.zeros((2, 2))))
    rec = run_pair(det, tiny_real, tiny_fake, tool, CONFIG)  # K=16 > 4 pixels
    assert rec.skip_stage == "segment"


def test_file_tool_without_a_stored_map_skips_at_explain():
    rec = run_pair(DET, scene(0.2), scene(0.9), FileTool("gradcam"), CONFIG)
    assert rec.skip_stage == "explain"
    assert "gradcam" in rec.status


# ----------------------------------------------------------- evaluate_dataset


def test_dataset_separates_the_oracle_from_the_anti_oracle(tmp_path):
    manifest = load_manifest(write_dataset(tmp_path, 4))
    tools = [FileTool("oracle"), FileTool("anti")]
    report = evaluate_dataset(manifest, DET, tools, CONFIG, master_seed=11)

    assert report.pairs_total == 4 and report.pairs_attackable == 4
    assert report.original_accuracy == 1.0
    oracle = report.tools["file:oracle"]
    anti = report.tools["file:anti"]
    assert oracle.pairs_attacked == 4 and oracle.flips == 4
    assert oracle.adversarial_accuracy == 0.0
    assert anti.pairs_attacked == 4 and anti.flips == 0
    assert anti.adversarial_accuracy == 1.0
    assert report.warnings == ()
    # the anti tool attacked pixels the detector never reads: bit-exact no-op
    for rec in report.records:
        if rec.tool == "file:anti":
            assert rec.final_prob_fake == rec.fake_prob_fake
            assert rec.linf_distortion == 0.0


def test_dataset_report_bytes_are_stable_across_runs_and_workers(tmp_path):
    manifest = load_manifest(write_dataset(tmp_path, 3))
    tools = [FileTool("oracle"), FileTool("anti")]
    blobs = []
    for workers in (1, 2, 1):
        config = HarnessConfig(
            slic=CONFIG.slic, budget=CONFIG.budget, workers=workers
        )
        report = evaluate_dataset(manifest, DET, tools, config, master_seed=5)
        blobs.append(render_report(report, "json"))
    assert blobs[0] == blobs[1] == blobs[2]
    parsed = json.loads(blobs[0])
    assert parsed["seed"] == 5
    assert parsed["config"]["budget"]["samples"] == 20
    assert [p["pair_id"] for p in parsed["pairs"]] == sorted(
        p["pair_id"] for p in parsed["pairs"]
    )


def test_dataset_warns_when_every_pair_is_skipped(tmp_path):
    manifest = load_manifest(write_dataset(tmp_path, 2, region_value=0.9))
    # make every real misclassified by raising its region above threshold
    for i in range(2):
        (tmp_path / f"real_{i}.png").write_bytes(encode_image(scene(0.9)))
    report = evaluate_dataset(manifest, DET, [FileTool("oracle")], CONFIG)
    assert report.pairs_attackable == 0
    assert report.original_accuracy is None
    assert report.warnings[0] == "all pairs were skipped before the attack stage"
    assert "tool 'file:oracle' attacked no pairs" in report.warnings
    assert report.tools["file:oracle"].adversarial_accuracy is None
    md = render_report(report, "markdown").decode()
    assert "| Original Accuracy | n/a |" in md
    assert "## Warnings" in md


def test_dataset_marks_unreadable_images_as_load_skips(tmp_path):
    path = write_dataset(tmp_path, 2)
    (tmp_path / "fake_1.png").write_bytes(b"this is not a png")
    report = evaluate_dataset(load_manifest(path), DET, [FileTool("oracle")], CONFIG)
    by_id = {r.pair_id: r for r in report.records}
    assert by_id["pair-0"].attacked
    assert by_id["pair-1"].skip_stage == "load"
    assert by_id["pair-1"].status.startswith("skipped: cannot load pair")
    assert report.pairs_attackable == 1


def test_dataset_argument_errors(tmp_path):
    manifest = load_manifest(write_dataset(tmp_path, 1))
    with pytest.raises(ParameterError, match="at least one tool"):
        evaluate_dataset(manifest, DET, [], CONFIG)
    with pytest.raises(ParameterError, match="unique"):
        evaluate_dataset(manifest, DET, [FileTool("oracle"), FileTool("oracle")], CONFIG)
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"pairs": []}))
    with pytest.raises(ParameterError, match="no pairs"):
        evaluate_dataset(load_manifest(empty), DET, [FileTool("oracle")], CONFIG)


# ------------------------------------------------------------------ reports


def test_percent_formatting_is_two_decimal():
    assert format_percent(0.272916) == "27.29%"
    assert format_percent(1.0) == "100.00%"
    assert format_percent(0.0) == "0.00%"


def test_markdown_report_tables(tmp_path):
    manifest = load_manifest(write_dataset(tmp_path, 2))
    report = evaluate_dataset(
        manifest, DET, [FileTool("oracle"), FileTool("anti")], CONFIG, master_seed=3
    )
    md = render_report(report, "markdown").decode()
    assert "| Original Accuracy | 100.00% |" in md
    assert "| file:oracle | 0.00% |" in md
    assert "| file:anti | 100.00% |" in md
    assert "## Mean seconds per attacked pair" in md
    with pytest.raises(ParameterError):
        render_report(report, "yaml")


def test_config_validation():
    with pytest.raises(ParameterError):
        HarnessConfig(top_k_segments=0)
    with pytest.raises(ParameterError):
        HarnessConfig(workers=0)

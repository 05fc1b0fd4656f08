"""End-to-end evaluation over (real, fake) pairs.

For each pair and tool the pipeline is: verify the pair's verdicts,
explain the REAL image with the tool, segment the FAKE image, rank the
fake's segments under the real image's saliency, then attack the fake
inside its top-ranked segment.  A tool is faithful to the detector exactly
to the degree that these attacks flip verdicts, which is what the report's
adversarial accuracy measures (lower = more faithful).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .attack import AttackBudget, nes_attack
from .errors import ParameterError, ValidationError
from .explainers import (
    LimeParams,
    RiseParams,
    SobolParams,
    lime_explain,
    rise_explain,
    sobol_explain,
)
from .predictor import Label, Predictor, Verdict
from .ranking import rank_segments
from .rng import derive_seed
from .segmentation import SegmentMap, SlicParams, segment_indices, slic_segment
from .tensor import ImageTensor, SaliencyMap, decode_image, decode_saliency


@dataclass(frozen=True)
class PairEntry:
    pair_id: str
    real_path: Path
    fake_path: Path
    saliency: dict[str, Path] = field(default_factory=dict)


@dataclass(frozen=True)
class PairManifest:
    dataset_label: str
    entries: tuple[PairEntry, ...]


def load_manifest(path: str | Path) -> PairManifest:
    """Read a manifest JSON file; all referenced paths must exist.

    Shape: {"dataset": text, "pairs": [{"id", "real", "fake",
    "saliency": {tool: salm-path, ...}?}]}.  Relative paths resolve
    against the manifest's directory.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("pairs"), list):
        raise ValidationError("manifest must be an object with a 'pairs' array")
    dataset = raw.get("dataset", "dataset")
    if not isinstance(dataset, str):
        raise ValidationError("'dataset' must be a string")
    base = path.parent

    def resolve(p: object, what: str) -> Path:
        if not isinstance(p, str):
            raise ValidationError(f"{what} must be a path string")
        resolved = (base / p).resolve()
        if not resolved.is_file():
            raise ValidationError(f"{what} does not exist: {resolved}")
        return resolved

    entries = []
    seen = set()
    for pos, item in enumerate(raw["pairs"]):
        if not isinstance(item, dict) or "id" not in item:
            raise ValidationError(f"pairs[{pos}] must be an object with an 'id'")
        pair_id = item["id"]
        if not isinstance(pair_id, str) or not pair_id:
            raise ValidationError(f"pairs[{pos}].id must be a non-empty string")
        if pair_id in seen:
            raise ValidationError(f"duplicate pair id {pair_id!r}")
        seen.add(pair_id)
        saliency = {}
        for tool, sal_path in (item.get("saliency") or {}).items():
            saliency[str(tool)] = resolve(sal_path, f"pairs[{pos}].saliency[{tool}]")
        entries.append(
            PairEntry(
                pair_id=pair_id,
                real_path=resolve(item.get("real"), f"pairs[{pos}].real"),
                fake_path=resolve(item.get("fake"), f"pairs[{pos}].fake"),
                saliency=saliency,
            )
        )
    return PairManifest(dataset_label=dataset, entries=tuple(entries))


class SaliencyTool:
    """A named saliency source; subclasses either compute a map by querying
    the predictor or load a precomputed one."""

    name: str

    def explain(
        self,
        predictor: Predictor,
        image: ImageTensor,
        *,
        seed: int,
        explain_class: Label,
        entry: PairEntry | None = None,
    ) -> SaliencyMap:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class RiseTool(SaliencyTool):
    def __init__(self, params: RiseParams | None = None, name: str = "rise"):
        self.name = name
        self.params = params or RiseParams()

    def explain(self, predictor, image, *, seed, explain_class, entry=None):
        return rise_explain(
            predictor, image, replace(self.params, seed=seed), explain_class
        )

    def describe(self) -> dict:
        return {
            "kind": "rise",
            "mask_count": self.params.mask_count,
            "grid": self.params.grid,
            "keep_prob": self.params.keep_prob,
        }


class SobolTool(SaliencyTool):
    def __init__(self, params: SobolParams | None = None, name: str = "sobol"):
        self.name = name
        self.params = params or SobolParams()

    def explain(self, predictor, image, *, seed, explain_class, entry=None):
        return sobol_explain(
            predictor, image, replace(self.params, seed=seed), explain_class
        )

    def describe(self) -> dict:
        return {
            "kind": "sobol",
            "grid": self.params.grid,
            "design_size": self.params.design_size,
        }


class LimeTool(SaliencyTool):
    """LIME over a SLIC segmentation of the explained image."""

    def __init__(
        self,
        params: LimeParams | None = None,
        slic: SlicParams | None = None,
        name: str = "lime",
    ):
        self.name = name
        self.params = params or LimeParams()
        self.slic = slic or SlicParams()

    def explain(self, predictor, image, *, seed, explain_class, entry=None):
        seg = slic_segment(image, self.slic)
        return lime_explain(
            predictor, image, seg, replace(self.params, seed=seed), explain_class
        )

    def describe(self) -> dict:
        return {
            "kind": "lime",
            "perturbation_count": self.params.perturbation_count,
            "kernel_width": self.params.kernel_width,
            "ridge_lambda": self.params.ridge_lambda,
            "slic_segments": self.slic.requested_segments,
        }


class FileTool(SaliencyTool):
    """Precomputed saliency (e.g. Grad-CAM or XRAI exported by an adapter),
    looked up in the manifest entry by key."""

    def __init__(self, key: str):
        self.key = key
        self.name = f"file:{key}"

    def explain(self, predictor, image, *, seed, explain_class, entry=None):
        if entry is None or self.key not in entry.saliency:
            raise ParameterError(
                f"pair has no stored saliency for {self.key!r}"
            )
        sal = decode_saliency(entry.saliency[self.key].read_bytes())
        if (sal.height, sal.width) != (image.height, image.width):
            raise ParameterError(
                f"stored saliency is {sal.height}x{sal.width} but the image "
                f"is {image.height}x{image.width}"
            )
        return sal

    def describe(self) -> dict:
        return {"kind": "file", "key": self.key}


class CallableTool(SaliencyTool):
    """Adapter for programmatic saliency functions (test oracles)."""

    def __init__(self, name: str, fn: Callable[[ImageTensor], SaliencyMap]):
        self.name = name
        self.fn = fn

    def explain(self, predictor, image, *, seed, explain_class, entry=None):
        return self.fn(image)

    def describe(self) -> dict:
        return {"kind": "callable", "name": self.name}


def parse_tool_spec(
    spec: str,
    *,
    rise: RiseParams | None = None,
    sobol: SobolParams | None = None,
    lime: LimeParams | None = None,
    slic: SlicParams | None = None,
) -> SaliencyTool:
    spec = spec.strip()
    if spec == "rise":
        return RiseTool(rise)
    if spec == "sobol":
        return SobolTool(sobol)
    if spec == "lime":
        return LimeTool(lime, slic)
    if spec.startswith("file:"):
        key = spec[len("file:"):]
        if not key:
            raise ParameterError("file tool needs a key, e.g. file:gradcam")
        return FileTool(key)
    raise ParameterError(
        f"unknown tool {spec!r}; expected rise, sobol, lime or file:<key>"
    )


@dataclass(frozen=True)
class HarnessConfig:
    slic: SlicParams = SlicParams()
    budget: AttackBudget = AttackBudget()
    top_k_segments: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.top_k_segments < 1:
            raise ParameterError("top_k_segments must be at least 1")
        if self.workers < 1:
            raise ParameterError("workers must be at least 1")


@dataclass
class PairRecord:
    pair_id: str
    tool: str
    status: str  # "attacked" or "skipped: <reason>"
    skip_stage: str | None = None
    real_prob_fake: float | None = None
    fake_prob_fake: float | None = None
    success: bool | None = None
    iterations_used: int | None = None
    queries_issued: int | None = None
    final_prob_fake: float | None = None
    linf_distortion: float | None = None
    segment_count: int | None = None
    attacked_segments: tuple[int, ...] | None = None
    attacked_pixels: int | None = None
    explain_seconds: float | None = None
    attack_seconds: float | None = None

    @property
    def attacked(self) -> bool:
        return self.status == "attacked"

    def to_json_dict(self) -> dict:
        # timings are intentionally absent: the JSON report is byte-stable
        return {
            "pair_id": self.pair_id,
            "tool": self.tool,
            "status": self.status,
            "skip_stage": self.skip_stage,
            "real_prob_fake": self.real_prob_fake,
            "fake_prob_fake": self.fake_prob_fake,
            "success": self.success,
            "iterations_used": self.iterations_used,
            "queries_issued": self.queries_issued,
            "final_prob_fake": self.final_prob_fake,
            "linf_distortion": self.linf_distortion,
            "segment_count": self.segment_count,
            "attacked_segments": list(self.attacked_segments)
            if self.attacked_segments is not None
            else None,
            "attacked_pixels": self.attacked_pixels,
        }


def run_pair(
    predictor: Predictor,
    real: ImageTensor,
    fake: ImageTensor,
    tool: SaliencyTool,
    config: HarnessConfig,
    *,
    pair_id: str = "pair",
    seed: int = 0,
    entry: PairEntry | None = None,
) -> PairRecord:
    """Run one pair through one tool; never raises on stage failures, the
    record carries the failed stage instead."""
    record = PairRecord(pair_id=pair_id, tool=tool.name, status="attacked")

    def skipped(stage: str, reason: str) -> PairRecord:
        record.status = f"skipped: {reason}"
        record.skip_stage = stage
        return record

    if (real.height, real.width) != (fake.height, fake.width):
        return skipped("validate", "pair images differ in size")

    try:
        probs = predictor.predict_probs([real, fake])
    except Exception as exc:
        return skipped("verdict", f"predictor failed: {exc}")
    record.real_prob_fake = float(probs[0])
    record.fake_prob_fake = float(probs[1])
    if Verdict.from_prob(record.real_prob_fake).label is not Label.REAL:
        # the tool's explanation of a misclassified real image is untrusted
        return skipped("verdict", "real misclassified")

    start = time.perf_counter()
    try:
        sal = tool.explain(
            predictor,
            real,
            seed=derive_seed(seed, "explain"),
            explain_class=Label.REAL,
            entry=entry,
        )
    except Exception as exc:
        return skipped("explain", str(exc))
    record.explain_seconds = time.perf_counter() - start

    try:
        seg = slic_segment(fake, config.slic)
    except Exception as exc:
        return skipped("segment", str(exc))
    record.segment_count = seg.segment_count

    try:
        ranking = rank_segments(sal, seg)
        top = ranking.top(min(config.top_k_segments, seg.segment_count))
        indices = np.sort(
            np.concatenate([segment_indices(seg, lb) for lb in top])
        )
    except Exception as exc:
        return skipped("rank", str(exc))
    record.attacked_segments = tuple(int(lb) for lb in top)
    record.attacked_pixels = int(indices.size)

    start = time.perf_counter()
    try:
        result = nes_attack(
            predictor,
            fake,
            indices,
            replace(config.budget, seed=derive_seed(seed, "attack")),
        )
    except Exception as exc:
        return skipped("attack", str(exc))
    record.attack_seconds = time.perf_counter() - start

    record.success = result.success
    record.iterations_used = result.iterations_used
    record.queries_issued = result.queries_issued
    record.final_prob_fake = result.final_prob_fake
    record.linf_distortion = result.linf_distortion
    return record


@dataclass(frozen=True)
class ToolSummary:
    adversarial_accuracy: float | None
    pairs_attacked: int
    pairs_skipped: int
    flips: int
    mean_explain_seconds: float | None
    mean_attack_seconds: float | None

    def to_json_dict(self) -> dict:
        return {
            "adversarial_accuracy": self.adversarial_accuracy,
            "pairs_attacked": self.pairs_attacked,
            "pairs_skipped": self.pairs_skipped,
            "flips": self.flips,
        }


@dataclass(frozen=True)
class EvaluationReport:
    dataset_label: str
    seed: int
    config: dict
    pairs_total: int
    pairs_attackable: int
    original_accuracy: float | None
    tools: dict[str, ToolSummary]
    records: tuple[PairRecord, ...]
    warnings: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset_label,
            "seed": self.seed,
            "config": self.config,
            "pairs_total": self.pairs_total,
            "pairs_attackable": self.pairs_attackable,
            "original_accuracy": self.original_accuracy,
            "tools": {name: s.to_json_dict() for name, s in self.tools.items()},
            "pairs": [r.to_json_dict() for r in self.records],
            "warnings": list(self.warnings),
        }


def _config_snapshot(
    predictor: Predictor, tools: Sequence[SaliencyTool], config: HarnessConfig
) -> dict:
    return {
        "predictor": predictor.describe(),
        "slic": {
            "requested_segments": config.slic.requested_segments,
            "compactness": config.slic.compactness,
            "iterations": config.slic.iterations,
        },
        "budget": {
            "sigma": config.budget.sigma,
            "samples": config.budget.samples,
            "max_iters": config.budget.max_iters,
            "epsilon": config.budget.epsilon,
            "alpha": config.budget.alpha,
        },
        "top_k_segments": config.top_k_segments,
        "tools": {tool.name: tool.describe() for tool in tools},
        "conventions": {
            "real_misclassified": "pair skipped; explanation untrusted",
            "fake_already_real": "attacked via the iteration-zero early exit; "
            "counts toward original accuracy as a miss",
        },
    }


def evaluate_dataset(
    manifest: PairManifest,
    predictor: Predictor,
    tools: Sequence[SaliencyTool],
    config: HarnessConfig = HarnessConfig(),
    master_seed: int = 0,
) -> EvaluationReport:
    """Run every (pair, tool) combination and aggregate accuracies.

    Per-pair seeds derive from (master_seed, pair_id, tool name), so the
    report is identical for any worker count.
    """
    if not manifest.entries:
        raise ParameterError("manifest holds no pairs")
    if not tools:
        raise ParameterError("at least one tool is required")
    names = [t.name for t in tools]
    if len(set(names)) != len(names):
        raise ParameterError("tool names must be unique")

    def run_entry(entry: PairEntry) -> list[PairRecord]:
        try:
            real = decode_image(entry.real_path.read_bytes())
            fake = decode_image(entry.fake_path.read_bytes())
        except Exception as exc:
            return [
                PairRecord(
                    pair_id=entry.pair_id,
                    tool=tool.name,
                    status=f"skipped: cannot load pair: {exc}",
                    skip_stage="load",
                )
                for tool in tools
            ]
        return [
            run_pair(
                predictor,
                real,
                fake,
                tool,
                config,
                pair_id=entry.pair_id,
                seed=derive_seed(master_seed, entry.pair_id, tool.name),
                entry=entry,
            )
            for tool in tools
        ]

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            per_entry = list(pool.map(run_entry, manifest.entries))
    else:
        per_entry = [run_entry(entry) for entry in manifest.entries]

    records = [rec for group in per_entry for rec in group]
    records.sort(key=lambda r: (r.pair_id, r.tool))

    # a pair is attackable when its real image was classified Real and it
    # loaded; those facts are tool-independent, so read them off tool 0
    attackable_fake_probs = [
        group[0].fake_prob_fake
        for group in per_entry
        if group[0].skip_stage not in ("load", "validate", "verdict")
    ]
    pairs_attackable = len(attackable_fake_probs)
    original_accuracy = (
        sum(1 for p in attackable_fake_probs if p >= 0.5) / pairs_attackable
        if pairs_attackable
        else None
    )

    warnings: list[str] = []
    tool_summaries: dict[str, ToolSummary] = {}
    for tool in tools:
        mine = [r for r in records if r.tool == tool.name]
        attacked = [r for r in mine if r.attacked]
        skipped = len(mine) - len(attacked)
        if attacked:
            adversarial = sum(
                1 for r in attacked if r.final_prob_fake >= 0.5
            ) / len(attacked)
            flips = sum(
                1
                for r in attacked
                if r.fake_prob_fake >= 0.5 and r.final_prob_fake < 0.5
            )
            explain_times = [r.explain_seconds for r in attacked]
            attack_times = [r.attack_seconds for r in attacked]
            mean_explain = sum(explain_times) / len(explain_times)
            mean_attack = sum(attack_times) / len(attack_times)
        else:
            adversarial = None
            flips = 0
            mean_explain = None
            mean_attack = None
            warnings.append(f"tool {tool.name!r} attacked no pairs")
        tool_summaries[tool.name] = ToolSummary(
            adversarial_accuracy=adversarial,
            pairs_attacked=len(attacked),
            pairs_skipped=skipped,
            flips=flips,
            mean_explain_seconds=mean_explain,
            mean_attack_seconds=mean_attack,
        )
    if pairs_attackable == 0:
        warnings.insert(0, "all pairs were skipped before the attack stage")

    return EvaluationReport(
        dataset_label=manifest.dataset_label,
        seed=master_seed,
        config=_config_snapshot(predictor, tools, config),
        pairs_total=len(manifest.entries),
        pairs_attackable=pairs_attackable,
        original_accuracy=original_accuracy,
        tools=tool_summaries,
        records=tuple(records),
        warnings=tuple(warnings),
    )


def format_percent(value: float) -> str:
    return f"{100.0 * value:.2f}%"


def render_report(report: EvaluationReport, fmt: str = "json") -> bytes:
    """Serialize a report; 'json' is canonical and byte-stable, 'markdown'
    adds the timing tables (wall-clock means, deliberately absent from the
    JSON so identical runs serialize identically)."""
    if fmt == "json":
        return (
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
        ).encode("utf-8")
    if fmt not in ("markdown", "markdown-table"):
        raise ParameterError(f"unknown report format {fmt!r}")

    label = report.dataset_label
    lines = [f"# Evaluation report: {label}", ""]
    lines += [f"| Metric | {label} |", "| --- | --- |"]
    original = (
        format_percent(report.original_accuracy)
        if report.original_accuracy is not None
        else "n/a"
    )
    lines.append(f"| Original Accuracy | {original} |")
    for name, summary in report.tools.items():
        cell = (
            format_percent(summary.adversarial_accuracy)
            if summary.adversarial_accuracy is not None
            else "n/a"
        )
        lines.append(f"| {name} | {cell} |")
    lines += [
        "",
        f"Pairs: {report.pairs_total} total, {report.pairs_attackable} attackable.",
        "",
        "## Mean seconds per attacked pair",
        "",
        "| Tool | Explain | Attack |",
        "| --- | --- | --- |",
    ]
    for name, summary in report.tools.items():
        explain = (
            f"{summary.mean_explain_seconds:.3f}"
            if summary.mean_explain_seconds is not None
            else "n/a"
        )
        attack = (
            f"{summary.mean_attack_seconds:.3f}"
            if summary.mean_attack_seconds is not None
            else "n/a"
        )
        lines.append(f"| {name} | {explain} | {attack} |")
    if report.warnings:
        lines += ["", "## Warnings", ""]
        lines += [f"- {w}" for w in report.warnings]
    lines.append("")
    return "\n".join(lines).encode("utf-8")

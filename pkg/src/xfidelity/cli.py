"""Command-line surface.

Subcommands operate on local PNG/SALM files and reach models either
in-process (builtin:...) or over the wire protocol (http://, tcp://).
The attack's --eps and --alpha are given in 1/255 units, matching how
such budgets are conventionally quoted (16 means 16/255).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .attack import AttackBudget, nes_attack
from .errors import ParameterError, XFidelityError
from .explainers import (
    LimeParams,
    RiseParams,
    SobolParams,
    lime_explain,
    rise_explain,
    sobol_explain,
)
from .harness import (
    HarnessConfig,
    evaluate_dataset,
    load_manifest,
    parse_tool_spec,
    render_report,
)
from .metrics import (
    ReplacementStrategy,
    deletion_eval,
    insertion_eval,
    irof_eval,
)
from .predictor import Label, parse_predictor_spec
from .ranking import rank_segments
from .segmentation import (
    SlicParams,
    decode_segments,
    encode_segments,
    segment_indices,
    slic_segment,
)
from .tensor import (
    decode_image,
    decode_saliency,
    encode_image,
    encode_saliency,
)


def _emit(obj: dict) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _read_image(path: str):
    return decode_image(Path(path).read_bytes())


def _read_saliency(path: str):
    return decode_saliency(Path(path).read_bytes())


def _read_segments(path: str):
    return decode_segments(Path(path).read_bytes())


def _class_arg(value: str) -> Label:
    if value.lower() == "real":
        return Label.REAL
    if value.lower() == "fake":
        return Label.FAKE
    raise argparse.ArgumentTypeError("class must be 'real' or 'fake'")


def _cmd_segment(args) -> int:
    img = _read_image(args.image)
    params = SlicParams(
        requested_segments=args.segments,
        compactness=args.compactness,
        iterations=args.iterations,
    )
    seg = slic_segment(img, params)
    Path(args.out).write_bytes(encode_segments(seg))
    _emit(
        {
            "height": seg.height,
            "width": seg.width,
            "segment_count": seg.segment_count,
            "out": args.out,
        }
    )
    return 0


def _cmd_rank(args) -> int:
    ranking = rank_segments(_read_saliency(args.saliency), _read_segments(args.segments))
    top = args.top if args.top is not None else len(ranking.ordered_labels)
    if not 0 < top <= len(ranking.ordered_labels):
        raise ParameterError(f"--top must lie in [1, {len(ranking.ordered_labels)}]")
    _emit(
        {
            "labels": list(ranking.ordered_labels[:top]),
            "importances": list(ranking.importances[:top]),
        }
    )
    return 0


def _explain_once(args, predictor, img):
    explain_class = args.explained_class
    if args.tool == "rise":
        params = RiseParams(
            mask_count=args.mask_count,
            grid=args.grid if args.grid is not None else 7,
            keep_prob=args.keep_prob,
            seed=args.seed,
        )
        return rise_explain(predictor, img, params, explain_class)
    if args.tool == "sobol":
        params = SobolParams(
            grid=args.grid if args.grid is not None else 8,
            design_size=args.design_size,
            seed=args.seed,
        )
        return sobol_explain(predictor, img, params, explain_class)
    if args.tool == "lime":
        params = LimeParams(
            perturbation_count=args.perturbations,
            kernel_width=args.kernel_width,
            ridge_lambda=args.ridge_lambda,
            seed=args.seed,
        )
        seg = slic_segment(img, SlicParams(requested_segments=args.slic_segments))
        return lime_explain(predictor, img, seg, params, explain_class)
    if args.tool == "file":
        if not args.saliency:
            raise ParameterError("--tool file requires --saliency <salm>")
        sal = _read_saliency(args.saliency)
        if (sal.height, sal.width) != (img.height, img.width):
            raise ParameterError(
                f"saliency is {sal.height}x{sal.width} but the image is "
                f"{img.height}x{img.width}"
            )
        return sal
    raise ParameterError(f"unknown tool {args.tool!r}")


def _cmd_explain(args) -> int:
    img = _read_image(args.image)
    predictor = parse_predictor_spec(args.predictor) if args.tool != "file" else None
    try:
        sal = _explain_once(args, predictor, img)
    finally:
        if predictor is not None:
            predictor.close()
    Path(args.out).write_bytes(encode_saliency(sal))
    _emit({"tool": args.tool, "height": sal.height, "width": sal.width, "out": args.out})
    return 0


def _cmd_metric(args) -> int:
    manifest = load_manifest(args.manifest)
    if not manifest.entries:
        raise ParameterError("manifest holds no pairs")
    predictor = parse_predictor_spec(args.predictor)
    tool = parse_tool_spec(
        args.tool,
        lime=LimeParams(seed=args.seed),
        slic=SlicParams(requested_segments=args.segments_count),
    )
    strategy = ReplacementStrategy(
        kind=args.strategy, blur_sigma=args.blur_sigma, seed=args.seed
    )
    try:
        images = [_read_image(str(e.fake_path)) for e in manifest.entries]
        saliencies = [
            tool.explain(
                predictor,
                img,
                seed=args.seed,
                explain_class=args.explained_class,
                entry=entry,
            )
            for img, entry in zip(images, manifest.entries)
        ]
        if args.kind == "deletion":
            point = deletion_eval(
                predictor,
                list(zip(images, saliencies)),
                args.k,
                strategy,
                args.explained_class,
            )
        elif args.kind == "iauc":
            point = insertion_eval(
                predictor,
                list(zip(images, saliencies)),
                args.k,
                args.blur_sigma,
                args.explained_class,
            )
        else:
            segs = [
                slic_segment(img, SlicParams(requested_segments=args.segments_count))
                for img in images
            ]
            point = irof_eval(
                predictor,
                list(zip(images, saliencies, segs)),
                int(args.k),
                strategy,
                args.explained_class,
            )
    finally:
        predictor.close()
    out = {
        "metric": point.metric,
        "k": point.k,
        "strategy": strategy.kind,
        "tool": tool.name,
        "accuracy": point.accuracy,
    }
    if point.baseline_accuracy is not None:
        out["baseline_accuracy"] = point.baseline_accuracy
    _emit(out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pair_id", "label"])
            for entry, label in zip(manifest.entries, point.verdicts):
                writer.writerow([entry.pair_id, label.value])
    return 0


def _parse_indices_from(spec: str, img) -> np.ndarray:
    """Either '<segmap.salm>:<label>' or '<saliency.salm>+<segmap.salm>'
    (top-ranked segment of the saliency)."""
    if "+" in spec:
        sal_path, seg_path = spec.split("+", 1)
        sal = _read_saliency(sal_path)
        seg = _read_segments(seg_path)
        top = rank_segments(sal, seg).ordered_labels[0]
        indices = segment_indices(seg, top)
    elif ":" in spec:
        seg_path, label_text = spec.rsplit(":", 1)
        try:
            label = int(label_text)
        except ValueError as exc:
            raise ParameterError(
                f"--indices-from label must be an integer, got {label_text!r}"
            ) from exc
        seg = _read_segments(seg_path)
        indices = segment_indices(seg, label)
    else:
        raise ParameterError(
            "--indices-from must be '<segmap>:<label>' or '<saliency>+<segmap>'"
        )
    if (seg.height, seg.width) != (img.height, img.width):
        raise ParameterError(
            f"segment map is {seg.height}x{seg.width} but the image is "
            f"{img.height}x{img.width}"
        )
    return indices


def _cmd_attack(args) -> int:
    fake = _read_image(args.fake)
    indices = _parse_indices_from(args.indices_from, fake)
    budget = AttackBudget(
        sigma=args.sigma,
        samples=args.samples,
        max_iters=args.iters,
        epsilon=args.eps / 255.0,
        alpha=args.alpha / 255.0,
        seed=args.seed,
    )
    predictor = parse_predictor_spec(args.predictor)
    try:
        result = nes_attack(predictor, fake, indices, budget)
    finally:
        predictor.close()
    if args.out:
        Path(args.out).write_bytes(encode_image(result.adversarial_image))
    summary = {
        "success": result.success,
        "iterations_used": result.iterations_used,
        "queries_issued": result.queries_issued,
        "final_prob_fake": result.final_prob_fake,
        "linf_distortion": result.linf_distortion,
        "attacked_pixels": int(indices.size),
    }
    if args.report:
        Path(args.report).write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", "utf-8"
        )
    _emit(summary)
    return 0


def _cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    slic = SlicParams(
        requested_segments=args.segments, compactness=args.compactness
    )
    budget = AttackBudget(
        sigma=args.sigma,
        samples=args.samples,
        max_iters=args.iters,
        epsilon=args.eps / 255.0,
        alpha=args.alpha / 255.0,
    )
    tools = [
        parse_tool_spec(
            spec,
            rise=RiseParams(mask_count=args.mask_count),
            sobol=SobolParams(design_size=args.design_size),
            lime=LimeParams(perturbation_count=args.perturbations),
            slic=slic,
        )
        for spec in args.tools.split(",")
        if spec.strip()
    ]
    config = HarnessConfig(
        slic=slic,
        budget=budget,
        top_k_segments=args.top_k_segments,
        workers=args.workers,
    )
    predictor = parse_predictor_spec(args.predictor)
    try:
        report = evaluate_dataset(
            manifest, predictor, tools, config, master_seed=args.seed
        )
    finally:
        predictor.close()
    Path(args.out).write_bytes(render_report(report, "json"))
    if args.markdown:
        Path(args.markdown).write_bytes(render_report(report, "markdown"))
    attacked_total = sum(s.pairs_attacked for s in report.tools.values())
    _emit(
        {
            "pairs_total": report.pairs_total,
            "pairs_attackable": report.pairs_attackable,
            "original_accuracy": report.original_accuracy,
            "tools": {
                name: s.adversarial_accuracy for name, s in report.tools.items()
            },
            "out": args.out,
            "warnings": list(report.warnings),
        }
    )
    return 2 if attacked_total == 0 else 0


def _cmd_serve(args) -> int:
    predictor = parse_predictor_spec(args.predictor)
    if args.tcp:
        from .service import serve_tcp

        serve_tcp(predictor, args.host, args.port)
        return 0
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(predictor), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xfidelity",
        description="Attack-based faithfulness evaluation of saliency tools "
        "on face-forgery detectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="SLIC superpixels of an image")
    p.add_argument("--image", required=True)
    p.add_argument("--segments", type=int, default=100)
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_segment)

    p = sub.add_parser("rank", help="rank segments by mean absolute saliency")
    p.add_argument("--saliency", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--top", type=int, default=None)
    p.set_defaults(fn=_cmd_rank)

    p = sub.add_parser("explain", help="compute or ingest a saliency map")
    p.add_argument("--tool", required=True, choices=["rise", "sobol", "lime", "file"])
    p.add_argument("--image", required=True)
    p.add_argument("--predictor", default="builtin:echo")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class", dest="explained_class", type=_class_arg, default=Label.FAKE)
    p.add_argument("--mask-count", type=int, default=2000)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--keep-prob", type=float, default=0.5)
    p.add_argument("--design-size", type=int, default=32)
    p.add_argument("--perturbations", type=int, default=1000)
    p.add_argument("--kernel-width", type=float, default=0.25)
    p.add_argument("--ridge-lambda", type=float, default=1.0)
    p.add_argument("--slic-segments", type=int, default=100)
    p.add_argument("--saliency", default=None, help="input SALM for --tool file")
    p.set_defaults(fn=_cmd_explain)

    p = sub.add_parser("metric", help="deletion / IAUC / IROF baselines")
    p.add_argument("--kind", required=True, choices=["deletion", "iauc", "irof"])
    p.add_argument("--k", type=float, default=0.15, help="fraction (deletion/iauc) or segment count (irof)")
    p.add_argument("--strategy", default="zero", choices=["zero", "mean", "random", "blur"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictor", required=True)
    p.add_argument("--tool", default="rise", help="rise, sobol, lime or file:<key>")
    p.add_argument("--class", dest="explained_class", type=_class_arg, default=Label.FAKE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blur-sigma", type=float, default=5.0)
    p.add_argument("--segments-count", type=int, default=100)
    p.add_argument("--csv", default=None)
    p.set_defaults(fn=_cmd_metric)

    p = sub.add_parser("attack", help="segment-restricted NES attack")
    p.add_argument("--fake", required=True)
    p.add_argument(
        "--indices-from",
        required=True,
        help="'<segmap>:<label>' or '<saliency>+<segmap>' (top-1 segment)",
    )
    p.add_argument("--predictor", required=True)
    p.add_argument("--eps", type=float, default=16.0, help="in 1/255 units")
    p.add_argument("--alpha", type=float, default=1.0, help="in 1/255 units")
    p.add_argument("--sigma", type=float, default=0.001)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(fn=_cmd_attack)

    p = sub.add_parser("eval", help="full pair-manifest evaluation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictor", required=True)
    p.add_argument("--tools", default="rise,sobol,lime")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--markdown", default=None)
    p.add_argument("--segments", type=int, default=100)
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--top-k-segments", type=int, default=1)
    p.add_argument("--eps", type=float, default=16.0, help="in 1/255 units")
    p.add_argument("--alpha", type=float, default=1.0, help="in 1/255 units")
    p.add_argument("--sigma", type=float, default=0.001)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--mask-count", type=int, default=2000)
    p.add_argument("--design-size", type=int, default=32)
    p.add_argument("--perturbations", type=int, default=1000)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("serve", help="serve the predictor wire protocol")
    p.add_argument("--predictor", default="builtin:echo")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--tcp", action="store_true", help="raw TCP instead of HTTP")
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except XFidelityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

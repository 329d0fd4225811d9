"""Command-line entry point: every pipeline stage behind one binary.

Exit codes are stable: 0 success, 1 I/O failure, 2 argument or value error,
3 schema or digest violation, 4 evaluation alignment failure. Every output
file embeds the effective config and its digest (see records.py), and rerun
with identical inputs and flags reproduces identical bytes.

Environment defaults: GATEWAY_ENDPOINT, GATEWAY_BATCH_DIR,
GATEWAY_MAX_INFLIGHT.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import annotations as ann_io
from . import fixtures
from .builders import (
    build_hallucination_set,
    build_ift_dataset,
    build_spatial_bench,
    build_video_static_objects,
    corpus_keyword_stats,
    ingest_pseudo_captions,
)
from .coords import (
    BBox,
    CodecError,
    ImageDims,
    LocationText,
    PointLoc,
    ReprScheme,
    decode_bbox,
    decode_point,
    encode_bbox,
    encode_point,
)
from .evals import (
    score_hallucination,
    score_keyword_vqa,
    score_region_description,
    score_spatial,
)
from .gateway import (
    FileBatchTransport,
    HttpTransport,
    ModelRequest,
    SamplingConfig,
    answer_space_for_record,
    oracle_answer,
    query_batch,
    random_mock,
)
from .prompts import CAPTION_REQUEST, DEFAULT_TEMPLATES, load_template_overrides, render_caption_request
from .records import config_digest, read_records, verify_records, write_json, write_records
from .seeding import derive_seed

EXIT_OK = 0
EXIT_IO = 1
EXIT_ARGS = 2
EXIT_SCHEMA = 3
EXIT_ALIGNMENT = 4

DEFAULT_PHRASES = "left,right,the left,the right,left side,right side,to the left,to the right"


class SchemaError(ValueError):
    pass


def _parse_dims(text: str) -> ImageDims:
    try:
        w, h = text.lower().split("x")
        return ImageDims(int(w), int(h))
    except (ValueError, CodecError) as exc:
        raise ValueError(f"bad --dims {text!r}, expected WxH: {exc}") from exc


def _parse_scheme(args) -> ReprScheme:
    if args.scheme == "nfp":
        return ReprScheme.nfp(decimals=args.decimals)
    if args.scheme == "ivb":
        return ReprScheme.ivb(n_bins=args.nb)
    return ReprScheme.diga(grid=args.grid, patch=args.patch)


def _parse_mix(text: str) -> dict[str, float]:
    mix = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        if not value:
            raise ValueError(f"bad --mix entry {part!r}, expected name=ratio")
        mix[name.strip()] = float(value)
    return mix


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _add_scheme_flags(parser):
    parser.add_argument("--scheme", choices=["nfp", "ivb", "diga"], default="ivb")
    parser.add_argument("--decimals", type=int, default=4, help="nfp decimal places")
    parser.add_argument("--nb", type=int, default=224, help="ivb bins per axis")
    parser.add_argument("--grid", type=int, default=16, help="diga anchors per axis")
    parser.add_argument("--patch", type=int, default=14, help="diga pixels per anchor cell")


def _load_templates(args):
    if getattr(args, "templates", None):
        return load_template_overrides(args.templates)
    return DEFAULT_TEMPLATES


def _effective_config(args, names: list[str]) -> dict:
    cfg = {name: getattr(args, name) for name in names}
    if getattr(args, "templates", None):
        cfg["templates"] = str(args.templates)
    return cfg


def _load_annotations(path):
    try:
        return ann_io.load_coco_annotations(path)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    except KeyError as exc:
        raise SchemaError(f"{path}: missing required field {exc}") from exc


# ---------------- codec commands ---------------- #


def cmd_encode(args) -> int:
    dims = _parse_dims(args.dims)
    scheme = _parse_scheme(args)
    if (args.bbox is None) == (args.point is None):
        raise ValueError("exactly one of --bbox or --point is required")
    if args.bbox is not None:
        values = _parse_floats(args.bbox)
        if len(values) != 4:
            raise ValueError(f"--bbox needs 4 values, got {len(values)}")
        loc = encode_bbox(BBox(*values), dims, scheme)
    else:
        values = _parse_floats(args.point)
        if len(values) != 2:
            raise ValueError(f"--point needs 2 values, got {len(values)}")
        loc = encode_point(PointLoc(*values), dims, scheme)
    print(loc.text)
    return EXIT_OK


def cmd_decode(args) -> int:
    dims = _parse_dims(args.dims)
    scheme = _parse_scheme(args)
    loc = LocationText(args.text, scheme, args.form)
    if args.form == "point":
        decoded = decode_point(loc, dims, lenient=args.lenient)
    else:
        decoded = decode_bbox(loc, dims, lenient=args.lenient)
    print(" ".join(f"{v:g}" for v in decoded.as_tuple()))
    return EXIT_OK


# ---------------- build commands ---------------- #


def _write_build_outputs(args, records, report, config, kind) -> int:
    out = Path(args.out)
    write_records(out, records, config, kind)
    report_dict = report.to_dict()
    report_dict["config_digest"] = config_digest(config)
    write_json(out.with_suffix(".report.json"), report_dict)
    print(f"{kind}: wrote {len(records)} records to {out}")
    return EXIT_OK


def cmd_build_ift(args) -> int:
    load = _load_annotations(args.annotations)
    images = load.images
    templates = _load_templates(args)
    if args.captions:
        caption_records = ann_io.load_caption_records(args.captions)
        images, ingest_report = ingest_pseudo_captions(images, caption_records)
    scheme = _parse_scheme(args)
    mix = _parse_mix(args.mix)
    samples, report = build_ift_dataset(
        images, scheme, args.form, mix, args.seed,
        vocabulary=load.vocabulary, templates=templates, jobs=args.jobs,
    )
    if args.captions:
        report = ingest_report.merge(report)
    report.exclusions.update(load.skipped)
    config = _effective_config(args, ["annotations", "captions", "scheme", "form", "mix", "seed"])
    config["scheme_params"] = scheme.to_dict()
    return _write_build_outputs(args, [s.to_record(scheme) for s in samples], report, config, "ift")


def cmd_build_spatial(args) -> int:
    load = _load_annotations(args.annotations)
    templates = _load_templates(args)
    items, report = build_spatial_bench(load.images, args.seed, templates=templates, jobs=args.jobs)
    report.exclusions.update(load.skipped)
    config = _effective_config(args, ["annotations", "seed"])
    return _write_build_outputs(args, [it.to_record(templates) for it in items], report, config, "spatial")


def cmd_build_hallucination(args) -> int:
    media = []
    vocabulary = None
    if args.annotations:
        load = _load_annotations(args.annotations)
        media.extend(load.images)
        vocabulary = load.vocabulary
    if args.videos:
        detections = ann_io.load_video_detections(args.videos)
        for video_id in sorted(detections):
            cats = sorted({cat for dets in detections[video_id].values() for cat, _ in dets})
            media.append(ann_io.MediaCategories(video_id, "video", tuple(cats)))
    if not media:
        raise ValueError("need --annotations and/or --videos")
    if args.vocab_file:
        vocabulary = [line.strip() for line in Path(args.vocab_file).read_text(encoding="utf-8").splitlines() if line.strip()]
    if vocabulary is None:
        raise ValueError("need --vocab-file when building from videos only")
    disjoint = None
    if args.disjoint_from:
        disjoint = _load_annotations(args.disjoint_from).vocabulary
    items, report = build_hallucination_set(
        media, vocabulary, args.seed, n_present=args.per_media, n_absent=args.per_media, disjoint_from=disjoint
    )
    templates = _load_templates(args)
    config = _effective_config(args, ["annotations", "videos", "vocab_file", "disjoint_from", "seed", "per_media"])
    return _write_build_outputs(args, [it.to_record(templates) for it in items], report, config, "hallucination")


def cmd_build_pseudo_captions(args) -> int:
    load = _load_annotations(args.annotations)
    images, report = ingest_pseudo_captions(load.images, [])
    templates = _load_templates(args)
    records = []
    for image in images:
        for obj in sorted(image.objects, key=lambda o: o.instance_id):
            sample_id = f"{image.image_id}:cap:{obj.instance_id}"
            records.append(
                {
                    "sample_id": sample_id,
                    "image_id": image.image_id,
                    "objective": CAPTION_REQUEST,
                    "prompt": render_caption_request(obj.category, templates),
                    "target": "",
                    "location_text": None,
                    "scheme": None,
                    "form": None,
                    "descriptor": obj.category,
                    "seed": derive_seed(args.seed, sample_id),
                }
            )
    report.emitted_count = len(records)
    report.exclusions.update(load.skipped)
    config = _effective_config(args, ["annotations", "seed"])
    return _write_build_outputs(args, records, report, config, "caption_requests")


def cmd_build_video_static(args) -> int:
    detections = ann_io.load_video_detections(args.videos)
    records = []
    from .builders import BuildReport

    report = BuildReport(input_count=len(detections))
    for video_id in sorted(detections):
        tracks, tallies = build_video_static_objects(detections[video_id], n_f=args.frames, video_id=video_id)
        report.exclusions.update(tallies)
        for track in tracks:
            records.append(
                {
                    "sample_id": f"{video_id}:track:{track.category}",
                    "video_id": video_id,
                    "category": track.category,
                    "frames": {str(f): list(b.as_tuple()) for f, b in track.per_frame_boxes.items()},
                    "averaged_box": list(track.averaged_box.as_tuple()),
                    "is_static": track.is_static,
                }
            )
    report.emitted_count = len(records)
    config = _effective_config(args, ["videos", "frames"])
    return _write_build_outputs(args, records, report, config, "video_tracks")


def cmd_stats(args) -> int:
    corpus_path = Path(args.corpus)
    with open(corpus_path, encoding="utf-8") as fh:
        conversations = [line.rstrip("\n") for line in fh]
    phrases = [p.strip() for p in args.phrases.split(",") if p.strip()]
    stats = corpus_keyword_stats(conversations, phrases)
    payload = {
        "corpus": str(corpus_path),
        "total": len(conversations),
        "phrases": {p: {"count": c, "fraction": f} for p, (c, f) in stats.items()},
        "config_digest": config_digest({"corpus": str(corpus_path), "phrases": phrases}),
    }
    if args.out:
        write_json(args.out, payload)
    for phrase, (count, fraction) in stats.items():
        print(f"{phrase!r}: {count} ({100 * fraction:.2f}%)")
    return EXIT_OK


# ---------------- query ---------------- #


def cmd_query(args) -> int:
    meta, rows = read_records(args.records)
    if not rows:
        raise SchemaError(f"{args.records}: no records")
    by_id = {row["sample_id"]: row for row in rows}
    requests = [ModelRequest(row["sample_id"], str(row.get("image_id", "")), row["prompt"]) for row in rows]
    cfg = SamplingConfig(temperature=args.temperature, max_new_tokens=args.max_new_tokens)

    if args.mock == "oracle":
        responses = []
        for req in requests:
            responses.append({"item_id": req.request_id, "text": oracle_answer(by_id[req.request_id])})
    elif args.mock == "random":
        responses = []
        for req in requests:
            space = answer_space_for_record(by_id[req.request_id])
            resp = random_mock(req, args.seed, space)
            responses.append({"item_id": req.request_id, "text": resp.text})
    else:
        if args.endpoint:
            transport = HttpTransport(args.endpoint)
        elif args.batch_dir:
            transport = FileBatchTransport(args.batch_dir)
        else:
            raise ValueError("need --mock, --endpoint, or --batch-dir (or GATEWAY_ENDPOINT / GATEWAY_BATCH_DIR)")
        results = query_batch(
            requests, transport, cfg,
            max_inflight=args.max_inflight, attempts=args.attempts, backoff=args.backoff,
        )
        errors = [r for r in results if r.status == "error"]
        for r in errors:
            print(f"error for {r.request_id}: {r.error_detail}", file=sys.stderr)
        responses = [
            {"item_id": r.request_id, "text": r.text, **({"status": "error"} if r.status == "error" else {})}
            for r in results
        ]
        if len(errors) == len(results):
            return EXIT_IO
    config = _effective_config(
        args,
        ["records", "mock", "seed", "endpoint", "batch_dir", "max_inflight", "attempts", "backoff", "temperature", "max_new_tokens"],
    )
    write_records(args.out, responses, config, "responses")
    print(f"wrote {len(responses)} responses to {args.out}")
    return EXIT_OK


# ---------------- evaluate ---------------- #

_SCORERS = {
    "spatial": score_spatial,
    "vqa": score_keyword_vqa,
    "hallucination": score_hallucination,
    "region": score_region_description,
}

_TASK_BY_OBJECTIVE = {
    "spatial_direct": "spatial",
    "spatial_icl": "spatial",
    "hallucination": "hallucination",
    "vqa": "vqa",
    "revloc": "region",
    "region_description": "region",
}


def _infer_task(rows) -> str:
    objectives = {row.get("objective", "") for row in rows}
    tasks = {_TASK_BY_OBJECTIVE.get(obj) for obj in objectives}
    if None in tasks or len(tasks) != 1:
        raise ValueError(
            f"cannot infer a single task from objectives {sorted(objectives)}; pass --task"
        )
    return tasks.pop()


def cmd_evaluate(args) -> int:
    record_meta, rows = read_records(args.records)
    _, response_rows = read_records(args.responses)
    responses = {row["item_id"]: row["text"] for row in response_rows if "item_id" in row}
    if not rows:
        raise SchemaError(f"{args.records}: no records")
    if not responses:
        print("no responses to evaluate", file=sys.stderr)
        return EXIT_ALIGNMENT
    task = args.task or _infer_task(rows)
    missing = [row["sample_id"] for row in rows if row["sample_id"] not in responses]
    for sample_id in missing[:10]:
        print(f"missing response for {sample_id}", file=sys.stderr)
    if len(missing) * 2 > len(rows):
        print(f"{len(missing)}/{len(rows)} records lack responses", file=sys.stderr)
        return EXIT_ALIGNMENT
    scorer = _SCORERS[task]
    if task == "spatial":
        report, items = scorer(rows, responses, strict=not args.containment_only)
    else:
        report, items = scorer(rows, responses)
    config = _effective_config(args, ["records", "responses", "task", "containment_only"])
    report.config_digest = config_digest(config)
    report.dataset_digest = record_meta.get("records_digest")
    if task == "region":
        print(f"meteor_mean {100 * report.meteor_mean:.2f}")
    else:
        headline = f"All {100 * report.accuracy:.1f}"
        for split, value in sorted(report.per_split.items()):
            headline += f"  {split.capitalize()} {100 * value:.1f}"
        print(headline)
    if args.report:
        write_json(args.report, report.to_dict())
    if args.dump:
        write_records(args.dump, [r.to_dict() for r in items], config, "eval_dump")
    return EXIT_OK


# ---------------- fixtures & verify ---------------- #


def cmd_fixtures(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images_50 = fixtures.annotation_fixture(50, seed=args.seed + 1)
    fixtures.write_coco_json(images_50, out / "coco_50.json")
    images_200 = fixtures.spatial_fixture(200, seed=args.seed)
    fixtures.write_coco_json(images_200, out / "coco_200.json")
    captions = fixtures.caption_fixture(images_50, seed=args.seed + 2)
    with open(out / "captions_50.jsonl", "w", encoding="utf-8") as fh:
        for rec in captions:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(out / "corpus_80k.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(fixtures.keyword_corpus(seed=7)) + "\n")
    mask, category_map = fixtures.panoptic_fixture(seed=args.seed + 3)
    fixtures.write_panoptic_files(mask, category_map, out / "panoptic.grid.txt", out / "panoptic.categories.json")
    fixtures.write_video_detections(fixtures.video_detection_fixture(seed=args.seed + 4), out / "videos.jsonl")
    vqa = fixtures.vqa_fixture(60, seed=args.seed + 5)
    write_records(out / "vqa.jsonl", vqa, {"seed": args.seed + 5, "kind": "vqa_fixture"}, "vqa")
    print(f"fixtures written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    problems = []
    for path in args.files:
        problems.extend(verify_records(path))
    for problem in problems:
        print(problem, file=sys.stderr)
    if problems:
        return EXIT_SCHEMA
    print(f"verified {len(args.files)} file(s)")
    return EXIT_OK


# ---------------- parser ---------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coordtext", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument(
        "--config",
        help="JSON file of flag defaults (dest names as keys); explicit flags win",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a pixel-space location as text")
    p.add_argument("--bbox", help="x1,y1,x2,y2 in pixels")
    p.add_argument("--point", help="cx,cy in pixels")
    p.add_argument("--dims", required=True, help="image dims WxH")
    _add_scheme_flags(p)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("decode", help="decode coordinate text back to pixels")
    p.add_argument("--text", required=True)
    p.add_argument("--form", choices=["point", "bbox"], required=True)
    p.add_argument("--dims", required=True)
    p.add_argument("--lenient", action="store_true", help="accept missing parentheses and loose spacing")
    _add_scheme_flags(p)
    p.set_defaults(fn=cmd_decode)

    build = sub.add_parser("build", help="construct datasets").add_subparsers(dest="build_command", required=True)

    p = build.add_parser("ift", help="instruction-tuning conversations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--captions", help="pseudo-caption JSONL to attach first")
    p.add_argument("--form", choices=["point", "bbox"], default="bbox")
    p.add_argument("--mix", default="locpred=1,negpred=1,revloc=1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--templates", help="template override file")
    p.add_argument("--out", required=True)
    _add_scheme_flags(p)
    p.set_defaults(fn=cmd_build_ift)

    p = build.add_parser("spatial-bench", help="side-question benchmark")
    p.add_argument("--annotations", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--templates")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_spatial)

    p = build.add_parser("hallucination", help="object-presence benchmark")
    p.add_argument("--annotations")
    p.add_argument("--videos", help="video detections JSONL")
    p.add_argument("--vocab-file", dest="vocab_file", help="one category per line (novel-category mode)")
    p.add_argument("--disjoint-from", dest="disjoint_from", help="annotations whose categories must not overlap --vocab-file")
    p.add_argument("--per-media", dest="per_media", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--templates")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_hallucination)

    p = build.add_parser("pseudo-captions", help="caption-collection prompts for eligible instances")
    p.add_argument("--annotations", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--templates")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_pseudo_captions)

    p = build.add_parser("video-static", help="static-object tracks from per-frame detections")
    p.add_argument("--videos", required=True)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_video_static)

    p = sub.add_parser("stats", help="corpus keyword statistics")
    p.add_argument("--corpus", required=True, help="one conversation per line")
    p.add_argument("--phrases", default=DEFAULT_PHRASES)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("query", help="answer dataset prompts via a model or mock")
    p.add_argument("--records", required=True)
    p.add_argument("--mock", choices=["oracle", "random"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--endpoint", default=os.environ.get("GATEWAY_ENDPOINT"))
    p.add_argument("--batch-dir", dest="batch_dir", default=os.environ.get("GATEWAY_BATCH_DIR"))
    p.add_argument("--max-inflight", dest="max_inflight", type=int, default=int(os.environ.get("GATEWAY_MAX_INFLIGHT", "4")))
    p.add_argument("--attempts", type=int, default=3, help="tries per request before giving up")
    p.add_argument("--backoff", type=float, default=0.1, help="initial retry delay, doubled per attempt")
    p.add_argument("--temperature", type=float, default=0.2)
    p.add_argument("--max-new-tokens", dest="max_new_tokens", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("evaluate", help="score responses against dataset records")
    p.add_argument("--records", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--task", choices=sorted(_SCORERS))
    p.add_argument("--containment-only", dest="containment_only", action="store_true",
                   help="spatial: bare keyword containment, opposing keyword allowed")
    p.add_argument("--report")
    p.add_argument("--dump")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("fixtures", help="write synthetic offline fixtures")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_fixtures)

    p = sub.add_parser("verify", help="recompute embedded digests of record files")
    p.add_argument("files", nargs="+")
    p.set_defaults(fn=cmd_verify)

    return parser


def _iter_parsers(parser):
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            seen = set()
            for child in action.choices.values():
                if id(child) not in seen:
                    seen.add(id(child))
                    yield from _iter_parsers(child)


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config, encoding="utf-8") as fh:
                file_defaults = json.load(fh)
        except FileNotFoundError as exc:
            print(f"cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
            return EXIT_IO
        except json.JSONDecodeError as exc:
            print(f"schema error: {known.config}: {exc}", file=sys.stderr)
            return EXIT_SCHEMA
        for p in _iter_parsers(parser):
            p.set_defaults(**file_defaults)
    args = parser.parse_args(rest)
    try:
        return args.fn(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (CodecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except FileNotFoundError as exc:
        print(f"cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

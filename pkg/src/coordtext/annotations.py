"""Annotation domain types and input-file parsing.

Three external inputs are understood:

* COCO-style JSON: top-level ``images`` [{id, width, height, file_name}],
  ``annotations`` [{id, image_id, category_id, bbox: [x, y, w, h]}], and
  ``categories`` [{id, name}]. Boxes arrive as xywh and are converted to
  xyxy on load.
* Pseudo-caption JSONL: one {image_id, instance_id, caption} per line.
* Panoptic label grids: a text file of whitespace-separated integer instance
  ids, one grid row per line, plus a JSON sidecar mapping id -> category.

Malformed annotation rows are skipped and tallied, never fatal.
"""

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .coords import BBox, CodecError, ImageDims


@dataclass(frozen=True)
class ObjectAnn:
    instance_id: str
    category: str
    bbox: BBox


@dataclass(frozen=True)
class AnnotatedImage:
    image_id: str
    dims: ImageDims
    objects: tuple[ObjectAnn, ...]
    captions: dict[str, str] | None = None

    def __post_init__(self):
        ids = [o.instance_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate instance ids in image {self.image_id}")
        for obj in self.objects:
            obj.bbox.validate_within(self.dims)

    def category_counts(self) -> Counter:
        return Counter(o.category for o in self.objects)

    def present_categories(self) -> set[str]:
        return {o.category for o in self.objects}

    def caption_for(self, instance_id: str) -> str | None:
        if self.captions is None:
            return None
        return self.captions.get(instance_id)


@dataclass(frozen=True)
class MediaCategories:
    """Category-presence view of one media unit (video or image)."""

    media_id: str
    medium: str
    categories: tuple[str, ...]


def xywh_to_xyxy(box: list[float]) -> tuple[float, float, float, float]:
    """COCO-style [x, y, w, h] to corner coordinates."""
    x, y, w, h = box
    return (x, y, x + w, y + h)


@dataclass
class CocoLoad:
    images: list[AnnotatedImage]
    vocabulary: list[str]  # category names in file order
    skipped: Counter = field(default_factory=Counter)


def load_coco_annotations(path) -> CocoLoad:
    """Parse a COCO-style annotation file into AnnotatedImage values.

    Annotations referencing unknown images or categories, with non-positive
    extents, or landing outside their image are skipped and tallied.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    categories = {c["id"]: c["name"] for c in data.get("categories", [])}
    vocabulary = [c["name"] for c in data.get("categories", [])]
    dims_by_image = {}
    for img in data.get("images", []):
        dims_by_image[img["id"]] = ImageDims(int(img["width"]), int(img["height"]))

    skipped: Counter = Counter()
    objects_by_image: dict = {img_id: [] for img_id in dims_by_image}
    for ann in data.get("annotations", []):
        image_id = ann.get("image_id")
        if image_id not in dims_by_image:
            skipped["unknown_image"] += 1
            continue
        if ann.get("category_id") not in categories:
            skipped["unknown_category"] += 1
            continue
        bbox = ann.get("bbox")
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            skipped["invalid_bbox"] += 1
            continue
        x1, y1, x2, y2 = xywh_to_xyxy(bbox)
        try:
            box = BBox(x1, y1, x2, y2)
            box.validate_within(dims_by_image[image_id])
        except CodecError:
            skipped["invalid_bbox"] += 1
            continue
        objects_by_image[image_id].append(
            ObjectAnn(instance_id=str(ann["id"]), category=categories[ann["category_id"]], bbox=box)
        )

    images = []
    for image_id in sorted(dims_by_image, key=str):
        try:
            images.append(
                AnnotatedImage(
                    image_id=str(image_id),
                    dims=dims_by_image[image_id],
                    objects=tuple(objects_by_image[image_id]),
                )
            )
        except ValueError:
            skipped["duplicate_instance_ids"] += 1
    return CocoLoad(images=images, vocabulary=vocabulary, skipped=skipped)


@dataclass(frozen=True)
class CaptionRecord:
    image_id: str
    instance_id: str
    caption: str


def load_caption_records(path) -> list[CaptionRecord]:
    """Read pseudo-caption JSONL; also accepts query-response lines whose
    item_id embeds ``{image_id}:cap:{instance_id}``."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row.get("record_type") == "meta":
                continue
            if "caption" in row:
                records.append(CaptionRecord(str(row["image_id"]), str(row["instance_id"]), row["caption"]))
                continue
            item_id = row.get("item_id", "")
            if ":cap:" in item_id and row.get("text"):
                image_id, _, instance_id = item_id.partition(":cap:")
                records.append(CaptionRecord(image_id, instance_id, row["text"]))
    return records


def load_label_grid(path) -> np.ndarray:
    """Read a panoptic label grid: whitespace-separated ids, one row per line."""
    grid = np.loadtxt(path, dtype=np.int64, ndmin=2)
    return grid


def load_instance_categories(path) -> dict[int, str]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {int(k): v for k, v in raw.items()}


def load_video_detections(path) -> dict[str, dict[int, list[tuple[str, BBox]]]]:
    """Read per-video detections: one {video_id, frames: {idx: [{category, bbox}]}} per line.

    Boxes are xyxy in pixel space.
    """
    videos: dict[str, dict[int, list[tuple[str, BBox]]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row.get("record_type") == "meta":
                continue
            frames = {}
            for idx, dets in row["frames"].items():
                frames[int(idx)] = [(d["category"], BBox(*d["bbox"])) for d in dets]
            videos[str(row["video_id"])] = frames
    return videos

"""Dataset construction from annotations and ingested pseudo-labels.

Every builder is deterministic under a fixed seed: outputs are emitted in a
canonical order (image id, then sample ordinal) and all sampling uses seeds
derived per sample, so reruns and parallel runs produce identical bytes.
Each filter tallies what it drops into a build report.
"""

import math
import random
from collections import Counter
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .annotations import AnnotatedImage, MediaCategories
from .coords import BBox, LocationText, ReprScheme, encode_bbox, encode_point
from .prompts import (
    DEFAULT_TEMPLATES,
    LOCPRED,
    NEGPRED,
    REVLOC,
    SPATIAL_DIRECT,
    SPATIAL_ICL,
    TemplateSet,
    render_hallucination_query,
    render_locpred,
    render_negpred,
    render_revloc,
    render_spatial_query,
    spatial_icl_example,
)
from .seeding import derive_seed

IFT_OBJECTIVES = (LOCPRED, NEGPRED, REVLOC)

# fraction of each axis treated as the central exclusion band
CENTER_BAND = (0.4, 0.6)
STATIC_CENTER_RANGE_PX = 5.0


@dataclass
class BuildReport:
    """Counts of what went in, what came out, and what each filter dropped."""

    input_count: int = 0
    emitted_count: int = 0
    exclusions: Counter = field(default_factory=Counter)

    def merge(self, other: "BuildReport") -> "BuildReport":
        return BuildReport(
            input_count=self.input_count + other.input_count,
            emitted_count=self.emitted_count + other.emitted_count,
            exclusions=self.exclusions + other.exclusions,
        )

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "emitted_count": self.emitted_count,
            "exclusions": dict(sorted(self.exclusions.items())),
        }


def _map_ordered(fn, items, jobs: int = 1):
    """Apply fn over items preserving order; jobs > 1 fans out to threads."""
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------- instance filters ---------------- #


def filter_unique_instances(images: Iterable[AnnotatedImage]):
    """Yield (image, category) for every category with exactly one instance in the image."""
    for image in images:
        counts = image.category_counts()
        for obj in sorted(image.objects, key=lambda o: o.instance_id):
            if counts[obj.category] == 1:
                yield image, obj.category


def unique_instance_objects(image: AnnotatedImage):
    """Objects whose category occurs exactly once in the image, in instance order."""
    counts = image.category_counts()
    return [o for o in sorted(image.objects, key=lambda o: o.instance_id) if counts[o.category] == 1]


def discover_negative_categories(image: AnnotatedImage, vocabulary: Sequence[str]) -> list[str]:
    """Vocabulary entries absent from the image, preserving vocabulary order."""
    if not vocabulary:
        raise ValueError("vocabulary must be non-empty")
    present = image.present_categories()
    return [cat for cat in vocabulary if cat not in present]


# ---------------- conversation dataset ---------------- #


@dataclass(frozen=True)
class ConversationSample:
    sample_id: str
    image_id: str
    objective: str
    prompt: str
    target: str
    location: LocationText | None
    descriptor: str
    form: str
    seed: int

    def __post_init__(self):
        if not self.descriptor:
            raise ValueError("descriptor must be non-empty")
        if self.objective in (LOCPRED, REVLOC) and self.location is None:
            raise ValueError(f"{self.objective} sample needs a location")
        if self.objective == NEGPRED and self.location is not None:
            raise ValueError("negative samples carry no location")

    def to_record(self, scheme: ReprScheme) -> dict:
        return {
            "sample_id": self.sample_id,
            "image_id": self.image_id,
            "objective": self.objective,
            "prompt": self.prompt,
            "target": self.target,
            "location_text": self.location.text if self.location else None,
            "scheme": scheme.to_dict(),
            "form": self.form,
            "descriptor": self.descriptor,
            "seed": self.seed,
        }


def _encode_location(obj_bbox: BBox, image: AnnotatedImage, scheme: ReprScheme, form: str) -> LocationText:
    if form == "point":
        return encode_point(obj_bbox.center(), image.dims, scheme)
    return encode_bbox(obj_bbox, image.dims, scheme)


def build_ift_dataset(
    images: Iterable[AnnotatedImage],
    scheme: ReprScheme,
    form: str,
    mix: dict[str, float],
    seed: int,
    vocabulary: Sequence[str] | None = None,
    templates: TemplateSet = DEFAULT_TEMPLATES,
    jobs: int = 1,
) -> tuple[list[ConversationSample], BuildReport]:
    """Location/negative/reverse conversation samples from unique-instance objects.

    ``mix`` maps objective name to a ratio of the eligible (image, object)
    pair count; ratio 1.0 visits every pair once, larger ratios cycle. The
    descriptor is the instance's pseudo-caption when present, else its
    category; negatives draw a seeded-uniform absent category.
    """
    bad = set(mix) - set(IFT_OBJECTIVES)
    if bad:
        raise ValueError(f"unknown objectives in mix: {sorted(bad)}")
    if any(r < 0 for r in mix.values()) or sum(mix.values()) <= 0:
        raise ValueError("mix ratios must be non-negative with a positive sum")

    images = sorted(images, key=lambda im: im.image_id)
    report = BuildReport(input_count=len(images))
    eligible: list[tuple[AnnotatedImage, object]] = []
    for image in images:
        objs = unique_instance_objects(image)
        if not objs:
            report.exclusions["images_without_eligible_objects"] += 1
        eligible.extend((image, obj) for obj in objs)
    if not eligible:
        return [], report

    if vocabulary is None:
        vocabulary = sorted({c for image in images for c in image.present_categories()})

    total = len(eligible)

    def make_sample(task) -> ConversationSample | None:
        objective, index = task
        image, obj = eligible[index % total]
        cycle = index // total
        sample_seed = derive_seed(seed, image.image_id, obj.instance_id, objective, cycle)
        sample_id = f"{image.image_id}:{obj.instance_id}:{objective}:{cycle}"
        if objective == NEGPRED:
            negatives = discover_negative_categories(image, vocabulary)
            if not negatives:
                return None
            descriptor = random.Random(sample_seed).choice(negatives)
            pair = render_negpred(descriptor, form, sample_seed, templates)
            location = None
        else:
            descriptor = image.caption_for(obj.instance_id) or obj.category
            location = _encode_location(obj.bbox, image, scheme, form)
            if objective == LOCPRED:
                pair = render_locpred(descriptor, form, location, sample_seed, templates)
            else:
                pair = render_revloc(location, descriptor, sample_seed, templates)
        return ConversationSample(
            sample_id=sample_id,
            image_id=image.image_id,
            objective=objective,
            prompt=pair.prompt,
            target=pair.target,
            location=location,
            descriptor=descriptor,
            form=form,
            seed=sample_seed,
        )

    tasks = []
    for objective in IFT_OBJECTIVES:
        ratio = mix.get(objective, 0.0)
        count = int(math.floor(total * ratio + 0.5))
        tasks.extend((objective, i) for i in range(count))

    samples = [s for s in _map_ordered(make_sample, tasks, jobs) if s is not None]
    dropped = sum(1 for o, _ in tasks if o == NEGPRED) - sum(1 for s in samples if s.objective == NEGPRED)
    if dropped:
        report.exclusions["negatives_without_candidates"] += dropped
    samples.sort(key=lambda s: (s.image_id, s.sample_id))
    report.emitted_count = len(samples)
    return samples, report


# ---------------- spatial reasoning benchmark ---------------- #


@dataclass(frozen=True)
class SpatialBenchItem:
    item_id: str
    image_id: str
    axis: str  # "lr" | "ab"
    obj_query: tuple[str, BBox]
    obj_ref: tuple[str, BBox]
    gt_keyword: str
    icl_context: tuple[tuple[str, str], tuple[str, str]] | None = None
    seed: int = 0

    @property
    def objective(self) -> str:
        return SPATIAL_ICL if self.icl_context else SPATIAL_DIRECT

    def prompt(self, templates: TemplateSet = DEFAULT_TEMPLATES) -> str:
        return render_spatial_query(
            self.obj_ref[0], self.obj_query[0], self.axis, icl=self.icl_context, templates=templates
        )

    def to_record(self, templates: TemplateSet = DEFAULT_TEMPLATES) -> dict:
        return {
            "sample_id": self.item_id,
            "image_id": self.image_id,
            "objective": self.objective,
            "prompt": self.prompt(templates),
            "target": self.gt_keyword,
            "location_text": None,
            "scheme": None,
            "form": None,
            "descriptor": self.obj_query[0],
            "seed": self.seed,
            "axis": self.axis,
            "gt_keyword": self.gt_keyword,
            "icl_context": [list(pair) for pair in self.icl_context] if self.icl_context else None,
        }


def _axis_accessors(axis: str):
    if axis == "lr":
        return (lambda b: (b.x1 + b.x2) / 2), (lambda dims: dims.width), ("left", "right")
    return (lambda b: (b.y1 + b.y2) / 2), (lambda dims: dims.height), ("above", "below")


def _side_keyword(center: float, dim: float, keywords: tuple[str, str]) -> str:
    return keywords[0] if center < dim / 2 else keywords[1]


def build_spatial_bench(
    images: Iterable[AnnotatedImage],
    seed: int,
    templates: TemplateSet = DEFAULT_TEMPLATES,
    jobs: int = 1,
) -> tuple[list[SpatialBenchItem], BuildReport]:
    """Side-question items from images holding a distinct-category object triplet.

    Per axis, an image qualifies when (1) it has exactly three objects of
    three distinct categories, (2) every object center lies outside the
    central 20% band of the axis, and (3) the two half-planes are both
    occupied. Every opposite-side ordered pair becomes a direct item; each
    lone-side object paired against each same-side pair becomes an
    in-context item whose two worked examples use the remaining object.
    """
    images = sorted(images, key=lambda im: im.image_id)
    report = BuildReport(input_count=len(images))

    def per_image(image: AnnotatedImage):
        items: list[SpatialBenchItem] = []
        tallies: Counter = Counter()
        objs = sorted(image.objects, key=lambda o: o.instance_id)
        if len(objs) != 3 or len({o.category for o in objs}) != 3:
            tallies["not_triplet"] += 1
            return items, tallies
        for axis in ("lr", "ab"):
            center_of, dim_of, keywords = _axis_accessors(axis)
            dim = dim_of(image.dims)
            centers = [center_of(o.bbox) for o in objs]
            if any(CENTER_BAND[0] * dim <= c <= CENTER_BAND[1] * dim for c in centers):
                tallies[f"{axis}_center_band"] += 1
                continue
            sides = [_side_keyword(c, dim, keywords) for c in centers]
            if len(set(sides)) < 2:
                tallies[f"{axis}_same_side"] += 1
                continue
            ordinal = 0
            for i, ref in enumerate(objs):
                for j, query in enumerate(objs):
                    if i == j or sides[i] == sides[j]:
                        continue
                    item_id = f"{image.image_id}:{axis}:direct:{ordinal:02d}"
                    items.append(
                        SpatialBenchItem(
                            item_id=item_id,
                            image_id=image.image_id,
                            axis=axis,
                            obj_query=(query.category, query.bbox),
                            obj_ref=(ref.category, ref.bbox),
                            gt_keyword=sides[j],
                            seed=derive_seed(seed, item_id),
                        )
                    )
                    ordinal += 1
            # in-context items: the lone-side object is queried against each
            # object on the crowded side; the remaining one feeds the examples
            ordinal = 0
            for a, lone in enumerate(objs):
                if sum(1 for s in sides if s == sides[a]) != 1:
                    continue
                others = [k for k in range(3) if k != a]
                for b in others:
                    c = next(k for k in others if k != b)
                    example_pair = (
                        spatial_icl_example(objs[a].category, objs[b].category, sides[a], templates),
                        spatial_icl_example(objs[b].category, objs[a].category, sides[b], templates),
                    )
                    item_id = f"{image.image_id}:{axis}:icl:{ordinal:02d}"
                    items.append(
                        SpatialBenchItem(
                            item_id=item_id,
                            image_id=image.image_id,
                            axis=axis,
                            obj_query=(objs[a].category, objs[a].bbox),
                            obj_ref=(objs[c].category, objs[c].bbox),
                            gt_keyword=sides[a],
                            icl_context=example_pair,
                            seed=derive_seed(seed, item_id),
                        )
                    )
                    ordinal += 1
        return items, tallies

    all_items: list[SpatialBenchItem] = []
    for items, tallies in _map_ordered(per_image, images, jobs):
        all_items.extend(items)
        report.exclusions.update(tallies)
    all_items.sort(key=lambda it: it.item_id)
    report.emitted_count = len(all_items)
    return all_items, report


# ---------------- hallucination benchmark ---------------- #


@dataclass(frozen=True)
class HallucinationItem:
    item_id: str
    media_id: str
    medium: str  # "image" | "video"
    obj: str
    gt: str  # "yes" | "no"
    seed: int = 0

    def to_record(self, templates: TemplateSet = DEFAULT_TEMPLATES) -> dict:
        return {
            "sample_id": self.item_id,
            "image_id": self.media_id,
            "objective": "hallucination",
            "prompt": render_hallucination_query(self.obj, self.medium, templates),
            "target": "Yes" if self.gt == "yes" else "No",
            "location_text": None,
            "scheme": None,
            "form": None,
            "descriptor": self.obj,
            "seed": self.seed,
            "medium": self.medium,
            "gt": self.gt,
        }


def _as_media(unit) -> MediaCategories:
    if isinstance(unit, AnnotatedImage):
        return MediaCategories(unit.image_id, "image", tuple(sorted(unit.present_categories())))
    return unit


def build_hallucination_set(
    media: Iterable[AnnotatedImage | MediaCategories],
    vocabulary: Sequence[str],
    seed: int,
    n_present: int = 2,
    n_absent: int = 2,
    disjoint_from: Sequence[str] | None = None,
) -> tuple[list[HallucinationItem], BuildReport]:
    """Presence questions: per media unit, sample present and absent categories.

    With ``disjoint_from`` the vocabulary is a novel-category list and must
    not overlap the given base classes.
    """
    if not vocabulary:
        raise ValueError("vocabulary must be non-empty")
    if disjoint_from is not None:
        overlap = sorted(set(vocabulary) & set(disjoint_from))
        if overlap:
            raise ValueError(f"novel vocabulary overlaps base classes: {overlap}")

    units = sorted((_as_media(u) for u in media), key=lambda u: u.media_id)
    report = BuildReport(input_count=len(units))
    items: list[HallucinationItem] = []
    vocab_set = set(vocabulary)
    for unit in units:
        present = sorted(set(unit.categories) & vocab_set)
        absent = [c for c in vocabulary if c not in set(unit.categories)]
        if not present:
            report.exclusions["media_without_present_categories"] += 1
        rng = random.Random(derive_seed(seed, unit.media_id))
        chosen_present = sorted(rng.sample(present, min(n_present, len(present))))
        chosen_absent = sorted(rng.sample(absent, min(n_absent, len(absent))))
        ordinal = 0
        for obj, gt in [(c, "yes") for c in chosen_present] + [(c, "no") for c in chosen_absent]:
            item_id = f"{unit.media_id}:hal:{ordinal:02d}"
            items.append(
                HallucinationItem(
                    item_id=item_id,
                    media_id=unit.media_id,
                    medium=unit.medium,
                    obj=obj,
                    gt=gt,
                    seed=derive_seed(seed, item_id),
                )
            )
            ordinal += 1
    items.sort(key=lambda it: it.item_id)
    report.emitted_count = len(items)
    return items, report


# ---------------- pseudo-caption ingestion ---------------- #


def ingest_pseudo_captions(
    images: Iterable[AnnotatedImage], caption_records
) -> tuple[list[AnnotatedImage], BuildReport]:
    """Attach object-level captions to images whose categories are all unique.

    Images with a repeated category are dropped first; records that match no
    surviving (image, instance) pair are tallied as dangling.
    """
    images = sorted(images, key=lambda im: im.image_id)
    report = BuildReport(input_count=len(images))
    kept: dict[str, AnnotatedImage] = {}
    for image in images:
        counts = image.category_counts()
        if counts and max(counts.values()) > 1:
            report.exclusions["images_with_duplicate_category"] += 1
            continue
        kept[image.image_id] = image

    captions: dict[str, dict[str, str]] = {}
    for rec in caption_records:
        image = kept.get(rec.image_id)
        if image is None or all(o.instance_id != rec.instance_id for o in image.objects):
            report.exclusions["captions_dangling"] += 1
            continue
        per_image = captions.setdefault(rec.image_id, {})
        if rec.instance_id in per_image:
            report.exclusions["captions_duplicate"] += 1
            continue
        per_image[rec.instance_id] = rec.caption
        report.exclusions["captions_attached"] += 1

    out = []
    for image_id, image in kept.items():
        attached = captions.get(image_id)
        if attached:
            merged = dict(image.captions or {})
            merged.update(attached)
            image = AnnotatedImage(image.image_id, image.dims, image.objects, captions=merged)
        out.append(image)
    report.emitted_count = len(out)
    return out, report


# ---------------- panoptic masks ---------------- #


@dataclass
class PanopticBoxes:
    instances: list[tuple[str, BBox]]
    present_categories: set[str]
    dropped_small: int = 0


def panoptic_to_bboxes(
    mask: np.ndarray, category_map: dict[int, str], min_pixels: int = 10
) -> PanopticBoxes:
    """Tight boxes per mask instance plus the exhaustive present-category set.

    Label 0 is background. Boxes use inclusive pixel extents (xmin, ymin,
    xmax, ymax). Instances under min_pixels yield no box but still mark
    their category present.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"label grid must be 2-D, got shape {mask.shape}")
    result = PanopticBoxes(instances=[], present_categories=set())
    ids, counts = np.unique(mask, return_counts=True)
    for instance_id, count in zip(ids.tolist(), counts.tolist()):
        if instance_id == 0:
            continue
        if instance_id not in category_map:
            raise ValueError(f"instance id {instance_id} missing from category map")
        category = category_map[instance_id]
        result.present_categories.add(category)
        if count < min_pixels:
            result.dropped_small += 1
            continue
        ys, xs = np.nonzero(mask == instance_id)
        box = BBox(float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))
        result.instances.append((category, box))
    return result


# ---------------- video static objects ---------------- #


@dataclass(frozen=True)
class VideoObjectTrack:
    video_id: str
    category: str
    per_frame_boxes: dict[int, BBox]
    averaged_box: BBox
    is_static: bool


def build_video_static_objects(
    per_frame_detections: dict[int, list[tuple[str, BBox]]],
    n_f: int = 8,
    video_id: str = "",
) -> tuple[list[VideoObjectTrack], Counter]:
    """Per-category tracks over n_f uniformly sampled frames.

    A category seen twice in any frame is excluded outright. A track is
    static when present in a single frame, or when every per-frame center
    sits within STATIC_CENTER_RANGE_PX of the mean center. The averaged box
    is the coordinate-wise mean over frames where the object appears.
    """
    tallies: Counter = Counter()
    by_category: dict[str, dict[int, BBox]] = {}
    ambiguous: set[str] = set()
    for frame, detections in per_frame_detections.items():
        if not 0 <= frame < n_f:
            raise ValueError(f"frame index {frame} outside [0, {n_f})")
        for category, box in detections:
            frames = by_category.setdefault(category, {})
            if frame in frames:
                ambiguous.add(category)
            else:
                frames[frame] = box

    tracks = []
    for category in sorted(by_category):
        if category in ambiguous:
            tallies["categories_with_duplicate_instances"] += 1
            continue
        frames = by_category[category]
        boxes = [frames[f] for f in sorted(frames)]
        coords = np.array([b.as_tuple() for b in boxes], dtype=float)
        avg = coords.mean(axis=0)
        centers = np.stack([(coords[:, 0] + coords[:, 2]) / 2, (coords[:, 1] + coords[:, 3]) / 2], axis=1)
        mean_center = centers.mean(axis=0)
        if len(boxes) == 1:
            is_static = True
        else:
            dists = np.linalg.norm(centers - mean_center, axis=1)
            is_static = bool(np.all(dists <= STATIC_CENTER_RANGE_PX))
        tracks.append(
            VideoObjectTrack(
                video_id=video_id,
                category=category,
                per_frame_boxes=dict(sorted(frames.items())),
                averaged_box=BBox(*avg.tolist()),
                is_static=is_static,
            )
        )
    return tracks, tallies


# ---------------- corpus statistics ---------------- #


def corpus_keyword_stats(
    conversations: Iterable[str], phrases: Sequence[str]
) -> dict[str, tuple[int, float]]:
    """Per-phrase conversation counts: case-insensitive substring membership.

    A conversation counts once per phrase no matter how often the phrase
    repeats inside it. Fractions are of the total conversation count.
    """
    if not phrases:
        raise ValueError("phrases must be non-empty")
    lowered_phrases = [(p, p.lower()) for p in phrases]
    counts = Counter()
    total = 0
    for text in conversations:
        total += 1
        lowered = text.lower()
        for phrase, needle in lowered_phrases:
            if needle in lowered:
                counts[phrase] += 1
    return {phrase: (counts[phrase], counts[phrase] / total if total else 0.0) for phrase, _ in lowered_phrases}

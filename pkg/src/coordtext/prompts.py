"""Instruction templates, seeded prompt/target rendering, and response parsing.

Rendering is pure: a (descriptor, form, location, seed) tuple always produces
the same bytes, so datasets can be regenerated from their metadata alone.
Location-query and negative-query prompts are drawn from the same template
pool so nothing in the input distinguishes the two objectives.
"""

import re
from dataclasses import dataclass

from .coords import (
    CodecError,
    ImageDims,
    LocationText,
    ReprScheme,
    decode_bbox,
    decode_point,
    split_coordinate_text,
)

# objective tags used across records and reports
LOCPRED = "locpred"
NEGPRED = "negpred"
REVLOC = "revloc"
SPATIAL_DIRECT = "spatial_direct"
SPATIAL_ICL = "spatial_icl"
HALLUCINATION = "hallucination"
CAPTION_REQUEST = "caption_request"
VQA = "vqa"
REGION_DESCRIPTION = "region_description"

LOCATION_PROMPTS = (
    "Where is the object described {category} located in image in terms of {repr}?",
    "What is the location of object described {category} in terms of {repr}?",
    "Localize the object described {category} in terms of {repr}?",
    "Provide a {repr} for the the object described {category}?",
    "Generate a {repr} for the the object described {category}?",
)

REVLOC_PROMPTS = (
    "Describe the object located at {loc}?",
    "Provide a caption for object at {loc}?",
    "What is at location {loc} in image?",
)

LOCPRED_TARGET = "It is located at {loc}"
NEGPRED_TARGET = "There is no such object in the image"
REVLOC_TARGET = "There is a {category}."

REPR_PLACEHOLDER = {"bbox": "(x1,y1,x2,y2) bbox", "point": "(cx,cy) point"}

SPATIAL_QUESTION = "Which side of {obj1} is {obj2} located?"
SPATIAL_ICL_ANSWER = "The {obj1} is located to the {keyword} of {obj2}."
HALLUCINATION_QUESTION = "Is there {obj} in this {medium}?"
CAPTION_PROMPT = (
    "Describe the {category} in this image using one short sentence, "
    "referring to its visual features and spatial position relative to other objects in image."
)

SIDE_KEYWORDS = ("left", "right", "above", "below")
OPPOSITE_KEYWORD = {"left": "right", "right": "left", "above": "below", "below": "above"}
NEGATION_PHRASES = ("no such object", "there is no", "not present", "does not appear")


@dataclass(frozen=True)
class TemplateSet:
    """The full template pool; location and negative prompts are the same tuple."""

    locpred_prompts: tuple[str, ...] = LOCATION_PROMPTS
    negpred_prompts: tuple[str, ...] = LOCATION_PROMPTS
    revloc_prompts: tuple[str, ...] = REVLOC_PROMPTS
    locpred_target: str = LOCPRED_TARGET
    negpred_target: str = NEGPRED_TARGET
    revloc_target: str = REVLOC_TARGET
    spatial_direct: str = SPATIAL_QUESTION
    spatial_icl_answer: str = SPATIAL_ICL_ANSWER
    hallucination: str = HALLUCINATION_QUESTION
    caption_request: str = CAPTION_PROMPT
    source: str = "builtin"

    def __post_init__(self):
        if self.locpred_prompts != self.negpred_prompts:
            raise ValueError("location and negative prompt pools must be identical")


DEFAULT_TEMPLATES = TemplateSet()

_OVERRIDE_SECTIONS = {
    "locpred_prompts": tuple,
    "negpred_prompts": tuple,
    "revloc_prompts": tuple,
    "locpred_target": str,
    "negpred_target": str,
    "revloc_target": str,
    "spatial_direct": str,
    "spatial_icl_answer": str,
    "hallucination": str,
    "caption_request": str,
}


def load_template_overrides(path) -> TemplateSet:
    """Read a section-headed template file: ``[name]`` lines followed by one template per line."""
    sections: dict[str, list[str]] = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            header = re.fullmatch(r"\[(\w+)\]", line.strip())
            if header:
                current = header.group(1)
                if current not in _OVERRIDE_SECTIONS:
                    raise ValueError(f"unknown template section {current!r}")
                sections[current] = []
                continue
            if current is None:
                raise ValueError(f"template line before any section header: {line!r}")
            sections[current].append(line)
    fields = {}
    for name, lines in sections.items():
        if _OVERRIDE_SECTIONS[name] is tuple:
            fields[name] = tuple(lines)
        else:
            if len(lines) != 1:
                raise ValueError(f"section {name!r} must hold exactly one template")
            fields[name] = lines[0]
    if "locpred_prompts" in fields and "negpred_prompts" not in fields:
        fields["negpred_prompts"] = fields["locpred_prompts"]
    return TemplateSet(source=str(path), **fields)


@dataclass(frozen=True)
class RenderedPair:
    prompt: str
    target: str
    objective: str
    template_index: int
    seed: int


@dataclass(frozen=True)
class ParsedResponse:
    """Structured view of free-form model text; raw is always preserved."""

    kind: str  # location | negative | side_answer | yes_no | free_text
    raw: str
    location: LocationText | None = None
    side: str | None = None
    polarity: str | None = None


def template_index(seed: int, n_templates: int) -> int:
    """Seed-to-template mapping: small seeds enumerate templates, any seed is uniform."""
    return seed % n_templates


def _require(value: str, what: str) -> None:
    if not value:
        raise ValueError(f"{what} must be non-empty")


def render_locpred(
    descriptor: str, form: str, loc: LocationText, seed: int, templates: TemplateSet = DEFAULT_TEMPLATES
) -> RenderedPair:
    """Prompt asking for the location of descriptor; target states loc canonically."""
    _require(descriptor, "descriptor")
    if loc.form != form:
        raise ValueError(f"location form {loc.form!r} does not match requested form {form!r}")
    idx = template_index(seed, len(templates.locpred_prompts))
    prompt = templates.locpred_prompts[idx].format(category=descriptor, repr=REPR_PLACEHOLDER[form])
    target = templates.locpred_target.format(loc=loc.text)
    return RenderedPair(prompt, target, LOCPRED, idx, seed)


def render_negpred(
    descriptor: str, form: str, seed: int, templates: TemplateSet = DEFAULT_TEMPLATES
) -> RenderedPair:
    """Same prompt pool as render_locpred; target denies the object exists."""
    _require(descriptor, "descriptor")
    idx = template_index(seed, len(templates.negpred_prompts))
    prompt = templates.negpred_prompts[idx].format(category=descriptor, repr=REPR_PLACEHOLDER[form])
    return RenderedPair(prompt, templates.negpred_target, NEGPRED, idx, seed)


def render_revloc(
    loc: LocationText, descriptor: str, seed: int, templates: TemplateSet = DEFAULT_TEMPLATES
) -> RenderedPair:
    """Prompt asking what is at loc; target names the descriptor."""
    _require(descriptor, "descriptor")
    idx = template_index(seed, len(templates.revloc_prompts))
    prompt = templates.revloc_prompts[idx].format(loc=loc.text)
    target = templates.revloc_target.format(category=descriptor)
    return RenderedPair(prompt, target, REVLOC, idx, seed)


def render_spatial_query(
    obj1: str,
    obj2: str,
    axis: str,
    icl: tuple[tuple[str, str], tuple[str, str]] | None = None,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> str:
    """Side question about obj2 relative to obj1; same sentence frame for both axes.

    With icl, the two worked question/answer pairs precede the final question
    in a single "Q: ... A: ..." sequence.
    """
    _require(obj1, "obj1")
    _require(obj2, "obj2")
    if obj1 == obj2:
        raise ValueError(f"spatial query needs two distinct objects, got {obj1!r} twice")
    if axis not in ("lr", "ab"):
        raise ValueError(f"unknown axis {axis!r}")
    question = templates.spatial_direct.format(obj1=obj1, obj2=obj2)
    if icl is None:
        return question
    (q1, a1), (q2, a2) = icl
    for part in (q1, a1, q2, a2):
        _require(part, "in-context example")
    return f"Q: {q1} A: {a1} Q: {q2} A: {a2} Q: {question}"


def spatial_icl_example(
    obj1: str, obj2: str, keyword: str, templates: TemplateSet = DEFAULT_TEMPLATES
) -> tuple[str, str]:
    """One in-context (question, answer) pair in the printed answer wording."""
    question = templates.spatial_direct.format(obj1=obj1, obj2=obj2)
    answer = templates.spatial_icl_answer.format(obj1=obj1, keyword=keyword, obj2=obj2)
    return question, answer


def render_hallucination_query(obj: str, medium: str, templates: TemplateSet = DEFAULT_TEMPLATES) -> str:
    _require(obj, "obj")
    if medium not in ("image", "video"):
        raise ValueError(f"unknown medium {medium!r}")
    return templates.hallucination.format(obj=obj, medium=medium)


def render_caption_request(category: str, templates: TemplateSet = DEFAULT_TEMPLATES) -> str:
    _require(category, "category")
    return templates.caption_request.format(category=category)


_PAREN_TUPLE_RE = re.compile(r"\(([^()]*)\)")
_BARE_TUPLE_RE = re.compile(r"-?\d+(?:\.\d+)?(?:\s*,\s*-?\d+(?:\.\d+)?)+")


def extract_location(raw: str, scheme: ReprScheme, form: str) -> LocationText | None:
    """First coordinate tuple in raw that is valid for scheme/form, canonicalized.

    Validity means correct arity, token syntax, in-range bin/anchor indices,
    and a non-degenerate box; candidates failing any check are skipped.
    """
    candidates = [m.group(1) for m in _PAREN_TUPLE_RE.finditer(raw)]
    candidates += [m.group(0) for m in _BARE_TUPLE_RE.finditer(raw)]
    unit = ImageDims(1, 1)  # scale-free decode probe: range and degeneracy checks only
    for cand in candidates:
        try:
            tokens = split_coordinate_text(cand, scheme, form, lenient=True)
            loc = LocationText("(" + ", ".join(tokens) + ")", scheme, form)
            if form == "point":
                decode_point(loc, unit)
            else:
                decode_bbox(loc, unit)
        except CodecError:
            continue
        return loc
    return None


def _word_present(word: str, text: str) -> bool:
    return re.search(rf"\b{word}\b", text) is not None


def parse_response(
    raw: str, expect: str, scheme: ReprScheme | None = None, form: str | None = None
) -> ParsedResponse:
    """Classify model text for the expected objective. Total: never raises.

    Location objectives yield the first well-formed coordinate tuple, else a
    negation if one of the stock denial phrases appears. Side questions need
    exactly one of the four side keywords (substring match); yes/no questions
    need exactly one of yes/no as a whole word. Anything else is free text.
    """
    lowered = raw.lower()
    if expect in (LOCPRED, NEGPRED, REVLOC):
        if scheme is not None and form is not None:
            loc = extract_location(raw, scheme, form)
            if loc is not None:
                return ParsedResponse(kind="location", raw=raw, location=loc)
        if any(phrase in lowered for phrase in NEGATION_PHRASES):
            return ParsedResponse(kind="negative", raw=raw, polarity="no")
        return ParsedResponse(kind="free_text", raw=raw)
    if expect in (SPATIAL_DIRECT, SPATIAL_ICL):
        present = [kw for kw in SIDE_KEYWORDS if kw in lowered]
        if len(present) == 1:
            return ParsedResponse(kind="side_answer", raw=raw, side=present[0])
        return ParsedResponse(kind="free_text", raw=raw)
    if expect == HALLUCINATION:
        yes = _word_present("yes", lowered)
        no = _word_present("no", lowered)
        if yes != no:
            return ParsedResponse(kind="yes_no", raw=raw, polarity="yes" if yes else "no")
        return ParsedResponse(kind="free_text", raw=raw)
    return ParsedResponse(kind="free_text", raw=raw)

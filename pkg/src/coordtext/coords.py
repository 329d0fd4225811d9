"""Conversion between pixel-space locations and textual coordinate strings.

Three interchangeable representation schemes are supported:

* ``nfp`` -- normalized floating point: each coordinate is divided by the
  matching image dimension and printed with a fixed number of decimals.
* ``ivb`` -- integer-valued binning: each coordinate is mapped to one of
  ``n_bins`` uniform bins along its axis and printed as the bin index.
* ``diga`` -- deviation from grid anchors: the image is rescaled to a fixed
  square covered by a ``grid x grid`` lattice of anchor cells; the anchor
  nearest the object center is named by its (column, row) index and the
  remaining values are integer pixel deviations from that anchor center.

Encoding quantizes. ``quantization_error_bound`` gives the worst-case
per-coordinate pixel error of an encode/decode round trip; decoding maps
bins and anchors back to their centers to attain it. All quantization is
done in exact rational arithmetic so the emitted text never depends on
platform float behaviour.
"""

import re
from dataclasses import dataclass


class CodecError(ValueError):
    """Raised for invalid locations, schemes, or coordinate text."""


@dataclass(frozen=True)
class ImageDims:
    """Pixel dimensions of a source image."""

    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise CodecError(f"image dims must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in absolute pixels, (x1, y1) top-left, (x2, y2) bottom-right."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if min(self.x1, self.y1, self.x2, self.y2) < 0:
            raise CodecError(f"negative coordinate in {self.as_tuple()}")
        if self.x1 > self.x2:
            raise CodecError(f"x1 > x2 in {self.as_tuple()}")
        if self.y1 > self.y2:
            raise CodecError(f"y1 > y2 in {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def center(self) -> "PointLoc":
        return PointLoc((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)

    def validate_within(self, dims: ImageDims) -> None:
        if self.x2 > dims.width or self.y2 > dims.height:
            raise CodecError(f"box {self.as_tuple()} exceeds image {dims.width}x{dims.height}")


@dataclass(frozen=True)
class PointLoc:
    """A single location in absolute pixels, usually an object center."""

    cx: float
    cy: float

    def __post_init__(self):
        if self.cx < 0 or self.cy < 0:
            raise CodecError(f"negative coordinate in ({self.cx}, {self.cy})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    def validate_within(self, dims: ImageDims) -> None:
        if self.cx > dims.width or self.cy > dims.height:
            raise CodecError(f"point ({self.cx}, {self.cy}) exceeds image {dims.width}x{dims.height}")


VALID_KINDS = ("nfp", "ivb", "diga")


@dataclass(frozen=True)
class ReprScheme:
    """Parameters of one textual coordinate representation.

    Only the fields matching ``kind`` are meaningful: ``decimals`` for nfp,
    ``n_bins`` for ivb, ``grid``/``patch`` for diga. The diga square side
    ``grid * patch`` must be 224 or 336.
    """

    kind: str
    decimals: int = 4
    n_bins: int = 224
    grid: int = 16
    patch: int = 14

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise CodecError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "nfp" and self.decimals < 1:
            raise CodecError("nfp needs at least 1 decimal place")
        if self.kind == "ivb" and self.n_bins < 2:
            raise CodecError("ivb needs at least 2 bins")
        if self.kind == "diga" and self.grid * self.patch not in (224, 336):
            raise CodecError(f"diga square side must be 224 or 336, got {self.grid * self.patch}")

    @classmethod
    def nfp(cls, decimals: int = 4) -> "ReprScheme":
        return cls(kind="nfp", decimals=decimals)

    @classmethod
    def ivb(cls, n_bins: int = 224) -> "ReprScheme":
        return cls(kind="ivb", n_bins=n_bins)

    @classmethod
    def diga(cls, grid: int = 16, patch: int = 14) -> "ReprScheme":
        return cls(kind="diga", grid=grid, patch=patch)

    @property
    def square_side(self) -> int:
        return self.grid * self.patch

    def to_dict(self) -> dict:
        if self.kind == "nfp":
            return {"kind": "nfp", "decimals": self.decimals}
        if self.kind == "ivb":
            return {"kind": "ivb", "n_bins": self.n_bins}
        return {"kind": "diga", "grid": self.grid, "patch": self.patch}

    @classmethod
    def from_dict(cls, d: dict) -> "ReprScheme":
        return cls(kind=d["kind"], **{k: v for k, v in d.items() if k != "kind"})


@dataclass(frozen=True)
class LocationText:
    """A location serialized under one scheme, plus enough context to parse it back."""

    text: str
    scheme: ReprScheme
    form: str  # "point" | "bbox"

    def __post_init__(self):
        if self.form not in ("point", "bbox"):
            raise CodecError(f"unknown location form {self.form!r}")


# Quantization works on exact (numerator, denominator) views of the input
# floats, so bin and anchor decisions never wobble at cell boundaries.


def _ratio(value) -> tuple[int, int]:
    if isinstance(value, int):
        return value, 1
    return value.as_integer_ratio()


def _round_half_up(num: int, den: int) -> int:
    """Round num/den (den > 0) to the nearest integer, halves away from zero."""
    if num >= 0:
        return (2 * num + den) // (2 * den)
    return -((-2 * num + den) // (2 * den))


def _nfp_coord(value: float, dim: int, decimals: int) -> str:
    num, den = _ratio(value)
    scale = 10**decimals
    scaled = _round_half_up(num * scale, den * dim)
    whole, part = divmod(scaled, scale)
    return f"{whole}.{part:0{decimals}d}"


def _ivb_coord(value: float, dim: int, n_bins: int) -> int:
    num, den = _ratio(value)
    k = (num * n_bins) // (den * dim)
    # a coordinate exactly on the far edge belongs to the last bin
    return min(k, n_bins - 1)


def _axis_anchor(num: int, den: int, grid: int, patch: int) -> int:
    """Index of the grid cell whose center is nearest to num/den, lower index on ties."""
    cell = num // (den * patch)
    if cell >= 1 and num == cell * den * patch:
        cell -= 1  # cell boundary: equidistant to both neighbours, keep the lower
    return min(max(cell, 0), grid - 1)


def nearest_anchor(p: PointLoc, dims: ImageDims, scheme: ReprScheme) -> tuple[int, int]:
    """Grid indices (column, row) of the anchor nearest to p after rescaling.

    Equivalent to the argmin of Euclidean distance over all grid x grid anchor
    centers; ties resolve to the lower column index first, then the lower row.
    """
    if scheme.kind != "diga":
        raise CodecError(f"nearest_anchor needs a diga scheme, got {scheme.kind}")
    p.validate_within(dims)
    side = scheme.square_side
    xn, xd = _ratio(p.cx)
    yn, yd = _ratio(p.cy)
    return (
        _axis_anchor(xn * side, xd * dims.width, scheme.grid, scheme.patch),
        _axis_anchor(yn * side, yd * dims.height, scheme.grid, scheme.patch),
    )


def _format_tuple(values) -> str:
    return "(" + ", ".join(str(v) for v in values) + ")"


def _deviation(num: int, den: int, anchor_idx: int, patch: int, from_anchor: bool) -> int:
    """Signed rounded deviation between num/den and the anchor-center ordinate.

    ``from_anchor`` measures coordinate minus center; otherwise center minus
    coordinate. The anchor center is ((2 * idx + 1) * patch) / 2.
    """
    center_num = (2 * anchor_idx + 1) * patch * den
    diff = 2 * num - center_num if from_anchor else center_num - 2 * num
    return _round_half_up(diff, 2 * den)


def encode_point(p: PointLoc, dims: ImageDims, scheme: ReprScheme) -> LocationText:
    """Serialize a point location under the given scheme."""
    p.validate_within(dims)
    if scheme.kind == "nfp":
        text = _format_tuple(
            [_nfp_coord(p.cx, dims.width, scheme.decimals), _nfp_coord(p.cy, dims.height, scheme.decimals)]
        )
    elif scheme.kind == "ivb":
        text = _format_tuple(
            [_ivb_coord(p.cx, dims.width, scheme.n_bins), _ivb_coord(p.cy, dims.height, scheme.n_bins)]
        )
    else:
        side, grid, patch = scheme.square_side, scheme.grid, scheme.patch
        xn, xd = _ratio(p.cx)
        yn, yd = _ratio(p.cy)
        xn, xd = xn * side, xd * dims.width
        yn, yd = yn * side, yd * dims.height
        pi = _axis_anchor(xn, xd, grid, patch)
        qi = _axis_anchor(yn, yd, grid, patch)
        d1 = _deviation(xn, xd, pi, patch, from_anchor=True)
        d2 = _deviation(yn, yd, qi, patch, from_anchor=True)
        text = _format_tuple([pi, qi, d1, d2])
    return LocationText(text=text, scheme=scheme, form="point")


def encode_bbox(b: BBox, dims: ImageDims, scheme: ReprScheme) -> LocationText:
    """Serialize a box location under the given scheme."""
    b.validate_within(dims)
    if scheme.kind == "nfp":
        text = _format_tuple(
            [
                _nfp_coord(b.x1, dims.width, scheme.decimals),
                _nfp_coord(b.y1, dims.height, scheme.decimals),
                _nfp_coord(b.x2, dims.width, scheme.decimals),
                _nfp_coord(b.y2, dims.height, scheme.decimals),
            ]
        )
    elif scheme.kind == "ivb":
        text = _format_tuple(
            [
                _ivb_coord(b.x1, dims.width, scheme.n_bins),
                _ivb_coord(b.y1, dims.height, scheme.n_bins),
                _ivb_coord(b.x2, dims.width, scheme.n_bins),
                _ivb_coord(b.y2, dims.height, scheme.n_bins),
            ]
        )
    else:
        side, grid, patch = scheme.square_side, scheme.grid, scheme.patch
        x1n, x1d = _ratio(b.x1)
        y1n, y1d = _ratio(b.y1)
        x2n, x2d = _ratio(b.x2)
        y2n, y2d = _ratio(b.y2)
        x1n, x1d = x1n * side, x1d * dims.width
        y1n, y1d = y1n * side, y1d * dims.height
        x2n, x2d = x2n * side, x2d * dims.width
        y2n, y2d = y2n * side, y2d * dims.height
        cxn, cxd = x1n * x2d + x2n * x1d, 2 * x1d * x2d
        cyn, cyd = y1n * y2d + y2n * y1d, 2 * y1d * y2d
        pi = _axis_anchor(cxn, cxd, grid, patch)
        qi = _axis_anchor(cyn, cyd, grid, patch)
        # deviations measured outward: anchor-to-top-left, bottom-right-to-anchor
        d1 = _deviation(x1n, x1d, pi, patch, from_anchor=False)
        d2 = _deviation(y1n, y1d, qi, patch, from_anchor=False)
        d3 = _deviation(x2n, x2d, pi, patch, from_anchor=True)
        d4 = _deviation(y2n, y2d, qi, patch, from_anchor=True)
        text = _format_tuple([pi, qi, d1, d2, d3, d4])
    return LocationText(text=text, scheme=scheme, form="bbox")


_INT_RE = re.compile(r"-?\d+")


def _nfp_re(decimals: int) -> re.Pattern:
    return re.compile(rf"[01]\.\d{{{decimals}}}")


def _arity(scheme: ReprScheme, form: str) -> int:
    base = 2 if form == "point" else 4
    return base + (2 if scheme.kind == "diga" else 0)


def split_coordinate_text(text: str, scheme: ReprScheme, form: str, lenient: bool = False) -> list[str]:
    """Split location text into raw coordinate tokens, validating the grammar.

    Canonical grammar is parenthesized, comma-plus-space separated. In lenient
    mode the parentheses may be missing and whitespace is arbitrary; token
    syntax is still enforced.
    """
    arity = _arity(scheme, form)
    token_re = _nfp_re(scheme.decimals) if scheme.kind == "nfp" else _INT_RE
    if lenient:
        inner = text.strip()
        if inner.startswith("(") and inner.endswith(")"):
            inner = inner[1:-1]
        tokens = [t.strip() for t in inner.split(",")]
    else:
        canonical = re.fullmatch(r"\((.*)\)", text.strip())
        if canonical is None:
            raise CodecError(f"missing parentheses in {text!r}")
        tokens = canonical.group(1).split(", ")
    if len(tokens) != arity:
        raise CodecError(f"expected {arity} coordinates for {scheme.kind} {form}, got {len(tokens)} in {text!r}")
    for tok in tokens:
        if token_re.fullmatch(tok) is None:
            raise CodecError(f"bad {scheme.kind} coordinate token {tok!r}")
    return tokens


def _decode_values(tokens: list[str], scheme: ReprScheme, dims: ImageDims, form: str) -> list[float]:
    """Map validated tokens back to pixel coordinates (x-axis first, alternating)."""
    if scheme.kind == "nfp":
        scale = 10**scheme.decimals
        out = []
        for i, tok in enumerate(tokens):
            whole, part = tok.split(".")
            scaled = int(whole) * scale + int(part)
            if scaled > scale:
                raise CodecError(f"normalized coordinate {tok!r} exceeds 1")
            dim = dims.width if i % 2 == 0 else dims.height
            out.append(scaled * dim / scale)
        return out
    if scheme.kind == "ivb":
        out = []
        for i, tok in enumerate(tokens):
            k = int(tok)
            if not 0 <= k < scheme.n_bins:
                raise CodecError(f"bin index {tok!r} outside [0, {scheme.n_bins - 1}]")
            dim = dims.width if i % 2 == 0 else dims.height
            out.append((2 * k + 1) * dim / (2 * scheme.n_bins))
        return out
    # diga: anchor indices then deviations; work with doubled ordinates to stay integral
    pi, qi = int(tokens[0]), int(tokens[1])
    for name, idx in (("column", pi), ("row", qi)):
        if not 0 <= idx < scheme.grid:
            raise CodecError(f"anchor {name} index {idx} outside [0, {scheme.grid - 1}]")
    acx2 = (2 * pi + 1) * scheme.patch
    acy2 = (2 * qi + 1) * scheme.patch
    devs = [2 * int(t) for t in tokens[2:]]
    side = scheme.square_side
    if form == "point":
        doubled = [acx2 + devs[0], acy2 + devs[1]]
    else:
        doubled = [acx2 - devs[0], acy2 - devs[1], acx2 + devs[2], acy2 + devs[3]]
    out = []
    for i, v in enumerate(doubled):
        dim = dims.width if i % 2 == 0 else dims.height
        out.append(v * dim / (2 * side))
    return out


def decode_point(t: LocationText, dims: ImageDims, lenient: bool = False) -> PointLoc:
    """Reconstruct the pixel-space point encoded in t."""
    if t.form != "point":
        raise CodecError(f"expected point text, got form {t.form!r}")
    tokens = split_coordinate_text(t.text, t.scheme, "point", lenient=lenient)
    cx, cy = _decode_values(tokens, t.scheme, dims, "point")
    if cx < 0 or cy < 0:
        raise CodecError(f"decoded point ({cx}, {cy}) outside image")
    return PointLoc(cx, cy)


def decode_bbox(t: LocationText, dims: ImageDims, lenient: bool = False) -> BBox:
    """Reconstruct the pixel-space box encoded in t.

    A decoded box with x1 > x2 or y1 > y2 is reported as a degenerate decode,
    never silently repaired.
    """
    if t.form != "bbox":
        raise CodecError(f"expected bbox text, got form {t.form!r}")
    tokens = split_coordinate_text(t.text, t.scheme, "bbox", lenient=lenient)
    x1, y1, x2, y2 = _decode_values(tokens, t.scheme, dims, "bbox")
    if x1 > x2 or y1 > y2:
        raise CodecError(f"degenerate decode ({x1}, {y1}, {x2}, {y2}) from {t.text!r}")
    return BBox(x1, y1, x2, y2)


def quantization_error_bound(scheme: ReprScheme, dims: ImageDims) -> tuple[float, float]:
    """Worst-case absolute round-trip error in pixels, per axis (x, y)."""

    def per_dim(dim: int) -> float:
        if scheme.kind == "nfp":
            return 0.5 * 10**-scheme.decimals * dim
        if scheme.kind == "ivb":
            return dim / scheme.n_bins
        return 0.5 * dim / scheme.square_side

    return (per_dim(dims.width), per_dim(dims.height))


@dataclass(frozen=True)
class TokenCost:
    """Token count of a location string under the character-level numeric rule."""

    coordinates: int
    overhead: int

    @property
    def total(self) -> int:
        return self.coordinates + self.overhead


def numeric_token_cost(token: str) -> int:
    """Tokens needed for one numeric string: every digit, decimal point, and sign is one."""
    return sum(1 for ch in token if ch.isdigit() or ch in ".+-")


def coordinate_token_costs(t: LocationText) -> list[int]:
    """Per-coordinate token costs of a location string."""
    tokens = split_coordinate_text(t.text, t.scheme, t.form, lenient=True)
    return [numeric_token_cost(tok) for tok in tokens]


def token_cost(t: LocationText) -> TokenCost:
    """Token cost of a location string.

    Coordinate tokens follow the numeric rule; the enclosing parentheses and
    each comma separator count one token apiece and are reported as overhead.
    """
    costs = coordinate_token_costs(t)
    stripped = t.text.strip()
    parens = 2 if stripped.startswith("(") and stripped.endswith(")") else 0
    return TokenCost(coordinates=sum(costs), overhead=parens + stripped.count(","))

"""The JSON draft document: wire format for layered compositions.

A draft names a canvas and a stack of rectangular layer placements. Each
placement carries integer pixel geometry plus a hierarchy rank, where rank 0
paints first. Geometry may run off the canvas (bleed is legal); rendering
clips. The canonical byte form is stable enough to diff and hash: two-space
indent, fixed key order, layers sorted by ascending hierarchy, LF endings,
one trailing newline. An optional free-form "meta" object rides along for
provenance and takes part in no invariant.

Unknown keys are rejected rather than ignored, which catches misspelled or
hallucinated fields at the door. See PROTOCOL.md for the full format notes
and draft.schema.json for the machine-readable schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import DraftSyntaxError, InvariantError, SchemaError

__all__ = [
    "CanvasSpec",
    "Placement",
    "DraftProtocol",
    "parse_draft",
    "serialize_draft",
    "canonicalize",
    "validate_draft",
]


@dataclass(frozen=True)
class CanvasSpec:
    """Canvas size in pixels."""

    width: int
    height: int


@dataclass(frozen=True)
class Placement:
    """One layer: id, top-left position, size, and hierarchy rank."""

    element_id: str
    x: int
    y: int
    w: int
    h: int
    hierarchy: int


@dataclass(frozen=True)
class DraftProtocol:
    """A canvas plus a non-empty stack of placements.

    ``placements`` keeps the order it was constructed with; use
    :func:`canonicalize` for the hierarchy-sorted form. ``meta`` is free-form
    provenance; an empty mapping is normalized to None so serialization
    round-trips exactly.
    """

    canvas: CanvasSpec
    placements: tuple[Placement, ...] = field(default_factory=tuple)
    meta: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "placements", tuple(self.placements))
        if self.meta is not None and not self.meta:
            object.__setattr__(self, "meta", None)

    def ranks(self) -> dict[str, int]:
        """Map element_id to hierarchy rank."""
        return {p.element_id: p.hierarchy for p in self.placements}

    def by_id(self) -> dict[str, Placement]:
        return {p.element_id: p for p in self.placements}


_TOP_REQUIRED = ("canvas", "layers")
_TOP_OPTIONAL = ("meta",)
_CANVAS_KEYS = ("width", "height")
_LAYER_KEYS = ("id", "x", "y", "w", "h", "hierarchy")


def _require_object(doc: Any, path: str, required: tuple, optional: tuple = ()) -> None:
    if not isinstance(doc, dict):
        raise SchemaError(f"expected an object, got {type(doc).__name__}", path)
    for key in doc:
        if key not in required and key not in optional:
            raise SchemaError(f"unexpected key {key!r}", path)
    for key in required:
        if key not in doc:
            raise SchemaError(f"missing required key {key!r}", path)


def _require_int(value: Any, path: str) -> int:
    # bool is an int subclass; JSON true/false must not pass as numbers.
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"expected an integer, got {type(value).__name__}", path)
    return value


def _require_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"expected a string, got {type(value).__name__}", path)
    return value


def parse_draft(data: bytes | str) -> DraftProtocol:
    """Parse UTF-8 JSON bytes (or text) into a validated draft.

    Raises DraftSyntaxError for malformed text, SchemaError for shape or type
    problems, and InvariantError for value-level violations. Placement order
    from the input is preserved; parsing does not canonicalize.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DraftSyntaxError(f"input is not UTF-8: {exc}") from exc
    else:
        text = data
    try:
        doc = json.loads(text, parse_constant=_reject_nonfinite)
    except json.JSONDecodeError as exc:
        raise DraftSyntaxError(
            f"malformed JSON: {exc.msg} (line {exc.lineno} column {exc.colno})"
        ) from exc
    except ValueError as exc:
        raise DraftSyntaxError(f"malformed JSON: {exc}") from exc

    _require_object(doc, "$", _TOP_REQUIRED, _TOP_OPTIONAL)
    canvas_doc = doc["canvas"]
    _require_object(canvas_doc, "$.canvas", _CANVAS_KEYS)
    width = _require_int(canvas_doc["width"], "$.canvas.width")
    height = _require_int(canvas_doc["height"], "$.canvas.height")

    layers_doc = doc["layers"]
    if not isinstance(layers_doc, list):
        raise SchemaError(f"expected an array, got {type(layers_doc).__name__}", "$.layers")
    placements = []
    for i, item in enumerate(layers_doc):
        path = f"$.layers[{i}]"
        _require_object(item, path, _LAYER_KEYS)
        placements.append(
            Placement(
                element_id=_require_str(item["id"], f"{path}.id"),
                x=_require_int(item["x"], f"{path}.x"),
                y=_require_int(item["y"], f"{path}.y"),
                w=_require_int(item["w"], f"{path}.w"),
                h=_require_int(item["h"], f"{path}.h"),
                hierarchy=_require_int(item["hierarchy"], f"{path}.hierarchy"),
            )
        )

    meta = doc.get("meta")
    if meta is not None and not isinstance(meta, dict):
        raise SchemaError(f"expected an object, got {type(meta).__name__}", "$.meta")

    draft = DraftProtocol(canvas=CanvasSpec(width, height), placements=tuple(placements), meta=meta)
    validate_draft(draft)
    return draft


def _reject_nonfinite(token: str) -> None:
    raise ValueError(f"non-finite number literal {token!r} is not allowed")


def validate_draft(d: DraftProtocol) -> None:
    """Raise InvariantError unless every draft invariant holds."""
    if d.canvas.width < 1:
        raise InvariantError("canvas width must be >= 1", "$.canvas.width")
    if d.canvas.height < 1:
        raise InvariantError("canvas height must be >= 1", "$.canvas.height")
    n = len(d.placements)
    if n == 0:
        raise InvariantError("a draft needs at least one layer", "$.layers")
    seen_ids: dict[str, int] = {}
    seen_ranks: dict[int, int] = {}
    for i, p in enumerate(d.placements):
        if p.w < 1:
            raise InvariantError(f"w must be >= 1, got {p.w}", f"$.layers[{i}].w")
        if p.h < 1:
            raise InvariantError(f"h must be >= 1, got {p.h}", f"$.layers[{i}].h")
        if p.element_id in seen_ids:
            raise InvariantError(
                f"duplicate element id {p.element_id!r} (first at index {seen_ids[p.element_id]})",
                f"$.layers[{i}].id",
            )
        seen_ids[p.element_id] = i
        if p.hierarchy < 0 or p.hierarchy >= n:
            raise InvariantError(
                f"hierarchy {p.hierarchy} outside 0..{n - 1}; ranks must form a permutation",
                f"$.layers[{i}].hierarchy",
            )
        if p.hierarchy in seen_ranks:
            raise InvariantError(
                f"duplicate hierarchy {p.hierarchy} (first at index {seen_ranks[p.hierarchy]})",
                f"$.layers[{i}].hierarchy",
            )
        seen_ranks[p.hierarchy] = i


def canonicalize(d: DraftProtocol) -> DraftProtocol:
    """Return the draft with placements sorted by ascending hierarchy.

    Idempotent; equal-rank ties cannot occur in a valid draft.
    """
    ordered = tuple(sorted(d.placements, key=lambda p: p.hierarchy))
    return DraftProtocol(canvas=d.canvas, placements=ordered, meta=d.meta)


def _sorted_json(value: Any) -> Any:
    """Rebuild nested dicts with sorted keys so meta serializes stably."""
    if isinstance(value, dict):
        return {k: _sorted_json(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_sorted_json(v) for v in value]
    return value


def serialize_draft(d: DraftProtocol) -> bytes:
    """Serialize to the canonical UTF-8 byte form.

    parse_draft(serialize_draft(d)) == canonicalize(d) for every valid draft.
    """
    validate_draft(d)
    obj: dict[str, Any] = {
        "canvas": {"width": d.canvas.width, "height": d.canvas.height},
        "layers": [
            {
                "id": p.element_id,
                "x": p.x,
                "y": p.y,
                "w": p.w,
                "h": p.h,
                "hierarchy": p.hierarchy,
            }
            for p in sorted(d.placements, key=lambda p: p.hierarchy)
        ],
    }
    if d.meta:
        obj["meta"] = _sorted_json(dict(d.meta))
    text = json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False)
    return (text + "\n").encode("utf-8")

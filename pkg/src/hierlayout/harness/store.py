"""Corpus ingestion and the on-disk store.

The input is a JSON-lines manifest, one composition per line:

    {"id": "c01", "split": "test",
     "canvas": {"width": 640, "height": 480},
     "elements": [{"id": "bg", "asset": "art/bg.png",
                   "x": 0, "y": 0, "w": 640, "h": 480,
                   "hierarchy": 0, "category": "background"}, ...]}

Asset paths resolve relative to the manifest file. Ingestion validates each
composition through the draft parser, so the manifest inherits the draft
invariants wholesale, and every failure reports its line number.

The store keeps assets content-addressed (assets/<sha[:2]>/<sha>.png) and
one canonical JSON record per composition under records/. index.json holds
the sorted id list, split counts, and a hash over all record bytes; that
store_hash pins evaluation runs to the exact corpus they ran on.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

from ..draft import CanvasSpec, DraftProtocol, Placement, parse_draft
from ..errors import DecodeError, DraftError, EmptyCorpus, ManifestError
from ..raster import RgbaImage, decode_png

__all__ = ["CorpusElement", "CorpusRecord", "CorpusStore", "ingest"]

SPLITS = ("train", "val", "test")

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

_RECORD_KEYS = {"id", "split", "canvas", "elements"}
_ELEMENT_KEYS = {"id", "asset", "x", "y", "w", "h", "hierarchy"}
_ELEMENT_OPT_KEYS = {"category"}


@dataclass(frozen=True)
class CorpusElement:
    element_id: str
    asset_sha: str
    x: int
    y: int
    w: int
    h: int
    hierarchy: int
    category: str | None = None


@dataclass(frozen=True)
class CorpusRecord:
    record_id: str
    split: str
    canvas: CanvasSpec
    elements: tuple[CorpusElement, ...]

    def truth_draft(self) -> DraftProtocol:
        """The ground-truth composition as a draft."""
        placements = tuple(
            Placement(e.element_id, e.x, e.y, e.w, e.h, e.hierarchy) for e in self.elements
        )
        return DraftProtocol(canvas=self.canvas, placements=placements)

    def reference_order(self) -> dict[str, int]:
        return {e.element_id: e.hierarchy for e in self.elements}


def _record_to_json(record_dict: dict) -> bytes:
    return (json.dumps(record_dict, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _parse_line(line_no: int, raw: str, manifest_dir: Path) -> tuple[dict, dict[str, bytes]]:
    """Validate one manifest line; returns (record dict, asset bytes by sha)."""
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ManifestError(f"invalid JSON: {err}", line_no) from None
    if not isinstance(doc, dict):
        raise ManifestError("each line must be a JSON object", line_no)
    unknown = set(doc) - _RECORD_KEYS
    if unknown:
        raise ManifestError(f"unknown keys {sorted(unknown)}", line_no)
    missing = _RECORD_KEYS - set(doc)
    if missing:
        raise ManifestError(f"missing keys {sorted(missing)}", line_no)
    record_id = doc["id"]
    if not isinstance(record_id, str) or not _ID_RE.match(record_id):
        raise ManifestError(f"id {record_id!r} is not a safe identifier", line_no)
    if doc["split"] not in SPLITS:
        raise ManifestError(f"split {doc['split']!r} not one of {list(SPLITS)}", line_no)
    if not isinstance(doc["elements"], list):
        raise ManifestError("elements must be an array", line_no)

    layers = []
    asset_paths: dict[str, str] = {}
    categories: dict[str, object] = {}
    for i, el in enumerate(doc["elements"]):
        if not isinstance(el, dict):
            raise ManifestError(f"elements[{i}] must be an object", line_no)
        unknown = set(el) - _ELEMENT_KEYS - _ELEMENT_OPT_KEYS
        if unknown:
            raise ManifestError(f"elements[{i}] has unknown keys {sorted(unknown)}", line_no)
        missing = _ELEMENT_KEYS - set(el)
        if missing:
            raise ManifestError(f"elements[{i}] missing keys {sorted(missing)}", line_no)
        layers.append(
            {
                "id": el["id"],
                "x": el["x"],
                "y": el["y"],
                "w": el["w"],
                "h": el["h"],
                "hierarchy": el["hierarchy"],
            }
        )
        asset_paths[str(el["id"])] = el["asset"]
        if "category" in el:
            if not isinstance(el["category"], str):
                raise ManifestError(f"elements[{i}].category must be a string", line_no)
            categories[str(el["id"])] = el["category"]

    # Route the geometry through the draft parser so elements inherit every
    # draft invariant (unique ids, rank permutation, positive sizes).
    try:
        draft = parse_draft(json.dumps({"canvas": doc["canvas"], "layers": layers}))
    except DraftError as err:
        raise ManifestError(str(err), line_no) from None

    assets: dict[str, bytes] = {}
    elements = []
    for p in draft.placements:
        rel = asset_paths[p.element_id]
        if not isinstance(rel, str):
            raise ManifestError(f"asset for element {p.element_id!r} must be a path", line_no)
        path = manifest_dir / rel
        if not path.is_file():
            raise ManifestError(f"asset {rel!r} not found for element {p.element_id!r}", line_no)
        data = path.read_bytes()
        try:
            decode_png(data)
        except DecodeError as err:
            raise ManifestError(f"asset {rel!r}: {err}", line_no) from None
        sha = hashlib.sha256(data).hexdigest()
        assets[sha] = data
        entry = {
            "id": p.element_id,
            "asset_sha": sha,
            "x": p.x,
            "y": p.y,
            "w": p.w,
            "h": p.h,
            "hierarchy": p.hierarchy,
        }
        if p.element_id in categories:
            entry["category"] = categories[p.element_id]
        elements.append(entry)

    record = {
        "id": record_id,
        "split": doc["split"],
        "canvas": {"width": draft.canvas.width, "height": draft.canvas.height},
        "elements": elements,
    }
    return record, assets


def ingest(manifest_path: str | Path, store_dir: str | Path) -> "CorpusStore":
    """Validate a manifest and persist it as a corpus store.

    Raises ManifestError (with the offending line number) on the first bad
    line and EmptyCorpus when the manifest holds no compositions at all.
    """
    manifest_path = Path(manifest_path)
    store_dir = Path(store_dir)
    manifest_dir = manifest_path.parent

    records: dict[str, dict] = {}
    id_lines: dict[str, int] = {}
    all_assets: dict[str, bytes] = {}
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            record, assets = _parse_line(line_no, raw, manifest_dir)
            rid = record["id"]
            if rid in records:
                raise ManifestError(
                    f"duplicate composition id {rid!r} (first seen on line {id_lines[rid]})",
                    line_no,
                )
            records[rid] = record
            id_lines[rid] = line_no
            all_assets.update(assets)
    if not records:
        raise EmptyCorpus(f"manifest {manifest_path} holds no compositions")

    (store_dir / "records").mkdir(parents=True, exist_ok=True)
    for sha, data in all_assets.items():
        bucket = store_dir / "assets" / sha[:2]
        bucket.mkdir(parents=True, exist_ok=True)
        target = bucket / f"{sha}.png"
        if not target.exists():
            target.write_bytes(data)

    digest = hashlib.sha256()
    splits = {s: 0 for s in SPLITS}
    for rid in sorted(records):
        blob = _record_to_json(records[rid])
        (store_dir / "records" / f"{rid}.json").write_bytes(blob)
        digest.update(blob)
        splits[records[rid]["split"]] += 1

    index = {
        "ids": sorted(records),
        "splits": splits,
        "store_hash": digest.hexdigest(),
    }
    (store_dir / "index.json").write_bytes(_record_to_json(index))
    return CorpusStore.open(store_dir)


class CorpusStore:
    """Read-side handle on an ingested corpus directory."""

    def __init__(self, root: Path, ids: list[str], splits: dict[str, int], store_hash: str):
        self.root = root
        self.ids = ids
        self.splits = splits
        self.store_hash = store_hash

    @classmethod
    def open(cls, store_dir: str | Path) -> "CorpusStore":
        root = Path(store_dir)
        index_path = root / "index.json"
        if not index_path.is_file():
            raise FileNotFoundError(f"{index_path} does not exist; ingest a manifest first")
        index = json.loads(index_path.read_text(encoding="utf-8"))
        return cls(root, list(index["ids"]), dict(index["splits"]), index["store_hash"])

    def record(self, record_id: str) -> CorpusRecord:
        doc = json.loads(
            (self.root / "records" / f"{record_id}.json").read_text(encoding="utf-8")
        )
        elements = tuple(
            CorpusElement(
                element_id=e["id"],
                asset_sha=e["asset_sha"],
                x=e["x"],
                y=e["y"],
                w=e["w"],
                h=e["h"],
                hierarchy=e["hierarchy"],
                category=e.get("category"),
            )
            for e in doc["elements"]
        )
        return CorpusRecord(
            record_id=doc["id"],
            split=doc["split"],
            canvas=CanvasSpec(doc["canvas"]["width"], doc["canvas"]["height"]),
            elements=elements,
        )

    def asset_bytes(self, sha: str) -> bytes:
        return (self.root / "assets" / sha[:2] / f"{sha}.png").read_bytes()

    def load_assets(self, record: CorpusRecord) -> dict[str, RgbaImage]:
        return {e.element_id: decode_png(self.asset_bytes(e.asset_sha)) for e in record.elements}

    def split_ids(self, split: str) -> list[str]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [rid for rid in self.ids if self.record(rid).split == split]

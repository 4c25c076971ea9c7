"""Sequence codec: digital-token drafts, input shuffling, feature pooling.

Language-model pipelines want drafts as flat token streams rather than JSON,
coordinates as small integer bins rather than reals, and image features as a
handful of pooled vectors rather than a full grid. This module holds that
arithmetic in plain, testable form. Nothing here is learned; the projection
helper takes whatever weight matrix the caller supplies.

Token grammar: a header of ``<canvas> W H`` followed, in stacking order, by
one six-token body per element: ``<el> qx qy qw qh rank``. Coordinates are
binned against the matching canvas extent (x and w against width, y and h
against height) and clamp to the canvas box, so bleed outside the canvas does
not survive a round trip. Dequantization returns bin centers, keeping the
round-trip error within half a bin.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .draft import CanvasSpec, DraftProtocol, Placement, canonicalize, validate_draft
from .errors import DimensionMismatch, DivisibilityError

__all__ = [
    "QuantSpec",
    "FeatureGrid",
    "quantize",
    "dequantize",
    "encode_draft",
    "decode_draft",
    "tokens_to_text",
    "text_to_tokens",
    "maybe_shuffle",
    "shuffle_inputs",
    "visual_shrink",
    "project",
]

CANVAS_TOKEN = "<canvas>"
ELEMENT_TOKEN = "<el>"

TOKENS_PER_ELEMENT = 6
HEADER_TOKENS = 3


@dataclass(frozen=True)
class QuantSpec:
    """Uniform coordinate binning over a canvas dimension."""

    bins: int = 1000

    def __post_init__(self) -> None:
        if self.bins < 2:
            raise ValueError("bins must be >= 2")


def quantize(value: float, extent: float, q: QuantSpec = QuantSpec()) -> int:
    """Map a coordinate to its bin index, clamping to [0, extent]."""
    if extent <= 0:
        raise ValueError("extent must be positive")
    clamped = min(max(float(value), 0.0), float(extent))
    b = int(math.floor(clamped * q.bins / extent))
    return min(b, q.bins - 1)


def dequantize(b: int, extent: float, q: QuantSpec = QuantSpec()) -> float:
    """Return the center of bin b in canvas units."""
    if extent <= 0:
        raise ValueError("extent must be positive")
    return (b + 0.5) * extent / q.bins


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def encode_draft(d: DraftProtocol, q: QuantSpec = QuantSpec()) -> list[str]:
    """Serialize a draft into the token grammar, elements in stacking order."""
    validate_draft(d)
    w, h = d.canvas.width, d.canvas.height
    tokens = [CANVAS_TOKEN, str(w), str(h)]
    for p in canonicalize(d).placements:
        tokens.append(ELEMENT_TOKEN)
        tokens.append(str(quantize(p.x, w, q)))
        tokens.append(str(quantize(p.y, h, q)))
        tokens.append(str(quantize(p.w, w, q)))
        tokens.append(str(quantize(p.h, h, q)))
        tokens.append(str(p.hierarchy))
    return tokens


def _int_token(token: str, what: str) -> int:
    try:
        return int(token, 10)
    except ValueError:
        raise ValueError(f"{what} token {token!r} is not an integer") from None


def decode_draft(
    tokens: Sequence[str],
    q: QuantSpec = QuantSpec(),
    element_ids: Sequence[str] | None = None,
) -> DraftProtocol:
    """Rebuild a draft from tokens; ids pair with element bodies in order.

    Without explicit ids, elements are named "e0", "e1", ... by body
    position. Coordinates come back as bin centers rounded half-up to
    integers, with width and height floored at 1 pixel.
    """
    tokens = list(tokens)
    if len(tokens) < HEADER_TOKENS or tokens[0] != CANVAS_TOKEN:
        raise ValueError(f"token stream must start with {CANVAS_TOKEN!r}")
    canvas_w = _int_token(tokens[1], "canvas width")
    canvas_h = _int_token(tokens[2], "canvas height")
    body = tokens[HEADER_TOKENS:]
    if len(body) % TOKENS_PER_ELEMENT != 0:
        raise ValueError(
            f"element bodies must be {TOKENS_PER_ELEMENT} tokens each, "
            f"got {len(body)} trailing tokens"
        )
    n = len(body) // TOKENS_PER_ELEMENT
    if element_ids is not None:
        ids = [str(i) for i in element_ids]
        if len(ids) != n:
            raise ValueError(f"got {len(ids)} element ids for {n} token bodies")
    else:
        ids = [f"e{k}" for k in range(n)]
    placements = []
    for k in range(n):
        chunk = body[k * TOKENS_PER_ELEMENT : (k + 1) * TOKENS_PER_ELEMENT]
        if chunk[0] != ELEMENT_TOKEN:
            raise ValueError(f"expected {ELEMENT_TOKEN!r} at body {k}, got {chunk[0]!r}")
        bins = [_int_token(t, f"body {k} field {i}") for i, t in enumerate(chunk[1:5])]
        for b in bins:
            if not 0 <= b < q.bins:
                raise ValueError(f"bin {b} out of range for {q.bins} bins")
        rank = _int_token(chunk[5], f"body {k} rank")
        placements.append(
            Placement(
                element_id=ids[k],
                x=_round_half_up(dequantize(bins[0], canvas_w, q)),
                y=_round_half_up(dequantize(bins[1], canvas_h, q)),
                w=max(1, _round_half_up(dequantize(bins[2], canvas_w, q))),
                h=max(1, _round_half_up(dequantize(bins[3], canvas_h, q))),
                hierarchy=rank,
            )
        )
    d = DraftProtocol(canvas=CanvasSpec(canvas_w, canvas_h), placements=tuple(placements))
    validate_draft(d)
    return d


def tokens_to_text(tokens: Sequence[str]) -> str:
    return " ".join(tokens) + "\n"


def text_to_tokens(text: str) -> list[str]:
    return text.split()


def maybe_shuffle(
    ids: Sequence[str], p: float, rng: np.random.Generator
) -> tuple[list[str], bool]:
    """Shuffle with probability p; returns (order, whether the branch fired).

    Draw order is fixed: one uniform for the branch decision, then a
    Fisher-Yates pass (high index down, inclusive pick) only when it fired.
    The branch flag is returned because an identity permutation is a possible
    shuffle outcome, so the output alone cannot reveal the decision.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("shuffle probability must lie in [0, 1]")
    order = [str(i) for i in ids]
    take = bool(rng.random() < p)
    if take:
        for i in range(len(order) - 1, 0, -1):
            j = int(rng.integers(0, i + 1))
            order[i], order[j] = order[j], order[i]
    return order, take


def shuffle_inputs(ids: Sequence[str], p: float, seed: int) -> list[str]:
    """Deterministic per-seed input shuffling; preserves the multiset."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return maybe_shuffle(ids, p, rng)[0]


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    """A (grid_h, grid_w, D) float feature grid plus one D-dim cls vector."""

    grid: np.ndarray
    cls: np.ndarray

    MAGIC = b"FGRD"

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=np.float32)
        cls = np.asarray(self.cls, dtype=np.float32)
        if grid.ndim != 3 or min(grid.shape) < 1:
            raise ValueError(f"grid must be (h, w, D) with positive dims, got {grid.shape}")
        if cls.shape != (grid.shape[2],):
            raise ValueError(f"cls shape {cls.shape} does not match feature dim {grid.shape[2]}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "cls", cls)

    @property
    def grid_h(self) -> int:
        return self.grid.shape[0]

    @property
    def grid_w(self) -> int:
        return self.grid.shape[1]

    @property
    def dim(self) -> int:
        return self.grid.shape[2]

    def to_bytes(self) -> bytes:
        """16-byte header (magic + grid_h, grid_w, D as uint32 LE), then
        the grid row-major and the cls vector, all little-endian float32."""
        header = self.MAGIC + struct.pack("<III", self.grid_h, self.grid_w, self.dim)
        return header + self.grid.astype("<f4").tobytes() + self.cls.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "FeatureGrid":
        if len(data) < 16 or data[:4] != cls.MAGIC:
            raise ValueError("not a feature-grid blob (bad magic)")
        h, w, dim = struct.unpack("<III", data[4:16])
        expected = 16 + 4 * (h * w * dim + dim)
        if len(data) != expected:
            raise ValueError(f"feature-grid blob is {len(data)} bytes, expected {expected}")
        flat = np.frombuffer(data, dtype="<f4", offset=16)
        grid = flat[: h * w * dim].reshape(h, w, dim)
        return cls(grid=grid, cls=flat[h * w * dim :])


def visual_shrink(grid: FeatureGrid, pool: int) -> np.ndarray:
    """Average-pool the grid to pool x pool blocks and append the cls row.

    Output is a (pool**2 + 1, D) float64 matrix; each pooled row is the exact
    arithmetic mean of its block, so the map is linear in the grid.
    """
    if pool < 1:
        raise ValueError("pool must be >= 1")
    h, w, dim = grid.grid.shape
    if h % pool != 0 or w % pool != 0:
        raise DivisibilityError(f"grid {h}x{w} does not split into {pool}x{pool} blocks")
    g = grid.grid.astype(np.float64)
    pooled = g.reshape(pool, h // pool, pool, w // pool, dim).mean(axis=(1, 3))
    rows = pooled.reshape(pool * pool, dim)
    return np.vstack([rows, grid.cls.astype(np.float64)[None, :]])


def project(
    tokens: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None
) -> np.ndarray:
    """Apply an affine map row-wise: tokens @ weight + bias.

    tokens is (n, D), weight (D, D'), bias (D',) or omitted for zero.
    """
    t = np.asarray(tokens, dtype=np.float64)
    w = np.asarray(weight, dtype=np.float64)
    if t.ndim != 2 or w.ndim != 2 or t.shape[1] != w.shape[0]:
        raise DimensionMismatch(f"cannot map {t.shape} tokens through {w.shape} weight")
    out = t @ w
    if bias is not None:
        b = np.asarray(bias, dtype=np.float64)
        if b.shape != (w.shape[1],):
            raise DimensionMismatch(f"bias shape {b.shape} does not match output dim {w.shape[1]}")
        out = out + b
    return out

"""Raster layer: PNG IO, bilinear resize, compositing, masks, statistics."""

from __future__ import annotations

import io

import numpy as np
import pytest
from PIL import Image

import oracles
import synth
from hierlayout.draft import CanvasSpec, DraftProtocol, Placement
from hierlayout.errors import DecodeError, MissingAsset
from hierlayout.raster import (
    DEFAULT_COVER_ALPHA,
    CoverageMask,
    RgbaImage,
    composite,
    decode_png,
    element_stats,
    encode_png,
    luma_map,
    resize,
    saliency_proxy,
    source_over,
)


def png_bytes(arr: np.ndarray, mode: str = "RGBA") -> bytes:
    out = io.BytesIO()
    Image.fromarray(arr, mode).save(out, format="PNG")
    return out.getvalue()


class TestDecode:
    def test_single_red_pixel(self):
        data = png_bytes(np.array([[[255, 0, 0, 255]]], dtype=np.uint8))
        img = decode_png(data)
        assert (img.width, img.height) == (1, 1)
        assert img.array.tolist() == [[[255, 0, 0, 255]]]

    def test_rgb_without_alpha_becomes_opaque(self):
        rgb = np.array([[[10, 20, 30], [40, 50, 60]]], dtype=np.uint8)
        img = decode_png(png_bytes(rgb, "RGB"))
        assert img.array[:, :, 3].tolist() == [[255, 255]]
        assert img.array[:, :, :3].tolist() == rgb.tolist()

    def test_grayscale_expands_to_rgba(self):
        gray = np.array([[0, 128], [255, 7]], dtype=np.uint8)
        img = decode_png(png_bytes(gray, "L"))
        assert img.array[1, 0].tolist() == [255, 255, 255, 255]
        assert img.array[0, 1].tolist() == [128, 128, 128, 255]

    def test_palette_image_decodes(self):
        src = Image.fromarray(
            np.array([[[255, 0, 0], [0, 0, 255]]], dtype=np.uint8), "RGB"
        ).convert("P")
        out = io.BytesIO()
        src.save(out, format="PNG")
        img = decode_png(out.getvalue())
        assert img.array[0, 0].tolist() == [255, 0, 0, 255]

    def test_round_trip_is_exact(self):
        rng = np.random.default_rng(3)
        arr = rng.integers(0, 256, size=(9, 5, 4), dtype=np.uint8)
        assert decode_png(encode_png(RgbaImage(arr))) == RgbaImage(arr)

    def test_garbage_raises(self):
        with pytest.raises(DecodeError):
            decode_png(b"not a png at all")

    def test_truncated_stream_raises(self):
        data = png_bytes(np.zeros((16, 16, 4), dtype=np.uint8))
        with pytest.raises(DecodeError):
            decode_png(data[: len(data) // 2])

    def test_sixteen_bit_depth_rejected(self):
        img = Image.new("I;16", (2, 2), 1000)
        out = io.BytesIO()
        img.save(out, format="PNG")
        with pytest.raises(DecodeError, match="depth"):
            decode_png(out.getvalue())


class TestRgbaImage:
    def test_filled(self):
        img = RgbaImage.filled(3, 2, (1, 2, 3, 4))
        assert (img.width, img.height) == (3, 2)
        assert img.array[1, 2].tolist() == [1, 2, 3, 4]

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            RgbaImage(np.zeros((2, 2, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            RgbaImage(np.zeros((0, 2, 4), dtype=np.uint8))

    def test_array_is_frozen(self):
        img = RgbaImage.filled(2, 2, (0, 0, 0, 255))
        with pytest.raises(ValueError):
            img.array[0, 0, 0] = 1


class TestResize:
    def test_identity_is_exact(self):
        rng = np.random.default_rng(11)
        img = RgbaImage(rng.integers(0, 256, size=(7, 4, 4), dtype=np.uint8))
        assert resize(img, 4, 7) == img

    def test_black_white_pair_upsampled(self):
        img = RgbaImage(
            np.array([[[0, 0, 0, 255], [255, 255, 255, 255]]], dtype=np.uint8)
        )
        out = resize(img, 4, 1)
        assert out.array[0, :, 0].tolist() == [0, 64, 191, 255]
        assert out.array[0, :, 3].tolist() == [255] * 4

    def test_constant_image_stays_constant(self):
        img = RgbaImage.filled(5, 3, (9, 90, 200, 255))
        out = resize(img, 17, 11)
        assert np.all(out.array == np.array([9, 90, 200, 255], dtype=np.uint8))

    def test_downscale_averages(self):
        # Two-pixel average with aligned centers: (0 + 255) / 2 rounds to 128.
        img = RgbaImage(
            np.array([[[0, 0, 0, 255], [255, 255, 255, 255]]], dtype=np.uint8)
        )
        out = resize(img, 1, 1)
        assert out.array[0, 0].tolist() == [128, 128, 128, 255]

    def test_no_color_bleed_from_transparent_pixels(self):
        arr = np.zeros((4, 4, 4), dtype=np.uint8)
        arr[:, :2] = (255, 0, 0, 255)
        out = resize(RgbaImage(arr), 9, 4)
        visible = out.array[:, :, 3] > 0
        assert visible.any() and not visible.all()
        assert np.all(out.array[:, :, 0][visible] == 255)
        assert np.all(out.array[:, :, 1][visible] == 0)

    def test_fully_transparent_maps_to_transparent_black(self):
        out = resize(RgbaImage.filled(2, 2, (200, 100, 50, 0)), 5, 5)
        assert np.all(out.array == 0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(29)
        for _ in range(6):
            h, w = int(rng.integers(2, 9)), int(rng.integers(2, 9))
            oh, ow = int(rng.integers(1, 13)), int(rng.integers(1, 13))
            if (oh, ow) == (h, w):
                ow += 1
            arr = rng.integers(0, 256, size=(h, w, 4), dtype=np.uint8)
            got = resize(RgbaImage(arr), ow, oh).array.astype(np.int64)

            a = arr[:, :, 3].astype(np.float64) / 255.0
            planes = [
                oracles.bilinear_resize_channel(arr[:, :, c] * a, ow, oh)
                for c in range(3)
            ]
            alpha = oracles.bilinear_resize_channel(arr[:, :, 3].astype(np.float64), ow, oh)
            want = np.zeros((oh, ow, 4), dtype=np.int64)
            for y in range(oh):
                for x in range(ow):
                    av = alpha[y, x]
                    for c in range(3):
                        straight = planes[c][y, x] * 255.0 / av if av > 0 else 0.0
                        want[y, x, c] = oracles.round_half_up(min(max(straight, 0.0), 255.0))
                    want[y, x, 3] = oracles.round_half_up(av)
            assert np.abs(got - want).max() <= 1

    def test_rejects_degenerate_target(self):
        img = RgbaImage.filled(2, 2, (0, 0, 0, 255))
        with pytest.raises(ValueError):
            resize(img, 0, 2)


class TestSourceOver:
    def test_opaque_top_wins(self):
        top = RgbaImage.filled(2, 2, (10, 20, 30, 255))
        bottom = RgbaImage.filled(2, 2, (200, 200, 200, 255))
        assert source_over(top, bottom) == top

    def test_transparent_top_is_identity(self):
        top = RgbaImage.filled(2, 2, (99, 99, 99, 0))
        bottom = RgbaImage.filled(2, 2, (1, 2, 3, 200))
        assert source_over(top, bottom) == bottom

    def test_half_red_over_opaque_white(self):
        top = RgbaImage.filled(1, 1, (255, 0, 0, 127))
        bottom = RgbaImage.filled(1, 1, (255, 255, 255, 255))
        out = source_over(top, bottom)
        assert out.array[0, 0].tolist() == [255, 128, 128, 255]

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            source_over(
                RgbaImage.filled(2, 2, (0, 0, 0, 255)),
                RgbaImage.filled(3, 2, (0, 0, 0, 255)),
            )


def flat_draft(n: int, canvas: tuple[int, int]) -> DraftProtocol:
    """n full-canvas placements with hierarchy equal to position."""
    w, h = canvas
    return DraftProtocol(
        canvas=CanvasSpec(w, h),
        placements=tuple(Placement(f"L{i}", 0, 0, w, h, i) for i in range(n)),
    )


class TestComposite:
    def test_half_alpha_red_over_white_substrate(self):
        d = flat_draft(1, (3, 2))
        img, _ = composite(d, {"L0": RgbaImage.filled(3, 2, (255, 0, 0, 127))})
        assert np.all(img.array == np.array([255, 128, 128, 255], dtype=np.uint8))

    def test_output_is_opaque(self):
        d = flat_draft(1, (4, 4))
        img, _ = composite(d, {"L0": RgbaImage.filled(4, 4, (0, 0, 0, 0))})
        assert np.all(img.array[:, :, 3] == 255)
        assert np.all(img.array[:, :, :3] == 255)

    def test_opaque_top_is_exact(self):
        rng = np.random.default_rng(17)
        d = flat_draft(3, (8, 8))
        top = np.dstack(
            [rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8), np.full((8, 8), 255, np.uint8)]
        )
        assets = {
            "L0": RgbaImage(rng.integers(0, 256, size=(8, 8, 4), dtype=np.uint8)),
            "L1": RgbaImage(rng.integers(0, 256, size=(8, 8, 4), dtype=np.uint8)),
            "L2": RgbaImage(top),
        }
        img, _ = composite(d, assets)
        assert np.array_equal(img.array, top)

    def test_uniform_stack_matches_float_oracle(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            colors = [tuple(int(v) for v in rng.integers(0, 256, size=4)) for _ in range(n)]
            d = flat_draft(n, (5, 4))
            assets = {f"L{i}": RgbaImage.filled(5, 4, c) for i, c in enumerate(colors)}
            img, _ = composite(d, assets)
            want = [
                oracles.round_half_up(v)
                for v in oracles.blend_over_white([tuple(map(float, c)) for c in colors])
            ]
            assert img.array[2, 3, :3].tolist() == want

    def test_pairwise_fold_agrees_within_one(self):
        rng = np.random.default_rng(53)
        n = 4
        d = flat_draft(n, (16, 16))
        assets = {
            f"L{i}": RgbaImage(rng.integers(0, 256, size=(16, 16, 4), dtype=np.uint8))
            for i in range(n)
        }
        whole, _ = composite(d, assets)
        folded = RgbaImage.filled(16, 16, (255, 255, 255, 255))
        for i in range(n):
            folded = source_over(assets[f"L{i}"], folded)
        diff = whole.array.astype(np.int64) - folded.array.astype(np.int64)
        assert np.abs(diff).max() <= 1

    def test_stacking_order_changes_pixels(self):
        red = RgbaImage.filled(4, 4, (255, 0, 0, 255))
        blue = RgbaImage.filled(4, 4, (0, 0, 255, 255))
        assets = {"a": red, "b": blue}
        canvas = CanvasSpec(6, 6)
        lo = DraftProtocol(
            canvas=canvas,
            placements=(Placement("a", 0, 0, 4, 4, 0), Placement("b", 2, 2, 4, 4, 1)),
        )
        hi = DraftProtocol(
            canvas=canvas,
            placements=(Placement("a", 0, 0, 4, 4, 1), Placement("b", 2, 2, 4, 4, 0)),
        )
        img_lo, _ = composite(lo, assets)
        img_hi, _ = composite(hi, assets)
        assert img_lo.array[3, 3, :3].tolist() == [0, 0, 255]
        assert img_hi.array[3, 3, :3].tolist() == [255, 0, 0]

    def test_placement_order_in_document_does_not_matter(self):
        red = RgbaImage.filled(4, 4, (255, 0, 0, 255))
        blue = RgbaImage.filled(4, 4, (0, 0, 255, 255))
        assets = {"a": red, "b": blue}
        canvas = CanvasSpec(6, 6)
        doc = DraftProtocol(
            canvas=canvas,
            placements=(Placement("a", 0, 0, 4, 4, 0), Placement("b", 2, 2, 4, 4, 1)),
        )
        swapped = DraftProtocol(canvas=canvas, placements=doc.placements[::-1])
        assert composite(doc, assets)[0] == composite(swapped, assets)[0]

    def test_bleed_is_clipped(self):
        d = DraftProtocol(
            canvas=CanvasSpec(4, 4),
            placements=(Placement("a", -2, -2, 4, 4, 0),),
        )
        img, mask = composite(d, {"a": RgbaImage.filled(4, 4, (0, 255, 0, 255))})
        green = (img.array[:, :, 1] == 255) & (img.array[:, :, 0] == 0)
        assert green[:2, :2].all() and not green[2:, 2:].any()
        assert mask.top_index[0, 0] == 0 and mask.top_index[3, 3] == -1

    def test_fully_off_canvas_is_a_no_op(self):
        d = DraftProtocol(
            canvas=CanvasSpec(4, 4),
            placements=(Placement("a", 10, 10, 3, 3, 0),),
        )
        img, mask = composite(d, {"a": RgbaImage.filled(3, 3, (0, 0, 0, 255))})
        assert np.all(img.array[:, :, :3] == 255)
        assert np.all(mask.top_index == -1)

    def test_missing_asset(self):
        with pytest.raises(MissingAsset) as err:
            composite(flat_draft(1, (2, 2)), {})
        assert err.value.element_id == "L0"


class TestCoverageMask:
    def test_top_index_uses_original_placement_position(self):
        # The overlay is listed first in the document but stacks on top.
        overlay = np.zeros((2, 2, 4), dtype=np.uint8)
        overlay[:, :, 3] = [[DEFAULT_COVER_ALPHA + 5, DEFAULT_COVER_ALPHA], [0, 255]]
        d = DraftProtocol(
            canvas=CanvasSpec(2, 2),
            placements=(
                Placement("over", 0, 0, 2, 2, 1),
                Placement("base", 0, 0, 2, 2, 0),
            ),
        )
        assets = {
            "over": RgbaImage(overlay),
            "base": RgbaImage.filled(2, 2, (50, 50, 50, 255)),
        }
        _, mask = composite(d, assets)
        # Strict threshold: alpha exactly at the limit does not cover.
        assert mask.top_index.tolist() == [[0, 1], [1, 0]]

    def test_alpha_acc_excludes_substrate(self):
        d = DraftProtocol(
            canvas=CanvasSpec(3, 1),
            placements=(Placement("a", 0, 0, 1, 1, 0),),
        )
        _, mask = composite(d, {"a": RgbaImage.filled(1, 1, (0, 0, 0, 102))})
        assert mask.alpha_acc[0, 0] == pytest.approx(102 / 255)
        assert mask.alpha_acc[0, 1] == 0.0
        assert mask.alpha_acc[0, 2] == 0.0

    def test_png16_export(self):
        mask = CoverageMask(
            width=2,
            height=1,
            top_index=np.array([[0, -1]], dtype=np.int32),
            alpha_acc=np.array([[0.4, 1.0]], dtype=np.float64),
        )
        img = Image.open(io.BytesIO(mask.to_png16()))
        values = np.asarray(img, dtype=np.int64).ravel().tolist()
        assert values == [oracles.round_half_up(0.4 * 65535), 65535]


class TestElementStats:
    def test_opaque_constant(self):
        s = element_stats(RgbaImage.filled(4, 2, (100, 100, 100, 255)))
        assert s.alpha_coverage == 1.0
        assert s.bbox_tightness == 1.0
        assert s.mean_luma == pytest.approx(100.0)
        assert s.aspect == 2.0

    def test_fully_transparent(self):
        s = element_stats(RgbaImage.filled(3, 3, (10, 10, 10, 0)))
        assert s.alpha_coverage == 0.0
        assert s.bbox_tightness == 0.0
        assert s.mean_luma == 0.0

    def test_checkerboard_alpha(self):
        arr = np.zeros((2, 2, 4), dtype=np.uint8)
        arr[0, 0] = (255, 255, 255, 255)
        arr[1, 1] = (0, 0, 0, 255)
        s = element_stats(RgbaImage(arr))
        assert s.alpha_coverage == 0.5
        assert s.bbox_tightness == 1.0
        assert s.mean_luma == pytest.approx(127.5)

    def test_tight_corner_sprite(self):
        arr = np.zeros((4, 4, 4), dtype=np.uint8)
        arr[0, 0] = (255, 0, 0, 255)
        s = element_stats(RgbaImage(arr))
        assert s.alpha_coverage == pytest.approx(1 / 16)
        assert s.bbox_tightness == pytest.approx(1 / 16)


class TestSaliency:
    def test_luma_weights(self):
        img = RgbaImage.filled(1, 1, (255, 0, 0, 255))
        assert luma_map(img)[0, 0] == pytest.approx(0.299 * 255)

    def test_constant_image_is_all_zero(self):
        m = saliency_proxy(RgbaImage.filled(9, 7, (123, 45, 67, 255)))
        assert m.shape == (7, 9)
        assert np.all(m == 0.0)

    def test_step_edge_peaks_on_the_boundary(self):
        arr = np.zeros((8, 8, 4), dtype=np.uint8)
        arr[:, 4:, :3] = 255
        arr[:, :, 3] = 255
        m = saliency_proxy(RgbaImage(arr))
        assert m.max() == 1.0
        # The radius-2 blur spreads the two boundary columns over four.
        peak_cols = set(np.argwhere(m == 1.0)[:, 1].tolist())
        assert peak_cols <= {2, 3, 4, 5}
        # Energy decays away from the edge.
        assert m[4, 0] < m[4, 3]

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(67)
        for _ in range(4):
            rgb = rng.integers(0, 256, size=(6, 5, 3), dtype=np.uint8)
            arr = np.dstack([rgb, np.full((6, 5), 255, np.uint8)])
            got = saliency_proxy(RgbaImage(arr))
            want = oracles.sobel_box_saliency(rgb)
            assert np.allclose(got, want, atol=1e-12)

    def test_ramp_is_brightest_mid_slope(self):
        ramp = np.zeros((5, 5, 4), dtype=np.uint8)
        for x in range(5):
            ramp[:, x, :3] = 51 * x
        ramp[:, :, 3] = 255
        m = saliency_proxy(RgbaImage(ramp))
        want = oracles.sobel_box_saliency(ramp[:, :, :3])
        assert np.allclose(m, want, atol=1e-12)
        assert m.max() == 1.0

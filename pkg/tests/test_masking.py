import numpy as np
import pytest
import torch

from huealign.instrument import AttentionCapture, CaptureStore
from huealign.layout import AttentionKind, AttentionSite, Region, TINY_LAYOUT
from huealign.masking import (
    CandidateMaskSet,
    CrossAttnMask,
    MaskGenerationError,
    ObjectMask,
    SegmenterUnavailable,
    centroid,
    make_object_mask,
    mask_area,
    object_mask_from_attention,
    select_mask,
    selection_score,
)
from huealign.models.text import TokenNotFoundError

TOKENS = ["<start>", "a", "photo", "of", "a", "squirrel", "<end>", "<pad>"]
GRID = 8  # synthetic first-decoder-block map resolution


def store_with_maps(maps_by_step, token_index=5, grid=GRID, context=8):
    """CaptureStore holding synthetic first-decoder-block cross maps whose
    ``token_index`` column is given per step."""
    store = CaptureStore("tiny:0", TINY_LAYOUT, steps=len(maps_by_step))
    site = AttentionSite(Region.DECODER, 1, 1, AttentionKind.CROSS, head_count=1, channel_dim=4)
    for t, grid_map in enumerate(maps_by_step, start=1):
        spatial = grid * grid
        amap = np.full((1, spatial, context), 1e-6, dtype=np.float32)
        amap[0, :, token_index] = grid_map.reshape(-1)
        store.add(
            AttentionCapture(
                site=site,
                timestep=t,
                queries=torch.zeros(1, spatial, 4),
                keys=torch.zeros(1, context, 4),
                values=torch.zeros(1, context, 4),
                map=torch.from_numpy(amap),
            )
        )
    return store.freeze()


def square_map(grid=GRID, lo=2, hi=6, value=1.0):
    m = np.zeros((grid, grid), dtype=np.float32)
    m[lo:hi, lo:hi] = value
    return m


# -- attention mask ----------------------------------------------------------


def test_synthetic_square_recovered_exactly():
    store = store_with_maps([square_map()])
    mask = object_mask_from_attention(store, TOKENS, "squirrel", threshold=0.5)
    expected = square_map() > 0
    assert np.array_equal(mask.grid, expected)


def test_uniform_map_collapses_to_empty_mask():
    store = store_with_maps([np.full((GRID, GRID), 0.25, dtype=np.float32)])
    mask = object_mask_from_attention(store, TOKENS, "squirrel", threshold=0.5)
    assert mask.is_empty()


def test_mean_over_steps_is_used():
    # square present in only one of two steps: mean = 0.5 inside, passes 0.4
    store = store_with_maps([square_map(), np.zeros((GRID, GRID), dtype=np.float32)])
    mask = object_mask_from_attention(store, TOKENS, "squirrel", threshold=0.4)
    assert np.array_equal(mask.grid, square_map() > 0)


def test_threshold_sweep_is_monotone(rng):
    maps = [rng.random((GRID, GRID)).astype(np.float32) for _ in range(3)]
    store = store_with_maps(maps)
    areas = []
    for threshold in (0.1, 0.3, 0.5, 0.7, 0.9):
        mask = object_mask_from_attention(store, TOKENS, "squirrel", threshold=threshold)
        areas.append(mask.grid.sum())
    assert areas == sorted(areas, reverse=True)


def test_unknown_token_names_available():
    store = store_with_maps([square_map()])
    with pytest.raises(TokenNotFoundError) as err:
        object_mask_from_attention(store, TOKENS, "banana")
    assert "squirrel" in str(err.value)


def test_captures_without_decoder_block_one_rejected():
    store = CaptureStore("tiny:0", TINY_LAYOUT, steps=1)
    with pytest.raises(MaskGenerationError, match="first-decoder-block"):
        object_mask_from_attention(store.freeze(), TOKENS, "squirrel")


# -- centroid ----------------------------------------------------------------


def test_centroid_square():
    mask = np.zeros((32, 32), dtype=bool)
    mask[10:21, 10:21] = True  # rows/cols 10..20 inclusive
    assert centroid(mask) == (15, 15)


def test_centroid_single_pixel():
    mask = np.zeros((32, 32), dtype=bool)
    mask[7, 3] = True  # y=7, x=3
    assert centroid(mask) == (3, 7)


def test_centroid_l_shape_matches_bruteforce(rng):
    mask = np.zeros((16, 16), dtype=bool)
    mask[2:10, 2:4] = True
    mask[8:10, 2:12] = True
    ys, xs = np.nonzero(mask)
    assert centroid(mask) == (int(round(xs.mean())), int(round(ys.mean())))


def test_centroid_scales_to_image_resolution():
    mask = np.zeros((8, 8), dtype=bool)
    mask[4, 4] = True
    x, y = centroid(mask, image_size=64)
    # cell 4 of 8 covers pixels 32..39 at 64; its center is 35.5
    assert (x, y) == (36, 36)


def test_centroid_empty_mask_rejected():
    with pytest.raises(ValueError, match="empty mask"):
        centroid(np.zeros((4, 4), dtype=bool))


# -- candidate selection -------------------------------------------------------


def rect_mask(area, size=64):
    """Mask whose foreground covers exactly ``area`` pixels."""
    flat = np.zeros(size * size, dtype=bool)
    flat[:area] = True
    return flat.reshape(size, size)


def test_score_formula():
    assert selection_score(100, 100) == 0.0
    assert selection_score(100, 200) == pytest.approx(0.5)
    assert selection_score(90, 100) == pytest.approx(0.1)


def test_selection_worked_example():
    cross = rect_mask(100)
    candidates = CandidateMaskSet([rect_mask(90), rect_mask(100), rect_mask(150)], point=(0, 0))
    chosen = select_mask(candidates, cross)
    assert chosen.candidate_index == 1
    assert chosen.score == 0.0


def test_selection_matches_bruteforce_on_random_sets(rng):
    for _ in range(200):
        cross_area = int(rng.integers(1, 500))
        areas = rng.integers(1, 500, size=int(rng.integers(1, 6)))
        candidates = CandidateMaskSet([rect_mask(int(a)) for a in areas], point=(0, 0))
        chosen = select_mask(candidates, rect_mask(cross_area))
        scores = [abs(1 - cross_area / int(a)) for a in areas]
        best = int(np.argmin(scores))  # argmin takes the first minimum: the tie-break
        assert chosen.candidate_index == best


def test_selection_invariant_to_candidate_order(rng):
    areas = [90, 130, 200, 40]
    masks = [rect_mask(a) for a in areas]
    cross = rect_mask(110)
    baseline = select_mask(CandidateMaskSet(masks, (0, 0)), cross)
    for _ in range(10):
        order = rng.permutation(len(masks))
        permuted = select_mask(CandidateMaskSet([masks[i] for i in order], (0, 0)), cross)
        assert np.array_equal(permuted.mask, baseline.mask)


def test_zero_area_mode_flag():
    mask = rect_mask(100, size=64)
    assert mask_area(mask, "nonzero") == 100
    assert mask_area(mask, "zero") == 64 * 64 - 100


def test_empty_candidates_rejected():
    with pytest.raises(ValueError, match="empty"):
        CandidateMaskSet([np.zeros((8, 8), dtype=bool)], point=(0, 0))


# -- full pipeline --------------------------------------------------------------


class FixedSegmenter:
    def __init__(self, masks):
        self.masks = masks
        self.calls = []

    def propose(self, image, point):
        self.calls.append(point)
        return self.masks


class DownSegmenter:
    def propose(self, image, point):
        raise SegmenterUnavailable("connection refused")


def test_make_object_mask_selects_ground_truth():
    store = store_with_maps([square_map()])
    image = np.zeros((64, 64, 3), dtype=np.uint8)
    truth = np.zeros((64, 64), dtype=bool)
    truth[16:48, 16:48] = True  # exactly the upsampled square(2:6 of 8) region
    off = np.zeros((64, 64), dtype=bool)
    off[0:8, 0:8] = True
    segmenter = FixedSegmenter([off, truth])
    chosen = make_object_mask(image, store, TOKENS, "squirrel", segmenter)
    assert chosen.candidate_index == 1
    assert np.array_equal(chosen.mask, truth)
    assert not chosen.degraded
    # cells 2..5 of 8 have pixel centers 20, 28, 36, 44 at 64px; mean is 32
    assert segmenter.calls == [(32, 32)]


def test_make_object_mask_fallback_on_outage():
    store = store_with_maps([square_map()])
    image = np.zeros((64, 64, 3), dtype=np.uint8)
    chosen = make_object_mask(image, store, TOKENS, "squirrel", DownSegmenter())
    assert chosen.degraded
    assert chosen.candidate_index == -1
    expected = np.zeros((64, 64), dtype=bool)
    expected[16:48, 16:48] = True
    assert np.array_equal(chosen.mask, expected)
    assert any("unavailable" in note for note in chosen.notes)


def test_make_object_mask_without_segmenter_is_flagged():
    store = store_with_maps([square_map()])
    image = np.zeros((64, 64, 3), dtype=np.uint8)
    chosen = make_object_mask(image, store, TOKENS, "squirrel", None)
    assert chosen.degraded


def test_make_object_mask_empty_attention_rejected():
    store = store_with_maps([np.full((GRID, GRID), 0.5, dtype=np.float32)])
    image = np.zeros((64, 64, 3), dtype=np.uint8)
    with pytest.raises(MaskGenerationError, match="empty"):
        make_object_mask(image, store, TOKENS, "squirrel", None)

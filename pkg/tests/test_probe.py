import json

import numpy as np
import pytest
import torch

from huealign.instrument import AttentionCapture, CaptureStore
from huealign.layout import AttentionKind, AttentionSite, Region, TINY_LAYOUT
from huealign.models.text import TokenNotFoundError
from huealign.probe import (
    HeatmapGrid,
    LeakageReport,
    ProbeError,
    aggregate_cross_maps,
    amplification_probe,
    leakage_report,
)
from huealign.sampling import ddim_denoise

TOKENS = ["<start>", "a", "red", "phone", "<end>", "<pad>", "<pad>", "<pad>"]


def store_with_cross_maps(maps_by_site_step, grid=4, context=8, token_index=2):
    steps = max(t for (_, t) in maps_by_site_step)
    store = CaptureStore("tiny:0", TINY_LAYOUT, steps=steps)
    for (site, t), m in maps_by_site_step.items():
        spatial = grid * grid
        amap = np.zeros((2, spatial, context), dtype=np.float32)
        amap[:, :, token_index] = m.reshape(-1)
        store.add(
            AttentionCapture(
                site=site,
                timestep=t,
                queries=torch.zeros(2, spatial, 4),
                keys=torch.zeros(2, context, 4),
                values=torch.zeros(2, context, 4),
                map=torch.from_numpy(amap),
            )
        )
    return store.freeze()


SITE_A = AttentionSite(Region.DECODER, 1, 1, AttentionKind.CROSS, 2, 4)
SITE_B = AttentionSite(Region.DECODER, 2, 1, AttentionKind.CROSS, 2, 4)


def test_single_step_mean_is_that_map(rng):
    m = rng.random((4, 4)).astype(np.float32)
    store = store_with_cross_maps({(SITE_A, 1): m})
    result = aggregate_cross_maps(store, TOKENS, "red", mode="mean", size=4)
    expected = (m - m.min()) / (m.max() - m.min())
    assert np.allclose(result.grids[SITE_A.key], expected, atol=1e-6)


def test_mean_of_identical_maps_is_the_map(rng):
    m = rng.random((4, 4)).astype(np.float32)
    store = store_with_cross_maps({(SITE_A, t): m for t in (1, 2, 3)})
    result = aggregate_cross_maps(store, TOKENS, "red", mode="mean", size=4)
    expected = (m - m.min()) / (m.max() - m.min())
    assert np.allclose(result.grids[SITE_A.key], expected, atol=1e-6)


def test_mean_matches_bruteforce_average(rng):
    maps = {(SITE_A, t): rng.random((4, 4)).astype(np.float32) for t in (1, 2, 3, 4)}
    store = store_with_cross_maps(maps)
    result = aggregate_cross_maps(store, TOKENS, "red", mode="mean", size=4)
    brute = np.mean([m for m in maps.values()], axis=0)
    brute = (brute - brute.min()) / (brute.max() - brute.min())
    assert np.allclose(result.grids[SITE_A.key], brute, atol=1e-6)


def test_per_timestep_mode_emits_one_grid_per_step(rng):
    maps = {(SITE_A, t): rng.random((4, 4)).astype(np.float32) for t in (1, 2)}
    store = store_with_cross_maps(maps)
    result = aggregate_cross_maps(store, TOKENS, "red", mode="per_timestep", size=4)
    assert set(result.per_step[SITE_A.key]) == {1, 2}


def test_grids_normalized_to_unit_interval(rng):
    maps = {(SITE_A, 1): (rng.random((4, 4)) * 9 + 3).astype(np.float32)}
    store = store_with_cross_maps(maps)
    result = aggregate_cross_maps(store, TOKENS, "red", mode="mean", size=8)
    grid = result.grids[SITE_A.key]
    assert grid.min() == pytest.approx(0.0)
    assert grid.max() == pytest.approx(1.0)


def test_unknown_token_rejected(rng):
    store = store_with_cross_maps({(SITE_A, 1): rng.random((4, 4)).astype(np.float32)})
    with pytest.raises(TokenNotFoundError):
        aggregate_cross_maps(store, TOKENS, "banana")


def test_heatmap_save_layout(tmp_path, rng):
    store = store_with_cross_maps({(SITE_A, 1): rng.random((4, 4)).astype(np.float32)})
    result = aggregate_cross_maps(store, TOKENS, "red", mode="mean", size=16)
    result.save(tmp_path)
    assert (tmp_path / "index.json").exists()
    index = json.loads((tmp_path / "index.json").read_text())
    assert index["token"] == "red"
    assert (tmp_path / f"{SITE_A.key}.f32").exists()
    assert (tmp_path / f"{SITE_A.key}.png").exists()


# -- amplification -----------------------------------------------------------


def test_amplification_factor_one_is_bit_identity(host):
    plain = ddim_denoise(host, host.sample_initial_latent(3), "a red phone", 3, 7.5)
    result = amplification_probe(
        host, "a red phone", "red", factor=1.0, which="value", seed=3, steps=3
    )
    for a, b in zip(plain, result.trajectory):
        assert torch.equal(a, b)


def test_amplification_changes_output(host):
    base = amplification_probe(host, "a red phone", "red", 1.0, "value", seed=3, steps=3)
    amped = amplification_probe(host, "a red phone", "red", 10.0, "value", seed=3, steps=3)
    assert not torch.equal(base.image, amped.image)


def test_key_amplification_reshapes_attention_map(host):
    base = amplification_probe(host, "a red phone", "red", 1.0, "key", seed=3, steps=3)
    amped = amplification_probe(host, "a red phone", "red", 8.0, "key", seed=3, steps=3)
    key = next(iter(base.heatmap.grids))
    assert not np.allclose(base.heatmap.grids[key], amped.heatmap.grids[key], atol=1e-4)


def test_value_amplification_never_touches_the_map(host):
    """The mechanism split behind the probe, isolated to a single step so the
    latent path is shared: scaling V leaves the attention map bit-identical
    (only the mixed content changes) while scaling K reshapes the map. The
    structural-impact ordering between the two is a trained-weights
    regression and lives in the weight-gated suite."""
    base = amplification_probe(host, "a red phone", "red", 1.0, "value", seed=3, steps=1)
    value = amplification_probe(host, "a red phone", "red", 10.0, "value", seed=3, steps=1)
    keyed = amplification_probe(host, "a red phone", "red", 10.0, "key", seed=3, steps=1)
    site = next(iter(base.heatmap.grids))
    assert np.array_equal(base.heatmap.grids[site], value.heatmap.grids[site])
    assert not np.array_equal(base.heatmap.grids[site], keyed.heatmap.grids[site])
    assert not torch.equal(base.image, value.image)


# -- leakage -------------------------------------------------------------------


def test_leakage_mass_entirely_inside(rng):
    m = np.zeros((4, 4), dtype=np.float32)
    m[1:3, 1:3] = 1.0
    store = store_with_cross_maps({(SITE_A, 1): m})
    mask = np.zeros((4, 4), dtype=bool)
    mask[1:3, 1:3] = True
    report = leakage_report(store, TOKENS, "red", mask)
    assert report.rows[0].inside == pytest.approx(1.0)
    assert report.rows[0].outside == pytest.approx(0.0)


def test_leakage_uniform_map_quarter_mask():
    m = np.full((4, 4), 0.125, dtype=np.float32)
    store = store_with_cross_maps({(SITE_A, 1): m})
    mask = np.zeros((4, 4), dtype=bool)
    mask[:2, :2] = True  # 25% of cells
    report = leakage_report(store, TOKENS, "red", mask)
    assert report.rows[0].inside == pytest.approx(0.25, abs=1e-6)


def test_leakage_fractions_sum_to_one(rng):
    maps = {
        (site, t): rng.random((4, 4)).astype(np.float32)
        for site in (SITE_A, SITE_B)
        for t in (1, 2, 3)
    }
    store = store_with_cross_maps(maps)
    mask = rng.random((4, 4)) > 0.5
    report = leakage_report(store, TOKENS, "red", mask)
    assert len(report.rows) == 6
    for row in report.rows:
        assert row.inside >= 0 and row.outside >= 0
        assert row.inside + row.outside == pytest.approx(1.0, abs=1e-6)


def test_leakage_empty_store_rejected():
    store = CaptureStore("tiny:0", TINY_LAYOUT, steps=1).freeze()
    with pytest.raises(ProbeError):
        leakage_report(store, TOKENS, "red", np.ones((4, 4), dtype=bool))

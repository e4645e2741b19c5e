"""Command-line surface: single-shot pipeline verbs plus batch dataset and
evaluation tooling. Shares every pipeline entry point with the HTTP service.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import torch

from . import __version__


def _setup_threads() -> None:
    torch.set_num_threads(int(os.environ.get("HUEALIGN_TORCH_THREADS", "1")))


def _load_host(model: str):
    from .models.host import load_host

    return load_host(model)


def _segmenter():
    url = os.environ.get("HUEALIGN_SEGMENTER_URL")
    if not url:
        return None
    from .masking import HttpSegmenter

    return HttpSegmenter(url)


model_option = click.option(
    "--model", default=lambda: os.environ.get("HUEALIGN_MODEL", "tiny:0"), show_default="tiny:0"
)
steps_option = click.option("--steps", default=50, show_default=True)
guidance_option = click.option("--guidance", default=7.5, show_default=True)


@click.group()
@click.version_option(__version__)
def main():
    """Image-guided object color editing and its evaluation harness."""
    _setup_threads()


@main.command()
@click.option("--image", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--prompt", required=True)
@model_option
@steps_option
@guidance_option
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def invert(image, prompt, model, steps, guidance, out_dir):
    """Invert an image; writes the initial latent, trajectory, and schedule."""
    from .arrayio import write_f32
    from .imaging import load_image, save_image
    from .inversion import invert_image, reconstruct

    host = _load_host(model)
    trajectory, schedule = invert_image(host, load_image(image), prompt, steps, guidance)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_f32(out_dir / "latent_zT.f32", trajectory.z_T.numpy())
    for t, latent in zip(range(trajectory.steps, -1, -1), trajectory.latents):
        write_f32(out_dir / f"trajectory_t{t}.f32", latent.numpy())
    for i, emb in enumerate(schedule.embeddings):
        write_f32(out_dir / f"uncond_{i:03d}.f32", emb.numpy())
    recon, _ = reconstruct(host, trajectory, schedule)
    save_image(recon, out_dir / "reconstruction.png")
    meta = {"prompt": prompt, "steps": steps, "guidance": guidance, "model": host.model_id}
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    click.echo(f"inverted -> {out_dir}")


@main.command("extract-color")
@click.option("--image", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--color-id", required=True)
@model_option
@steps_option
@guidance_option
@click.option(
    "--cache",
    type=click.Path(path_type=Path),
    default=lambda: os.environ.get("HUEALIGN_STORE", "huealign-store"),
    show_default="$HUEALIGN_STORE",
)
def extract_color(image, color_id, model, steps, guidance, cache):
    """Build (or reuse) the reference-color asset for an image."""
    from .assets import AssetCache
    from .imaging import load_image

    host = _load_host(model)
    asset_cache = AssetCache(Path(cache) / "colors")
    asset = asset_cache.extract(host, load_image(image), color_id, steps, guidance)
    hit = asset_cache.stats.hits > 0
    click.echo(
        f"{'cache hit' if hit else 'extracted'}: {color_id} "
        f"({len(asset.values)} value matrices, hash {asset.content_hash[:12]})"
    )


@main.command()
@click.option("--seed", type=int, default=None, help="generated source seed")
@click.option("--image", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--prompt", required=True)
@click.option("--token", "object_token", required=True)
@model_option
@steps_option
@guidance_option
@click.option("--threshold", default=0.4, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def mask(seed, image, prompt, object_token, model, steps, guidance, threshold, out):
    """Compute the object mask for a source (generated or real)."""
    from .imaging import save_mask
    from .pipeline import EditConfig, EditSession

    host = _load_host(model)
    source = _source(seed, image, prompt)
    config = EditConfig(
        steps=steps, guidance_scale=guidance, mask_threshold=threshold, preservation_window=0
    )
    session = EditSession(host, source, config, segmenter=_segmenter())
    session.prepare()
    chosen = session.resolve_mask(object_token)
    save_mask(chosen.mask, out)
    click.echo(
        f"mask -> {out} (candidate {chosen.candidate_index}, score {chosen.score:.4f}, "
        f"degraded={chosen.degraded})"
    )


def _source(seed, image, prompt):
    from .imaging import load_image
    from .pipeline import GeneratedSource, RealSource

    if (seed is None) == (image is None):
        raise click.UsageError("provide exactly one of --seed or --image")
    if seed is not None:
        return GeneratedSource(seed=seed, prompt=prompt)
    return RealSource(image=load_image(image), prompt=prompt)


@main.command()
@click.option("--seed", type=int, default=None)
@click.option("--image", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--prompt", required=True)
@click.option("--token", "object_token", required=True)
@click.option("--color-image", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--color-id", default=None, help="cache id; defaults to the file stem")
@model_option
@steps_option
@guidance_option
@click.option("--blend-ratio", default=0.1, show_default=True)
@click.option("--align-fraction", default=0.2, show_default=True)
@click.option("--preserve-window", default=5, show_default=True)
@click.option(
    "--cache",
    type=click.Path(path_type=Path),
    default=lambda: os.environ.get("HUEALIGN_STORE", "huealign-store"),
    show_default="$HUEALIGN_STORE",
)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def edit(
    seed, image, prompt, object_token, color_image, color_id, model, steps, guidance,
    blend_ratio, align_fraction, preserve_window, cache, out,
):
    """Edit one object's color with a reference color image."""
    from .assets import AssetCache
    from .imaging import load_image, save_image
    from .pipeline import EditConfig, EditSession, edit_object_color

    host = _load_host(model)
    config = EditConfig(
        steps=steps,
        guidance_scale=guidance,
        blend_ratio=blend_ratio,
        align_fraction=align_fraction,
        preservation_window=preserve_window,
    ).validate()
    asset_cache = AssetCache(Path(cache) / "colors")
    asset = asset_cache.extract(
        host, load_image(color_image), color_id or Path(color_image).stem, steps, guidance,
        settings=config.inversion_settings(),
    )
    session = EditSession(host, _source(seed, image, prompt), config, segmenter=_segmenter())
    session.prepare()
    turn = edit_object_color(session, object_token, asset)
    save_image(turn.image, out)
    for message in turn.warnings:
        click.echo(f"warning: {message}", err=True)
    click.echo(
        f"edited -> {out} (alignment steps {sorted(turn.report.alignment_steps)}, "
        f"preservation {turn.report.preservation_steps})"
    )


@main.command("multi-turn")
@click.option("--spec", type=click.Path(exists=True, path_type=Path), required=True,
              help="JSON: {source: {...}, config: {...}, turns: [{token, color_image|color_id}]}")
@model_option
@click.option(
    "--cache",
    type=click.Path(path_type=Path),
    default=lambda: os.environ.get("HUEALIGN_STORE", "huealign-store"),
    show_default="$HUEALIGN_STORE",
)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def multi_turn(spec, model, cache, out_dir):
    """Run several edit turns in sequence from a JSON spec."""
    from .assets import AssetCache
    from .imaging import load_image, save_image
    from .pipeline import EditConfig, EditSession, TurnSpec, run_multi_turn

    payload = json.loads(Path(spec).read_text())
    # the spec file may pin the model and asset cache alongside the config
    host = _load_host(payload.get("model", model))
    cache = Path(payload.get("cache", cache))
    config = EditConfig(**payload.get("config", {})).validate()
    source_spec = payload["source"]
    source = _source(source_spec.get("seed"), source_spec.get("image"), source_spec["prompt"])
    asset_cache = AssetCache(Path(cache) / "colors")
    turns = []
    for turn in payload["turns"]:
        if "color_image" in turn:
            asset = asset_cache.extract(
                host,
                load_image(turn["color_image"]),
                turn.get("color_id", Path(turn["color_image"]).stem),
                config.steps,
                config.guidance_scale,
                settings=config.inversion_settings(),
            )
        else:
            asset = asset_cache.load(turn["color_id"])
        turns.append(TurnSpec(object_token=turn["token"], asset=asset))
    session = EditSession(host, source, config, segmenter=_segmenter())
    session.prepare()
    images = run_multi_turn(session, turns)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images, start=1):
        save_image(img, out_dir / f"turn_{i}.png")
    click.echo(f"{len(images)} turns -> {out_dir}")


@main.command("eval")
@click.option("--manifest", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--run-dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def eval_cmd(manifest, run_dir, out):
    """Score a run directory against a manifest; writes CSV + JSON reports."""
    from .bench import Manifest
    from .metrics import MetricProviders, evaluate_benchmark

    result = evaluate_benchmark(run_dir, Manifest.load(manifest), MetricProviders.desk())
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(result.to_csv())
    (out / "report.json").write_text(result.to_json())
    if result.missing:
        click.echo(f"missing {len(result.missing)} samples: {result.missing[:5]}", err=True)
    means = {k: (None if v is None else round(v, 4)) for k, v in result.means.items()}
    click.echo(json.dumps(means))


@main.group()
def bench():
    """Benchmark dataset tooling."""


@bench.command("build-generated")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--base-seed", default=0, show_default=True)
def bench_build_generated(out, base_seed):
    """Write the full generated-benchmark manifest (7,840 tasks)."""
    from .bench import SeedPolicy, build_generated_manifest

    manifest = build_generated_manifest(seed_policy=SeedPolicy(base_seed))
    manifest.save(out)
    prompts = {(r.subject, r.prompt) for r in manifest.records}
    click.echo(f"{len(prompts)} prompts, {len(manifest.records)} tasks -> {out}")


@bench.command("validate-colorbench")
@click.option("--root", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--manifest-out", type=click.Path(path_type=Path), default=None)
def bench_validate_colorbench(root, manifest_out):
    """Validate a real-image benchmark directory; optionally emit its manifest."""
    from .bench import DatasetError, load_colorbench

    try:
        manifest = load_colorbench(root)
    except DatasetError as err:
        click.echo(str(err), err=True)
        sys.exit(1)
    sources = len({r.source_path for r in manifest.records})
    click.echo(f"ok: {sources} sources, {len(manifest.records)} pairs")
    if manifest_out:
        manifest.save(manifest_out)
        click.echo(f"manifest -> {manifest_out}")


@bench.command("scaffold-colorbench")
@click.option("--root", type=click.Path(path_type=Path), required=True)
def bench_scaffold(root):
    """Materialize the canonical directory shape with placeholder images."""
    from .bench import write_colorbench_scaffold

    names = write_colorbench_scaffold(root)
    click.echo(f"scaffolded {len(names)} sources under {root}")


@main.group()
def probe():
    """Attention diagnostics."""


@probe.command("maps")
@click.option("--prompt", required=True)
@click.option("--token", required=True)
@click.option("--seed", default=0, show_default=True)
@model_option
@steps_option
@guidance_option
@click.option("--mode", type=click.Choice(["mean", "per_timestep"]), default="mean")
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def probe_maps(prompt, token, seed, model, steps, guidance, mode, out_dir):
    """Generate once and export the token's cross-attention heatmaps."""
    from .instrument import AttentionController, CapturePlan, CaptureStore
    from .layout import AttentionKind, enumerate_sites
    from .probe import aggregate_cross_maps
    from .sampling import ddim_denoise

    host = _load_host(model)
    cross = [s for s in enumerate_sites(host.layout) if s.kind is AttentionKind.CROSS]
    store = CaptureStore(host.model_id, host.layout, steps)
    controller = AttentionController(capture_plan=CapturePlan.of(cross), capture_into=store)
    ddim_denoise(host, host.sample_initial_latent(seed), prompt, steps, guidance, controller=controller)
    store.freeze()
    grid = aggregate_cross_maps(store, host.text.tokenize(prompt), token, mode=mode)
    grid.save(out_dir)
    click.echo(f"heatmaps -> {out_dir}")


@probe.command("amplify")
@click.option("--prompt", required=True)
@click.option("--token", required=True)
@click.option("--factor", default=10.0, show_default=True)
@click.option("--which", type=click.Choice(["key", "value"]), required=True)
@click.option("--seed", default=0, show_default=True)
@model_option
@steps_option
@guidance_option
@click.option("--decoder-only", is_flag=True)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def probe_amplify(prompt, token, factor, which, seed, model, steps, guidance, decoder_only, out_dir):
    """Rescale a token's K or V rows and export the image + heatmaps."""
    from .imaging import save_image
    from .probe import amplification_probe

    host = _load_host(model)
    result = amplification_probe(
        host, prompt, token, factor, which, seed=seed, steps=steps,
        guidance_scale=guidance, decoder_only=decoder_only,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image(result.image, out_dir / f"{which}_x{factor:g}.png")
    result.heatmap.save(out_dir / "heatmaps")
    click.echo(f"amplification probe -> {out_dir}")


@probe.command("leakage")
@click.option("--prompt", required=True)
@click.option("--token", required=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--seed", default=0, show_default=True)
@model_option
@steps_option
@guidance_option
@click.option("--out", type=click.Path(path_type=Path), required=True)
def probe_leakage(prompt, token, mask_path, seed, model, steps, guidance, out):
    """Report the token's attention mass inside vs outside an object mask."""
    from .imaging import load_mask
    from .instrument import AttentionController, CapturePlan, CaptureStore
    from .layout import AttentionKind, enumerate_sites
    from .probe import leakage_report
    from .sampling import ddim_denoise

    host = _load_host(model)
    cross = [s for s in enumerate_sites(host.layout) if s.kind is AttentionKind.CROSS]
    store = CaptureStore(host.model_id, host.layout, steps)
    controller = AttentionController(capture_plan=CapturePlan.of(cross), capture_into=store)
    ddim_denoise(host, host.sample_initial_latent(seed), prompt, steps, guidance, controller=controller)
    store.freeze()
    report = leakage_report(store, host.text.tokenize(prompt), token, load_mask(mask_path))
    Path(out).write_text(report.to_json())
    click.echo(f"leakage report -> {out}")


@main.command()
@click.option("--host", "bind_host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option(
    "--store",
    type=click.Path(path_type=Path),
    default=lambda: os.environ.get("HUEALIGN_STORE", "huealign-store"),
    show_default="$HUEALIGN_STORE",
)
@model_option
def serve(bind_host, port, store, model):
    """Run the HTTP service."""
    import uvicorn

    from .service import ServiceSettings, create_app

    settings = ServiceSettings.from_env()
    settings.store_root = Path(store)
    settings.model_spec = model
    app = create_app(settings)
    uvicorn.run(app, host=bind_host, port=port)


if __name__ == "__main__":
    main()

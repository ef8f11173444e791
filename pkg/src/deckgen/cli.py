"""Command-line surface: segment, complexity, generate, evaluate, kb-index.

Exit codes are a stable contract: 0 success, 1 input or config error,
2 pipeline or backend failure.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import cgseg as cgseg_mod
from . import metrics as metrics_mod
from . import scm as scm_mod
from .cgseg import CgsegConfig
from .config import ConfigError, RunConfig, load_config
from .kb import KbError, MockEmbeddingProvider, build_index, load_kb, retrieve_top_k
from .pipeline import run_pipeline
from .raster import load_image
from .scm import ComplexityRecord, ScmWeights

EXIT_INPUT_ERROR = 1
EXIT_PIPELINE_ERROR = 2


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Slide-image to slide-code toolkit."""


@main.command()
@click.argument("image", type=click.Path())
@click.option("--grid", default=20, show_default=True, help="Cells per grid side.")
@click.option("--threshold", default=1.5, show_default=True, help="Median multiplier.")
@click.option("--max-depth", default=2, show_default=True, help="Recursion bound.")
@click.option("--out", type=click.Path(), default=None, help="Region JSON path (default stdout).")
@click.option("--debug-mask", type=click.Path(), default=None, help="Write a tinted debug PNG.")
def segment(image, grid, threshold, max_depth, out, debug_mask):
    """Segment IMAGE into regions."""
    try:
        img = load_image(image)
        cfg = CgsegConfig(grid=grid, threshold=threshold, max_depth=max_depth)
    except (FileNotFoundError, ValueError) as exc:
        _fail(EXIT_INPUT_ERROR, str(exc))
    regions = cgseg_mod.cgseg(img, cfg)
    payload = cgseg_mod.regions_to_json(regions)
    if out:
        Path(out).write_text(payload + "\n", encoding="utf-8")
    else:
        click.echo(payload)
    if debug_mask:
        cgseg_mod.debug_mask_png(img, cfg, debug_mask)
    click.echo(f"{len(regions)} region(s)", err=True)


@main.command()
@click.argument("corpus_dir", type=click.Path())
@click.option("--alpha", default=1.0 / 3.0, help="Element-count weight.")
@click.option("--beta", default=1.0 / 3.0, help="Type-count weight.")
@click.option("--gamma", default=1.0 / 3.0, help="Coverage weight.")
@click.option("--grid", default=20, show_default=True)
@click.option("--threshold", default=1.5, show_default=True)
@click.option("--max-depth", default=2, show_default=True)
@click.option("--tier/--no-tier", default=True, help="Cluster scores into tiers.")
@click.option("--sample", default=0, help="Benchmark samples per tier (0 = skip).")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Cohort report path (default stdout).")
def complexity(corpus_dir, alpha, beta, gamma, grid, threshold, max_depth, tier, sample, seed, out):
    """Score a corpus: each sample is <id>.json inventory beside <id>.png."""
    corpus = Path(corpus_dir)
    if not corpus.is_dir():
        _fail(EXIT_INPUT_ERROR, f"corpus directory not found: {corpus}")
    try:
        weights = ScmWeights(alpha=alpha, beta=beta, gamma=gamma)
        cfg = CgsegConfig(grid=grid, threshold=threshold, max_depth=max_depth)
    except ValueError as exc:
        _fail(EXIT_INPUT_ERROR, str(exc))
    records = []
    for inv_path in sorted(corpus.glob("*.json")):
        png = inv_path.with_suffix(".png")
        if not png.is_file():
            _fail(EXIT_INPUT_ERROR, f"missing reference image for {inv_path.name}")
        try:
            shapes = metrics_mod.load_inventory(inv_path)
            img = load_image(png)
            features = scm_mod.features_from_inventory(shapes, img, cfg)
        except (ValueError, KeyError) as exc:
            _fail(EXIT_INPUT_ERROR, f"{inv_path.name}: {exc}")
        records.append(ComplexityRecord(id=inv_path.stem, features=features))
    if not records:
        _fail(EXIT_INPUT_ERROR, f"no samples found in {corpus}")
    scored = scm_mod.score_cohort(records, weights)
    centers = None
    if tier:
        try:
            scored, centers = scm_mod.kmeans_tier(scored, seed=seed)
        except ValueError as exc:
            _fail(EXIT_INPUT_ERROR, str(exc))
    selection = None
    if sample:
        try:
            selection = [r.id for r in scm_mod.sample_tiers(scored, sample, seed=seed)]
        except ValueError as exc:
            _fail(EXIT_INPUT_ERROR, str(exc))
    tiers = [r.tier for r in scored]
    report = {
        "records": [r.to_dict() for r in scored],
        "centers": list(centers) if centers else None,
        "tier_proportions": (
            {t: tiers.count(t) / len(tiers) for t in scm_mod.TIERS} if tier else None
        ),
        "selection": selection,
        "seed": seed,
    }
    payload = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(payload + "\n", encoding="utf-8")
    else:
        click.echo(payload)


@main.command()
@click.argument("design", type=click.Path())
@click.option("--pictures", type=click.Path(), default=None, help="Directory of picture assets.")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("--dry-run", is_flag=True, help="Emit prompts without any backend call.")
def generate(design, pictures, config_path, out, dry_run):
    """Run the full generation pipeline on DESIGN."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        _fail(EXIT_INPUT_ERROR, str(exc))
    design_path = Path(design)
    if not design_path.is_file():
        _fail(EXIT_INPUT_ERROR, f"design image not found: {design_path}")
    picture_paths = []
    if pictures:
        pic_dir = Path(pictures)
        if not pic_dir.is_dir():
            _fail(EXIT_INPUT_ERROR, f"pictures directory not found: {pic_dir}")
        picture_paths = sorted(p for p in pic_dir.iterdir() if p.is_file())
    for kb_path in (cfg.shape_type_kb, cfg.operation_function_kb):
        if not Path(kb_path).is_file():
            _fail(EXIT_INPUT_ERROR, f"knowledge base not found: {kb_path}")
    if cfg.backend.kind == "mock" and not dry_run:
        if not cfg.backend.script_path or not Path(cfg.backend.script_path).is_file():
            _fail(EXIT_INPUT_ERROR, "mock backend requires an existing script_path")

    if dry_run:
        _dry_run(design_path, cfg, Path(out))
        return
    result = run_pipeline(design_path, picture_paths, cfg, out)
    click.echo(json.dumps({"sample_id": result.sample_id, "status": result.status}))
    if result.status != "ok" or result.program.get("status") != "ok":
        sys.exit(EXIT_PIPELINE_ERROR)


def _dry_run(design_path: Path, cfg: RunConfig, out: Path) -> None:
    from .kb import all_entries
    from .prompts import BLOCK_DESCRIPTION_TEMPLATE, OVERALL_DESCRIPTION_TEMPLATE, format_vocabulary

    try:
        img = load_image(design_path)
        entries = load_kb(cfg.shape_type_kb)
    except (ValueError, KbError, FileNotFoundError) as exc:
        _fail(EXIT_INPUT_ERROR, str(exc))
    regions = cgseg_mod.cgseg(img, cfg.cgseg)
    vocabulary = format_vocabulary(all_entries(entries, "shape_type"))
    prompt_dir = out / "prompts"
    prompt_dir.mkdir(parents=True, exist_ok=True)
    (prompt_dir / "overall.txt").write_text(
        OVERALL_DESCRIPTION_TEMPLATE.format(vocabulary=vocabulary), encoding="utf-8"
    )
    for i in range(len(regions)):
        rid = f"block-{i + 1}"
        (prompt_dir / f"{rid}.txt").write_text(
            BLOCK_DESCRIPTION_TEMPLATE.format(block_id=rid, vocabulary=vocabulary),
            encoding="utf-8",
        )
    click.echo(f"dry run: wrote {1 + len(regions)} prompt(s) to {prompt_dir}, 0 backend calls")


@main.command()
@click.option("--ref-inventory", type=click.Path(), default=None)
@click.option("--gen-inventory", type=click.Path(), default=None)
@click.option("--ref-image", type=click.Path(), default=None)
@click.option("--gen-image", type=click.Path(), default=None)
@click.option("--trace", type=click.Path(), default=None, help="Score a pipeline trace instead.")
@click.option("--sample-id", default="sample", show_default=True)
@click.option("--slide-width", default=13.333, show_default=True)
@click.option("--slide-height", default=7.5, show_default=True)
@click.option("--clip-scores", type=click.Path(), default=None, help="JSON {sample_id: score} to merge.")
@click.option("--out", type=click.Path(), default=None, help="Report path (default stdout).")
def evaluate(ref_inventory, gen_inventory, ref_image, gen_image, trace, sample_id,
             slide_width, slide_height, clip_scores, out):
    """Score a generated slide against its reference."""
    from .config import SlideGeometry

    geom = SlideGeometry(slide_width=slide_width, slide_height=slide_height)
    executed = True
    if trace:
        try:
            trace_data = json.loads(Path(trace).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            _fail(EXIT_INPUT_ERROR, f"unreadable trace: {exc}")
        sample_id = trace_data.get("sample_id", sample_id)
        executed = (
            trace_data.get("status") == "ok"
            and trace_data.get("program", {}).get("status") == "ok"
        )
    try:
        ref_shapes = metrics_mod.load_inventory(ref_inventory) if ref_inventory else None
        gen_shapes = metrics_mod.load_inventory(gen_inventory) if gen_inventory else None
        ref_img = load_image(ref_image) if ref_image else None
        gen_img = load_image(gen_image) if gen_image else None
    except (OSError, ValueError, KeyError) as exc:
        _fail(EXIT_INPUT_ERROR, str(exc))
    if executed and ref_shapes is None and ref_img is None:
        _fail(EXIT_INPUT_ERROR, "nothing to evaluate: provide inventories and/or images")
    sample = metrics_mod.evaluate_sample(
        sample_id=sample_id,
        executed=executed,
        ref_shapes=ref_shapes,
        gen_shapes=gen_shapes,
        ref_image=ref_img,
        gen_image=gen_img,
        geom=geom,
    )
    samples = [sample]
    if clip_scores:
        try:
            clip_by_id = json.loads(Path(clip_scores).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            _fail(EXIT_INPUT_ERROR, f"unreadable clip scores: {exc}")
        samples = metrics_mod.merge_clip_scores(samples, clip_by_id)
    report = metrics_mod.batch_report(samples)
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(payload + "\n", encoding="utf-8")
    else:
        click.echo(payload)
    click.echo(metrics_mod.format_report_table(report), err=True)


@main.command(name="kb-index")
@click.argument("kb_path", type=click.Path())
@click.option("--kind", type=click.Choice(["shape_type", "operation_function"]),
              default="operation_function", show_default=True)
@click.option("--provider", type=click.Choice(["mock", "http"]), default="mock", show_default=True)
@click.option("--dimension", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--endpoint", default="", help="HTTP provider endpoint.")
@click.option("--model", default="", help="HTTP provider model name.")
@click.option("--api-key-env", default="", help="Env var holding the provider key.")
@click.option("--out", type=click.Path(), required=True, help="Index JSON path.")
@click.option("--self-test", is_flag=True, help="Verify self-retrieval on the built index.")
def kb_index(kb_path, kind, provider, dimension, seed, endpoint, model, api_key_env, out, self_test):
    """Embed a knowledge base file into a persisted vector index."""
    if not Path(kb_path).is_file():
        _fail(EXIT_INPUT_ERROR, f"knowledge base not found: {kb_path}")
    try:
        entries = load_kb(kb_path)
    except KbError as exc:
        _fail(EXIT_INPUT_ERROR, str(exc))
    if provider == "http":
        from .kb import HttpEmbeddingProvider

        if not endpoint:
            _fail(EXIT_INPUT_ERROR, "http provider requires --endpoint")
        emb = HttpEmbeddingProvider(endpoint=endpoint, dimension=dimension,
                                    model=model, api_key_env=api_key_env)
    else:
        emb = MockEmbeddingProvider(dimension=dimension, seed=seed)
    try:
        index = build_index(entries, emb, kind)
    except KbError as exc:
        _fail(EXIT_PIPELINE_ERROR, str(exc))
    index.save(out)
    if self_test and len(index):
        probe = index.entries[0]
        hits = retrieve_top_k(index, probe.embed_text, 1, emb)
        if not hits or hits[0][0].id != probe.id or abs(hits[0][1] - 1.0) > 1e-9:
            _fail(EXIT_PIPELINE_ERROR, "self-retrieval check failed")
    click.echo(f"indexed {len(index)} {kind} entr{'y' if len(index) == 1 else 'ies'} -> {out}")


if __name__ == "__main__":
    main()

"""Command-line surface: find, rank, generate, rank-generate, explore,
contribute, test, fid, serve.

Exit codes: 0 success, 1 domain failure, 2 usage error. Every command is a
thin shell over the library; ``--format json`` emits machine-readable
output mirroring the library results.
"""

from __future__ import annotations

import functools
import json
import sys
import webbrowser
from pathlib import Path

import click

from . import __version__
from .contribute import ContributionInput, HttpStorageClient, HttpTrackerClient
from .errors import GenHubError, ValidationError
from .features import (
    ExternalFileExtractor,
    get_extractor,
    load_images_from_dir,
    normalize_images,
)
from .hub import Hub
from .manifest import coerce_from_string
from .metrics import compute_fid_report, format_report_rows
from .service import DEFAULT_HOST, ServiceConfig, serve

STORAGE_TOKEN_ENV = "GENHUB_STORAGE_TOKEN"
TRACKER_TOKEN_ENV = "GENHUB_TRACKER_TOKEN"


def domain_errors(command):
    """Map GenHubError to exit code 1 with the error code on stderr."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except GenHubError as exc:
            click.echo(f"error [{exc.code}]: {exc.message}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(__version__)
@click.option("--registry", "registry_source", default=None, help="Registry path or URL.")
@click.option("--cache-root", default=None, help="Package cache directory.")
@click.option("--format", "output_format", type=click.Choice(["text", "json"]), default="text")
@click.pass_context
def main(ctx, registry_source, cache_root, output_format):
    """Search, run, evaluate, and contribute generative model packages."""
    ctx.ensure_object(dict)
    ctx.obj["registry_source"] = registry_source
    ctx.obj["cache_root"] = cache_root
    ctx.obj["json"] = output_format == "json"


def _hub(ctx) -> Hub:
    return Hub(ctx.obj["registry_source"], cache_root=ctx.obj["cache_root"])


@main.command()
@click.argument("values", nargs=-1, required=True)
@click.option("--operator", type=click.Choice(["AND", "OR", "XOR"]), default="OR")
@click.pass_context
@domain_errors
def find(ctx, values, operator):
    """Search model metadata for VALUES."""
    candidates = _hub(ctx).find_models(list(values), operator)
    if ctx.obj["json"]:
        click.echo(
            json.dumps(
                [
                    {"model_id": e.model_id, "matched_values": list(e.matched_values)}
                    for e in candidates.entries
                ]
            )
        )
    else:
        for entry in candidates.entries:
            click.echo(f"{entry.model_id}  matched: {', '.join(entry.matched_values)}")
    if not candidates.entries:
        click.echo("no models matched", err=True)
        sys.exit(1)


@main.command()
@click.option("--metric", required=True, help="Dotted path inside selection.metrics.")
@click.option("--order", type=click.Choice(["ascending", "descending"]), default="ascending")
@click.option("--ids", multiple=True, help="Restrict ranking to these model ids.")
@click.pass_context
@domain_errors
def rank(ctx, metric, order, ids):
    """Rank models by a metric value."""
    ranked = _hub(ctx).rank_models(metric, order, list(ids) or None)
    if ctx.obj["json"]:
        click.echo(json.dumps({"items": [{"model_id": m, "value": v} for m, v in ranked.items],
                               "missing": list(ranked.missing)}))
    else:
        for model_id, value in ranked.items:
            click.echo(f"{model_id}  {value}")
        if ranked.missing:
            click.echo(f"(no {metric}: {', '.join(ranked.missing)})", err=True)


def _parse_kwargs(hub: Hub, model_id: str, pairs) -> dict:
    handle = hub.init_executor(model_id)
    kwargs = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError(f"--kwarg expects k=v, got {pair!r}")
        key, raw = pair.split("=", 1)
        param = handle.manifest.param(key)
        kwargs[key] = coerce_from_string(param.kind, raw) if param else raw
    return kwargs


@main.command()
@click.argument("model_id")
@click.option("--num-samples", "-n", default=1, show_default=True)
@click.option("--output", "output_path", default=None, help="Directory for generated samples.")
@click.option("--seed", type=int, default=None)
@click.option("--chunk-size", type=int, default=None)
@click.option("--kwarg", "kwarg_pairs", multiple=True, help="Model parameter k=v (repeatable).")
@click.pass_context
@domain_errors
def generate(ctx, model_id, num_samples, output_path, seed, chunk_size, kwarg_pairs):
    """Generate samples with MODEL_ID."""
    hub = _hub(ctx)
    kwargs = _parse_kwargs(hub, model_id, kwarg_pairs)
    result = hub.generate(
        model_id,
        num_samples=num_samples,
        output_path=output_path,
        seed=seed,
        chunk_size=chunk_size,
        **kwargs,
    )
    if ctx.obj["json"]:
        click.echo(
            json.dumps(
                {
                    "model_id": model_id,
                    "num_samples": len(result.records),
                    "output_path": str(result.output_path),
                    "wall_time_ms": result.wall_time_ms,
                }
            )
        )
    else:
        click.echo(f"generated {len(result.records)} samples in {result.output_path}")


@main.command("rank-generate")
@click.argument("values", nargs=-1, required=True)
@click.option("--metric", required=True)
@click.option("--order", type=click.Choice(["ascending", "descending"]), default="ascending")
@click.option("--operator", type=click.Choice(["AND", "OR", "XOR"]), default="OR")
@click.option("--num-samples", "-n", default=1, show_default=True)
@click.option("--output", "output_path", default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
@domain_errors
def rank_generate(ctx, values, metric, order, operator, num_samples, output_path, seed):
    """Search, rank the matches, and generate with the top model."""
    hub = _hub(ctx)
    ranked = hub.find_rank(list(values), metric, order, operator)
    chosen = ranked.items[0][0]
    click.echo(f"selected {chosen}")
    result = hub.generate(chosen, num_samples=num_samples, output_path=output_path, seed=seed)
    click.echo(f"generated {len(result.records)} samples in {result.output_path}")


@main.command()
@click.argument("model_id")
@click.option("--slider-grouper", "-g", default=10, show_default=True, help="Latent dims per slider.")
@click.option("--host", default=DEFAULT_HOST, show_default=True)
@click.option("--port", type=int, default=None, help="Service port (default 8490 or GENHUB_PORT).")
@click.option("--ui-dir", default=None, help="Directory with the built explorer UI.")
@click.option("--open-browser/--no-browser", default=True)
@click.pass_context
@domain_errors
def explore(ctx, model_id, slider_grouper, host, port, ui_dir, open_browser):
    """Launch the service and open the latent explorer for MODEL_ID."""
    hub = _hub(ctx)
    handle = hub.init_executor(model_id)
    latent_dim = handle.manifest.latent_dim
    if not latent_dim:
        raise ValidationError(f"model {model_id} is not explorable (no latent_dim)")
    groups = -(-latent_dim // slider_grouper)
    config = ServiceConfig(
        registry_source=ctx.obj["registry_source"],
        host=host,
        port=port,
        cache_root=ctx.obj["cache_root"],
        ui_dir=ui_dir,
    )
    url = (
        f"http://{config.host}:{config.resolved_port()}/"
        f"?model_id={model_id}&slider_grouper={slider_grouper}&latent_dim={latent_dim}"
    )
    click.echo(f"explorer: {groups} sliders (latent_dim={latent_dim}, group={slider_grouper})")
    click.echo(f"explorer URL: {url}")
    if open_browser:
        webbrowser.open(url)
    serve(config, hub=hub)


@main.command()
@click.option("--model-id", required=True)
@click.option("--package-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--generate-method", "generate_method_name", default="generate", show_default=True)
@click.option("--weights-name", default="weights", show_default=True)
@click.option("--weights-extension", default=".pt", show_default=True)
@click.option("--dependency", "dependencies", multiple=True)
@click.option("--entrypoint", default=None, help="Command template; {request} is substituted.")
@click.option("--title", default="")
@click.option("--license", "license_name", default="")
@click.option("--training-dataset", default="")
@click.option("--date", default="")
@click.option("--publication", default="")
@click.option("--keyword", "keywords", multiple=True)
@click.option("--modality", default="")
@click.option("--organ", default="")
@click.option("--storage-url", required=True, help="Storage backend base URL.")
@click.option("--tracker-url", required=True, help="Tracker backend base URL.")
@click.option("--storage-token", default=None, envvar=STORAGE_TOKEN_ENV)
@click.option("--tracker-token", default=None, envvar=TRACKER_TOKEN_ENV)
@click.option("--skip-test", is_flag=True, default=False)
@click.pass_context
@domain_errors
def contribute(
    ctx,
    model_id,
    package_dir,
    generate_method_name,
    weights_name,
    weights_extension,
    dependencies,
    entrypoint,
    title,
    license_name,
    training_dataset,
    date,
    publication,
    keywords,
    modality,
    organ,
    storage_url,
    tracker_url,
    storage_token,
    tracker_token,
    skip_test,
):
    """Validate, package, test, upload, and submit a model."""
    if not storage_token or not tracker_token:
        raise ValidationError(
            f"storage and tracker tokens required (flags or {STORAGE_TOKEN_ENV}/{TRACKER_TOKEN_ENV})"
        )
    hub = _hub(ctx)
    inp = ContributionInput(
        model_id=model_id,
        package_dir=Path(package_dir),
        generate_method_name=generate_method_name,
        weights_name=weights_name,
        weights_extension=weights_extension,
        dependencies=tuple(dependencies),
        entrypoint=entrypoint,
        title=title,
        license=license_name,
        training_dataset=training_dataset,
        date=date,
        publication=publication,
        keywords=tuple(keywords),
        modality=modality,
        organ=organ,
        storage_token=storage_token,
        tracker_token=tracker_token,
    )
    storage = HttpStorageClient(storage_url, storage_token)
    tracker = HttpTrackerClient(tracker_url, tracker_token)
    result = hub.contribute(inp, storage, tracker, skip_test=skip_test)
    submission = result.submission
    click.echo(f"archive: {result.archive.path} ({result.archive.checksum_sha256})")
    click.echo(f"uploaded: {submission.receipt.download_url}")
    click.echo(f"submission: issue {submission.issue_id} status {submission.status}")
    for warning in submission.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(json.dumps({submission.model_id: submission.metadata.to_dict()}, indent=2, sort_keys=True))


@main.command()
@click.argument("model_id", required=False)
@click.option("--all", "run_all", is_flag=True, default=False, help="Test every registry model.")
@click.option("--parallelism", default=4, show_default=True)
@click.pass_context
@domain_errors
def test(ctx, model_id, run_all, parallelism):
    """Run the staged model test for MODEL_ID or the whole registry."""
    hub = _hub(ctx)
    if run_all:
        pipeline = hub.test_all(parallelism=parallelism)
        if ctx.obj["json"]:
            click.echo(
                json.dumps(
                    [
                        {
                            "model_id": r.model_id,
                            "passed": r.passed,
                            "stages": [
                                {"name": s.name, "passed": s.passed, "message": s.message}
                                for s in r.stages
                            ],
                        }
                        for r in pipeline.reports
                    ]
                )
            )
        else:
            click.echo(pipeline.format_matrix())
        if not pipeline.passed:
            sys.exit(1)
        return
    if not model_id:
        raise click.UsageError("provide MODEL_ID or --all")
    report = hub.test_model(model_id)
    for stage in report.stages:
        status = "pass" if stage.passed else "FAIL"
        suffix = f"  {stage.message}" if stage.message else ""
        click.echo(f"{stage.name:<14} {status} ({stage.duration_ms:.0f} ms){suffix}")
    if not report.passed:
        sys.exit(1)


def _load_features(dir_path, features_path, extractor_name, normalize_mode):
    if features_path:
        return ExternalFileExtractor(Path(features_path)).extract()
    ids, images = load_images_from_dir(Path(dir_path))
    del ids
    extractor = get_extractor(extractor_name)
    images = [normalize_images(image, normalize_mode) for image in images]
    return extractor.extract(images)


@main.command()
@click.option("--real", "real_dir", default=None, type=click.Path(exists=True, file_okay=False))
@click.option("--real-features", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--syn", "syn_dir", default=None, type=click.Path(exists=True, file_okay=False))
@click.option("--syn-features", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--normalize", "normalize_mode", type=click.Choice(["none", "unit_range"]), default="none")
@click.option("--extractor", "extractor_name", default="identity-pool", show_default=True)
@click.option("--split-seed", default=0, show_default=True)
@click.pass_context
@domain_errors
def fid(ctx, real_dir, real_features, syn_dir, syn_features, normalize_mode, extractor_name, split_seed):
    """Distance report between a real and a synthetic image set."""
    if not (real_dir or real_features) or not (syn_dir or syn_features):
        raise click.UsageError("need --real or --real-features, and --syn or --syn-features")
    real = _load_features(real_dir, real_features, extractor_name, normalize_mode)
    syn = _load_features(syn_dir, syn_features, extractor_name, normalize_mode)
    report = compute_fid_report(real, syn, split_seed, normalization_mode=normalize_mode)
    if ctx.obj["json"]:
        click.echo(json.dumps(report.to_dict()))
    else:
        label = Path(syn_dir or syn_features).name
        click.echo(format_report_rows([(label, report)]))


@main.command("serve")
@click.option("--host", default=DEFAULT_HOST, show_default=True)
@click.option("--port", type=int, default=None, help="Default 8490 or GENHUB_PORT.")
@click.option("--ui-dir", default=None)
@click.pass_context
@domain_errors
def serve_cmd(ctx, host, port, ui_dir):
    """Run the local HTTP service."""
    config = ServiceConfig(
        registry_source=ctx.obj["registry_source"],
        host=host,
        port=port,
        cache_root=ctx.obj["cache_root"],
        ui_dir=ui_dir,
    )
    serve(config)


if __name__ == "__main__":
    main()

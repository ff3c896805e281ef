"""Command-line entry points: serve, ingest, filter, eval proxy."""

from __future__ import annotations

import json
from pathlib import Path

import click

from feedmask.config import build_engine, resolve_settings
from feedmask.evalharness import METHODS, OracleBackend, fixture_dir, load_mind, run_benchmark
from feedmask.gateway import Gateway, HashEmbedder, HttpBackend, HttpEmbedder
from feedmask.pipeline import Impression, Item


@click.group()
def main():
    """Self-hosted feed filter: profile building, rule filtering, offline eval."""


def engine_options(fn):
    options = [
        click.option("--data-dir", default=None, metavar="DIR",
                     help="Event log and snapshot directory (FEEDMASK_DATA_DIR)."),
        click.option("--gateway-url", default=None, metavar="URL",
                     help="Chat-completions base URL; omit to use the scripted stub (FEEDMASK_GATEWAY_URL)."),
        click.option("--model", default=None, help="Model name for the HTTP gateway (FEEDMASK_MODEL)."),
        click.option("--token", default=None, help="Bearer token for the HTTP gateway (FEEDMASK_TOKEN)."),
        click.option("--scripts", default=None, metavar="DIR",
                     type=click.Path(exists=True, file_okay=False),
                     help="Stub script directory (defaults to the bundled scripts)."),
        click.option("--user-id", default=None, help="Owner of the event log."),
        click.option("--seed", default=None, type=int, help="Master seed for sampling."),
        click.option("--clock", default=None, type=click.Choice(["system", "logical"]),
                     help="logical gives reproducible timestamps."),
        click.option("--config", "config_path", default=None,
                     type=click.Path(exists=True, dir_okay=False),
                     help="JSON config file (lowest precedence)."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _engine_from(config_path, **cli):
    return build_engine(resolve_settings(cli, config_path))


@main.command()
@engine_options
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True, type=int)
def serve(host, port, config_path, **cli):
    """Run the HTTP API."""
    import uvicorn

    from feedmask.api import create_app

    engine = _engine_from(config_path, **cli)
    click.echo(f"data dir: {engine.store.data_dir}")
    try:
        uvicorn.run(create_app(engine), host=host, port=port, log_level="info")
    finally:
        engine.close()


@main.command()
@engine_options
@click.option("--file", "events_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSONL file, one impression per line.")
def ingest(events_file, config_path, **cli):
    """Ingest impressions from a JSONL file into the profile."""
    engine = _engine_from(config_path, **cli)
    ingested = duplicates = 0
    try:
        for line in Path(events_file).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            outcome = engine.ingest_impression(Impression.from_json(json.loads(line)))
            if outcome["status"] == "ingested":
                ingested += 1
            else:
                duplicates += 1
        click.echo(
            f"ingested {ingested} impressions ({duplicates} duplicates), "
            f"profile version {engine.state.profile_version}"
        )
    finally:
        engine.close()


@main.command("filter")
@engine_options
@click.option("--feed", "feed_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file: a list of items or {\"items\": [...]}.")
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False))
def filter_cmd(feed_file, out_file, config_path, **cli):
    """Filter a feed against the stored active rules."""
    engine = _engine_from(config_path, **cli)
    try:
        doc = json.loads(Path(feed_file).read_text(encoding="utf-8"))
        entries = doc["items"] if isinstance(doc, dict) else doc
        items = [Item.from_json(entry) for entry in entries]
        result = engine.filter_items(items)
        Path(out_file).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
        click.echo(
            f"kept {len(result['kept'])} of {len(items)} items "
            f"({len(result['filtered'])} filtered, {len(result['failures'])} failures); "
            f"wrote {out_file}"
        )
    finally:
        engine.close()


@main.group("eval")
def eval_group():
    """Offline evaluation harness."""


@eval_group.command("proxy")
@click.option("--dataset", "dataset_dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="MIND-format directory (defaults to the bundled fixture).")
@click.option("--k", default=4, show_default=True, type=int)
@click.option("--method", "methods", multiple=True, type=click.Choice(METHODS),
              default=METHODS, show_default=True)
@click.option("--backend", default="stub", type=click.Choice(["stub", "http"]),
              show_default=True)
@click.option("--gateway-url", default=None, metavar="URL")
@click.option("--model", default=None)
@click.option("--token", default=None)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--quota", default=10_000, show_default=True, type=int,
              help="Click quota drawn per bucket.")
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False),
              help="Per-user results, line-delimited JSON.")
@click.option("--csv", "csv_file", default=None, type=click.Path(dir_okay=False),
              help="Accuracy table per (method, bucket); defaults to OUT plus .csv.")
def eval_proxy(dataset_dir, k, methods, backend, gateway_url, model, token,
               seed, quota, out_file, csv_file):
    """Run the K-way click-prediction proxy task."""
    dataset = load_mind(dataset_dir or fixture_dir())
    if backend == "http":
        settings = resolve_settings(
            {"gateway_url": gateway_url, "model": model, "token": token}
        )
        if not settings["gateway_url"]:
            raise click.UsageError("--backend http needs --gateway-url or FEEDMASK_GATEWAY_URL")

        def factory():
            return Gateway(
                HttpBackend(settings["gateway_url"], settings["model"], settings["token"]),
                HttpEmbedder(settings["gateway_url"], settings["model"], settings["token"]),
            )
    else:
        def factory():
            return Gateway(OracleBackend(), HashEmbedder())

    csv_file = csv_file or out_file + ".csv"
    result = run_benchmark(
        dataset, methods, k, factory, quota, seed,
        jsonl_path=out_file, csv_path=csv_file,
    )
    click.echo(f"wrote {out_file} and {csv_file}")
    for row in result.table():
        accuracy = "n/a" if row["accuracy"] is None else f"{row['accuracy']:.3f}"
        click.echo(
            f"{row['method']:>4}  {row['bucket']:>11}  users={row['users']:<3} "
            f"steps={row['steps']:<5} accuracy={accuracy}"
        )


if __name__ == "__main__":
    main()

"""Sidecar entry points: serve the HTTP contract or export fixtures."""
from __future__ import annotations

import dataclasses

import click

from .bundles import SidecarConfig, build_bundle


@click.group()
def main():
    """Embedding and sentiment sidecar."""


@main.command()
@click.option("--host", default="0.0.0.0", show_default=True)
@click.option("--port", default=8099, show_default=True, envvar="SIDECAR_PORT")
@click.option("--backend", type=click.Choice(["hash", "models"]), default=None,
              help="Overrides SIDECAR_BACKEND.")
def serve(host: str, port: int, backend: str | None):
    """Run the HTTP service."""
    import uvicorn

    from .app import create_app

    config = SidecarConfig.from_env()
    if backend:
        config = dataclasses.replace(config, backend=backend)
    uvicorn.run(create_app(config), host=host, port=port)


@main.command()
@click.option("--items", "items_file", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False))
@click.option("--backend", type=click.Choice(["hash", "models"]), default=None)
def export(items_file: str, out_file: str, backend: str | None):
    """Write a primary-compatible feature store for the given items."""
    from .export import export_fixtures

    config = SidecarConfig.from_env()
    if backend:
        config = dataclasses.replace(config, backend=backend)
    bundle = build_bundle(config)
    if hasattr(bundle, "load"):
        bundle.load()
        if not bundle.ready():
            raise click.ClickException(f"models unavailable: {bundle.load_error}")
    count = export_fixtures(items_file, out_file, bundle)
    click.echo(f"wrote {count} feature records to {out_file} ({bundle.provider_id})")


if __name__ == "__main__":
    main()

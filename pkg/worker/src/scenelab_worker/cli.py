"""Command line: run a detection worker against an examination server."""

from __future__ import annotations

import asyncio
import logging
import sys

import click

from .detector import load_torchvision_model
from .wire import DEFAULT_TCP_PORT
from .worker import DEFAULT_BACKEND_ID, DetectionWorker


@click.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=DEFAULT_TCP_PORT, show_default=True)
@click.option("--backend-id", default=DEFAULT_BACKEND_ID, show_default=True)
@click.option("--device", default="cpu", show_default=True,
              help="torch device for inference")
@click.option("-v", "--verbose", is_flag=True, help="chatty logging on stderr")
def main(host: str, port: int, backend_id: str, device: str, verbose: bool) -> None:
    """Register as a detection backend and serve until interrupted."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    worker = DetectionWorker(host, port, backend_id=backend_id,
                             model_loader=lambda: load_torchvision_model(device))
    try:
        asyncio.run(worker.run())
    except RuntimeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()

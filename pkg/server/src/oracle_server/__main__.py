"""Run the scoring server: ``python -m oracle_server --spec fig1a.json``."""

from __future__ import annotations

import argparse
import importlib

import uvicorn

from oracle_server.app import create_app


def load_adapter(ref: str, model_ref: str | None):
    """Import ``module:factory`` and call it (with the model ref, if given)."""
    module_name, _, attr = ref.partition(":")
    if not attr:
        raise SystemExit("adapter must be of the form 'package.module:factory'")
    factory = getattr(importlib.import_module(module_name), attr)
    return factory(model_ref) if model_ref is not None else factory()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="oracle-server", description="Block-scoring oracle server.")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--spec", help="scenario JSON file to serve (scripted mode)")
    source.add_argument("--adapter", help="'module:factory' producing a scoring adapter (model mode)")
    parser.add_argument("--model-ref", default=None, help="opaque reference handed to the adapter factory")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8901)
    args = parser.parse_args(argv)

    if args.spec:
        app = create_app(spec_path=args.spec)
    else:
        app = create_app(adapter=load_adapter(args.adapter, args.model_ref))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Process entry point: load config, build the app, hand it to uvicorn."""

from __future__ import annotations

import argparse
import sys

from .app import create_app
from .config import ConfigError, ServerConfig, load_config
from .models import ModelLoadError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-server", description="Serve the translation wire protocol over HTTP"
    )
    parser.add_argument("--config", metavar="CONFIG_JSON", default=None)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=None, help="override the configured port")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
        if args.port is not None:
            config = ServerConfig(**{**config.to_dict(), "port": args.port})
        app = create_app(config)
    except (ConfigError, ModelLoadError) as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return 1

    import uvicorn

    uvicorn.run(app, host=args.host, port=config.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Batch CLI: a thin HTTP client of the whistlerlab service.

Every subcommand posts its JSON config to the corresponding /v1 endpoint —
against an in-process ASGI transport by default, or a remote server with
--server — and writes the returned artifacts under --out.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 certificate
failure (certify with --strict).
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path

import httpx

from . import __version__

COMMANDS = {
    "trace": "/v1/trace",
    "certify": "/v1/certify",
    "solve": "/v1/solve",
    "norms": "/v1/norms",
    "smooth": "/v1/smooth",
    "psdo-check": "/v1/psdo-check",
}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CERTIFICATE = 0, 2, 3, 4


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=3600.0)
    # in-process mode: drive the ASGI app through the sync test transport
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # starlette's httpx-pin deprecation chatter
        from starlette.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), base_url="http://whistlerlab.local")


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        print(f"config error: no such file {path!r}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _inline_field_files(cfg: dict, base: Path) -> dict:
    """Resolve {"kind": "file", "path": ...} field specs into sampled_b64
    payloads so the request is self-contained."""

    def walk(node):
        if isinstance(node, dict):
            if node.get("kind") == "file":
                path = base / node["path"]
                try:
                    raw = path.read_bytes()
                except OSError as exc:
                    print(f"config error: field file {str(path)!r}: {exc}", file=sys.stderr)
                    raise SystemExit(EXIT_CONFIG)
                return {"kind": "sampled_b64", "data_b64": base64.b64encode(raw).decode()}
            return {k: walk(v) for k, v in node.items()}
        if isinstance(node, list):
            return [walk(v) for v in node]
        return node

    return walk(cfg)


def _write_artifacts(result: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for art in result.get("artifacts", []):
        path = out_dir / art["name"]
        if art["kind"] == "binary":
            path.write_bytes(base64.b64decode(art["b64"]))
        else:
            path.write_text(art["text"])


def _run_command(cmd: str, args) -> int:
    cfg = _load_config(args.config)
    cfg = _inline_field_files(cfg, Path(args.config).resolve().parent)
    if args.threads is not None:
        cfg.setdefault("global_opts", {})["threads"] = args.threads
    with _client(args.server) as client:
        try:
            resp = client.post(COMMANDS[cmd], json=cfg)
        except httpx.HTTPError as exc:
            print(f"transport error: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
    if resp.status_code == 422:
        detail = resp.json().get("detail", [])
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []) if p != "body")
            print(f"config error at {loc or '<root>'}: {item.get('msg')}", file=sys.stderr)
        return EXIT_CONFIG
    if resp.status_code == 409:
        print(f"numerical failure: {resp.json().get('error')}", file=sys.stderr)
        return EXIT_NUMERICAL
    resp.raise_for_status()
    result = resp.json()
    _write_artifacts(result, Path(args.out))
    print(json.dumps(result["summary"], sort_keys=True, indent=2))
    if result.get("numerical_failure"):
        return EXIT_NUMERICAL
    if cmd == "certify" and args.strict and result.get("certificate_failed"):
        return EXIT_CERTIFICATE
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="whistlerlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"whistlerlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=f"out/{name}", help="output directory")
        p.add_argument("--server", default=None, help="remote service URL (default: in-process)")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--strict", action="store_true", help="certify: exit 4 on certificate failure")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8717)

    args = parser.parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK
    try:
        return _run_command(args.command, args)
    except SystemExit as exc:  # config loaders raise with their exit code
        return int(exc.code)


if __name__ == "__main__":
    sys.exit(main())

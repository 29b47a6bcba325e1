"""Command-line entry points: gridmesh-server and gridmesh-sim."""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import sys
import threading
import time
from pathlib import Path

from .httpd import serve
from .sim import SimConfig, run_simulation
from .store import Store
from .templates import TEMPLATE_NAMES, install_template_offline, load_template

log = logging.getLogger("gridmesh")


def _default_static_dir() -> str | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return str(candidate) if candidate.is_dir() else None


def main_server(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gridmesh-server",
        description="Authoritative sheet server: accounts, command logs, polling feed.")
    parser.add_argument("--port", type=int, default=7370)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--data-dir", default=os.environ.get("GRIDMESH_DATA_DIR"),
                        help="state directory (env GRIDMESH_DATA_DIR as fallback)")
    parser.add_argument("--presence-timeout-s", type=float, default=10.0)
    parser.add_argument("--session-ttl-s", type=float, default=86400.0)
    parser.add_argument("--static-dir", default=None,
                        help="web client assets (default: bundled frontend/dist if present)")
    parser.add_argument("--job-tick-ms", type=int, default=250)
    parser.add_argument("--install-template", choices=TEMPLATE_NAMES, default=None,
                        help="install a template sheet into the data dir and exit")
    parser.add_argument("--author", default=None, help="template sheet author")
    parser.add_argument("--group", default=None, help="template group (default: template name)")
    parser.add_argument("--secret", default=None,
                        help="template sheet-id secret (default: generated and printed)")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    if not args.data_dir:
        parser.error("--data-dir (or GRIDMESH_DATA_DIR) is required")

    store = Store(args.data_dir,
                  presence_timeout_s=args.presence_timeout_s,
                  session_ttl_s=args.session_ttl_s)

    if args.install_template:
        if not args.author:
            parser.error("--install-template requires --author")
        secret = args.secret or secrets.token_urlsafe(9)
        pack = load_template(args.install_template)
        key = install_template_offline(store, pack, args.author,
                                       args.group, secret)
        print(f"installed template {pack.name!r} as {key.author}/{key.group}")
        print(f"sheet-id secret: {secret}")
        store.close()
        return 0

    static_dir = args.static_dir or _default_static_dir()
    server = serve(store, args.host, args.port, static_dir)

    def run_jobs():
        while True:
            time.sleep(args.job_tick_ms / 1000.0)
            try:
                store.run_due_jobs()
            except Exception:
                log.exception("job runner tick failed")

    threading.Thread(target=run_jobs, daemon=True, name="gridmesh-jobs").start()
    host, port = server.server_address[:2]
    print(f"gridmesh-server listening on {host}:{port} (data: {args.data_dir})",
          flush=True)
    if static_dir:
        log.info("serving web client from %s", static_dir)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        store.close()
    return 0


def main_sim(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gridmesh-sim",
        description="Convergence simulator: N polling clients on one sheet.")
    parser.add_argument("--server", default="in-process",
                        help="'in-process' or a server URL like http://127.0.0.1:7370")
    parser.add_argument("--clients", type=int, default=5)
    parser.add_argument("--edits", type=int, default=200, help="edits per client")
    parser.add_argument("--poll-min-ms", type=int, default=50)
    parser.add_argument("--poll-max-ms", type=int, default=500)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--timeout-s", type=float, default=120.0)
    args = parser.parse_args(argv)

    report = run_simulation(SimConfig(
        server=args.server,
        clients=args.clients,
        edits=args.edits,
        poll_min_ms=args.poll_min_ms,
        poll_max_ms=args.poll_max_ms,
        seed=args.seed,
        timeout_s=args.timeout_s,
    ))
    print(report.summary(), flush=True)
    return 0 if report.converged else 1


def main(argv: list[str] | None = None) -> int:
    """python -m gridmesh.cli {server|sim} ..."""
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] not in ("server", "sim"):
        print("usage: python -m gridmesh.cli {server|sim} [options]", file=sys.stderr)
        return 2
    return main_server(argv[1:]) if argv[0] == "server" else main_sim(argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())

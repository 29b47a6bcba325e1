"""Shipped example sheets with analytics jobs: school attendance and marks,
health records, PDS grain stock.

Each template is a `.scsave` file plus an entry in the `jobs.json` sidecar,
both living in the repo's templates/ directory. Instantiating replays the
template through the normal wire path (create_sheet + send_commands), so an
installed template is an ordinary logged, replicated sheet.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .commands import serialize_command, sheet_set_commands
from .errors import NoSuchTemplate
from .sheet import parse_save_string
from .store import SheetKey, Store

TEMPLATE_NAMES = ("school-attendance", "school-marks", "health-record", "pds-stock")


@dataclass(frozen=True)
class TemplatePack:
    name: str
    save_string: str
    jobs: list[dict]
    description: str


def templates_dir(directory: str | os.PathLike | None = None) -> Path:
    if directory is not None:
        return Path(directory)
    env = os.environ.get("GRIDMESH_TEMPLATES_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "templates"


def load_template(name: str, directory: str | os.PathLike | None = None) -> TemplatePack:
    if name not in TEMPLATE_NAMES:
        raise NoSuchTemplate(name)
    base = templates_dir(directory)
    path = base / f"{name}.scsave"
    if not path.is_file():
        raise NoSuchTemplate(f"{name} (missing {path})")
    save_string = path.read_text(encoding="utf-8")
    parse_save_string(save_string)   # refuse to ship a broken template
    sidecar = json.loads((base / "jobs.json").read_text(encoding="utf-8"))
    entry = sidecar.get(name, {})
    return TemplatePack(name, save_string,
                        entry.get("jobs", []), entry.get("description", ""))


def template_command_texts(pack: TemplatePack) -> list[str]:
    """The command batch that recreates the template's cells."""
    sheet = parse_save_string(pack.save_string)
    return [serialize_command(cmd) for cmd in sheet_set_commands(sheet)]


def instantiate_template(store: Store, token: str, pack: TemplatePack,
                         group: str | None = None, secret: str = "") -> SheetKey:
    """create_sheet + send_commands + schedule the pack's jobs."""
    group = group or pack.name
    key = store.create_sheet(token, group, secret)
    texts = template_command_texts(pack)
    if texts:
        store.send_commands(token, key.author, key.group, texts)
    for job in pack.jobs:
        store.schedule_job(token, {
            **job,
            "id": f"{group}-{job['id']}",
            "author": key.author,
            "group": key.group,
        })
    return key


def install_template_offline(store: Store, pack: TemplatePack, author: str,
                             group: str | None = None, secret: str = "") -> SheetKey:
    """Registry-level install for the server CLI (no session required)."""
    group = group or pack.name
    jobs = [{**job, "id": f"{group}-{job['id']}"} for job in pack.jobs]
    return store.install_sheet(author, group, secret,
                               template_command_texts(pack), jobs)

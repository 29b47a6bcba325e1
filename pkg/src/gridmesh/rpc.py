"""Wire method dispatch: {"method", "session", "params"} -> result dict.

Shared by the HTTP endpoint and the in-process transport so both speak the
exact same protocol. Every handler validates its params and returns plain
JSON-able values; application failures raise GridMeshError subclasses whose
`code` is the wire error code.
"""

from __future__ import annotations

import base64
import binascii

from .errors import BadRequest, GridMeshError, UnknownMethod
from .importer import ImportOptions
from .store import Store


def _need(params: dict, name: str, kind=str):
    value = params.get(name)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise BadRequest(f"param {name!r} must be {kind.__name__}")
    return value


def _opt(params: dict, name: str, kind=str, default=None):
    value = params.get(name, default)
    if value is not None and not isinstance(value, kind):
        raise BadRequest(f"param {name!r} must be {kind.__name__}")
    return value


def _create_account(store: Store, session: str, p: dict) -> dict:
    store.create_account(_need(p, "username"), _need(p, "password"))
    return {}


def _login(store: Store, session: str, p: dict) -> dict:
    username = _need(p, "username")
    token = store.login(username, _need(p, "password"))
    return {"token": token, "username": username}


def _logout(store: Store, session: str, p: dict) -> dict:
    store.logout(session)
    return {}


def _update_account(store: Store, session: str, p: dict) -> dict:
    username = store.update_account(
        session, _opt(p, "new_username"), _opt(p, "new_password"))
    return {"username": username}


def _create_sheet(store: Store, session: str, p: dict) -> dict:
    key = store.create_sheet(session, _need(p, "group"), _need(p, "secret"))
    return {"author": key.author, "group": key.group}


def _open_sheet(store: Store, session: str, p: dict) -> dict:
    snapshot, last_seq, origin = store.open_sheet(
        session, _need(p, "author"), _need(p, "group"), _need(p, "secret"))
    return {"snapshot": snapshot, "last_seq": last_seq, "origin": origin}


def _send_commands(store: Store, session: str, p: dict) -> dict:
    commands = _need(p, "commands", list)
    if not all(isinstance(c, str) for c in commands):
        raise BadRequest("param 'commands' must be a list of strings")
    first, last = store.send_commands(session, _need(p, "author"), _need(p, "group"), commands)
    return {"first_seq": first, "last_seq": last}


def _poll_changes(store: Store, session: str, p: dict) -> dict:
    envelopes, last_seq = store.poll_changes(
        session, _need(p, "author"), _need(p, "group"), _need(p, "since_seq", int))
    return {
        "envelopes": [{"seq": e.seq, "origin": e.origin, "command": e.command_text}
                      for e in envelopes],
        "last_seq": last_seq,
    }


def _list_active(store: Store, session: str, p: dict) -> dict:
    return {"users": store.list_active(session, _need(p, "author"), _need(p, "group"))}


def _send_chat(store: Store, session: str, p: dict) -> dict:
    seq = store.send_chat(session, _need(p, "author"), _need(p, "group"), _need(p, "text"))
    return {"chat_seq": seq}


def _poll_chat(store: Store, session: str, p: dict) -> dict:
    messages = store.poll_chat(session, _need(p, "author"), _need(p, "group"),
                               _need(p, "since_chat_seq", int))
    return {"messages": [{"chat_seq": m.chat_seq, "username": m.username,
                          "text": m.text, "ts": m.ts} for m in messages]}


def _save_snapshot(store: Store, session: str, p: dict) -> dict:
    store.save_snapshot(session, _need(p, "author"), _need(p, "group"), _need(p, "name"))
    return {}


def _load_snapshot(store: Store, session: str, p: dict) -> dict:
    text = store.load_snapshot(session, _need(p, "author"), _need(p, "group"),
                               _need(p, "name"))
    return {"save_string": text}


def _list_snapshots(store: Store, session: str, p: dict) -> dict:
    return {"names": store.list_snapshots(session, _need(p, "author"), _need(p, "group"))}


def _import(store: Store, session: str, p: dict) -> dict:
    try:
        data = base64.b64decode(_need(p, "content_base64"), validate=True)
    except (binascii.Error, ValueError) as exc:
        raise BadRequest(f"content_base64 is not valid base64: {exc}") from exc
    raw = _opt(p, "options", dict, {}) or {}
    options = ImportOptions(
        delimiter=raw.get("delimiter", ","),
        has_header=bool(raw.get("has_header", False)),
        sheet_name=raw.get("sheet_name", "imported"),
    )
    snapshot, first, last = store.import_file(
        session, _need(p, "author"), _need(p, "group"), _need(p, "secret"),
        _need(p, "filename"), data, options)
    return {"snapshot": snapshot, "first_seq": first, "last_seq": last}


def _schedule_job(store: Store, session: str, p: dict) -> dict:
    return {"id": store.schedule_job(session, _need(p, "job", dict))}


def _list_jobs(store: Store, session: str, p: dict) -> dict:
    return {"jobs": store.list_jobs(session, _need(p, "author"), _need(p, "group"))}


def _cancel_job(store: Store, session: str, p: dict) -> dict:
    store.cancel_job(session, _need(p, "id"))
    return {}


METHODS = {
    "create_account": _create_account,
    "login": _login,
    "logout": _logout,
    "update_account": _update_account,
    "create_sheet": _create_sheet,
    "open_sheet": _open_sheet,
    "send_commands": _send_commands,
    "poll_changes": _poll_changes,
    "list_active": _list_active,
    "send_chat": _send_chat,
    "poll_chat": _poll_chat,
    "save_snapshot": _save_snapshot,
    "load_snapshot": _load_snapshot,
    "list_snapshots": _list_snapshots,
    "import": _import,
    "schedule_job": _schedule_job,
    "list_jobs": _list_jobs,
    "cancel_job": _cancel_job,
}


def dispatch(store: Store, method: str, session: str, params: dict) -> dict:
    handler = METHODS.get(method)
    if handler is None:
        raise UnknownMethod(method)
    return handler(store, session, params)


def handle_envelope(store: Store, envelope: dict) -> dict:
    """Full request->response envelope, errors included (never raises)."""
    method = envelope.get("method")
    session = envelope.get("session", "")
    params = envelope.get("params", {})
    if not isinstance(method, str) or not isinstance(session, str) \
            or not isinstance(params, dict):
        return {"ok": False, "error": {"code": BadRequest.code,
                                       "message": "bad envelope shape"}}
    try:
        return {"ok": True, "result": dispatch(store, method, session, params)}
    except GridMeshError as exc:
        return {"ok": False, "error": {"code": exc.code, "message": str(exc)}}

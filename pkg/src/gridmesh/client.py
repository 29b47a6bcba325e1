"""Embeddable client: optimistic edits over a confirmed base, echo
suppression, fixed-interval polling, provable convergence.

The display sheet is always pending-commands applied on top of the confirmed
replay; once pending drains and the poll catches up to the server's last
sequence number, the display equals the server's materialized sheet byte for
byte (last writer wins under the server's total order).
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

import requests

from .commands import (
    Command,
    apply_command,
    command_for_content,
    parse_command,
    serialize_command,
)
from .errors import ConnectFailed, GridMeshError, error_by_code
from .rpc import handle_envelope
from .sheet import CellAddress, CellContent, Sheet, parse_save_string, serialize_sheet
from .store import Store


class HttpTransport:
    """POST /api envelopes over HTTP; network trouble raises ConnectFailed."""

    def __init__(self, base_url: str, timeout_s: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._http = requests.Session()

    def call(self, method: str, session: str, params: dict) -> dict:
        envelope = {"method": method, "session": session, "params": params}
        try:
            reply = self._http.post(f"{self.base_url}/api", json=envelope,
                                    timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ConnectFailed(str(exc)) from exc
        if reply.status_code != 200:
            raise ConnectFailed(f"HTTP {reply.status_code}: {reply.text[:200]}")
        body = reply.json()
        if body.get("ok"):
            return body["result"]
        error = body.get("error", {})
        raise error_by_code(error.get("code", "Internal"), error.get("message", ""))

    def close(self):
        self._http.close()


class InProcessTransport:
    """Same envelope semantics straight against a Store (tests, simulator)."""

    def __init__(self, store: Store):
        self.store = store

    def call(self, method: str, session: str, params: dict) -> dict:
        body = handle_envelope(self.store,
                               {"method": method, "session": session, "params": params})
        if body["ok"]:
            return body["result"]
        error = body["error"]
        raise error_by_code(error["code"], error["message"])

    def close(self):
        pass


@dataclass
class _Pending:
    local_id: int
    command: Command
    text: str
    sent: bool = False


class GridClient:
    """One collaborator's state machine. Single logical owner; not thread-safe."""

    def __init__(self, transport, poll_interval_s: float = 0.5,
                 rng: random.Random | None = None):
        self.transport = transport
        self.poll_interval_s = poll_interval_s
        self.rng = rng or random.Random()
        self.session = ""
        self.username = ""
        self.origin = ""
        self.author = ""
        self.group = ""
        self.confirmed: Sheet = Sheet("sheet")
        self.confirmed_seq = 0
        self.pending: list[_Pending] = []
        self.applied_seqs: list[int] = []
        self._ids = itertools.count(1)

    # --- connection -----------------------------------------------------

    def connect(self, username: str, password: str, author: str, group: str,
                secret: str, *, register: bool = False, create: bool = False) -> None:
        """Log in and open the sheet; optionally create the account/sheet first."""
        if register:
            self.transport.call("create_account", "",
                                {"username": username, "password": password})
        login = self.transport.call("login", "",
                                    {"username": username, "password": password})
        self.session = login["token"]
        self.username = login["username"]
        if create:
            self.transport.call("create_sheet", self.session,
                                {"group": group, "secret": secret})
        opened = self.transport.call("open_sheet", self.session,
                                     {"author": author, "group": group, "secret": secret})
        self.author, self.group = author, group
        self.confirmed = parse_save_string(opened["snapshot"])
        self.confirmed_seq = opened["last_seq"]
        self.origin = opened["origin"]
        self.pending = []
        self.applied_seqs = list(range(1, self.confirmed_seq + 1))

    def _sheet_params(self) -> dict:
        return {"author": self.author, "group": self.group}

    # --- editing ----------------------------------------------------------

    def local_edit(self, addr: CellAddress, content: CellContent) -> None:
        """Optimistically stage one cell write and try to transmit it.

        Malformed content raises before anything is staged; a transmission
        failure leaves the command pending for the next tick to retry.
        """
        command = command_for_content(addr, content)
        entry = _Pending(next(self._ids), command, serialize_command(command))
        self.pending.append(entry)
        self._flush_pending()

    def edit_command(self, command: Command) -> None:
        entry = _Pending(next(self._ids), command, serialize_command(command))
        self.pending.append(entry)
        self._flush_pending()

    def _flush_pending(self) -> bool:
        unsent = [p for p in self.pending if not p.sent]
        if not unsent:
            return True
        try:
            self.transport.call("send_commands", self.session,
                                {**self._sheet_params(),
                                 "commands": [p.text for p in unsent]})
        except ConnectFailed:
            return False   # stays queued for the next tick
        for entry in unsent:
            entry.sent = True
        return True

    # --- polling -----------------------------------------------------------

    def poll_tick(self) -> bool:
        """One fixed-interval tick: retry unsent edits, pull and apply the feed.

        Network failure leaves all state unchanged and returns False.
        """
        self._flush_pending()
        try:
            reply = self.transport.call("poll_changes", self.session,
                                        {**self._sheet_params(),
                                         "since_seq": self.confirmed_seq})
        except ConnectFailed:
            return False
        for envelope in reply["envelopes"]:
            command = parse_command(envelope["command"])
            apply_command(self.confirmed, command, recalc=False)
            self.applied_seqs.append(envelope["seq"])
            self.confirmed_seq = envelope["seq"]
            if envelope["origin"] == self.origin and self.pending \
                    and self.pending[0].text == envelope["command"]:
                self.pending.pop(0)   # own edit came back: already displayed
        if reply["envelopes"]:
            from .formula import recalculate_sheet
            recalculate_sheet(self.confirmed)
        return True

    def failure_backoff_s(self) -> float:
        """Full-jitter delay after a failed tick: interval x uniform[1, 2]."""
        return self.poll_interval_s * self.rng.uniform(1.0, 2.0)

    # --- views ---------------------------------------------------------------

    def display_sheet(self) -> str:
        """serialize(confirmed ++ pending); pure, touches no network."""
        if not self.pending:
            return serialize_sheet(self.confirmed)
        shadow = self.confirmed.copy()
        for entry in self.pending:
            apply_command(shadow, entry.command, recalc=False)
        from .formula import recalculate_sheet
        recalculate_sheet(shadow)
        return serialize_sheet(shadow)

    def quiesced(self, server_last_seq: int) -> bool:
        return not self.pending and self.confirmed_seq >= server_last_seq

    # --- chat / presence -------------------------------------------------------

    def send_chat(self, text: str) -> int:
        return self.transport.call("send_chat", self.session,
                                   {**self._sheet_params(), "text": text})["chat_seq"]

    def poll_chat(self, since_chat_seq: int) -> list[dict]:
        return self.transport.call("poll_chat", self.session,
                                   {**self._sheet_params(),
                                    "since_chat_seq": since_chat_seq})["messages"]

    def active_users(self) -> list[str]:
        return self.transport.call("list_active", self.session,
                                   self._sheet_params())["users"]

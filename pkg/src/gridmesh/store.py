"""Authoritative server state: accounts, sessions, sheet registry, per-sheet
sequenced command logs, chat, presence, snapshots, analytics jobs, durability.

Every sheet's materialized state is the replay of its append-only command
log; the log is the source of truth, fsynced before any acknowledgment.
On-disk layout under data_dir:

    meta.json                                accounts, registry, jobs (atomic rewrite)
    sheets/<author>/<group>/log              "seq origin-hash TAB command" per line
    sheets/<author>/<group>/chat             one JSON object per line
    sheets/<author>/<group>/snapshots/<name>.scsave

Concurrency: a global lock serializes account/registry/job mutations and
session checks; each sheet has its own lock serializing log append + cache
update + durable write. Lock order is always global -> sheet.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import re
import secrets
import threading
import time
from dataclasses import dataclass, field, replace

from . import autopilot
from .commands import (
    Command,
    SetEmpty,
    apply_command,
    parse_command,
    replay_log,
    serialize_command,
    sheet_set_commands,
)
from .errors import (
    AuthDenied,
    AuthRequired,
    BadCredentials,
    BadGroupName,
    BadMessage,
    BadName,
    BadRequest,
    BadSeq,
    BadUsername,
    EmptyMessage,
    MalformedCommand,
    NoSuchJob,
    NoSuchSheet,
    NoSuchSnapshot,
    NotMember,
    SheetExists,
    UsernameTaken,
    WeakPassword,
)
from .formula import recalculate_sheet
from .importer import ImportOptions, convert
from .sheet import Err, ErrorCode, Sheet, parse_save_string, serialize_sheet

_NAME_RE = re.compile(r"[!-~]{1,64}\Z")


def _valid_name(name: str) -> bool:
    """Path-safe single token: printable ASCII, no whitespace or separators."""
    return bool(_NAME_RE.match(name)) and "/" not in name and "\\" not in name \
        and name not in (".", "..")


def origin_id(token: str) -> str:
    """Public per-session identity carried in envelopes and the log."""
    return hashlib.sha256(token.encode()).hexdigest()[:16]


INSTALL_ORIGIN = "0" * 16   # administrative writes; matches no session


@dataclass
class Account:
    username: str
    password_hash: bytes
    salt: bytes
    created_at: float


@dataclass
class Session:
    token: str
    username: str
    last_seen: float


@dataclass(frozen=True)
class SheetKey:
    author: str
    group: str


@dataclass(frozen=True)
class CommandEnvelope:
    seq: int
    origin: str
    command_text: str
    key: SheetKey


@dataclass
class ChatMessage:
    chat_seq: int
    username: str
    text: str
    ts: float


@dataclass
class SheetRecord:
    key: SheetKey
    secret_hash: bytes
    secret_salt: bytes
    log: list[CommandEnvelope] = field(default_factory=list)
    materialized: Sheet = None  # type: ignore[assignment]
    chat: list[ChatMessage] = field(default_factory=list)
    members: dict[str, float] = field(default_factory=dict)   # token -> last poll
    snapshots: dict[str, str] = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock)
    log_fh: object = None


class Store:
    """One server's worth of state. data_dir=None keeps everything in memory."""

    def __init__(self, data_dir: str | os.PathLike | None = None, *,
                 presence_timeout_s: float = 10.0,
                 session_ttl_s: float = 86400.0,
                 clock=time.time,
                 scrypt_n: int = 16384):
        self.data_dir = os.fspath(data_dir) if data_dir is not None else None
        self.presence_timeout_s = presence_timeout_s
        self.session_ttl_s = session_ttl_s
        self.clock = clock
        self.scrypt_n = scrypt_n
        self._lock = threading.RLock()
        self._accounts: dict[str, Account] = {}
        self._sessions: dict[str, Session] = {}
        self._sheets: dict[SheetKey, SheetRecord] = {}
        self._jobs: dict[str, autopilot.JobSpec] = {}
        if self.data_dir is not None:
            os.makedirs(self.data_dir, exist_ok=True)
            self._load()

    # --- secrets ---------------------------------------------------------

    def _hash_secret(self, secret: str, salt: bytes | None = None) -> tuple[bytes, bytes]:
        salt = salt if salt is not None else secrets.token_bytes(16)
        digest = hashlib.scrypt(secret.encode(), salt=salt, n=self.scrypt_n,
                                r=8, p=1, dklen=32)
        return digest, salt

    def _check_secret(self, secret: str, digest: bytes, salt: bytes) -> bool:
        candidate, _ = self._hash_secret(secret, salt)
        return hmac.compare_digest(candidate, digest)

    # --- persistence -----------------------------------------------------

    def _sheet_dir(self, key: SheetKey) -> str:
        assert self.data_dir is not None
        return os.path.join(self.data_dir, "sheets", key.author, key.group)

    def _write_meta(self) -> None:
        if self.data_dir is None:
            return
        payload = {
            "version": 1,
            "accounts": {
                a.username: {
                    "password_hash": a.password_hash.hex(),
                    "salt": a.salt.hex(),
                    "created_at": a.created_at,
                } for a in self._accounts.values()
            },
            "sheets": [
                {
                    "author": r.key.author,
                    "group": r.key.group,
                    "secret_hash": r.secret_hash.hex(),
                    "secret_salt": r.secret_salt.hex(),
                } for r in self._sheets.values()
            ],
            "jobs": [autopilot.job_to_wire(j) for j in self._jobs.values()],
        }
        path = os.path.join(self.data_dir, "meta.json")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def _open_log(self, record: SheetRecord) -> None:
        if self.data_dir is None:
            return
        path = self._sheet_dir(record.key)
        os.makedirs(os.path.join(path, "snapshots"), exist_ok=True)
        record.log_fh = open(os.path.join(path, "log"), "ab", buffering=0)

    _LOG_LINE = re.compile(rb"([0-9]+) ([0-9a-f]{1,64})\t(.*)\Z", re.DOTALL)

    def _load(self) -> None:
        meta_path = os.path.join(self.data_dir, "meta.json")
        if not os.path.exists(meta_path):
            self._write_meta()
            return
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        for username, body in meta.get("accounts", {}).items():
            self._accounts[username] = Account(
                username, bytes.fromhex(body["password_hash"]),
                bytes.fromhex(body["salt"]), body["created_at"])
        for body in meta.get("sheets", []):
            key = SheetKey(body["author"], body["group"])
            record = SheetRecord(key, bytes.fromhex(body["secret_hash"]),
                                 bytes.fromhex(body["secret_salt"]))
            self._replay_from_disk(record)
            self._sheets[key] = record
        for body in meta.get("jobs", []):
            spec = autopilot.job_from_wire(body)
            self._jobs[spec.id] = spec

    def _replay_from_disk(self, record: SheetRecord) -> None:
        sheet_dir = self._sheet_dir(record.key)
        log_path = os.path.join(sheet_dir, "log")
        commands: list[Command] = []
        if os.path.exists(log_path):
            with open(log_path, "rb") as fh:
                blob = fh.read()
            body, _, torn = blob.rpartition(b"\n")
            # a torn tail can only be an unacknowledged write; drop it
            for raw in body.split(b"\n") if body else []:
                m = self._LOG_LINE.match(raw)
                if m is None:
                    raise ValueError(f"corrupt log line in {log_path}: {raw[:80]!r}")
                seq = int(m.group(1))
                text = m.group(3).decode("utf-8")
                record.log.append(CommandEnvelope(seq, m.group(2).decode(), text, record.key))
                commands.append(parse_command(text))
            if len(record.log) != 0 and [e.seq for e in record.log] != list(
                    range(1, len(record.log) + 1)):
                raise ValueError(f"non-dense log in {log_path}")
        record.materialized = replay_log(commands, name=record.key.group)
        chat_path = os.path.join(sheet_dir, "chat")
        if os.path.exists(chat_path):
            with open(chat_path, "rb") as fh:
                blob = fh.read()
            body, _, _ = blob.rpartition(b"\n")
            for raw in body.split(b"\n") if body else []:
                entry = json.loads(raw.decode("utf-8"))
                record.chat.append(ChatMessage(entry["seq"], entry["user"],
                                               entry["text"], entry["ts"]))
        snap_dir = os.path.join(sheet_dir, "snapshots")
        if os.path.isdir(snap_dir):
            for fname in os.listdir(snap_dir):
                if fname.endswith(".scsave"):
                    with open(os.path.join(snap_dir, fname), "r", encoding="utf-8") as fh:
                        record.snapshots[fname[:-len(".scsave")]] = fh.read()
        self._open_log(record)

    def close(self) -> None:
        with self._lock:
            for record in self._sheets.values():
                if record.log_fh is not None:
                    record.log_fh.close()
                    record.log_fh = None

    # --- sessions ---------------------------------------------------------

    def _session(self, token: str) -> Session:
        """Resolve a live session; never mutates (failed ops must not)."""
        session = self._sessions.get(token or "")
        if session is None:
            raise AuthRequired("unknown session")
        if self.clock() - session.last_seen > self.session_ttl_s:
            raise AuthRequired("session expired")
        return session

    def _touch(self, session: Session) -> None:
        session.last_seen = self.clock()

    # --- accounts ---------------------------------------------------------

    def create_account(self, username: str, password: str) -> None:
        if not _valid_name(username):
            raise BadUsername(f"bad username: {username!r}")
        if len(password) < 8:
            raise WeakPassword("password must be at least 8 characters")
        with self._lock:
            if username in self._accounts:
                raise UsernameTaken(username)
            digest, salt = self._hash_secret(password)
            self._accounts[username] = Account(username, digest, salt, self.clock())
            self._write_meta()

    def login(self, username: str, password: str) -> str:
        with self._lock:
            account = self._accounts.get(username)
            if account is None or not self._check_secret(password, account.password_hash,
                                                         account.salt):
                raise BadCredentials("bad username or password")
            now = self.clock()
            # successful login sweeps idle sessions
            for token in [t for t, s in self._sessions.items()
                          if now - s.last_seen > self.session_ttl_s]:
                del self._sessions[token]
            token = secrets.token_urlsafe(16)
            self._sessions[token] = Session(token, username, now)
            return token

    def logout(self, token: str) -> None:
        with self._lock:
            session = self._session(token)
            del self._sessions[session.token]

    def update_account(self, token: str, new_username: str | None = None,
                       new_password: str | None = None) -> str:
        if new_username is None and new_password is None:
            raise BadRequest("nothing to update")
        with self._lock:
            session = self._session(token)
            account = self._accounts[session.username]
            if new_username is not None and new_username != account.username:
                if not _valid_name(new_username):
                    raise BadUsername(f"bad username: {new_username!r}")
                if new_username in self._accounts:
                    raise UsernameTaken(new_username)
            if new_password is not None and len(new_password) < 8:
                raise WeakPassword("password must be at least 8 characters")

            if new_password is not None:
                account.password_hash, account.salt = self._hash_secret(new_password)
                for other in [t for t, s in self._sessions.items()
                              if s.username == account.username and t != token]:
                    del self._sessions[other]
            if new_username is not None and new_username != account.username:
                self._rename_author(account.username, new_username)
            self._touch(session)
            self._write_meta()
            return session.username

    def _rename_author(self, old: str, new: str) -> None:
        account = self._accounts.pop(old)
        account.username = new
        self._accounts[new] = account
        for session in self._sessions.values():
            if session.username == old:
                session.username = new
        rekeyed = [r for r in self._sheets.values() if r.key.author == old]
        for record in rekeyed:
            with record.lock:
                del self._sheets[record.key]
                record.key = SheetKey(new, record.key.group)
                self._sheets[record.key] = record
                # envelopes carry the key; rewrite the in-memory view
                record.log = [CommandEnvelope(e.seq, e.origin, e.command_text, record.key)
                              for e in record.log]
        self._jobs = {jid: (replace(j, author=new) if j.author == old else j)
                      for jid, j in self._jobs.items()}
        if self.data_dir is not None and rekeyed:
            old_dir = os.path.join(self.data_dir, "sheets", old)
            new_dir = os.path.join(self.data_dir, "sheets", new)
            if os.path.isdir(old_dir):
                os.rename(old_dir, new_dir)   # open log handles stay valid

    # --- sheet registry ----------------------------------------------------

    def create_sheet(self, token: str, group: str, sheet_id_secret: str) -> SheetKey:
        with self._lock:
            session = self._session(token)
            if not _valid_name(group):
                raise BadGroupName(f"bad group name: {group!r}")
            key = SheetKey(session.username, group)
            if key in self._sheets:
                raise SheetExists(f"{key.author}/{key.group}")
            digest, salt = self._hash_secret(sheet_id_secret)
            record = SheetRecord(key, digest, salt)
            record.materialized = Sheet(group)
            self._open_log(record)
            self._sheets[key] = record
            record.members[token] = self.clock()
            self._touch(session)
            self._write_meta()
            return key

    def _record(self, author: str, group: str) -> SheetRecord:
        record = self._sheets.get(SheetKey(author, group))
        if record is None:
            raise NoSuchSheet(f"{author}/{group}")
        return record

    def _member_record(self, token: str, author: str, group: str) -> tuple[Session, SheetRecord]:
        with self._lock:
            session = self._session(token)
            record = self._record(author, group)
            if token not in record.members:
                raise NotMember(f"{session.username} has not opened {author}/{group}")
            return session, record

    def open_sheet(self, token: str, author: str, group: str,
                   sheet_id_secret: str) -> tuple[str, int, str]:
        """Returns (snapshot, last_seq, caller's origin id)."""
        with self._lock:
            session = self._session(token)
            record = self._record(author, group)
            if not self._check_secret(sheet_id_secret, record.secret_hash,
                                      record.secret_salt):
                raise AuthDenied("wrong sheet-id")
            with record.lock:
                record.members[token] = self.clock()
                snapshot = serialize_sheet(record.materialized)
                last_seq = len(record.log)
            self._touch(session)
            return snapshot, last_seq, origin_id(token)

    # --- commands -----------------------------------------------------------

    def send_commands(self, token: str, author: str, group: str,
                      command_texts: list[str]) -> tuple[int, int]:
        session, record = self._member_record(token, author, group)
        parsed: list[Command] = []   # all-or-nothing: parse everything first
        for i, text in enumerate(command_texts):
            try:
                parsed.append(parse_command(text))
            except MalformedCommand as exc:
                raise MalformedCommand(str(exc), index=i) from None
        origin = origin_id(token)
        with record.lock:
            first_seq = len(record.log) + 1
            envelopes = [
                CommandEnvelope(first_seq + i, origin, serialize_command(cmd), record.key)
                for i, cmd in enumerate(parsed)
            ]
            self._append_envelopes(record, envelopes, parsed)
            last_seq = len(record.log)
        with self._lock:
            self._touch(session)
        return first_seq, last_seq

    def _append_envelopes(self, record: SheetRecord, envelopes: list[CommandEnvelope],
                          parsed: list[Command]) -> None:
        """Log-then-apply, fsynced before the caller acknowledges."""
        if not envelopes:
            return
        if record.log_fh is not None:
            blob = b"".join(f"{e.seq} {e.origin}\t{e.command_text}\n".encode()
                            for e in envelopes)
            record.log_fh.write(blob)
            os.fsync(record.log_fh.fileno())
        record.log.extend(envelopes)
        for cmd in parsed:
            apply_command(record.materialized, cmd, recalc=False)
        recalculate_sheet(record.materialized)

    def poll_changes(self, token: str, author: str, group: str,
                     since_seq: int) -> tuple[list[CommandEnvelope], int]:
        _, record = self._member_record(token, author, group)
        with record.lock:
            if not (0 <= since_seq <= len(record.log)):
                raise BadSeq(f"since_seq {since_seq} outside 0..{len(record.log)}")
            record.members[token] = self.clock()
            return list(record.log[since_seq:]), len(record.log)

    def list_active(self, token: str, author: str, group: str) -> list[str]:
        with self._lock:
            _, record = self._member_record(token, author, group)
            now = self.clock()
            with record.lock:
                names = {self._sessions[t].username for t, ts in record.members.items()
                         if now - ts <= self.presence_timeout_s and t in self._sessions}
            return sorted(names)

    # --- chat ----------------------------------------------------------------

    def send_chat(self, token: str, author: str, group: str, text: str) -> int:
        session, record = self._member_record(token, author, group)
        if text == "":
            raise EmptyMessage("empty chat message")
        if len(text) > 2000 or "\n" in text or "\r" in text:
            raise BadMessage("chat messages are single lines of at most 2000 chars")
        with record.lock:
            message = ChatMessage(len(record.chat) + 1, session.username, text, self.clock())
            if self.data_dir is not None:
                path = os.path.join(self._sheet_dir(record.key), "chat")
                with open(path, "ab", buffering=0) as fh:
                    fh.write((json.dumps({"seq": message.chat_seq, "user": message.username,
                                          "text": message.text, "ts": message.ts},
                                         ensure_ascii=False) + "\n").encode())
                    os.fsync(fh.fileno())
            record.chat.append(message)
            return message.chat_seq

    def poll_chat(self, token: str, author: str, group: str,
                  since_chat_seq: int) -> list[ChatMessage]:
        _, record = self._member_record(token, author, group)
        with record.lock:
            if not (0 <= since_chat_seq <= len(record.chat)):
                raise BadSeq(f"since_chat_seq {since_chat_seq} outside 0..{len(record.chat)}")
            record.members[token] = self.clock()
            return list(record.chat[since_chat_seq:])

    # --- snapshots -------------------------------------------------------------

    def save_snapshot(self, token: str, author: str, group: str, name: str) -> None:
        _, record = self._member_record(token, author, group)
        if not _valid_name(name):
            raise BadName(f"bad snapshot name: {name!r}")
        with record.lock:
            text = serialize_sheet(record.materialized)
            record.snapshots[name] = text
            self._write_snapshot_file(record, name, text)

    def _write_snapshot_file(self, record: SheetRecord, name: str, text: str) -> None:
        if self.data_dir is None:
            return
        snap_dir = os.path.join(self._sheet_dir(record.key), "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        path = os.path.join(snap_dir, f"{name}.scsave")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def load_snapshot(self, token: str, author: str, group: str, name: str) -> str:
        _, record = self._member_record(token, author, group)
        with record.lock:
            if name not in record.snapshots:
                raise NoSuchSnapshot(name)
            return record.snapshots[name]

    def list_snapshots(self, token: str, author: str, group: str) -> list[str]:
        _, record = self._member_record(token, author, group)
        with record.lock:
            return sorted(record.snapshots)

    # --- import ------------------------------------------------------------------

    def import_file(self, token: str, author: str, group: str, sheet_id_secret: str,
                    filename: str, data: bytes,
                    options: ImportOptions | None = None) -> tuple[str, int, int]:
        """Replace the sheet's contents with the imported file, as a logged
        command batch (empties for vanished cells, then sets). Joins the caller."""
        with self._lock:
            session = self._session(token)
            record = self._record(author, group)
            if not self._check_secret(sheet_id_secret, record.secret_hash,
                                      record.secret_salt):
                raise AuthDenied("wrong sheet-id")
            record.members[token] = self.clock()
        imported = parse_save_string(convert(filename, data, options))
        origin = origin_id(token)
        with record.lock:
            commands: list[Command] = [
                SetEmpty(addr) for addr in record.materialized.sorted_addresses()
                if addr not in imported.cells
            ]
            commands.extend(sheet_set_commands(imported))
            first_seq = len(record.log) + 1
            envelopes = [CommandEnvelope(first_seq + i, origin, serialize_command(cmd),
                                         record.key)
                         for i, cmd in enumerate(commands)]
            self._append_envelopes(record, envelopes, commands)
            snapshot = serialize_sheet(record.materialized)
            last_seq = len(record.log)
        with self._lock:
            self._touch(session)
        return snapshot, first_seq, last_seq

    # --- autopilot jobs --------------------------------------------------------

    def schedule_job(self, token: str, job: dict) -> str:
        with self._lock:
            session = self._session(token)
            author, group = job.get("author"), job.get("group")
            if not isinstance(author, str) or not isinstance(group, str):
                raise BadRequest("job needs author and group")
            record = self._record(author, group)
            if session.username != record.key.author:
                raise AuthDenied("only the sheet author manages jobs")
            job_id = job.get("id") or f"job-{secrets.token_hex(4)}"
            if not _valid_name(job_id):
                raise BadName(f"bad job id: {job_id!r}")
            if job_id in self._jobs:
                raise BadName(f"job id taken: {job_id!r}")
            if not _valid_name(job.get("output_snapshot", "")):
                raise BadName(f"bad snapshot name: {job.get('output_snapshot')!r}")
            now = self.clock()
            try:
                spec = autopilot.job_from_wire({
                    **job, "id": job_id, "created_at": now, "next_due": now})
            except (KeyError, TypeError, ValueError) as exc:
                raise BadRequest(f"bad job spec: {exc}") from exc
            self._jobs[job_id] = spec
            self._touch(session)
            self._write_meta()
            return job_id

    def list_jobs(self, token: str, author: str, group: str) -> list[dict]:
        with self._lock:
            session = self._session(token)
            record = self._record(author, group)
            if session.username != record.key.author:
                raise AuthDenied("only the sheet author manages jobs")
            self._touch(session)
            return [autopilot.job_to_wire(j) for j in self._jobs.values()
                    if j.author == author and j.group == group]

    def cancel_job(self, token: str, job_id: str) -> None:
        with self._lock:
            session = self._session(token)
            spec = self._jobs.get(job_id)
            if spec is None:
                raise NoSuchJob(job_id)
            if session.username != spec.author:
                raise AuthDenied("only the sheet author manages jobs")
            del self._jobs[job_id]
            self._touch(session)
            self._write_meta()

    def run_due_jobs(self, now: float | None = None) -> list[autopilot.JobResult]:
        """Run every due job once, append its result row, advance fixed-rate."""
        now = self.clock() if now is None else now
        with self._lock:
            due = [j for j in sorted(self._jobs.values(), key=lambda j: j.id)
                   if now >= j.next_due]
        results = []
        for spec in due:
            with self._lock:
                record = self._sheets.get(SheetKey(spec.author, spec.group))
            if record is None:
                result = autopilot.JobResult(spec.id, now, Err(ErrorCode.REF))
            else:
                with record.lock:
                    result = autopilot.run_job(spec, record.materialized, now)
                    self._append_job_result(record, spec, result)
            results.append(result)
            with self._lock:
                current = self._jobs.get(spec.id)   # may be cancelled or re-keyed
                if current is not None:
                    self._jobs[spec.id] = autopilot.reschedule(
                        current, autopilot.next_due_after(current, now))
                    self._write_meta()
        return results

    def _append_job_result(self, record: SheetRecord, spec: autopilot.JobSpec,
                           result: autopilot.JobResult) -> None:
        name = spec.output_snapshot
        existing = record.snapshots.get(name)
        results_sheet = parse_save_string(existing) if existing else Sheet(name)
        label = spec.kind if spec.criterion is None else f"{spec.kind}:{spec.criterion}"
        autopilot.append_result_row(results_sheet, result, label)
        text = serialize_sheet(results_sheet)
        record.snapshots[name] = text
        self._write_snapshot_file(record, name, text)

    # --- observability ------------------------------------------------------------

    def state_digest(self) -> str:
        """Hash of all protocol-visible state; volatile timestamps excluded."""
        with self._lock:
            sheets = {}
            for key in sorted(self._sheets, key=lambda k: (k.author, k.group)):
                record = self._sheets[key]
                with record.lock:
                    sheets[f"{key.author}/{key.group}"] = {
                        "secret": record.secret_hash.hex(),
                        "log": [[e.seq, e.origin, e.command_text] for e in record.log],
                        "chat": [[m.chat_seq, m.username, m.text, m.ts] for m in record.chat],
                        "snapshots": dict(sorted(record.snapshots.items())),
                        "members": sorted(origin_id(t) for t in record.members),
                        "materialized": serialize_sheet(record.materialized),
                    }
            payload = {
                "accounts": {u: [a.password_hash.hex(), a.salt.hex(), a.created_at]
                             for u, a in sorted(self._accounts.items())},
                "sessions": sorted((origin_id(t), s.username)
                                   for t, s in self._sessions.items()),
                "sheets": sheets,
                "jobs": {jid: autopilot.job_to_wire(j)
                         for jid, j in sorted(self._jobs.items())},
            }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    # --- administrative (CLI) -------------------------------------------------------

    def install_sheet(self, author: str, group: str, sheet_id_secret: str,
                      command_texts: list[str], jobs: list[dict] | None = None) -> SheetKey:
        """Offline install (no session): registry entry + logged command batch.

        Used by `gridmesh-server --install-template`; opening the sheet still
        requires the secret, so the author need not hold an account yet.
        """
        if not _valid_name(author):
            raise BadUsername(f"bad author: {author!r}")
        if not _valid_name(group):
            raise BadGroupName(f"bad group name: {group!r}")
        parsed = [parse_command(t) for t in command_texts]
        with self._lock:
            key = SheetKey(author, group)
            if key in self._sheets:
                raise SheetExists(f"{author}/{group}")
            digest, salt = self._hash_secret(sheet_id_secret)
            record = SheetRecord(key, digest, salt)
            record.materialized = Sheet(group)
            self._open_log(record)
            self._sheets[key] = record
            envelopes = [CommandEnvelope(i + 1, INSTALL_ORIGIN, serialize_command(cmd), key)
                         for i, cmd in enumerate(parsed)]
            with record.lock:
                self._append_envelopes(record, envelopes, parsed)
            now = self.clock()
            for job in jobs or []:
                spec = autopilot.job_from_wire({
                    **job, "author": author, "group": group,
                    "id": job.get("id", f"job-{secrets.token_hex(4)}"),
                    "created_at": now, "next_due": now})
                self._jobs[spec.id] = spec
            self._write_meta()
            return key

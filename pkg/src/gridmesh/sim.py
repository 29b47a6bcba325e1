"""Multi-client convergence simulator.

Runs N concurrent clients against one sheet - in-process against a fresh
Store or over HTTP against a live server - issuing random edits while polling
at randomized fixed intervals. After global quiescence it checks that every
client's display save string is byte-identical to the server's materialized
sheet and that every client applied the feed exactly once (seqs 1..N, no
loss, no duplication).
"""

from __future__ import annotations

import hashlib
import random
import secrets as _secrets
import threading
import time
from dataclasses import dataclass, field

from .client import GridClient, HttpTransport, InProcessTransport
from .commands import Command, SetEmpty, SetFormula, SetNumber, SetText
from .sheet import CellAddress
from .store import Store

GRID_COLS = 6
GRID_ROWS = 10

_FORMULA_POOL = (
    "SUM(A1:B5)", "COUNT(A1:F10)", "AVERAGE(B1:B9)", "MIN(C1:D6)", "MAX(A1:A9)",
    'COUNTIF(A1:F10,"P")', "COUNTIF(B1:B9,1)", "IF(A1>2,B2,C3)", "A1+B2*2",
    "C3/D4", "E5-F6+1", "B2^2", "SUM(A1:A9)/COUNT(A1:A9)", "IF(F1=F2,1,0)",
)


@dataclass
class SimConfig:
    server: str = "in-process"
    clients: int = 5
    edits: int = 200
    poll_min_ms: int = 50
    poll_max_ms: int = 500
    seed: int = 42
    edit_pause_ms: float = 4.0
    timeout_s: float = 120.0


@dataclass
class SimReport:
    converged: bool
    last_seq: int
    digest: str
    problems: list[str] = field(default_factory=list)

    def summary(self) -> str:
        if self.converged:
            return f"CONVERGED seq={self.last_seq} bytes={self.digest}"
        lines = [f"DIVERGED seq={self.last_seq}"]
        lines.extend(f"  {p}" for p in self.problems)
        return "\n".join(lines)


def random_edit(rng: random.Random) -> Command:
    addr = CellAddress(rng.randint(1, GRID_COLS), rng.randint(1, GRID_ROWS))
    roll = rng.random()
    if roll < 0.5:
        return SetNumber(addr, float(rng.randint(-999, 999)) if rng.random() < 0.7
                         else round(rng.uniform(-1e3, 1e3), 6))
    if roll < 0.7:
        return SetText(addr, rng.choice(["P", "A", "PASS", "FAIL", "note", "x y z"]))
    if roll < 0.9:
        return SetFormula(addr, rng.choice(_FORMULA_POOL))
    return SetEmpty(addr)


class _SimClient(threading.Thread):
    def __init__(self, sim: "_Simulation", index: int):
        super().__init__(name=f"sim-client-{index}", daemon=True)
        self.sim = sim
        self.index = index
        self.rng = random.Random(f"{sim.cfg.seed}:{index}:edits")
        self.client = GridClient(sim.make_transport(),
                                 rng=random.Random(f"{sim.cfg.seed}:{index}:backoff"))
        self.edits_left = sim.cfg.edits
        self.drained = threading.Event()
        self.error: str | None = None
        self.display = ""

    def run(self):
        cfg = self.sim.cfg
        try:
            self.client.connect(self.sim.usernames[self.index], self.sim.password,
                                self.sim.author, self.sim.group, self.sim.secret,
                                register=True)
            next_poll = time.monotonic() + self.rng.uniform(
                cfg.poll_min_ms, cfg.poll_max_ms) / 1000.0
            while not self.sim.give_up.is_set():
                now = time.monotonic()
                if self.edits_left > 0:
                    self.client.edit_command(random_edit(self.rng))
                    self.edits_left -= 1
                draining = self.sim.target_seq is not None
                if now >= next_poll or (draining and not self.client.quiesced(self.sim.target_seq)):
                    ok = self.client.poll_tick()
                    interval = self.rng.uniform(cfg.poll_min_ms, cfg.poll_max_ms) / 1000.0
                    if not ok:
                        interval = self.client.failure_backoff_s()
                    next_poll = time.monotonic() + (cfg.poll_min_ms / 1000.0
                                                    if draining else interval)
                if self.edits_left == 0 and not self.client.pending:
                    self.drained.set()
                    if draining and self.client.quiesced(self.sim.target_seq):
                        break
                time.sleep(cfg.edit_pause_ms / 1000.0 if self.edits_left else 0.002)
            self.display = self.client.display_sheet()
        except Exception as exc:   # surface in the report, not on stderr
            self.error = f"client {self.index}: {type(exc).__name__}: {exc}"
            self.drained.set()


class _Simulation:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.store: Store | None = None
        if cfg.server == "in-process":
            self.store = Store(None, scrypt_n=1024)   # ephemeral arena
        run_tag = f"{cfg.seed}-{_secrets.token_hex(3)}"
        self.password = "sim-password"
        self.usernames = [f"sim{i}-{run_tag}" for i in range(cfg.clients)]
        self.author = f"simadmin-{run_tag}"
        self.group = f"arena-{run_tag}"
        self.secret = f"sheet-{run_tag}"
        self.target_seq: int | None = None
        self.give_up = threading.Event()

    def make_transport(self):
        if self.store is not None:
            return InProcessTransport(self.store)
        return HttpTransport(self.cfg.server)

    def run(self) -> SimReport:
        admin = GridClient(self.make_transport())
        admin.connect(self.author, self.password, self.author, self.group,
                      self.secret, register=True, create=True)
        workers = [_SimClient(self, i) for i in range(self.cfg.clients)]
        deadline = time.monotonic() + self.cfg.timeout_s
        for w in workers:
            w.start()

        problems: list[str] = []
        for w in workers:   # phase 1: everyone done editing, pendings drained
            remaining = max(0.1, deadline - time.monotonic())
            if not w.drained.wait(timeout=remaining):
                problems.append(f"client {w.index}: timed out before draining")
                self.give_up.set()

        last_seq = 0
        if not problems:
            # no client will send again; the server's last seq is now frozen
            _, last_seq = admin_poll(admin)
            self.target_seq = last_seq
            for w in workers:
                remaining = max(0.1, deadline - time.monotonic())
                w.join(timeout=remaining)
                if w.is_alive():
                    problems.append(f"client {w.index}: timed out catching up")
                    self.give_up.set()
        self.give_up.set()
        for w in workers:
            w.join(timeout=5)

        opened = admin.transport.call("open_sheet", admin.session,
                                      {"author": self.author, "group": self.group,
                                       "secret": self.secret})
        server_text = opened["snapshot"]
        digest = hashlib.sha256(server_text.encode()).hexdigest()
        expected_seqs = list(range(1, (self.target_seq or 0) + 1))

        for w in workers:
            if w.error:
                problems.append(w.error)
                continue
            if w.display != server_text:
                problems.append(
                    f"client {w.index}: display diverges "
                    f"({_first_diff(w.display, server_text)})")
            if w.client.applied_seqs != expected_seqs:
                problems.append(
                    f"client {w.index}: applied seqs are not exactly 1..{len(expected_seqs)} "
                    f"(got {len(w.client.applied_seqs)} entries)")
        return SimReport(not problems, last_seq, digest, problems)


def admin_poll(admin: GridClient) -> tuple[list, int]:
    reply = admin.transport.call("poll_changes", admin.session,
                                 {"author": admin.author, "group": admin.group,
                                  "since_seq": admin.confirmed_seq})
    return reply["envelopes"], reply["last_seq"]


def _first_diff(a: str, b: str) -> str:
    for i, (x, y) in enumerate(zip(a.splitlines(), b.splitlines())):
        if x != y:
            return f"line {i + 1}: {x!r} != {y!r}"
    return f"lengths {len(a)} != {len(b)}"


def run_simulation(cfg: SimConfig) -> SimReport:
    return _Simulation(cfg).run()

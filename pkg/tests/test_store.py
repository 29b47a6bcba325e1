"""sync-server store: accounts, sessions, sheets, feed, chat, durability."""

import os
import threading

import pytest

from gridmesh.errors import (
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
    NoSuchSheet,
    NoSuchSnapshot,
    NotMember,
    SheetExists,
    UsernameTaken,
    WeakPassword,
)
from gridmesh.sheet import parse_save_string, serialize_sheet
from gridmesh.store import SheetKey, Store


def opened_sheet(store, token, group="g1", secret="xyz"):
    key = store.create_sheet(token, group, secret)
    return key


class TestAccounts:
    def test_create_then_duplicate(self, store):
        store.create_account("alice", "s3cretpass")
        with pytest.raises(UsernameTaken):
            store.create_account("alice", "s3cretpass")

    def test_weak_password(self, store):
        with pytest.raises(WeakPassword):
            store.create_account("bob", "short")

    def test_bad_username(self, store):
        with pytest.raises(BadUsername):
            store.create_account("has space", "s3cretpass")
        with pytest.raises(BadUsername):
            store.create_account("sl/ash", "s3cretpass")
        with pytest.raises(BadUsername):
            store.create_account("..", "s3cretpass")

    def test_login_token_shape(self, store, alice):
        assert len(alice) == 22

    def test_login_failures_uniform(self, store):
        store.create_account("alice", "s3cretpass")
        with pytest.raises(BadCredentials):
            store.login("alice", "wrongpass")
        with pytest.raises(BadCredentials):
            store.login("nobody", "whatever1")

    def test_two_concurrent_sessions(self, store):
        store.create_account("alice", "s3cretpass")
        t1, t2 = store.login("alice", "s3cretpass"), store.login("alice", "s3cretpass")
        assert t1 != t2
        store.create_sheet(t1, "g1", "xyz")
        store.open_sheet(t2, "alice", "g1", "xyz")   # both valid

    def test_logout(self, store, alice):
        store.logout(alice)
        with pytest.raises(AuthRequired):
            store.create_sheet(alice, "g1", "xyz")

    def test_session_expiry(self, store, alice, clock):
        clock.advance(86401)
        with pytest.raises(AuthRequired):
            store.create_sheet(alice, "g1", "xyz")


class TestUpdateAccount:
    def test_rename_rekeys_sheets(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        store.update_account(alice, new_username="alicia")
        assert SheetKey("alicia", "g1") in store._sheets
        assert SheetKey("alice", "g1") not in store._sheets
        snapshot, _, _ = store.open_sheet(alice, "alicia", "g1", "xyz")
        assert snapshot.startswith("socialcalc-save 1 g1")

    def test_password_change_invalidates_other_sessions(self, store):
        store.create_account("alice", "s3cretpass")
        keep = store.login("alice", "s3cretpass")
        other = store.login("alice", "s3cretpass")
        store.update_account(keep, new_password="evenbetterpass")
        with pytest.raises(AuthRequired):
            store.create_sheet(other, "g1", "xyz")
        store.create_sheet(keep, "g1", "xyz")   # the changing session survives
        store.login("alice", "evenbetterpass")

    def test_rename_to_taken_username(self, store, alice, bob):
        with pytest.raises(UsernameTaken):
            store.update_account(alice, new_username="bob")

    def test_nothing_to_update(self, store, alice):
        with pytest.raises(BadRequest):
            store.update_account(alice)


class TestSheets:
    def test_create_registers_empty(self, store, alice):
        key = store.create_sheet(alice, "math101", "xyz")
        assert key == SheetKey("alice", "math101")
        snapshot, last_seq, _ = store.open_sheet(alice, "alice", "math101", "xyz")
        assert last_seq == 0
        assert snapshot == "socialcalc-save 1 math101\n"

    def test_duplicate(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(SheetExists):
            store.create_sheet(alice, "g1", "xyz")

    def test_bad_group(self, store, alice):
        with pytest.raises(BadGroupName):
            store.create_sheet(alice, "has space", "xyz")

    def test_open_after_commands(self, store, alice, bob):
        store.create_sheet(alice, "g1", "xyz")
        store.send_commands(alice, "alice", "g1", [
            "set A1 value n 1", "set A2 value n 2", "set A3 value n 3"])
        snapshot, last_seq, origin = store.open_sheet(bob, "alice", "g1", "xyz")
        assert last_seq == 3
        sheet = parse_save_string(snapshot)
        assert len(sheet.cells) == 3
        assert len(origin) == 16

    def test_wrong_secret(self, store, alice, bob):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(AuthDenied):
            store.open_sheet(bob, "alice", "g1", "nope")

    def test_unknown_sheet(self, store, alice):
        with pytest.raises(NoSuchSheet):
            store.open_sheet(alice, "alice", "nope", "xyz")


class TestSendCommands:
    def test_batch_seqs(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        first, last = store.send_commands(alice, "alice", "g1", [
            "set A1 value n 1", "set A2 value n 2", "set A3 value n 3"])
        assert (first, last) == (1, 3)

    def test_all_or_nothing(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(MalformedCommand) as exc:
            store.send_commands(alice, "alice", "g1", [
                "set A1 value n 1", "set ?? value n 2"])
        assert exc.value.index == 1
        _, last_seq, _ = store.open_sheet(alice, "alice", "g1", "xyz")
        assert last_seq == 0

    def test_non_member(self, store, alice, bob):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(NotMember):
            store.send_commands(bob, "alice", "g1", ["set A1 value n 1"])

    def test_empty_batch_is_noop(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        first, last = store.send_commands(alice, "alice", "g1", [])
        assert (first, last) == (1, 0)

    def test_racing_batches_stay_contiguous(self, mkstore):
        store = mkstore()
        store.create_account("alice", "s3cretpass")
        tokens = [store.login("alice", "s3cretpass") for _ in range(4)]
        store.create_sheet(tokens[0], "g1", "xyz")
        for t in tokens[1:]:
            store.open_sheet(t, "alice", "g1", "xyz")

        spans = []
        barrier = threading.Barrier(len(tokens))

        def worker(token):
            barrier.wait()
            for _ in range(25):
                spans.append(store.send_commands(
                    token, "alice", "g1",
                    ["set A1 value n 1", "set B1 value n 2"]))

        threads = [threading.Thread(target=worker, args=(t,)) for t in tokens]
        for th in threads:
            th.start()
        for th in threads:
            th.join()

        assert all(last == first + 1 for first, last in spans)   # batches never interleave
        claimed = sorted(seq for first, last in spans for seq in (first, last))
        assert claimed == list(range(1, len(tokens) * 25 * 2 + 1))

    def test_materialized_matches_replay(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        store.send_commands(alice, "alice", "g1", [
            "set A1 value n 3", "set A2 formula A1*2", "set A1 value n 5"])
        record = store._sheets[SheetKey("alice", "g1")]
        from gridmesh.commands import parse_command, replay_log
        replayed = replay_log([parse_command(e.command_text) for e in record.log], name="g1")
        assert serialize_sheet(record.materialized) == serialize_sheet(replayed)


class TestPollChanges:
    def test_full_feed(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        store.send_commands(alice, "alice", "g1",
                            ["set A1 value n 1", "set A2 value n 2", "set A3 value n 3"])
        envelopes, last_seq = store.poll_changes(alice, "alice", "g1", 0)
        assert [e.seq for e in envelopes] == [1, 2, 3]
        assert last_seq == 3

    def test_caught_up(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        store.send_commands(alice, "alice", "g1", ["set A1 value n 1"])
        envelopes, _ = store.poll_changes(alice, "alice", "g1", 1)
        assert envelopes == []

    def test_bad_seq(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        store.send_commands(alice, "alice", "g1", ["set A1 value n 1"])
        with pytest.raises(BadSeq):
            store.poll_changes(alice, "alice", "g1", 99)
        with pytest.raises(BadSeq):
            store.poll_changes(alice, "alice", "g1", -1)


class TestPresence:
    def test_two_members_listed(self, store, alice, bob):
        store.create_sheet(alice, "g1", "xyz")
        store.open_sheet(bob, "alice", "g1", "xyz")
        store.poll_changes(alice, "alice", "g1", 0)
        store.poll_changes(bob, "alice", "g1", 0)
        assert store.list_active(alice, "alice", "g1") == ["alice", "bob"]

    def test_silent_member_dropped(self, store, alice, bob, clock):
        store.create_sheet(alice, "g1", "xyz")
        store.open_sheet(bob, "alice", "g1", "xyz")
        clock.advance(11)
        store.poll_changes(alice, "alice", "g1", 0)
        assert store.list_active(alice, "alice", "g1") == ["alice"]

    def test_single_member(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        assert store.list_active(alice, "alice", "g1") == ["alice"]


class TestChat:
    def test_send_and_poll(self, store, alice, clock):
        store.create_sheet(alice, "g1", "xyz")
        assert store.send_chat(alice, "alice", "g1", "hi") == 1
        messages = store.poll_chat(alice, "alice", "g1", 0)
        assert [(m.chat_seq, m.username, m.text) for m in messages] == [(1, "alice", "hi")]
        assert messages[0].ts == clock.now

    def test_poll_since_caught_up(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        store.send_chat(alice, "alice", "g1", "hi")
        assert store.poll_chat(alice, "alice", "g1", 1) == []

    def test_empty_message(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(EmptyMessage):
            store.send_chat(alice, "alice", "g1", "")

    def test_bad_message(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(BadMessage):
            store.send_chat(alice, "alice", "g1", "two\nlines")
        with pytest.raises(BadMessage):
            store.send_chat(alice, "alice", "g1", "x" * 2001)

    def test_bad_seq(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(BadSeq):
            store.poll_chat(alice, "alice", "g1", 5)


class TestSnapshots:
    def test_save_load_round_trip(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        store.send_commands(alice, "alice", "g1", ["set A1 value n 7"])
        store.save_snapshot(alice, "alice", "g1", "week1")
        at_save = store.load_snapshot(alice, "alice", "g1", "week1")
        store.send_commands(alice, "alice", "g1", ["set A1 value n 8"])
        assert store.load_snapshot(alice, "alice", "g1", "week1") == at_save
        assert "value n 7" in at_save

    def test_overwrite(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        store.save_snapshot(alice, "alice", "g1", "week1")
        store.send_commands(alice, "alice", "g1", ["set A1 value n 9"])
        store.save_snapshot(alice, "alice", "g1", "week1")
        assert "value n 9" in store.load_snapshot(alice, "alice", "g1", "week1")

    def test_missing(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(NoSuchSnapshot):
            store.load_snapshot(alice, "alice", "g1", "nope")

    def test_bad_name(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(BadName):
            store.save_snapshot(alice, "alice", "g1", "has space")
        with pytest.raises(BadName):
            store.save_snapshot(alice, "alice", "g1", "../evil")


class TestDurability:
    def test_restart_replays_to_same_bytes(self, tmp_path, clock):
        data = tmp_path / "srv"
        store = Store(data, scrypt_n=256, clock=clock)
        store.create_account("alice", "s3cretpass")
        token = store.login("alice", "s3cretpass")
        store.create_sheet(token, "g1", "xyz")
        store.send_commands(token, "alice", "g1", [
            "set A1 value n 1", "set B2 text t hello", "set C3 formula A1+1",
            "set A1 value n 42"])
        store.send_chat(token, "alice", "g1", "first!")
        store.save_snapshot(token, "alice", "g1", "keep")
        before = serialize_sheet(store._sheets[SheetKey("alice", "g1")].materialized)
        store.close()

        reborn = Store(data, scrypt_n=256, clock=clock)
        record = reborn._sheets[SheetKey("alice", "g1")]
        assert serialize_sheet(record.materialized) == before
        assert [e.seq for e in record.log] == [1, 2, 3, 4]
        assert [(m.chat_seq, m.text) for m in record.chat] == [(1, "first!")]
        assert "keep" in record.snapshots
        token2 = reborn.login("alice", "s3cretpass")   # accounts survived
        assert reborn.open_sheet(token2, "alice", "g1", "xyz")[0] == before
        reborn.close()

    def test_torn_log_tail_dropped(self, tmp_path, clock):
        data = tmp_path / "srv"
        store = Store(data, scrypt_n=256, clock=clock)
        store.create_account("alice", "s3cretpass")
        token = store.login("alice", "s3cretpass")
        store.create_sheet(token, "g1", "xyz")
        store.send_commands(token, "alice", "g1", ["set A1 value n 1"])
        store.close()
        log_path = data / "sheets" / "alice" / "g1" / "log"
        with open(log_path, "ab") as fh:
            fh.write(b"2 deadbeef\tset A2 value n ")   # torn mid-write, no newline

        reborn = Store(data, scrypt_n=256, clock=clock)
        record = reborn._sheets[SheetKey("alice", "g1")]
        assert [e.seq for e in record.log] == [1]
        reborn.close()

    def test_rename_moves_directory(self, tmp_path, clock):
        data = tmp_path / "srv"
        store = Store(data, scrypt_n=256, clock=clock)
        store.create_account("alice", "s3cretpass")
        token = store.login("alice", "s3cretpass")
        store.create_sheet(token, "g1", "xyz")
        store.send_commands(token, "alice", "g1", ["set A1 value n 1"])
        store.update_account(token, new_username="alicia")
        assert (data / "sheets" / "alicia" / "g1" / "log").exists()
        assert not (data / "sheets" / "alice").exists()
        # the open log handle survived the rename
        store.send_commands(token, "alicia", "g1", ["set A2 value n 2"])
        store.close()
        reborn = Store(data, scrypt_n=256, clock=clock)
        assert [e.seq for e in reborn._sheets[SheetKey("alicia", "g1")].log] == [1, 2]
        reborn.close()


class TestAuthGatesCauseNoStateChange:
    def test_failed_ops_leave_digest_unchanged(self, mkstore, clock):
        store = mkstore()
        store.create_account("alice", "s3cretpass")
        store.create_account("bob", "passw0rd!")
        alice = store.login("alice", "s3cretpass")
        bob = store.login("bob", "passw0rd!")
        expired = store.login("alice", "s3cretpass")
        store.create_sheet(alice, "g1", "xyz")
        store.send_commands(alice, "alice", "g1", ["set A1 value n 1"])
        clock.advance(86401)
        fresh_alice = store.login("alice", "s3cretpass")
        fresh_bob = store.login("bob", "passw0rd!")
        store.open_sheet(fresh_alice, "alice", "g1", "xyz")

        digest = store.state_digest()
        with pytest.raises(BadCredentials):
            store.login("alice", "totally-wrong")
        with pytest.raises(AuthDenied):
            store.open_sheet(fresh_bob, "alice", "g1", "wrong-secret")
        with pytest.raises(AuthRequired):
            store.send_commands(expired, "alice", "g1", ["set A1 value n 99"])
        with pytest.raises(NotMember):
            store.poll_changes(fresh_bob, "alice", "g1", 0)
        with pytest.raises(AuthRequired):
            store.poll_changes("no-such-token", "alice", "g1", 0)
        assert store.state_digest() == digest


class TestImport:
    def test_import_replaces_sheet_via_logged_batch(self, store, alice):
        store.create_sheet(alice, "g1", "xyz")
        store.send_commands(alice, "alice", "g1",
                            ["set Z9 value n 1", "set A1 text t old"])
        snapshot, first, last = store.import_file(
            alice, "alice", "g1", "xyz", "marks.csv", b"1,hello\n2,world\n")
        assert first == 3
        sheet = parse_save_string(snapshot)
        from gridmesh.sheet import CellAddress, Number, Text
        assert sheet.cells[CellAddress(1, 1)] == Number(1.0)
        assert sheet.cells[CellAddress(2, 2)] == Text("world")
        assert CellAddress(26, 9) not in sheet.cells   # Z9 cleared by the batch
        envelopes, _ = store.poll_changes(alice, "alice", "g1", 2)
        texts = [e.command_text for e in envelopes]
        assert "set Z9 empty" in texts and "set A1 value n 1" in texts
        assert last == 2 + len(texts)

    def test_import_requires_secret(self, store, alice, bob):
        store.create_sheet(alice, "g1", "xyz")
        with pytest.raises(AuthDenied):
            store.import_file(bob, "alice", "g1", "bad", "x.csv", b"1\n")

    def test_import_joins_caller(self, store, alice, bob):
        store.create_sheet(alice, "g1", "xyz")
        store.import_file(bob, "alice", "g1", "xyz", "x.csv", b"5\n")
        envelopes, _ = store.poll_changes(bob, "alice", "g1", 0)
        assert [e.command_text for e in envelopes] == ["set A1 value n 5"]

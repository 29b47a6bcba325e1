import random

import pytest

from gridmesh.store import Store


class FakeClock:
    """Deterministic time source for presence/TTL/scheduler tests."""

    def __init__(self, start: float = 1_000_000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> float:
        self.now += seconds
        return self.now


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def mkstore(tmp_path, clock):
    """Factory for fast-hash stores; data_dir="mem" means in-memory."""
    created = []

    def make(persist=False, **kw):
        kw.setdefault("scrypt_n", 256)
        kw.setdefault("clock", clock)
        data_dir = tmp_path / "data" if persist else None
        store = Store(data_dir, **kw)
        created.append(store)
        return store

    yield make
    for store in created:
        store.close()


@pytest.fixture
def store(mkstore):
    return mkstore()


@pytest.fixture
def alice(store):
    store.create_account("alice", "s3cretpass")
    return store.login("alice", "s3cretpass")


@pytest.fixture
def bob(store):
    store.create_account("bob", "passw0rd!")
    return store.login("bob", "passw0rd!")


@pytest.fixture
def rng():
    return random.Random(20260811)

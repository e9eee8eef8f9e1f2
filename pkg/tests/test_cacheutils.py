#!/usr/bin/env pytest
import overlaysim as osim
import pytest
from overlaysim import cacheutils


def body(n, seed, value=1.0):
    return {"n": n, "seed": seed, "primary": {"D": value}}


@pytest.fixture
def config():
    return osim.NetworkConfig(n=500, frames=8)


@pytest.fixture
def db():
    db = cacheutils.ResultDB("sqlite://")
    yield db
    db.close()


def test_fingerprint_ignores_n_and_seed(config):
    digest = cacheutils.fingerprint(config)
    assert digest == cacheutils.fingerprint(config.replace(n=900, seed=4))
    assert digest != cacheutils.fingerprint(config.replace(frames=9))


def test_add_get(db, config):
    with db:
        db.add(config, body(500, 0))
    assert db.get(config, 500, 0) == body(500, 0)
    assert db.get(config, 500, 1) is None
    assert db.get(config.replace(alpha=3), 500, 0) is None


def test_overwrite(db, config):
    with db:
        db.add(config, body(500, 0))
        db.add(config, body(500, 0, 7.0))
    assert db.get(config, 500, 0)["primary"]["D"] == 7.0
    assert len(list(db)) == 1


def test_one_profile_per_fingerprint(db, config):
    with db:
        db.add(config, body(500, 0))
        db.add(config, body(800, 0))
        db.add(config.replace(frames=20), body(500, 0))
    profiles = db.session.query(cacheutils.Profile).all()
    assert len(profiles) == 2
    assert sorted(len(p.realizations) for p in profiles) == [1, 2]


def test_records_order(db, config):
    with db:
        for n, seed in ((800, 1), (500, 1), (800, 0), (500, 0)):
            db.add(config, body(n, seed))
    got = [(r["n"], r["seed"]) for r in db.records(config)]
    assert got == [(500, 0), (500, 1), (800, 0), (800, 1)]


def test_rollback_on_error(db, config):
    with pytest.raises(RuntimeError):
        with db:
            db.add(config, body(500, 0))
            raise RuntimeError("interrupted")
    assert db.get(config, 500, 0) is None


def test_repr(db, config):
    with db:
        db.add(config, body(500, 3))
    (row,) = db.session.query(cacheutils.Realization).all()
    assert repr(row).startswith("Realization(")
    assert "seed=3" in repr(row)

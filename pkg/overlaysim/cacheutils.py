# Copyright 2026, the overlaysim authors
#
# This library is free software; you can redistribute it and/or
# modify it either under the terms of:
#
#   the EUPL, Version 1.1 or – as soon they will be approved by the
#   European Commission - subsequent versions of the EUPL (the
#   "Licence"). You may obtain a copy of the Licence at:
#   https://joinup.ec.europa.eu/software/page/eupl
#
# or
#
#   the terms of the Mozilla Public License, v. 2.0. If a copy of the
#   MPL was not distributed with this file, You can obtain one at
#   http://mozilla.org/MPL/2.0/.
#
# If you do not alter this notice, a recipient may use your version of
# this file under either the MPL or the EUPL.
"""
SQL store of finished realizations, so a sweep can be resumed or
extended without simulating the same (configuration, n, seed) twice.
"""
import hashlib
import json
import logging
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple
import sqlalchemy as sa
from sqlalchemy.orm.decl_api import DeclarativeMeta
from sqlalchemy.orm import sessionmaker, relationship, registry
from .config import NetworkConfig

log = logging.getLogger(__name__)

# fields that vary inside one sweep and so do not identify it
PER_REALIZATION = ("n", "seed")


def fingerprint(config: NetworkConfig) -> str:
    """stable digest of every parameter except n and the seed."""
    fields = {
        k: v for k, v in config.as_dict().items() if k not in PER_REALIZATION
    }
    text = json.dumps(fields, sort_keys=True)
    return hashlib.sha256(text.encode("utf8")).hexdigest()


mapper_registry = registry()


class Base(metaclass=DeclarativeMeta):
    __abstract__ = True

    # these are supplied by the sqlalchemy2-stubs, so may be omitted
    # when they are installed
    registry = mapper_registry
    metadata = mapper_registry.metadata

    def __repr__(self):
        name = self.__class__.__name__
        attrs = (
            "%s=%r" % (attr, getattr(self, attr))
            for attr in self._sa_class_manager.keys()
            if not (attr[-2:] == "id" or attr == "body")
            and not isinstance(getattr(self, attr), list)
        )
        return name + "(%s)" % ", ".join(attrs)


class Profile(Base):
    __tablename__ = "profiles"
    id = sa.Column(sa.Integer, primary_key=True)
    fingerprint = sa.Column(sa.String, index=True, unique=True)
    config = sa.Column(sa.Text)

    realizations: List["Realization"] = relationship(
        "Realization", back_populates="profile"
    )


class Realization(Base):
    __tablename__ = "realizations"
    id = sa.Column(sa.Integer, primary_key=True)
    profile_id = sa.Column(sa.Integer, sa.ForeignKey("profiles.id"))
    n = sa.Column(sa.Float)
    seed = sa.Column(sa.Integer)
    body = sa.Column(sa.Text)

    profile: Profile = relationship(Profile, back_populates="realizations")


sa.Index(
    "realization_idx",
    Realization.profile_id,
    Realization.n,
    Realization.seed,
    unique=True,
)


class ResultDB:
    """commits on a clean exit from ``with``, rolls back otherwise."""

    def __init__(self, sqlachemy_url, echo=False):
        self.engine = sa.create_engine(sqlachemy_url, echo=echo)
        Session = sessionmaker(bind=self.engine)
        self.session = Session()
        with self:
            Base.metadata.create_all(self.engine)

    def __enter__(self):
        return self

    def __exit__(self, type, value, traceback):
        if type:
            self.session.rollback()
        else:
            self.session.commit()

    def close(self):
        self.session.close()
        self.engine.dispose()

    def profile(
        self, config: NetworkConfig, create=False
    ) -> Optional[Profile]:
        digest = fingerprint(config)
        found = (
            self.session.query(Profile)
            .filter(Profile.fingerprint == digest)
            .first()
        )
        if found or not create:
            return found
        fields = config.as_dict()
        for key in PER_REALIZATION:
            fields.pop(key)
        found = Profile(
            fingerprint=digest, config=json.dumps(fields, sort_keys=True)
        )
        self.session.add(found)
        return found

    def _row(
        self, config: NetworkConfig, n: float, seed: int
    ) -> Optional[Realization]:
        return (
            self.session.query(Realization)
            .join(Profile)
            .filter(
                Profile.fingerprint == fingerprint(config),
                Realization.n == float(n),
                Realization.seed == int(seed),
            )
            .first()
        )

    def get(
        self, config: NetworkConfig, n: float, seed: int
    ) -> Optional[Dict[str, Any]]:
        """stored record body of one realization, or None."""
        row = self._row(config, n, seed)
        if row is None:
            return None
        log.debug("cache hit for n=%g seed=%d", n, seed)
        return json.loads(row.body)

    def add(self, config: NetworkConfig, body: Mapping[str, Any]) -> None:
        """store a record body; a stored realization is overwritten."""
        text = json.dumps(body, sort_keys=True)
        row = self._row(config, body["n"], body["seed"])
        if row is not None:
            row.body = text
            return
        self.session.add(
            Realization(
                profile=self.profile(config, create=True),
                n=float(body["n"]),
                seed=int(body["seed"]),
                body=text,
            )
        )

    def __iter__(self) -> Iterator[Tuple[str, float, int]]:
        query = self.session.query(
            Profile.fingerprint, Realization.n, Realization.seed
        ).join(Realization)
        yield from query

    def records(self, config: NetworkConfig) -> List[Dict[str, Any]]:
        rows = (
            self.session.query(Realization)
            .join(Profile)
            .filter(Profile.fingerprint == fingerprint(config))
            .order_by(Realization.n, Realization.seed)
        )
        return [json.loads(r.body) for r in rows]

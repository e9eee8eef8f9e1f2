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
"""Network parameters and the YAML profile loader."""
import dataclasses
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional
import yaml

log = logging.getLogger(__name__)

CFG_PATHS = [
    Path() / ".overlaysim.yml",
    Path.home() / ".config" / "overlaysim" / "config.yml",
]
PROJ_PATH = Path(__file__).parent


class OverlaySimError(Exception):
    pass


class ConfigError(OverlaySimError):
    pass


class DomainError(OverlaySimError, ValueError):
    pass


# CLI spellings of the power and noise constants
ALIASES = {"p0": "P0", "p1": "P1", "n0": "N0", "a": "A"}


@dataclasses.dataclass(frozen=True)
class NetworkConfig:
    """all scalar parameters of one realization. Derived quantities (m,
    a_p, a_s) are properties, so the dataclass stays the single source of
    truth for a run.
    """

    n: float = 1000.0
    beta: float = 1.5
    k1: float = 1.0
    k2: float = 1.0
    alpha: float = 4.0
    A: float = 1.0
    P0: float = 1.0
    P1: float = 1.0
    N0: float = 1.0
    tp: float = 1.0
    frames: int = 200
    seed: int = 0
    warmup: int = 2
    phy_frames: int = 1
    validate_bounds: bool = False
    primary_only: bool = False

    def __post_init__(self):
        problems = []
        if not self.n > 1:
            problems.append("n must exceed 1 (got %r)" % self.n)
        if not self.beta > 1:
            problems.append("beta must exceed 1 (got %r)" % self.beta)
        if not self.alpha > 2:
            problems.append("alpha must exceed 2 (got %r)" % self.alpha)
        if self.k1 < 1 or self.k2 < 1:
            problems.append("k1 and k2 must be at least 1")
        for name in "A", "P0", "P1", "N0", "tp":
            if not getattr(self, name) > 0:
                problems.append("%s must be positive" % name)
        if self.frames < 1:
            problems.append("frames must be at least 1")
        if self.warmup < 0:
            problems.append("warmup must be non-negative")
        if self.phy_frames < 1:
            problems.append("phy_frames must be at least 1")
        if problems:
            raise ConfigError("; ".join(problems))
        if not self.a_p < 1:
            raise ConfigError(
                "primary cell area %.4g is not below 1; raise n" % self.a_p
            )

    @property
    def m(self) -> float:
        return self.n**self.beta

    @property
    def a_p(self) -> float:
        return self.k1 * math.log(self.n) / self.n

    @property
    def a_s(self) -> float:
        return self.k2 * math.log(self.m) / self.m

    @property
    def large_enough(self) -> bool:
        """whether n is large enough for the secondary cells to be smaller
        than the primary ones.
        """
        return self.a_s < self.a_p

    @property
    def ts(self) -> float:
        return self.tp / 25

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **normalize_keys(changes))

    def as_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "NetworkConfig":
        """build a config from a profile or CLI mapping, ignoring keys that
        belong to the experiment rather than to a single network.
        """
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in normalize_keys(mapping).items():
            if key not in fields or value is None:
                continue
            kwargs[key] = _coerce(fields[key], value)
        return cls(**kwargs)


def normalize_keys(mapping: Mapping[str, Any]) -> Dict[str, Any]:
    return {
        ALIASES.get(k.replace("-", "_"), k.replace("-", "_")): v
        for k, v in mapping.items()
    }


def _coerce(field: dataclasses.Field, value):
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    try:
        if kind == "bool":
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if kind == "int":
            return int(value)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError("bad value for %s: %r" % (field.name, value))


class Config:
    """locates user configuration and the packaged experiment profiles."""

    def __init__(self, path=None, loader=None):
        self.path = path
        self.loader = loader or _load_yaml
        self.user_conf = self.find_configs()
        self.profiles = get_profiles(self.user_conf)

    def get_profile(self, name: str) -> Dict[str, Any]:
        try:
            path = self.profiles[name]
        except KeyError:
            raise ConfigError(
                "no profile %r (known: %s)"
                % (name, ", ".join(sorted(self.profiles)))
            )
        return self.loader(path) or {}

    def find_configs(self) -> Dict[str, Any]:
        """locate the yaml config file and return it deserialized."""
        if self.path:
            path = Path(self.path)
            if not path.exists():
                raise ConfigError("config file %s does not exist" % path)
        else:
            for path in CFG_PATHS:
                if path.exists():
                    break
            else:
                return {}
        log.info("reading configuration from %s", path)
        conf = self.loader(path) or {}
        if not isinstance(conf, dict):
            raise ConfigError("%s must hold a flat mapping" % path)
        return conf

    def __getitem__(self, key):
        return self.user_conf[key]

    def get(self, key, default=None):
        return self.user_conf.get(key, default)

    def merged(
        self,
        profile: Optional[str] = None,
        overrides: Optional[Mapping] = None,
    ) -> Dict[str, Any]:
        """profile < config file < overrides. None-valued overrides are
        treated as "not given".
        """
        merged: Dict[str, Any] = {}
        name = profile or self.user_conf.get("profile")
        if name:
            merged.update(normalize_keys(self.get_profile(name)))
        merged.update(
            normalize_keys(
                {k: v for k, v in self.user_conf.items() if k != "profile"}
            )
        )
        if overrides:
            merged.update(
                normalize_keys(
                    {k: v for k, v in overrides.items() if v is not None}
                )
            )
        return merged


def _load_yaml(path) -> Any:
    with open(str(path), encoding="utf8") as fh:
        return yaml.safe_load(fh)


def get_profiles(user_conf: dict) -> Dict[str, Path]:
    u_profiles = user_conf.get("profiles")
    if u_profiles is None:
        profile_paths: Iterable[Path] = (PROJ_PATH / "data").glob("*.yml")
    elif isinstance(u_profiles, list):
        profile_paths = map(Path, u_profiles)
    elif u_profiles.endswith(".yml"):
        profile_paths = [Path(u_profiles)]
    else:
        profile_paths = Path(u_profiles).glob("*.yml")

    return {p.stem: p for p in profile_paths}

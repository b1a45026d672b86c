"""Variable-to-model-group mapping for the five grouping schemes.

A scheme decides which regression model scores a candidate variable:
one shared model (et), per base name and startup category (pna), per time
step (pti), per generator (pge), or one model per variable (pv).  Keys are
instance-independent, so models trained on one family member apply to all.
"""

from __future__ import annotations

import urllib.parse
from dataclasses import dataclass

from .model import VariableKey

ET = "et"
PNA = "pna"
PTI = "pti"
PGE = "pge"
PV = "pv"

SCHEMES = (ET, PNA, PTI, PGE, PV)

_KNOWN_BASES = {"is_on", "switch_on", "switch_off", "startup"}


@dataclass(frozen=True)
class GroupKey:
    scheme: str
    parts: tuple

    def encode(self) -> str:
        """URL-safe file stem, unique within a scheme."""
        quoted = [urllib.parse.quote(str(p), safe="") for p in self.parts]
        return "__".join([self.scheme] + quoted) if quoted else self.scheme


def group_of(scheme: str, key: VariableKey) -> GroupKey:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown grouping scheme {scheme!r}")
    if scheme == ET or key.base not in _KNOWN_BASES:
        # unknown base names route to the general bucket
        return GroupKey(ET, ())
    s = key.startup_category
    if scheme == PNA:
        return GroupKey(PNA, (key.base, s))
    if scheme == PTI:
        return GroupKey(PTI, (key.base, key.time, s))
    if scheme == PGE:
        return GroupKey(PGE, (key.base, key.generator, s))
    return GroupKey(PV, (key.raw,))


def resolve_model(store, scheme: str, key: VariableKey):
    """Group model when trained, general model otherwise.

    Returns (forest, used_fallback); the et scheme reports no fallback by
    convention since the general model is its only model.
    """
    if scheme == ET:
        return store.general, False
    gk = group_of(scheme, key)
    if gk.scheme == ET:
        return store.general, True
    forest = store.by_group.get(gk)
    if forest is None:
        return store.general, True
    return forest, False

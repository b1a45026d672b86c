"""MILP instance data model and JSON serialization.

An instance is a minimization problem over binary and continuous variables
with sparse linear constraints.  Variable names carry structured identity
(base name, generator, time, startup category) that is stable across all
instances of a family; :func:`parse_variable_key` recovers it.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

BINARY = "binary"
CONTINUOUS = "continuous"

_SENSES = (">=", "<=", "=")

# The four structured base names.  Anything else is kept verbatim as an
# opaque key with no indices.
_KEY_2IDX = re.compile(r"^(is_on|switch_on|switch_off)\[(\d+),(\d+)\]$")
_KEY_3IDX = re.compile(r"^(startup)\[(\d+),(\d+),(\d+)\]$")


class ModelError(ValueError):
    """Raised for malformed instance files or invariant violations."""


@dataclass(frozen=True)
class VariableKey:
    base: str
    generator: int | None = None
    time: int | None = None
    startup_category: int | None = None

    @property
    def raw(self) -> str:
        if self.base == "startup" and self.startup_category is not None:
            return f"startup[{self.generator},{self.time},{self.startup_category}]"
        if self.generator is not None and self.time is not None:
            return f"{self.base}[{self.generator},{self.time}]"
        return self.base


def parse_variable_key(raw: str) -> VariableKey:
    """Total, deterministic parse of a variable name into its key."""
    m = _KEY_2IDX.match(raw)
    if m:
        return VariableKey(m.group(1), int(m.group(2)), int(m.group(3)))
    m = _KEY_3IDX.match(raw)
    if m:
        return VariableKey(m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4)))
    return VariableKey(raw)


@dataclass(frozen=True)
class Variable:
    key: VariableKey
    kind: str
    lower: float
    upper: float
    obj_coeff: float

    def __post_init__(self):
        if self.kind not in (BINARY, CONTINUOUS):
            raise ModelError(f"variable {self.key.raw}: unknown kind {self.kind!r}")
        if self.lower > self.upper:
            raise ModelError(f"variable {self.key.raw}: lower {self.lower} > upper {self.upper}")
        if self.kind == BINARY and (self.lower, self.upper) != (0.0, 1.0):
            raise ModelError(f"binary variable {self.key.raw} must have bounds [0, 1]")


@dataclass(frozen=True)
class Constraint:
    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float

    def __post_init__(self):
        if not self.terms:
            raise ModelError("constraint has no terms")
        if self.sense not in _SENSES:
            raise ModelError(f"unknown constraint sense {self.sense!r}")
        seen = set()
        for idx, _ in self.terms:
            if idx in seen:
                raise ModelError(f"constraint references variable index {idx} twice")
            seen.add(idx)


class MILPInstance:
    """Immutable problem description: variables, constraints, min objective.

    Mutating an instance after construction is not supported; solver code
    caches derived arrays on it (see lp module).
    """

    def __init__(self, name: str, variables: list[Variable], constraints: list[Constraint]):
        self.name = name
        self.variables = list(variables)
        self.constraints = list(constraints)
        self.objective_sense = "minimize"
        n = len(self.variables)
        for ci, con in enumerate(self.constraints):
            for idx, _ in con.terms:
                if not 0 <= idx < n:
                    raise ModelError(
                        f"constraint {ci} references variable index {idx}, "
                        f"but instance has {n} variables"
                    )
        self._index_by_raw = {v.key.raw: i for i, v in enumerate(self.variables)}
        if len(self._index_by_raw) != n:
            raise ModelError("duplicate variable names in instance")

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == BINARY]

    def index_of(self, raw_name: str) -> int:
        return self._index_by_raw[raw_name]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "objective_sense": self.objective_sense,
            "variables": [
                {
                    "name": v.key.raw,
                    "kind": v.kind,
                    "lb": v.lower,
                    "ub": v.upper,
                    "obj": v.obj_coeff,
                }
                for v in self.variables
            ],
            "constraints": [
                {
                    "terms": [[idx, coeff] for idx, coeff in c.terms],
                    "sense": c.sense,
                    "rhs": c.rhs,
                }
                for c in self.constraints
            ],
        }


def _require(cond: bool, msg: str):
    if not cond:
        raise ModelError(msg)


def instance_from_dict(doc: dict) -> MILPInstance:
    _require(isinstance(doc, dict), "instance document must be a JSON object")
    sense = doc.get("objective_sense", "minimize")
    _require(sense == "minimize", f"only minimize objectives are supported, got {sense!r}")
    _require("variables" in doc, "missing 'variables' field")
    _require("constraints" in doc, "missing 'constraints' field")

    variables = []
    for i, v in enumerate(doc["variables"]):
        try:
            lb, ub = float(v["lb"]), float(v["ub"])
            variables.append(
                Variable(
                    key=parse_variable_key(str(v["name"])),
                    kind=str(v["kind"]),
                    lower=lb,
                    upper=ub,
                    obj_coeff=float(v["obj"]),
                )
            )
        except KeyError as exc:
            raise ModelError(f"variable {i}: missing field {exc}") from exc

    constraints = []
    for ci, c in enumerate(doc["constraints"]):
        try:
            terms = tuple((int(idx), float(coeff)) for idx, coeff in c["terms"])
            constraints.append(Constraint(terms=terms, sense=str(c["sense"]), rhs=float(c["rhs"])))
        except KeyError as exc:
            raise ModelError(f"constraint {ci}: missing field {exc}") from exc
        except ModelError as exc:
            raise ModelError(f"constraint {ci}: {exc}") from exc

    for v in variables:
        _require(math.isfinite(v.obj_coeff), f"variable {v.key.raw}: objective must be finite")

    return MILPInstance(str(doc.get("name", "")), variables, constraints)


def load_instance(path) -> MILPInstance:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        return instance_from_dict(doc)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from exc


def save_instance(instance: MILPInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance.to_dict(), fh, indent=1)
        fh.write("\n")

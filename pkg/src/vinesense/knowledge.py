"""Declarative knowledge base driving the breakpoint detection and the
aggregation windows.

The knowledge base is a set of concepts under a (possibly multiple)
subsumption partial order, plus relations: temporal precedence between
phenological stages (``isBefore``), conditions and constraints attached to
concepts, stage-shift rules (derive a stage from another one by a thermal
time offset) and per-(region, variety) water-stress levels.

Serialization is a single JSON document with top-level keys ``concepts``,
``relations``, ``shift_rules`` and ``levels``. The shipped default file is
``data/default_kb.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

from .errors import KnowledgeError, ValidationError

PRIMARY_KINDS = ("Variable", "Condition", "Constraint", "ShiftStage")

_OPERATORS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}

KNOWN_UNITS = {"mm", "kPa", "degC", "GDD", "g/L", "g", "mm/day", "MPa", "mg/L"}


@dataclass(frozen=True)
class Concept:
    name: str
    parents: tuple[str, ...] = ()
    unit: str | None = None
    default: float | None = None


@dataclass(frozen=True)
class Condition:
    """Comparison with two operands, each a concept name or a literal."""

    operator: str
    left: object
    right: object

    def __post_init__(self):
        if self.operator not in _OPERATORS:
            raise KnowledgeError(f"unknown operator {self.operator!r}")


@dataclass(frozen=True)
class Constraint:
    """Comparison with one operand; ``restriction`` adds a second bound
    turning it into a two-fold (interval) constraint."""

    operator: str
    operand: object
    restriction: tuple[object, object] | None = None
    subject: str | None = None  # concept the constraint is applied to

    def __post_init__(self):
        if self.operator not in _OPERATORS:
            raise KnowledgeError(f"unknown operator {self.operator!r}")


@dataclass(frozen=True)
class ShiftStageRule:
    source_stage: str
    offset_gdd: float
    target_stage: str
    variety: str | None = None

    def __post_init__(self):
        if self.offset_gdd < 0:
            raise KnowledgeError(
                f"shift offset must be >= 0, got {self.offset_gdd}"
            )


@dataclass
class KnowledgeBase:
    concepts: dict[str, Concept]
    is_before: list[tuple[str, str]] = field(default_factory=list)
    conditions: dict[str, Condition] = field(default_factory=dict)
    constraints: dict[str, Constraint] = field(default_factory=dict)
    shift_rules: list[ShiftStageRule] = field(default_factory=list)
    levels: dict[tuple[str | None, str | None], float] = field(default_factory=dict)
    maturity_thresholds: dict[str | None, float] = field(default_factory=dict)

    def maturity_threshold(self, variety: str | None = None) -> float | None:
        """Sugar/acidity ratio defining maturity for a variety; None when the
        knowledge base declares no threshold (maturity then stays undated)."""
        for key in (variety, None):
            if key in self.maturity_thresholds:
                return self.maturity_thresholds[key]
        return None

    def stress_level(
        self, region: str | None = None, variety: str | None = None, default: float = -0.3
    ) -> float:
        """Predawn-LWP stress threshold (MPa) for a region/variety, most
        specific entry first."""
        for key in ((region, variety), (region, None), (None, variety), (None, None)):
            if key in self.levels:
                return self.levels[key]
        return default


def _check_acyclic(concepts: dict[str, Concept]):
    # DFS with an explicit path so the cycle can be reported.
    WHITE, GREY, BLACK = 0, 1, 2
    color = {name: WHITE for name in concepts}

    def visit(name, path):
        color[name] = GREY
        path.append(name)
        for parent in concepts[name].parents:
            if parent not in concepts:
                raise KnowledgeError(
                    f"concept {name!r} references unknown concept {parent!r}"
                )
            if color[parent] == GREY:
                cycle = path[path.index(parent):] + [parent]
                raise KnowledgeError("subsumption cycle: " + " -> ".join(cycle))
            if color[parent] == WHITE:
                visit(parent, path)
        path.pop()
        color[name] = BLACK

    for name in concepts:
        if color[name] == WHITE:
            visit(name, [])


def load_kb(source: str | Path | dict) -> KnowledgeBase:
    """Load and validate a knowledge base from a JSON file or parsed dict."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source

    concepts: dict[str, Concept] = {}
    for entry in doc.get("concepts", []):
        name = entry["name"]
        if name in concepts:
            raise KnowledgeError(f"duplicate concept {name!r}")
        unit = entry.get("unit")
        if unit is not None and unit not in KNOWN_UNITS:
            raise KnowledgeError(f"concept {name!r} has unknown unit {unit!r}")
        concepts[name] = Concept(
            name=name,
            parents=tuple(entry.get("parents", [])),
            unit=unit,
            default=entry.get("default"),
        )
    _check_acyclic(concepts)

    kb = KnowledgeBase(concepts=concepts)
    for rel in doc.get("relations", []):
        kind = rel["type"]
        if kind == "isBefore":
            a, b = rel["before"], rel["after"]
            for endpoint in (a, b):
                if endpoint not in concepts:
                    raise KnowledgeError(
                        f"isBefore references unknown concept {endpoint!r}"
                    )
            kb.is_before.append((a, b))
        elif kind == "hasCondition":
            target = rel["concept"]
            if target not in concepts:
                raise KnowledgeError(f"hasCondition on unknown concept {target!r}")
            cond = rel["condition"]
            kb.conditions[target] = Condition(
                operator=cond["operator"], left=cond["left"], right=cond["right"]
            )
        elif kind == "hasConstraint":
            target = rel["concept"]
            if target not in concepts:
                raise KnowledgeError(f"hasConstraint on unknown concept {target!r}")
            cons = rel["constraint"]
            restriction = cons.get("restriction")
            if restriction is not None:
                restriction = (restriction[0], restriction[1])
                lo, hi = restriction
                if (
                    isinstance(lo, (int, float))
                    and isinstance(hi, (int, float))
                    and lo > hi
                ):
                    raise KnowledgeError(
                        f"restriction bounds out of order on {target!r}: {lo} > {hi}"
                    )
            kb.constraints[target] = Constraint(
                operator=cons["operator"],
                operand=cons["operand"],
                restriction=restriction,
                subject=target,
            )
        else:
            raise KnowledgeError(f"unknown relation type {kind!r}")

    for rule in doc.get("shift_rules", []):
        for endpoint in (rule["source"], rule["target"]):
            if endpoint not in concepts:
                raise KnowledgeError(
                    f"shift rule references unknown concept {endpoint!r}"
                )
        kb.shift_rules.append(
            ShiftStageRule(
                source_stage=rule["source"],
                offset_gdd=float(rule["offset_gdd"]),
                target_stage=rule["target"],
                variety=rule.get("variety"),
            )
        )

    for entry in doc.get("levels", []):
        key = (entry.get("region"), entry.get("variety"))
        kb.levels[key] = float(entry["lwp_stress_mpa"])

    for entry in doc.get("maturity_thresholds", []):
        ratio = float(entry["sugar_acidity_ratio"])
        if ratio <= 0:
            raise KnowledgeError(
                f"maturity threshold must be > 0, got {ratio}"
            )
        kb.maturity_thresholds[entry.get("variety")] = ratio
    return kb


def subconcepts(kb: KnowledgeBase, concept: str) -> set[str]:
    """Reflexive-transitive closure of the subsumption relation below
    ``concept`` (every c' with c' <= concept, including concept itself)."""
    if concept not in kb.concepts:
        raise KnowledgeError(f"unknown concept {concept!r}")
    children: dict[str, list[str]] = {name: [] for name in kb.concepts}
    for c in kb.concepts.values():
        for parent in c.parents:
            children[parent].append(c.name)
    closure = {concept}
    stack = [concept]
    while stack:
        for child in children[stack.pop()]:
            if child not in closure:
                closure.add(child)
                stack.append(child)
    return closure


@dataclass(frozen=True)
class OrderViolation:
    before: str
    after: str
    date_before: Date
    date_after: Date


@dataclass
class TemporalReport:
    violations: list[OrderViolation] = field(default_factory=list)
    unverifiable: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_temporal_order(kb: KnowledgeBase, stage_dates: dict[str, Date]) -> TemporalReport:
    """Verify every isBefore(a, b) relation as date(a) < date(b).

    Relations with an undated endpoint are reported as unverifiable, not as
    violations.
    """
    report = TemporalReport()
    for a, b in kb.is_before:
        da, db = stage_dates.get(a), stage_dates.get(b)
        if da is None or db is None:
            report.unverifiable.append((a, b))
        elif not da < db:
            report.violations.append(OrderViolation(a, b, da, db))
    return report


def apply_shift(
    rule: ShiftStageRule,
    stage_dates: dict[str, Date],
    gdd_by_date: dict[Date, float],
) -> dict[str, Date]:
    """Date the rule's target stage: first date whose cumulative GDD reaches
    the source stage's cumulative GDD plus the rule offset.

    Returns a new stage->date mapping including the target stage.
    """
    source_date = stage_dates.get(rule.source_stage)
    if source_date is None:
        raise ValidationError(f"source stage {rule.source_stage!r} is not dated")
    if source_date not in gdd_by_date:
        raise ValidationError(
            f"thermal time series does not cover {rule.source_stage} ({source_date})"
        )
    target_gdd = gdd_by_date[source_date] + rule.offset_gdd
    for day in sorted(gdd_by_date):
        if day >= source_date and gdd_by_date[day] >= target_gdd:
            updated = dict(stage_dates)
            updated[rule.target_stage] = day
            return updated
    raise ValidationError(
        f"thermal time exhausted before reaching +{rule.offset_gdd} GDD "
        f"after {rule.source_stage}"
    )


def evaluate(item: Condition | Constraint, bindings: dict[str, object]) -> bool:
    """Truth value of a condition or constraint under variable bindings.

    Operands that are strings are looked up in ``bindings``; a restriction
    evaluates both bounds conjunctively.
    """

    def resolve(operand):
        if isinstance(operand, str):
            if operand not in bindings:
                raise ValidationError(f"unbound variable {operand!r}")
            return bindings[operand]
        return operand

    if isinstance(item, Condition):
        return _OPERATORS[item.operator](resolve(item.left), resolve(item.right))
    if item.subject is None:
        raise ValidationError("constraint has no subject concept to apply to")
    value = resolve(item.subject)
    if item.restriction is not None:
        lo, hi = resolve(item.restriction[0]), resolve(item.restriction[1])
        return lo <= value <= hi
    return _OPERATORS[item.operator](value, resolve(item.operand))


def default_kb_path() -> Path:
    return Path(__file__).parent / "data" / "default_kb.json"

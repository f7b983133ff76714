"""Conformance checking of recorded event traces against a rule set.

Traces are JSON lines, one event per line, with the fields of
:class:`TraceEvent`; argument values are strings, integers, object
references (``{"ref": "<id>"}``) or the unknown marker ``"?"``. The checker
runs each object's event sequence through its rule's typestate automaton and
evaluates argument constraints as values become bound, reporting four kinds
of findings: ``order``, ``incomplete``, ``constraint`` and
``missing-predicate``.

Unknown argument values never produce violations, only warnings: a recorded
trace can be as indefinite as a static analysis, and the checker must not
fabricate certainty. Predicates are tracked by value identity (reference id
or literal value); there is no aliasing analysis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

from .automaton import TypestateAutomaton, compile_order
from .diagnostics import Diagnostic, Loc, error_at
from .emitter import render_constraint, render_literal
from .model import (
    ConstraintExpr,
    CrySLSpec,
    EventDecl,
    Implication,
    LiteralSet,
    Membership,
    VarRef,
    constraint_memberships,
)


@dataclass(frozen=True)
class Ref:
    """An opaque object-reference id appearing as an argument value."""

    id: str


class Unknown:
    """Singleton marker for an argument whose value was not recorded."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNKNOWN"


UNKNOWN = Unknown()

ArgValue = Union[str, int, Ref, Unknown]


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    object_id: str
    class_name: str
    method_name: str
    args: tuple[ArgValue, ...] = ()
    return_id: str | None = None
    line: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Violation:
    kind: str  # order | incomplete | constraint | missing-predicate
    object_id: str
    seq: int | None  # None marks end of trace (incomplete objects)
    rule_class: str
    message: str


# ---------------------------------------------------------------------------
# Trace input
# ---------------------------------------------------------------------------


def _parse_arg(raw) -> ArgValue:
    if isinstance(raw, str):
        return UNKNOWN if raw == "?" else raw
    if isinstance(raw, bool):
        raise ValueError("boolean arguments are not part of the trace format")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, dict) and set(raw) == {"ref"} and isinstance(raw["ref"], str):
        return Ref(raw["ref"])
    raise ValueError(f"unsupported argument value {raw!r}")


def parse_trace_lines(
    lines: Iterable[str], path: str = "<trace>"
) -> tuple[list[TraceEvent], list[Diagnostic]]:
    """Parse JSON-lines trace text; malformed lines are reported and skipped."""
    events: list[TraceEvent] = []
    diags: list[Diagnostic] = []
    last_seq: int | None = None
    for line_no, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            record = json.loads(text)
            if not isinstance(record, dict):
                raise ValueError("trace line must be a JSON object")
            event = TraceEvent(
                seq=int(record["seq"]),
                object_id=str(record["object_id"]),
                class_name=str(record["class_name"]),
                method_name=str(record["method_name"]),
                args=tuple(_parse_arg(a) for a in record.get("args", [])),
                return_id=record.get("return_id"),
                line=line_no,
            )
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            diags.append(error_at(path, Loc(line_no, 1), f"malformed trace line: {exc}"))
            continue
        if last_seq is not None and event.seq <= last_seq:
            diags.append(
                error_at(path, Loc(line_no, 1),
                         f"seq {event.seq} does not increase (previous was {last_seq})")
            )
            continue
        last_seq = event.seq
        events.append(event)
    return events, diags


def load_trace(path: str | Path) -> tuple[list[TraceEvent], list[Diagnostic]]:
    text = Path(path).read_text(encoding="utf-8")
    return parse_trace_lines(text.splitlines(), str(path))


# ---------------------------------------------------------------------------
# Rule compilation and event matching
# ---------------------------------------------------------------------------


@dataclass
class CompiledRule:
    spec: CrySLSpec
    automaton: TypestateAutomaton
    label_of_event: dict[str, str]  # event label -> label used in ORDER alphabet


@dataclass
class RuleSet:
    rules: dict[str, CompiledRule]  # keyed by fully qualified class name


def compile_rules(specs: Iterable[CrySLSpec]) -> RuleSet:
    """Compile validated rules for checking. Duplicate classes are rejected."""
    rules: dict[str, CompiledRule] = {}
    for spec in specs:
        if spec.class_name in rules:
            raise ValueError(f"duplicate rule for class '{spec.class_name}'")
        automaton = compile_order(spec.order, spec.aggregates)
        rules[spec.class_name] = CompiledRule(spec, automaton, {})
    return RuleSet(rules)


def match_event(rules: RuleSet, event: TraceEvent) -> tuple[CompiledRule | None, str | None]:
    """Match a trace event against the rule set.

    Returns ``(None, None)`` for classes with no rule (the event is ignored),
    ``(rule, None)`` for an undeclared method on a ruled class (which breaks
    the protocol via the automaton sink), and ``(rule, label)`` on a match.
    Matching is by class name, then method name and arity; wildcard
    parameters match anything.
    """
    rule = rules.rules.get(event.class_name)
    if rule is None:
        return None, None
    for decl in rule.spec.events:
        if decl.method_name == event.method_name and len(decl.params) == len(event.args):
            return rule, decl.label
    return rule, None


# ---------------------------------------------------------------------------
# Checking
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    violations: list[Violation]
    warnings: list[str]


@dataclass
class _ObjectRun:
    rule: CompiledRule
    object_id: str
    state: int
    broken: bool = False  # order already violated; automaton is in the sink
    env: dict[str, ArgValue] = field(default_factory=dict)
    evaluated: dict[int, tuple] = field(default_factory=dict)
    constraint_ok: bool = True
    requires_checked: bool = False


def _bind_event(run: _ObjectRun, decl: EventDecl, event: TraceEvent) -> None:
    """Bind declared parameter variables (and the return binding, if any)
    to the event's recorded values."""
    for param, value in zip(decl.params, event.args):
        if isinstance(param, VarRef):
            run.env[param.name] = value
    if decl.return_binding is not None and event.return_id is not None:
        run.env[decl.return_binding] = Ref(event.return_id)


def _membership_holds(membership: Membership, env: dict[str, ArgValue]):
    """True/False when decidable, UNKNOWN when the bound value is unknown."""
    value = env[membership.var]
    if value is UNKNOWN or isinstance(value, Ref):
        return UNKNOWN
    assert isinstance(membership.values, LiteralSet)
    return value in membership.values.values


def _eval_constraint(constraint: ConstraintExpr, env: dict[str, ArgValue]):
    if isinstance(constraint, Implication):
        lhs = _membership_holds(constraint.lhs, env)
        if lhs is False:
            return True
        rhs = _membership_holds(constraint.rhs, env)
        if lhs is UNKNOWN:
            return True if rhs is True else UNKNOWN
        return rhs
    return _membership_holds(constraint, env)


def _value_key(value: ArgValue):
    """Identity used for predicate tracking: reference id or literal value."""
    if isinstance(value, Ref):
        return value.id
    if value is UNKNOWN:
        return None
    return value


def check_trace(rules: RuleSet, trace: list[TraceEvent]) -> CheckResult:
    """Check one trace against the rule set.

    Events are evaluated in ``seq`` order. Per object the rule's automaton
    tracks call order (the first break is reported, the object then stays in
    the sink); a constraint is judged whenever all its variables are bound
    to a combination of values not seen before. ENSURES predicates enter the
    store when a rule completes with all constraints satisfied. REQUIRES
    argument identities are fixed at the rule's first completion and tested
    against the store once the whole trace has been seen, so events of
    unrelated objects can be reordered without changing the findings.
    """
    violations: list[Violation] = []
    warnings: list[str] = []
    predicates: set[tuple[str, object]] = set()
    runs: dict[tuple[str, str], _ObjectRun] = {}
    # (rule, object, predicate, keys, completion seq): argument identities are
    # fixed at completion, but the store lookup happens once the whole trace
    # has been seen, so reordering events of unrelated objects cannot flip
    # the outcome.
    pending_requires: list[tuple[_ObjectRun, str, tuple, tuple, int]] = []

    def run_for(event: TraceEvent, rule: CompiledRule) -> _ObjectRun:
        key = (event.object_id, rule.spec.class_name)
        if key not in runs:
            runs[key] = _ObjectRun(rule, event.object_id, rule.automaton.initial)
        return runs[key]

    def check_constraints(run: _ObjectRun, event: TraceEvent) -> None:
        spec = run.rule.spec
        for index, constraint in enumerate(spec.constraints):
            names = {m.var for m in constraint_memberships(constraint)}
            if not names <= set(run.env):
                continue
            signature = tuple(run.env[name] for name in sorted(names))
            if run.evaluated.get(index) == signature:
                continue  # same bindings were already judged at an earlier event
            run.evaluated[index] = signature
            outcome = _eval_constraint(constraint, run.env)
            if outcome is True:
                continue
            rendered = render_constraint(constraint)
            if outcome is UNKNOWN:
                warnings.append(
                    f"seq {event.seq}: {run.object_id}: cannot decide '{rendered}' "
                    "(unknown value)"
                )
                continue
            run.constraint_ok = False
            bindings = ", ".join(
                f"{name} = {_render_value(run.env[name])}" for name in sorted(names)
            )
            violations.append(
                Violation(
                    kind="constraint",
                    object_id=run.object_id,
                    seq=event.seq,
                    rule_class=spec.class_name,
                    message=f"{bindings} violates '{rendered}'",
                )
            )

    def complete(run: _ObjectRun, event: TraceEvent) -> None:
        spec = run.rule.spec
        if run.constraint_ok:
            for pred in spec.ensures:
                keys = [_value_key(run.env.get(arg, UNKNOWN)) for arg in pred.args]
                if all(k is not None for k in keys):
                    predicates.add((pred.name, tuple(keys)))
        if not run.requires_checked:
            run.requires_checked = True
            for pred in spec.requires:
                keys = [_value_key(run.env.get(arg, UNKNOWN)) for arg in pred.args]
                if any(k is None for k in keys):
                    warnings.append(
                        f"seq {event.seq}: {run.object_id}: cannot check requires "
                        f"{pred.name}[{', '.join(pred.args)}] (unknown value)"
                    )
                    continue
                pending_requires.append((run, pred.name, pred.args, tuple(keys), event.seq))

    for event in sorted(trace, key=lambda e: e.seq):
        rule, label = match_event(rules, event)
        if rule is None:
            continue
        run = run_for(event, rule)
        if label is None:
            if not run.broken:
                run.broken = True
                violations.append(
                    Violation(
                        kind="order",
                        object_id=run.object_id,
                        seq=event.seq,
                        rule_class=rule.spec.class_name,
                        message=f"{event.method_name}() is not a declared event",
                    )
                )
            continue
        decl = next(
            d
            for d in rule.spec.events
            if d.method_name == event.method_name and len(d.params) == len(event.args)
        )
        _bind_event(run, decl, event)
        check_constraints(run, event)
        if run.broken:
            continue
        next_state = rule.automaton.step(run.state, decl.label)
        if next_state is None:
            run.broken = True
            violations.append(
                Violation(
                    kind="order",
                    object_id=run.object_id,
                    seq=event.seq,
                    rule_class=rule.spec.class_name,
                    message=f"{event.method_name}() breaks the declared call order",
                )
            )
            continue
        run.state = next_state
        if run.state in rule.automaton.accepting:
            complete(run, event)

    for run, name, args, keys, seq in pending_requires:
        if (name, keys) not in predicates:
            violations.append(
                Violation(
                    kind="missing-predicate",
                    object_id=run.object_id,
                    seq=seq,
                    rule_class=run.rule.spec.class_name,
                    message=f"requires {name}[{', '.join(args)}] but no rule established it",
                )
            )

    for key in sorted(runs):
        run = runs[key]
        if run.broken or run.state in run.rule.automaton.accepting:
            continue
        violations.append(
            Violation(
                kind="incomplete",
                object_id=run.object_id,
                seq=None,
                rule_class=run.rule.spec.class_name,
                message="object discarded before completing the declared protocol",
            )
        )

    violations.sort(key=lambda v: (v.seq is None, v.seq or 0, v.object_id, v.kind))
    return CheckResult(violations=violations, warnings=warnings)


def _render_value(value: ArgValue) -> str:
    if isinstance(value, Ref):
        return f"ref:{value.id}"
    if value is UNKNOWN:
        return "?"
    return render_literal(value)


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

VIOLATION_KINDS = ("constraint", "incomplete", "missing-predicate", "order")


def report(violations: list[Violation], fmt: str = "json") -> str:
    """Render violations as a JSON document or an aligned text table.

    The JSON schema is documented in ``docs/formats.md``; identical input
    always yields identical output bytes.
    """
    if fmt == "json":
        by_kind = {kind: 0 for kind in VIOLATION_KINDS}
        by_rule: dict[str, int] = {}
        for violation in violations:
            by_kind[violation.kind] = by_kind.get(violation.kind, 0) + 1
            by_rule[violation.rule_class] = by_rule.get(violation.rule_class, 0) + 1
        payload = {
            "total": len(violations),
            "by_kind": dict(sorted(by_kind.items())),
            "by_rule": dict(sorted(by_rule.items())),
            "violations": [
                {
                    "kind": v.kind,
                    "object_id": v.object_id,
                    "seq": v.seq,
                    "rule": v.rule_class,
                    "message": v.message,
                }
                for v in violations
            ],
        }
        return json.dumps(payload, indent=2) + "\n"
    if fmt != "table":
        raise ValueError(f"unknown report format '{fmt}'")

    headers = ("KIND", "OBJECT", "SEQ", "RULE", "MESSAGE")
    rows = [
        (v.kind, v.object_id, "end" if v.seq is None else str(v.seq), v.rule_class, v.message)
        for v in violations
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip()]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    lines.append(f"total: {len(violations)}")
    return "\n".join(lines) + "\n"

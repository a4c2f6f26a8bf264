"""
Applicability verdicts for a list of raw changes.

Function replacement is the workhorse: a modified function f is replaced by
f' (named f_new) and every way of reaching f is redirected. Added and
removed functions or globals never stand alone in a coherent patch; they
are folded into the modified functions that start or stop using them.
"""
import dataclasses
import logging
from typing import List

from csubset import (
    ScalarType, TranslationUnit, RawChange, statement_units, transitive_usage, unit_usage,
    FUNCTION_ADDED, FUNCTION_REMOVED, FUNCTION_BODY_CHANGED, FUNCTION_SIGNATURE_CHANGED,
    GLOBAL_TYPE_CHANGED, GLOBAL_ADDED, GLOBAL_REMOVED,
    STRUCT_FIELD_ADDED, STRUCT_FIELD_REMOVED, STRUCT_FIELD_REORDERED, STRUCT_FIELD_RETYPED,
)

from .change_set import (
    ClassifiedChange, SemanticChangeSet, quiescence, value_fits,
    dynamically_applicable, conditionally_applicable, static_only,
    REPLACE_FUNCTION, TREAT_AS_NEW_FUNCTION, RETYPE_GLOBAL, SHADOW_FIELD, NO_UPDATE,
)
from .stale_reads import check_stale_reads
from .type_plans import plan_type_change, plan_shadow_field

logger = logging.getLogger("hotmend.classifier")

LAYOUT_CHANGE_REASON = "layout change requires stopped program"
UNREACHABLE_ADDITION = "unreachable addition"
UNREFERENCED_REMOVAL = "unreferenced removal"

_MODIFIED_KINDS = (FUNCTION_BODY_CHANGED, FUNCTION_SIGNATURE_CHANGED)
_ADDITION_KINDS = (FUNCTION_ADDED, GLOBAL_ADDED)
_REMOVAL_KINDS = (FUNCTION_REMOVED, GLOBAL_REMOVED)


def replacement_name(name, taken):
    """f -> f_new, then f_new2, f_new3, ... until the name is free."""
    candidate = f"{name}_new"
    counter = 2
    while candidate in taken:
        candidate = f"{name}_new{counter}"
        counter += 1
    return candidate


def _all_names(*units):
    names = set()
    for unit in units:
        names.update(unit.symbol_names())
        names.update(p.name for p in unit.prototypes)
    return names


def _new_reference_closure(name, new_usage, added_functions):
    """Symbols reachable from the new body of `name`, following into added functions."""
    refs = set()
    pending = [name]
    visited = set()
    while pending:
        current = pending.pop()
        if current in visited or current not in new_usage:
            continue
        visited.add(current)
        direct = new_usage[current].referenced_symbols
        refs |= direct
        pending.extend(sorted(direct & added_functions))
    return refs


def _assign_folds(changes, new_usage, old_usage):
    """Map index of each foldable raw change to the index of the modified change that owns it."""
    added_functions = {c.name for c in changes if c.kind == FUNCTION_ADDED}
    modified = [(i, c) for i, c in enumerate(changes) if c.kind in _MODIFIED_KINDS]
    new_refs = {i: _new_reference_closure(c.name, new_usage, added_functions) for i, c in modified}
    old_refs = {i: old_usage[c.name].referenced_symbols if c.name in old_usage else set() for i, c in modified}

    owners = {}
    for index, change in enumerate(changes):
        if change.kind in _ADDITION_KINDS:
            refs = new_refs
        elif change.kind in _REMOVAL_KINDS:
            refs = old_refs
        else:
            continue
        owner = next((i for i, _ in modified if change.name in refs[i]), None)
        if owner is not None:
            owners[index] = owner
    return owners


def _signature_verdict(change: RawChange, old_usage, modified_names):
    old_signature, new_signature = change.old, change.new
    if old_signature.variadic or new_signature.variadic:
        return static_only("signature change of a variadic function")
    if change.name in old_usage[''].referenced_symbols:
        return static_only("old version's address is stored by a global initializer")
    callers = sorted(
        name for name, usage in old_usage.items()
        if name and name != change.name and change.name in usage.referenced_symbols
    )
    unmodified = [name for name in callers if name not in modified_names]
    if unmodified:
        return static_only(f"caller {unmodified[0]} is not modified by the patch")
    return dynamically_applicable()


def _classify_one(change: RawChange, old_unit, new_unit, old_usage, modified_names, taken):
    kind = change.kind
    if kind == FUNCTION_BODY_CHANGED:
        new_name = replacement_name(change.name, taken)
        taken.add(new_name)
        checks = (quiescence(change.name),)
        old_function = old_unit.function(change.name)
        return ClassifiedChange(
            kind=kind,
            old_name=change.name,
            new_name=new_name,
            strategy=REPLACE_FUNCTION,
            verdict=conditionally_applicable(checks),
            required_runtime_checks=checks,
            old_statement_headers=tuple(s.header for s in statement_units(old_function.body)),
            old_global_writes=tuple(sorted(transitive_usage(old_unit, [change.name]).writes)),
        )

    if kind == FUNCTION_SIGNATURE_CHANGED:
        new_name = replacement_name(change.name, taken)
        taken.add(new_name)
        return ClassifiedChange(kind, change.name, new_name, TREAT_AS_NEW_FUNCTION,
                                _signature_verdict(change, old_usage, modified_names))

    if kind == GLOBAL_TYPE_CHANGED:
        if not (isinstance(change.old, ScalarType) and isinstance(change.new, ScalarType)):
            return ClassifiedChange(kind, change.name, change.name, NO_UPDATE,
                                    static_only("only scalar globals can be retyped in place"))
        plan = plan_type_change(change.old, change.new)
        if plan.needs_value_check:
            checks = (value_fits(change.name, change.new.name),)
            verdict = conditionally_applicable(checks)
        else:
            checks = ()
            verdict = dynamically_applicable()
        return ClassifiedChange(kind, change.name, change.name, RETYPE_GLOBAL, verdict,
                                required_runtime_checks=checks, type_plan=plan)

    if kind == STRUCT_FIELD_ADDED:
        if not isinstance(change.new, ScalarType):
            return ClassifiedChange(kind, change.name, change.name, NO_UPDATE,
                                    static_only("only scalar fields can be added as shadow fields"))
        plan = plan_shadow_field(change.struct_name, change.field_name, change.new)
        return ClassifiedChange(kind, change.name, change.name, SHADOW_FIELD, dynamically_applicable(),
                                shadow_plan=plan)

    if kind in (STRUCT_FIELD_REMOVED, STRUCT_FIELD_REORDERED, STRUCT_FIELD_RETYPED):
        return ClassifiedChange(kind, change.name, change.name, NO_UPDATE, static_only(LAYOUT_CHANGE_REASON))

    if kind in _ADDITION_KINDS:
        return ClassifiedChange(kind, change.name, change.name, NO_UPDATE, static_only(UNREACHABLE_ADDITION))
    if kind in _REMOVAL_KINDS:
        return ClassifiedChange(kind, change.name, change.name, NO_UPDATE, static_only(UNREFERENCED_REMOVAL))

    raise ValueError(f"unknown change kind {kind!r}")


def classify(changes: List[RawChange], old_unit: TranslationUnit, new_unit: TranslationUnit) -> SemanticChangeSet:
    old_usage = unit_usage(old_unit)
    new_usage = unit_usage(new_unit)
    taken = _all_names(old_unit, new_unit)
    modified_names = {c.name for c in changes if c.kind in _MODIFIED_KINDS} \
        | {c.name for c in changes if c.kind == FUNCTION_REMOVED}

    owners = _assign_folds(changes, new_usage, old_usage)
    folded_into = {}
    for index, owner in owners.items():
        folded_into.setdefault(owner, []).append(changes[index])

    items = []
    for index, change in enumerate(changes):
        if index in owners:
            continue
        item = _classify_one(change, old_unit, new_unit, old_usage, modified_names, taken)
        item = dataclasses.replace(item, raw_changes=(change,) + tuple(folded_into.get(index, ())))
        if item.kind == FUNCTION_BODY_CHANGED:
            item = dataclasses.replace(item, stale_reads=tuple(check_stale_reads(item, new_unit)))
        logger.debug("%s %s -> %s", item.kind, item.old_name, item.verdict)
        items.append(item)
    return SemanticChangeSet(tuple(items))

"""
Plain-text audit view of a translation.

For every classified change the officer sees the verdict, the strategy,
the checks that will run at weave time, and the code before and after the
change with the changed lines marked ('-' only in the old text, '+' only
in the new one).
"""
import difflib
from typing import Optional

from csubset import TranslationUnit, unqualified
from classifier import SemanticChangeSet, ClassifiedChange

from .aspects import DynamicPatch
from .dsl_grammar import pointcut_text, action_text

RULE = "=" * 60
SUBRULE = "-" * 60


def _marked_views(old_text, new_text):
    old_lines = old_text.splitlines() if old_text else []
    new_lines = new_text.splitlines() if new_text else []
    old_marks = [' '] * len(old_lines)
    new_marks = [' '] * len(new_lines)
    matcher = difflib.SequenceMatcher(None, old_lines, new_lines, autojunk=False)
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag in ('replace', 'delete'):
            old_marks[i1:i2] = ['-'] * (i2 - i1)
        if tag in ('replace', 'insert'):
            new_marks[j1:j2] = ['+'] * (j2 - j1)
    before = [f"  {mark} {line}" for mark, line in zip(old_marks, old_lines)]
    after = [f"  {mark} {line}" for mark, line in zip(new_marks, new_lines)]
    return before, after


def _entity_text(unit: TranslationUnit, name):
    if unit is None:
        return ''
    entity = unit.function(name) or unit.global_var(name)
    if entity is None and name.startswith('struct '):
        entity = unit.struct(name[len('struct '):])
    if entity is None and '.' in name:
        entity = unit.struct(name.split('.', 1)[0])
    return unit.source_text(entity.span) if entity is not None else ''


def _before_after(lines, old_unit, new_unit, name):
    before, after = _marked_views(_entity_text(old_unit, name), _entity_text(new_unit, name))
    lines.append("  before:")
    lines.extend(before or ["    (absent)"])
    lines.append("  after:")
    lines.extend(after or ["    (absent)"])


def _item_lines(number, item: ClassifiedChange, old_unit, new_unit):
    lines = [SUBRULE, f"[{number}] {item.kind} {unqualified(item.old_name)}"]
    lines.append(f"  verdict:  {item.verdict}")
    if item.verdict.is_dynamic:
        lines.append(f"  strategy: {item.strategy}")
        if item.new_name != item.old_name:
            lines.append(f"  replaced by: {item.new_name}")
    else:
        lines.append(f"  reason:   {item.verdict.reason}")
    for check in item.required_runtime_checks:
        lines.append(f"  check:    {check}")
    if item.type_plan is not None:
        plan = item.type_plan
        lines.append(f"  retype:   {plan.old_type} -> {plan.new_type} ({plan.direction}"
                     f"{', value checked at weave time' if plan.needs_value_check else ''})")
    if item.shadow_plan is not None:
        plan = item.shadow_plan
        lines.append(f"  shadow:   {plan.struct_name}.{plan.field_name} {plan.field_type} "
                     f"default {plan.default}, keyed by instance address")
    for folded in item.folded:
        lines.append(f"  folded:   {folded.describe()}")
    for warning in item.stale_reads:
        lines.append(f"  WARNING {warning}")
    _before_after(lines, old_unit, new_unit, item.old_name)
    for folded in item.folded:
        lines.append(f"  {folded.describe()}:")
        _, after = _marked_views('', _entity_text(new_unit, folded.name))
        lines.extend(after or ["    (absent)"])
    return lines


def render_audit(change_set: SemanticChangeSet, old_unit: Optional[TranslationUnit],
                 new_unit: Optional[TranslationUnit], patch: Optional[DynamicPatch] = None, title=''):
    """The audit report for one file (or a whole translation when the units are None)."""
    lines = [RULE, f"Audit: {title or (new_unit.filename if new_unit else 'translation')}", RULE]
    dynamic = sum(1 for item in change_set if item.verdict.is_dynamic)
    lines.append(f"{len(change_set)} change(s): {dynamic} dynamic, {len(change_set) - dynamic} static only")
    for number, item in enumerate(change_set, start=1):
        lines.extend(_item_lines(number, item, old_unit, new_unit))
    if patch is not None:
        lines.append(SUBRULE)
        lines.append(f"Aspects ({len(patch.aspects)}):")
        for aspect in patch.aspects:
            lines.append(f"  {aspect.name}: {pointcut_text(aspect.pointcut)} -> "
                         f"{aspect.advice} {action_text(aspect.action)}    [{aspect.origin}]")
        for check in patch.checks:
            lines.append(f"  weave-time check: {check}")
    lines.append(RULE)
    return "\n".join(lines) + "\n"

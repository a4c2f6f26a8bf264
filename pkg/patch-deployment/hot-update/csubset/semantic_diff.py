"""
Structural comparison of two translation units.

Function bodies are compared as token streams, so comment and whitespace
edits never show up as changes.
"""
from dataclasses import dataclass
from typing import List, Optional

from .c_ast import SourceSpan, TranslationUnit

FUNCTION_ADDED = 'FunctionAdded'
FUNCTION_REMOVED = 'FunctionRemoved'
FUNCTION_BODY_CHANGED = 'FunctionBodyChanged'
FUNCTION_SIGNATURE_CHANGED = 'FunctionSignatureChanged'
GLOBAL_TYPE_CHANGED = 'GlobalTypeChanged'
GLOBAL_ADDED = 'GlobalAdded'
GLOBAL_REMOVED = 'GlobalRemoved'
STRUCT_FIELD_ADDED = 'StructFieldAdded'
STRUCT_FIELD_REMOVED = 'StructFieldRemoved'
STRUCT_FIELD_REORDERED = 'StructFieldReordered'
STRUCT_FIELD_RETYPED = 'StructFieldRetyped'

RAW_CHANGE_KINDS = (
    FUNCTION_ADDED, FUNCTION_REMOVED, FUNCTION_BODY_CHANGED, FUNCTION_SIGNATURE_CHANGED,
    GLOBAL_TYPE_CHANGED, GLOBAL_ADDED, GLOBAL_REMOVED,
    STRUCT_FIELD_ADDED, STRUCT_FIELD_REMOVED, STRUCT_FIELD_REORDERED, STRUCT_FIELD_RETYPED,
)


@dataclass(frozen=True)
class RawChange:
    kind: str
    name: str                           # symbol, or "struct.field" for struct changes
    old: object = None                  # old type / signature, when meaningful
    new: object = None
    old_span: Optional[SourceSpan] = None
    new_span: Optional[SourceSpan] = None
    struct_name: Optional[str] = None
    field_name: Optional[str] = None

    def describe(self):
        if self.old is not None and self.new is not None:
            return f"{self.kind}({self.name}: {self.old} -> {self.new})"
        return f"{self.kind}({self.name})"


def _diff_functions(old: TranslationUnit, new: TranslationUnit):
    changes = []
    for function in old.functions:
        replacement = new.function(function.name)
        if replacement is None:
            changes.append(RawChange(FUNCTION_REMOVED, function.name, old=function.signature,
                                     old_span=function.span))
        elif replacement.signature != function.signature:
            changes.append(RawChange(FUNCTION_SIGNATURE_CHANGED, function.name,
                                     old=function.signature, new=replacement.signature,
                                     old_span=function.span, new_span=replacement.span))
        elif replacement.body_tokens != function.body_tokens:
            changes.append(RawChange(FUNCTION_BODY_CHANGED, function.name,
                                     old_span=function.span, new_span=replacement.span))
    for function in new.functions:
        if old.function(function.name) is None:
            changes.append(RawChange(FUNCTION_ADDED, function.name, new=function.signature,
                                     new_span=function.span))
    return changes


def _diff_globals(old: TranslationUnit, new: TranslationUnit):
    changes = []
    for variable in old.globals:
        if variable.is_extern:
            continue
        replacement = new.global_var(variable.name)
        if replacement is None or replacement.is_extern:
            changes.append(RawChange(GLOBAL_REMOVED, variable.name, old=variable.var_type,
                                     old_span=variable.span))
        elif replacement.var_type != variable.var_type:
            changes.append(RawChange(GLOBAL_TYPE_CHANGED, variable.name,
                                     old=variable.var_type, new=replacement.var_type,
                                     old_span=variable.span, new_span=replacement.span))
    for variable in new.globals:
        if variable.is_extern:
            continue
        previous = old.global_var(variable.name)
        if previous is None or previous.is_extern:
            changes.append(RawChange(GLOBAL_ADDED, variable.name, new=variable.var_type,
                                     new_span=variable.span))
    return changes


def _diff_structs(old: TranslationUnit, new: TranslationUnit):
    changes = []
    for struct in old.structs:
        replacement = new.struct(struct.name)
        if replacement is None:
            # Only reachable if no remaining code names the struct; nothing to update.
            continue
        old_fields = dict(struct.fields)
        new_fields = dict(replacement.fields)

        def change(kind, field_name, old_type=None, new_type=None):
            return RawChange(kind, f"{struct.name}.{field_name}", old=old_type, new=new_type,
                             old_span=struct.span, new_span=replacement.span,
                             struct_name=struct.name, field_name=field_name)

        for field_name, field_type in struct.fields:
            if field_name not in new_fields:
                changes.append(change(STRUCT_FIELD_REMOVED, field_name, old_type=field_type))
            elif new_fields[field_name] != field_type:
                changes.append(change(STRUCT_FIELD_RETYPED, field_name, field_type, new_fields[field_name]))

        common_old = [n for n, _ in struct.fields if n in new_fields]
        common_new = [n for n, _ in replacement.fields if n in old_fields]
        if common_old != common_new:
            first_moved = next(a for a, b in zip(common_old, common_new) if a != b)
            changes.append(change(STRUCT_FIELD_REORDERED, first_moved))

        for field_name, field_type in replacement.fields:
            if field_name not in old_fields:
                changes.append(change(STRUCT_FIELD_ADDED, field_name, new_type=field_type))
    return changes


def semantic_diff(old: TranslationUnit, new: TranslationUnit) -> List[RawChange]:
    """
    Every difference that matters to a running program, in a fixed order:
    struct layout first, then globals, then functions (old source order,
    additions last).
    """
    return _diff_structs(old, new) + _diff_globals(old, new) + _diff_functions(old, new)


def changed_line_coverage(delta, old: TranslationUnit, new: TranslationUnit, changes):
    """
    Changed diff lines that no reported change accounts for.

    A removed line must fall inside the old span of a change, an added line
    inside the new span. Lines holding no tokens (blank, comment-only) are
    always covered. Returns a list of (side, line_number) with side 'old'
    or 'new'.
    """
    old_spans = [c.old_span for c in changes if c.old_span is not None]
    new_spans = [c.new_span for c in changes if c.new_span is not None]
    old_token_lines = old.token_lines()
    new_token_lines = new.token_lines()

    uncovered = []
    for hunk in delta.hunks:
        for line_number in hunk.changed_old_lines():
            if line_number in old_token_lines and not any(s.contains_line(line_number) for s in old_spans):
                uncovered.append(('old', line_number))
        for line_number in hunk.changed_new_lines():
            if line_number in new_token_lines and not any(s.contains_line(line_number) for s in new_spans):
                uncovered.append(('new', line_number))
    return uncovered

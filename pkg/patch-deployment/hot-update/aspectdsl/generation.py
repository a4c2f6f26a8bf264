"""
From classified changes to a dynamic patch.

Every replaced function f gets two aspects: one capturing direct calls and
one capturing reads of f's address, since an address taken anywhere may
be called later through a pointer. Replacement bodies are the new source
text of f under the name f_new.
"""
import dataclasses
import logging
import re
from typing import Dict, Iterable, List

from utilities import HotmendError
from csubset import TranslationUnit, FunctionDef, c_type_text, unqualified, FUNCTION_ADDED, GLOBAL_ADDED
from csubset.c_ast import Name
from classifier import (
    SemanticChangeSet, ClassifiedChange, REPLACE_FUNCTION, TREAT_AS_NEW_FUNCTION, RETYPE_GLOBAL, SHADOW_FIELD,
)

from .aspects import (
    Aspect, DynamicPatch, ReplacementFunction, GlobalDefinition, Declarations, CallSite, PointerRead,
    GlobalRead, GlobalWrite, FieldAccess, RedirectCall, SubstituteAddress, SubstituteValue, ShadowStorage,
    INSTEAD, retype_expression,
)

logger = logging.getLogger("hotmend.aspectdsl")


class GenerationRefused(HotmendError):
    def __init__(self, change: ClassifiedChange):
        self.change = change
        super().__init__(f"{change.kind} {change.old_name} cannot be applied to a running program: "
                         f"{change.verdict.reason}")


def aspect_ident(name):
    return re.sub(r"[^A-Za-z0-9_]", "_", name)


def _names_in(node):
    if isinstance(node, Name):
        yield node
        return
    if isinstance(node, list):
        for item in node:
            yield from _names_in(item)
    elif dataclasses.is_dataclass(node) and not isinstance(node, type):
        for f in dataclasses.fields(node):
            value = getattr(node, f.name)
            if isinstance(value, (list, tuple)) or dataclasses.is_dataclass(value):
                yield from _names_in(list(value) if isinstance(value, tuple) else value)


def replacement_source(unit: TranslationUnit, function: FunctionDef, new_ident, renames: Dict[str, str]):
    """Source text of `function` defined as `new_ident`, with calls to renamed functions rewritten."""
    span = function.span
    base = unit.tokens[span.start_token].offset
    edits = []
    tokens = unit.tokens[span.start_token:span.end_token]
    for index, token in enumerate(tokens[:-1]):
        if token.kind == 'id' and token.text == function.ident and tokens[index + 1].text == '(':
            edits.append((token.offset - base, len(token.text), new_ident))
            break
    for name in _names_in(function.body):
        if name.qualified in renames and name.offset >= 0:
            edits.append((name.offset - base, len(name.ident), renames[name.qualified]))

    text = unit.source_text(span)
    for offset, length, replacement in sorted(edits, reverse=True):
        text = text[:offset] + replacement + text[offset + length:]
    return text


def _prototype_text(name, signature, is_static):
    params = [c_type_text(p) for p in signature.params] or ['void']
    if signature.variadic:
        params.append('...')
    storage = 'static' if is_static else 'extern'
    return f"{storage} {c_type_text(signature.return_type)} {unqualified(name)}({', '.join(params)});"


def render_declarations(unit: TranslationUnit, skip: Iterable[str] = ()):
    """C declarations of every struct, global and function of `unit` except `skip`."""
    skip = set(skip)
    lines = []
    for struct in unit.structs:
        lines.append(f"struct {struct.name} {{")
        lines.extend(f"    {c_type_text(field_type, field_name)};" for field_name, field_type in struct.fields)
        lines.append("};")
    for variable in unit.globals:
        if variable.name in skip:
            continue
        storage = 'static' if variable.is_static else 'extern'
        lines.append(f"{storage} {c_type_text(variable.var_type, variable.ident)};")
    seen = set()
    entries = [(f.name, f.signature, f.is_static) for f in unit.functions] \
        + [(p.name, p.signature, p.is_static) for p in unit.prototypes]
    for name, signature, is_static in entries:
        if name in skip or name in seen:
            continue
        seen.add(name)
        lines.append(_prototype_text(name, signature, is_static))
    return "\n".join(lines)


def _item_contribution(item: ClassifiedChange, unit: TranslationUnit, file, renames):
    """(aspects, functions, globals) contributed by one classified change."""
    origin = f"{item.kind} {item.old_name}"
    ident = aspect_ident(item.old_name)
    aspects: List[Aspect] = []
    functions: List[ReplacementFunction] = []
    definitions: List[GlobalDefinition] = []

    for folded in item.folded:
        if folded.kind == FUNCTION_ADDED:
            added = unit.function(folded.name)
            functions.append(ReplacementFunction(folded.name, file,
                                                 replacement_source(unit, added, added.ident, renames)))
        elif folded.kind == GLOBAL_ADDED:
            variable = unit.global_var(folded.name)
            definitions.append(GlobalDefinition(folded.name, file, unit.source_text(variable.span)))

    if item.strategy == REPLACE_FUNCTION:
        function = unit.function(item.old_name)
        source = replacement_source(unit, function, unqualified(item.new_name), renames)
        functions.append(ReplacementFunction(item.new_name, file, source, replaces=item.old_name))
        aspects.append(Aspect(f"replace_call_{ident}", CallSite(item.old_name),
                              RedirectCall(item.new_name), INSTEAD, origin))
        aspects.append(Aspect(f"replace_pointer_{ident}", PointerRead(item.old_name),
                              SubstituteAddress(item.new_name), INSTEAD, origin))
    elif item.strategy == TREAT_AS_NEW_FUNCTION:
        function = unit.function(item.old_name)
        source = replacement_source(unit, function, unqualified(item.new_name), renames)
        functions.append(ReplacementFunction(item.new_name, file, source))
    elif item.strategy == RETYPE_GLOBAL:
        plan = item.type_plan
        expression = retype_expression(plan.old_type.name, plan.new_type.name, plan.needs_value_check)
        aspects.append(Aspect(f"retype_read_{ident}", GlobalRead(item.old_name),
                              SubstituteValue(expression), INSTEAD, origin))
        aspects.append(Aspect(f"retype_write_{ident}", GlobalWrite(item.old_name),
                              SubstituteValue(expression), INSTEAD, origin))
    elif item.strategy == SHADOW_FIELD:
        plan = item.shadow_plan
        aspects.append(Aspect(f"shadow_{aspect_ident(plan.struct_name)}_{aspect_ident(plan.field_name)}",
                              FieldAccess(plan.struct_name, plan.field_name),
                              ShadowStorage(plan.field_type.name, plan.default), INSTEAD, origin))
    return aspects, functions, definitions


def generate(change_set: SemanticChangeSet, new_unit: TranslationUnit, advisory='', description='') -> DynamicPatch:
    """
    Build the dynamic patch for one file's change set.

    Raises GenerationRefused naming the first change that needs a stopped program.
    """
    refused = change_set.static_only
    if refused:
        raise GenerationRefused(refused[0])

    file = new_unit.filename
    renames = {item.old_name: unqualified(item.new_name)
               for item in change_set if item.strategy == TREAT_AS_NEW_FUNCTION}
    skip = set(renames)
    aspects, functions, definitions, checks, notes = [], [], [], [], []
    for item in change_set:
        item_aspects, item_functions, item_globals = _item_contribution(item, new_unit, file, renames)
        aspects.extend(item_aspects)
        functions.extend(item_functions)
        definitions.extend(item_globals)
        skip.update(f.name for f in item_functions)
        skip.update(g.name for g in item_globals)
        checks.extend(item.required_runtime_checks)
        notes.extend(str(warning) for warning in item.stale_reads)
        logger.debug("%s %s: %d aspect(s), %d definition(s)", item.kind, item.old_name,
                     len(item_aspects), len(item_functions) + len(item_globals))

    declarations = ()
    if aspects or functions or definitions:
        declarations = (Declarations(file, render_declarations(new_unit, skip)),)
    return DynamicPatch(
        advisory=advisory,
        description=description,
        aspects=tuple(aspects),
        functions=tuple(functions),
        globals=tuple(definitions),
        declarations=declarations,
        checks=tuple(sorted(set(checks))),
        notes=tuple(notes),
    )


def merge_patches(patches: Iterable[DynamicPatch], advisory='', description='') -> DynamicPatch:
    """Concatenate per-file patches into one."""
    patches = list(patches)
    return DynamicPatch(
        advisory=advisory,
        description=description,
        aspects=tuple(a for p in patches for a in p.aspects),
        functions=tuple(f for p in patches for f in p.functions),
        globals=tuple(g for p in patches for g in p.globals),
        declarations=tuple(d for p in patches for d in p.declarations),
        checks=tuple(sorted({c for p in patches for c in p.checks})),
        notes=tuple(n for p in patches for n in p.notes),
    )

"""
Compilation of a dynamic patch into a self-contained bundle.

Compiling re-parses every code block against the declarations it ships
with, so a patch that compiles has no dangling references and no syntax
errors. Replacement code is lowered to target instructions; aspects become
weave directives. The bundle text is a versioned header plus canonical
JSON, and its id is a digest of that content.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

from jsonschema import Draft202012Validator

from utilities import HotmendError, canonical_text, read_text, write_text
from csubset import CParseError, parse_translation_unit
from targetvm import (
    LoweredFunction, GlobalSpec, StructLayout, LoweringError, lower_function, global_spec, struct_layout, convert_value,
)

from .aspects import (
    DynamicPatch, CallSite, PointerRead, GlobalRead, GlobalWrite, RedirectCall, SubstituteAddress,
    SubstituteValue, InvokeAlarm, ShadowStorage, parse_retype, validate_patch,
)

logger = logging.getLogger("hotmend.aspectdsl")

BUNDLE_HEADER = 'HOTMEND-BUNDLE v1'
BUNDLE_VERSION = 1

REDIRECT_CALLS = 'redirect_calls'
SUBSTITUTE_ADDRESS = 'substitute_address'
RETYPE_GLOBAL = 'retype_global'
SHADOW_FIELD = 'shadow_field'
ALARM = 'alarm'

DIRECTIVE_KINDS = (REDIRECT_CALLS, SUBSTITUTE_ADDRESS, RETYPE_GLOBAL, SHADOW_FIELD, ALARM)

BUNDLE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["manifest", "functions", "globals", "structs", "directives"],
    "additionalProperties": False,
    "properties": {
        "manifest": {
            "type": "object",
            "required": ["version", "patch_id", "advisory", "description", "required_symbols",
                         "required_fields", "runtime_checks"],
            "properties": {
                "version": {"const": BUNDLE_VERSION},
                "patch_id": {"type": "string", "pattern": "^hm-[0-9a-f]{12}$"},
                "advisory": {"type": "string"},
                "description": {"type": "string"},
                "required_symbols": {"type": "array", "items": {"type": "string"}},
                "required_fields": {"type": "array", "items": {
                    "type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2}},
                "runtime_checks": {"type": "array", "items": {
                    "type": "object", "required": ["kind", "symbol"],
                    "properties": {"kind": {"enum": ["quiescence", "value"]}, "symbol": {"type": "string"},
                                   "type": {"type": "string"}}}},
                "notes": {"type": "array", "items": {"type": "string"}},
            },
        },
        "functions": {"type": "array", "items": {
            "type": "object", "required": ["name", "params", "return_type", "registers", "code"]}},
        "globals": {"type": "array", "items": {"type": "object", "required": ["name", "type"]}},
        "structs": {"type": "array", "items": {"type": "object", "required": ["name", "fields"]}},
        "directives": {"type": "array", "items": {
            "type": "object", "required": ["kind", "aspect"],
            "properties": {"kind": {"enum": list(DIRECTIVE_KINDS)}}}},
    },
}


class CompileError(HotmendError):
    pass


@dataclass(frozen=True)
class PatchBundle:
    manifest: Dict
    functions: Tuple[LoweredFunction, ...] = ()
    globals: Tuple[GlobalSpec, ...] = ()
    structs: Tuple[StructLayout, ...] = ()
    directives: Tuple[Dict, ...] = ()

    @property
    def bundle_id(self):
        return self.manifest['patch_id']

    @property
    def required_symbols(self):
        return list(self.manifest['required_symbols'])

    @property
    def runtime_checks(self):
        return list(self.manifest['runtime_checks'])

    def directives_of(self, kind):
        return [d for d in self.directives if d['kind'] == kind]

    def replacements(self):
        """old symbol -> replacement symbol for every redirected or substituted function."""
        mapping = {}
        for directive in self.directives:
            if directive['kind'] in (REDIRECT_CALLS, SUBSTITUTE_ADDRESS):
                mapping[directive['symbol']] = directive['replacement']
        return mapping

    def to_plain(self):
        return {
            'manifest': self.manifest,
            'functions': [f.to_plain() for f in self.functions],
            'globals': [g.to_plain() for g in self.globals],
            'structs': [s.to_plain() for s in self.structs],
            'directives': list(self.directives),
        }


# ------------------------------------------------------------ compiling

def _file_units(patch: DynamicPatch):
    files = []
    for entry in list(patch.declarations) + list(patch.globals) + list(patch.functions):
        if entry.file not in files:
            files.append(entry.file)
    units = {}
    for file in files:
        parts = [d.source for d in patch.declarations if d.file == file]
        parts += [g.source for g in patch.globals if g.file == file]
        parts += [f.source for f in patch.functions if f.file == file]
        try:
            units[file] = parse_translation_unit("\n\n".join(parts) + "\n", file)
        except CParseError as e:
            raise CompileError(f"code for {file} does not compile: {e}") from None
    return units


def _default_value(type_name, text):
    try:
        value = float(text) if any(c in text for c in '.eE') and not text.lower().startswith('0x') else int(text, 0)
    except ValueError:
        raise CompileError(f"shadow default {text!r} is not a number") from None
    return convert_value(type_name, value)


def _directives(patch: DynamicPatch):
    directives = []
    retypes = {}
    for aspect in patch.aspects:
        pointcut, action = aspect.pointcut, aspect.action
        if isinstance(action, RedirectCall):
            directives.append({'kind': REDIRECT_CALLS, 'aspect': aspect.name,
                               'symbol': pointcut.symbol, 'replacement': action.symbol})
        elif isinstance(action, SubstituteAddress):
            directives.append({'kind': SUBSTITUTE_ADDRESS, 'aspect': aspect.name,
                               'symbol': pointcut.symbol, 'replacement': action.symbol})
        elif isinstance(action, SubstituteValue):
            old_type, new_type, checked = parse_retype(action.expression)
            directive = retypes.get(pointcut.symbol)
            side = 'read' if isinstance(pointcut, GlobalRead) else 'write'
            if directive is None:
                directive = {'kind': RETYPE_GLOBAL, 'aspect': aspect.name, 'symbol': pointcut.symbol,
                             'old_type': old_type, 'new_type': new_type, 'checked': checked, 'sides': []}
                retypes[pointcut.symbol] = directive
                directives.append(directive)
            elif (directive['old_type'], directive['new_type'], directive['checked']) != (old_type, new_type, checked):
                raise CompileError(f"aspects for {pointcut.symbol} disagree on its new type")
            if side in directive['sides']:
                raise CompileError(f"two {side} aspects for {pointcut.symbol}")
            directive['sides'].append(side)
        elif isinstance(action, ShadowStorage):
            directives.append({'kind': SHADOW_FIELD, 'aspect': aspect.name, 'struct': pointcut.struct_name,
                               'field': pointcut.field_name, 'type': action.type_name, 'default': action.default})
        elif isinstance(action, InvokeAlarm):
            directives.append({'kind': ALARM, 'aspect': aspect.name, 'within': pointcut.within,
                               'message': action.message})
    for symbol, directive in retypes.items():
        if sorted(directive['sides']) != ['read', 'write']:
            raise CompileError(f"retyping {symbol} needs both a get and a set aspect")
        directive['sides'] = sorted(directive['sides'])
    return directives


def _check_signatures(patch: DynamicPatch, units):
    for aspect in patch.aspects:
        if not isinstance(aspect.action, (RedirectCall, SubstituteAddress)):
            continue
        replacement = patch.function(aspect.action.symbol)
        unit = units[replacement.file]
        old_signature = unit.signature_of(aspect.pointcut.symbol)
        new_signature = unit.signature_of(replacement.name)
        if old_signature is None:
            raise CompileError(f"{aspect.pointcut.symbol} is not declared in the declarations for {replacement.file}")
        if old_signature != new_signature:
            raise CompileError(f"aspect {aspect.name}: {replacement.name} {new_signature} does not take the "
                               f"arguments of {aspect.pointcut.symbol} {old_signature}")


def _manifest_symbols(patch, functions: List[LoweredFunction], globals_: List[GlobalSpec]):
    defined = {f.name for f in functions} | {g.name for g in globals_}
    symbols = set()
    fields = set()
    for function in functions:
        for instruction in function.code:
            if instruction.symbol is not None and instruction.symbol not in defined:
                symbols.add(instruction.symbol)
            if instruction.op in ('LOADF', 'STOREF'):
                struct_index = 2 if instruction.op == 'LOADF' else 1
                fields.add((instruction.args[struct_index], instruction.args[struct_index + 1]))
    for spec in globals_:
        if isinstance(spec.initial, dict) and spec.initial['function'] not in defined:
            symbols.add(spec.initial['function'])
    for aspect in patch.aspects:
        pointcut = aspect.pointcut
        if isinstance(pointcut, (PointerRead, GlobalRead, GlobalWrite)) or \
                (isinstance(pointcut, CallSite) and not isinstance(aspect.action, InvokeAlarm)):
            symbols.add(pointcut.symbol)
    return sorted(symbols), sorted(list(f) for f in fields)


def compile_patch(patch: DynamicPatch) -> PatchBundle:
    """
    Check and lower a patch. Identical patches always give identical bundles.

    Raises PatchReferenceError for dangling references, CompileError for
    code that does not compile and LoweringError for constructs the target
    cannot run.
    """
    validate_patch(patch)
    units = _file_units(patch)
    _check_signatures(patch, units)

    shadow_fields = {}
    for aspect in patch.aspects:
        if isinstance(aspect.action, ShadowStorage):
            key = (aspect.pointcut.struct_name, aspect.pointcut.field_name)
            shadow_fields[key] = (aspect.action.type_name, _default_value(aspect.action.type_name,
                                                                          aspect.action.default))
    alarms = {}
    for aspect in patch.aspects:
        if isinstance(aspect.action, InvokeAlarm):
            alarms.setdefault(aspect.pointcut.within, []).append(aspect.action.message)

    functions = []
    for replacement in patch.functions:
        definition = units[replacement.file].function(replacement.name)
        if definition is None:
            raise CompileError(f"the code block of {replacement.name} does not define it")
        try:
            functions.append(lower_function(definition, shadow_fields, alarms.get(replacement.name, ())))
        except LoweringError as e:
            raise CompileError(str(e)) from None
    for file, unit in units.items():
        extra = {f.name for f in unit.functions} - {f.name for f in patch.functions}
        if extra:
            raise CompileError(f"{file}: code defines {sorted(extra)[0]} outside its own block")

    globals_ = []
    for definition in patch.globals:
        variable = units[definition.file].global_var(definition.name)
        if variable is None or variable.is_extern:
            raise CompileError(f"the code block of global {definition.name} does not define it")
        try:
            globals_.append(global_spec(variable))
        except LoweringError as e:
            raise CompileError(f"global {definition.name}: {e}") from None

    structs = {}
    for unit in units.values():
        for struct in unit.structs:
            layout = struct_layout(struct)
            if structs.setdefault(layout.name, layout) != layout:
                raise CompileError(f"struct {layout.name} is declared with two layouts")

    required_symbols, required_fields = _manifest_symbols(patch, functions, globals_)
    body = {
        'manifest': {
            'version': BUNDLE_VERSION,
            'advisory': patch.advisory,
            'description': patch.description,
            'required_symbols': required_symbols,
            'required_fields': required_fields,
            'runtime_checks': [
                {'kind': c.kind, 'symbol': c.symbol, **({'type': c.type_name} if c.type_name else {})}
                for c in patch.checks
            ],
            'notes': list(patch.notes),
        },
        'functions': [f.to_plain() for f in functions],
        'globals': [g.to_plain() for g in globals_],
        'structs': [structs[name].to_plain() for name in sorted(structs)],
        'directives': _directives(patch),
    }
    digest = hashlib.sha256(canonical_text(body).encode('utf-8')).hexdigest()
    body['manifest']['patch_id'] = f"hm-{digest[:12]}"
    bundle = bundle_from_plain(body)
    logger.info("compiled %s: %d function(s), %d directive(s), requires %s", bundle.bundle_id,
                len(bundle.functions), len(bundle.directives), ', '.join(required_symbols) or 'nothing')
    return bundle


# ----------------------------------------------------------- bundle text

def bundle_from_plain(plain) -> PatchBundle:
    errors = sorted(Draft202012Validator(BUNDLE_SCHEMA).iter_errors(plain), key=lambda e: list(e.path))
    if errors:
        where = '/'.join(str(p) for p in errors[0].path) or '<root>'
        raise CompileError(f"malformed bundle at {where}: {errors[0].message}")
    try:
        return PatchBundle(
            manifest=plain['manifest'],
            functions=tuple(LoweredFunction.from_plain(f) for f in plain['functions']),
            globals=tuple(GlobalSpec.from_plain(g) for g in plain['globals']),
            structs=tuple(StructLayout.from_plain(s) for s in plain['structs']),
            directives=tuple(plain['directives']),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CompileError(f"malformed bundle: {e}") from None


def render_bundle(bundle: PatchBundle) -> str:
    return BUNDLE_HEADER + "\n" + canonical_text(bundle.to_plain())


def bundle_bytes(bundle: PatchBundle) -> bytes:
    return render_bundle(bundle).encode('utf-8')


def load_bundle(text) -> PatchBundle:
    header, _, body = text.partition("\n")
    if header.strip() != BUNDLE_HEADER:
        raise CompileError(f"not a hotmend bundle (header {header.strip()!r})")
    try:
        plain = json.loads(body)
    except ValueError as e:
        raise CompileError(f"malformed bundle: {e}") from None
    return bundle_from_plain(plain)


def read_bundle(path) -> PatchBundle:
    return load_bundle(read_text(path))


def write_bundle(bundle: PatchBundle, path):
    write_text(render_bundle(bundle), path)

"""
Dynamic patch model.

A patch is a list of aspects (pointcut, action) plus the code they bring
along: replacement functions, new globals, and declarations of the target
symbols that code refers to. Everything is frozen so patches compare
structurally, which the DSL round trip relies on.
"""
import re
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

from utilities import HotmendError
from csubset import CParseError, parse_syntax, scalar_type, unqualified
from classifier import RuntimeCheck

BEFORE = 'before'
INSTEAD = 'instead'
ADVICE_KINDS = (BEFORE, INSTEAD)

MANUAL_ORIGIN = 'manual'


class PatchReferenceError(HotmendError):
    pass


# ---------------------------------------------------------------- pointcuts

@dataclass(frozen=True)
class CallSite:
    symbol: str
    within: Optional[str] = None


@dataclass(frozen=True)
class PointerRead:
    symbol: str


@dataclass(frozen=True)
class GlobalRead:
    symbol: str


@dataclass(frozen=True)
class GlobalWrite:
    symbol: str


@dataclass(frozen=True)
class FieldAccess:
    struct_name: str
    field_name: str


Pointcut = Union[CallSite, PointerRead, GlobalRead, GlobalWrite, FieldAccess]


# ------------------------------------------------------------------ actions

@dataclass(frozen=True)
class RedirectCall:
    symbol: str


@dataclass(frozen=True)
class SubstituteAddress:
    symbol: str


@dataclass(frozen=True)
class SubstituteValue:
    expression: str             # "int32 -> int64" or "int64 -> int32 checked"


@dataclass(frozen=True)
class InvokeAlarm:
    message: str


@dataclass(frozen=True)
class ShadowStorage:
    type_name: str
    default: str


Action = Union[RedirectCall, SubstituteAddress, SubstituteValue, InvokeAlarm, ShadowStorage]

_RETYPE = re.compile(r"^\s*(\w+)\s*->\s*(\w+)(\s+checked)?\s*$")


def retype_expression(old_type, new_type, checked):
    return f"{old_type} -> {new_type}{' checked' if checked else ''}"


def parse_retype(expression):
    """'int32 -> int64 checked' -> ('int32', 'int64', True)"""
    match = _RETYPE.match(expression)
    if not match:
        raise PatchReferenceError(f"malformed value substitution {expression!r}")
    old_type, new_type, checked = match.group(1), match.group(2), bool(match.group(3))
    for name in (old_type, new_type):
        try:
            scalar_type(name)
        except ValueError as e:
            raise PatchReferenceError(str(e)) from None
    return old_type, new_type, checked


# ---------------------------------------------------------------- the patch

@dataclass(frozen=True)
class Aspect:
    name: str
    pointcut: Pointcut
    action: Action
    advice: str = INSTEAD
    origin: str = MANUAL_ORIGIN


@dataclass(frozen=True)
class ReplacementFunction:
    name: str                   # qualified, e.g. input_userauth_info_response_new
    file: str
    source: str
    replaces: Optional[str] = None


@dataclass(frozen=True)
class GlobalDefinition:
    name: str
    file: str
    source: str


@dataclass(frozen=True)
class Declarations:
    file: str
    source: str


@dataclass(frozen=True)
class DynamicPatch:
    advisory: str = ''
    description: str = ''
    aspects: Tuple[Aspect, ...] = ()
    functions: Tuple[ReplacementFunction, ...] = ()
    globals: Tuple[GlobalDefinition, ...] = ()
    declarations: Tuple[Declarations, ...] = ()
    checks: Tuple[RuntimeCheck, ...] = ()
    notes: Tuple[str, ...] = field(default=())

    @property
    def is_empty(self):
        return not (self.aspects or self.functions or self.globals)

    def function(self, name) -> Optional[ReplacementFunction]:
        return next((f for f in self.functions if f.name == name), None)

    def replacement_for(self, old_name) -> Optional[ReplacementFunction]:
        return next((f for f in self.functions if f.replaces == old_name), None)

    def declarations_for(self, filename) -> Optional[Declarations]:
        return next((d for d in self.declarations if d.file == filename), None)


# --------------------------------------------------------------- validation

_ACTIONS_FOR = {
    CallSite: (RedirectCall, InvokeAlarm),
    PointerRead: (SubstituteAddress,),
    GlobalRead: (SubstituteValue,),
    GlobalWrite: (SubstituteValue,),
    FieldAccess: (ShadowStorage,),
}


def declared_symbols(patch: DynamicPatch):
    """Target-program symbols the declaration blocks name (functions and globals)."""
    names = set()
    for block in patch.declarations:
        try:
            unit = parse_syntax(block.source, block.file)
        except CParseError as e:
            raise PatchReferenceError(f"declarations for {block.file}: {e}") from None
        names.update(p.name for p in unit.prototypes)
        names.update(g.name for g in unit.globals)
        names.update(f"struct {s.name}" for s in unit.structs)
    return names


def validate_patch(patch: DynamicPatch):
    """
    Check the internal consistency of a patch: unique names, pointcut and
    action kinds that agree, and every symbol an action or pointcut names
    defined by the patch or declared as a target symbol.
    """
    seen = set()
    for aspect in patch.aspects:
        if aspect.name in seen:
            raise PatchReferenceError(f"duplicate aspect name {aspect.name!r}")
        seen.add(aspect.name)

    defined = {f.name for f in patch.functions} | {g.name for g in patch.globals}
    duplicate_code = len(defined) != len(patch.functions) + len(patch.globals)
    if duplicate_code:
        raise PatchReferenceError("a function or global is defined twice")
    known = defined | declared_symbols(patch)

    for aspect in patch.aspects:
        allowed = _ACTIONS_FOR[type(aspect.pointcut)]
        if not isinstance(aspect.action, allowed):
            raise PatchReferenceError(
                f"aspect {aspect.name}: {type(aspect.action).__name__} cannot act on a "
                f"{type(aspect.pointcut).__name__} pointcut")
        if aspect.advice not in ADVICE_KINDS:
            raise PatchReferenceError(f"aspect {aspect.name}: unknown advice {aspect.advice!r}")
        if isinstance(aspect.action, InvokeAlarm) != (aspect.advice == BEFORE):
            raise PatchReferenceError(f"aspect {aspect.name}: alarms run before, everything else instead")

        pointcut = aspect.pointcut
        if isinstance(pointcut, FieldAccess):
            if f"struct {pointcut.struct_name}" not in known:
                raise PatchReferenceError(f"aspect {aspect.name}: struct {pointcut.struct_name} is not declared")
        elif isinstance(aspect.action, InvokeAlarm):
            if pointcut.within is None or pointcut.within not in defined:
                raise PatchReferenceError(
                    f"aspect {aspect.name}: an alarm must sit within a function defined by the patch")
        elif pointcut.symbol not in known:
            raise PatchReferenceError(f"aspect {aspect.name}: undefined symbol {pointcut.symbol!r}")

        action = aspect.action
        if isinstance(action, (RedirectCall, SubstituteAddress)):
            if action.symbol not in defined:
                raise PatchReferenceError(
                    f"aspect {aspect.name}: replacement {action.symbol!r} is not defined by the patch")
            if isinstance(pointcut, CallSite) and pointcut.within is not None:
                raise PatchReferenceError(f"aspect {aspect.name}: redirections apply to every call site")
        elif isinstance(action, SubstituteValue):
            parse_retype(action.expression)
        elif isinstance(action, ShadowStorage):
            try:
                scalar_type(action.type_name)
            except ValueError as e:
                raise PatchReferenceError(f"aspect {aspect.name}: {e}") from None

    for function in patch.functions:
        if function.replaces is not None and function.replaces not in known:
            raise PatchReferenceError(
                f"function {unqualified(function.name)} replaces undeclared {function.replaces!r}")
    return patch

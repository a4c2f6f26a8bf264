"""
Verdict-carrying records produced by classification.

A SemanticChangeSet is what the security officer reads: one item per
dynamic update decision, each saying how the running program will be
updated and what has to hold at weave time for that to be safe.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

from utilities import HotmendError

from .type_plans import TypeChangePlan, ShadowFieldPlan

DYNAMICALLY_APPLICABLE = 'DynamicallyApplicable'
CONDITIONALLY_APPLICABLE = 'ConditionallyApplicable'
STATIC_ONLY = 'StaticOnly'

# strategies
REPLACE_FUNCTION = 'ReplaceFunction'
TREAT_AS_NEW_FUNCTION = 'TreatAsNewFunction'
RETYPE_GLOBAL = 'RetypeGlobal'
SHADOW_FIELD = 'ShadowField'
NO_UPDATE = 'None'

QUIESCENCE = 'quiescence'
VALUE_FITS = 'value'


class ClassificationError(HotmendError):
    pass


@dataclass(frozen=True, order=True)
class RuntimeCheck:
    kind: str               # quiescence | value
    symbol: str
    type_name: str = ''     # target type for value checks

    def __str__(self):
        if self.kind == QUIESCENCE:
            return f"Quiescence({self.symbol})"
        return f"ValueFits({self.symbol}, {self.type_name})"


def quiescence(symbol):
    return RuntimeCheck(QUIESCENCE, symbol)


def value_fits(symbol, type_name):
    return RuntimeCheck(VALUE_FITS, symbol, type_name)


@dataclass(frozen=True)
class Verdict:
    kind: str
    checks: Tuple[RuntimeCheck, ...] = ()
    reason: str = ''

    @property
    def is_dynamic(self):
        return self.kind != STATIC_ONLY

    def __str__(self):
        if self.kind == CONDITIONALLY_APPLICABLE:
            return f"{self.kind}({', '.join(str(c) for c in self.checks)})"
        if self.kind == STATIC_ONLY:
            return f"{self.kind}({self.reason})"
        return self.kind


def dynamically_applicable():
    return Verdict(DYNAMICALLY_APPLICABLE)


def conditionally_applicable(checks):
    return Verdict(CONDITIONALLY_APPLICABLE, tuple(sorted(set(checks))))


def static_only(reason):
    return Verdict(STATIC_ONLY, reason=reason)


@dataclass(frozen=True)
class StaleReadWarning:
    function: str           # the replaced function f
    global_name: str
    line: int               # line in the new source
    statement: str          # canonical text of the added statement

    def __str__(self):
        return (f"stale read: {self.function} (new version, line {self.line}) reads {self.global_name}, "
                f"which the old version writes: {self.statement}")


@dataclass(frozen=True)
class ClassifiedChange:
    kind: str
    old_name: str
    new_name: str
    strategy: str
    verdict: Verdict
    required_runtime_checks: Tuple[RuntimeCheck, ...] = ()
    type_plan: Optional[TypeChangePlan] = None
    shadow_plan: Optional[ShadowFieldPlan] = None
    raw_changes: Tuple = ()                     # the RawChange itself first, then folded ones
    stale_reads: Tuple[StaleReadWarning, ...] = ()
    # evidence kept for the stale-read check
    old_statement_headers: Tuple[str, ...] = ()
    old_global_writes: Tuple[str, ...] = ()

    @property
    def folded(self):
        return self.raw_changes[1:]

    def to_plain(self):
        plain = {
            'kind': self.kind,
            'old_name': self.old_name,
            'new_name': self.new_name,
            'strategy': self.strategy,
            'verdict': self.verdict.kind,
            'required_runtime_checks': [str(c) for c in self.required_runtime_checks],
            'folded': [c.describe() for c in self.folded],
            'stale_reads': [str(w) for w in self.stale_reads],
        }
        if self.verdict.reason:
            plain['reason'] = self.verdict.reason
        if self.type_plan is not None:
            plain['type_plan'] = self.type_plan.to_plain()
        if self.shadow_plan is not None:
            plain['shadow_plan'] = self.shadow_plan.to_plain()
        return plain


@dataclass(frozen=True)
class SemanticChangeSet:
    items: Tuple[ClassifiedChange, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def static_only(self):
        return [item for item in self.items if item.verdict.kind == STATIC_ONLY]

    @property
    def all_dynamic(self):
        return not self.static_only

    def by_old_name(self, name):
        return next((item for item in self.items if item.old_name == name), None)

    def to_plain(self):
        return {'items': [item.to_plain() for item in self.items]}

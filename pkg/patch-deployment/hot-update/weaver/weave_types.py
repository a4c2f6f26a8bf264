"""
Weave options, transactions and reports.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from utilities import HotmendError

WOVEN = 'Woven'
FAILED_SYMBOLS = 'FailedSymbols'
FAILED_VALUE_CHECK = 'FailedValueCheck'
TIMED_OUT_QUIESCENT = 'TimedOutQuiescent'
UNWOVEN = 'Unwoven'

OUTCOMES = (WOVEN, FAILED_SYMBOLS, FAILED_VALUE_CHECK, TIMED_OUT_QUIESCENT, UNWOVEN)
SUCCESS_OUTCOMES = (WOVEN, UNWOVEN)

RESOLVING = 'Resolving'
REWRITING = 'Rewriting'
ACTIVATED = 'Activated'
ROLLED_BACK = 'RolledBack'

TRAMPOLINE_PREFIX = '__tramp'


class WeaveError(HotmendError):
    pass


def trampoline_name(bundle_id, symbol):
    return f"{TRAMPOLINE_PREFIX}.{bundle_id}.{symbol}"


@dataclass(frozen=True)
class WeaveOptions:
    wait_for_quiescence: bool = False
    quiescence_timeout: float = 5.0         # seconds; simulated under a scheduler, wall clock otherwise
    collapse_trampolines: bool = False

    def __post_init__(self):
        if self.quiescence_timeout < 0:
            raise ValueError("quiescence_timeout must not be negative")

    def to_plain(self):
        return {
            'wait_for_quiescence': self.wait_for_quiescence,
            'quiescence_timeout': self.quiescence_timeout,
            'collapse_trampolines': self.collapse_trampolines,
        }

    @classmethod
    def from_plain(cls, plain):
        plain = plain or {}
        return cls(
            wait_for_quiescence=bool(plain.get('wait_for_quiescence', False)),
            quiescence_timeout=float(plain.get('quiescence_timeout', 5.0)),
            collapse_trampolines=bool(plain.get('collapse_trampolines', False)),
        )


@dataclass(frozen=True)
class RewrittenSite:
    address: int
    original: str           # operand before weaving
    redirected: str         # trampoline the site points to
    directive: str          # aspect name


@dataclass
class WeaveTransaction:
    bundle: object
    options: WeaveOptions
    phase: str = RESOLVING
    sites: Dict[str, List[RewrittenSite]] = field(default_factory=dict)
    trampolines: Dict[str, str] = field(default_factory=dict)          # old symbol -> trampoline
    functions: List[str] = field(default_factory=list)
    globals: List[str] = field(default_factory=list)
    structs: List[str] = field(default_factory=list)
    retyped: List[Tuple[str, str, str]] = field(default_factory=list)  # symbol, old tag, new tag
    collapsed: bool = False
    activated_at: Optional[int] = None

    @property
    def bundle_id(self):
        return self.bundle.bundle_id

    def all_sites(self):
        return [site for sites in self.sites.values() for site in sites]

    @property
    def sites_rewritten(self):
        return len(self.all_sites())


@dataclass(frozen=True)
class WeaveReport:
    bundle_id: str
    outcome: str
    sites_rewritten: int = 0
    elapsed_us: int = 0
    elapsed_steps: int = 0
    waited_steps: int = 0
    missing_symbols: Tuple[str, ...] = ()
    symbol: str = ''
    value: object = None
    target_type: str = ''
    activated_at: Optional[int] = None
    message: str = ''

    @property
    def ok(self):
        return self.outcome in SUCCESS_OUTCOMES

    @property
    def deferred(self):
        return self.waited_steps > 0

    def to_plain(self):
        plain = {
            'bundle_id': self.bundle_id,
            'outcome': self.outcome,
            'sites_rewritten': self.sites_rewritten,
            'elapsed_us': self.elapsed_us,
            'elapsed_steps': self.elapsed_steps,
            'waited_steps': self.waited_steps,
        }
        if self.missing_symbols:
            plain['missing_symbols'] = list(self.missing_symbols)
        if self.outcome in (FAILED_VALUE_CHECK, TIMED_OUT_QUIESCENT):
            plain['symbol'] = self.symbol
        if self.outcome == FAILED_VALUE_CHECK:
            plain['value'] = self.value
            plain['target_type'] = self.target_type
        if self.activated_at is not None:
            plain['activated_at'] = self.activated_at
        if self.message:
            plain['message'] = self.message
        return plain

    @classmethod
    def from_plain(cls, plain):
        return cls(
            bundle_id=plain['bundle_id'],
            outcome=plain['outcome'],
            sites_rewritten=plain.get('sites_rewritten', 0),
            elapsed_us=plain.get('elapsed_us', 0),
            elapsed_steps=plain.get('elapsed_steps', 0),
            waited_steps=plain.get('waited_steps', 0),
            missing_symbols=tuple(plain.get('missing_symbols', ())),
            symbol=plain.get('symbol', ''),
            value=plain.get('value'),
            target_type=plain.get('target_type', ''),
            activated_at=plain.get('activated_at'),
            message=plain.get('message', ''),
        )

    def __str__(self):
        if self.outcome == FAILED_SYMBOLS:
            detail = f"missing {', '.join(self.missing_symbols)}"
        elif self.outcome == FAILED_VALUE_CHECK:
            detail = f"{self.symbol} = {self.value} does not fit {self.target_type}"
        elif self.outcome == TIMED_OUT_QUIESCENT:
            detail = f"{self.symbol} never left the stack"
        else:
            detail = f"{self.sites_rewritten} site(s)"
            if self.deferred:
                detail += f", activation deferred {self.waited_steps} step(s)"
        return f"{self.outcome} {self.bundle_id}: {detail} in {self.elapsed_us} us"

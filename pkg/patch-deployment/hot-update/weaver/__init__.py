import sys
import os

# Add patch-deployment/ to the path so submodules can import utilities
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from .weave_types import (
    WeaveOptions,
    WeaveTransaction,
    WeaveReport,
    WeaveError,
    RewrittenSite,
    trampoline_name,
    WOVEN,
    FAILED_SYMBOLS,
    FAILED_VALUE_CHECK,
    TIMED_OUT_QUIESCENT,
    UNWOVEN,
    OUTCOMES,
    RESOLVING,
    REWRITING,
    ACTIVATED,
    ROLLED_BACK,
)
from .site_resolution import resolve_sites, invalidate as invalidate_sites
from .quiescence import await_quiescence, blocking_symbol
from .weave_transaction import weave, unweave, collect_retired, missing_symbols, woven_bundles, transaction_of
from .atomicity import AtomicityViolation, check_bundle_atomicity
from .weaver_driver import run_weaver_driver

__all__ = [
    'WeaveOptions',
    'WeaveTransaction',
    'WeaveReport',
    'WeaveError',
    'RewrittenSite',
    'trampoline_name',
    'WOVEN',
    'FAILED_SYMBOLS',
    'FAILED_VALUE_CHECK',
    'TIMED_OUT_QUIESCENT',
    'UNWOVEN',
    'OUTCOMES',
    'RESOLVING',
    'REWRITING',
    'ACTIVATED',
    'ROLLED_BACK',
    'resolve_sites',
    'invalidate_sites',
    'await_quiescence',
    'blocking_symbol',
    'weave',
    'unweave',
    'collect_retired',
    'missing_symbols',
    'woven_bundles',
    'transaction_of',
    'AtomicityViolation',
    'check_bundle_atomicity',
    'run_weaver_driver',
]

__version__ = '1.0.0'
__author__ = 'hotmend maintainers'

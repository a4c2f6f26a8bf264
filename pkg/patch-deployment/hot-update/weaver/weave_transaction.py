"""
Weaving and unweaving a bundle into a running target process.

A weave is one transaction. Every check that can fail on the target's
current contents runs before anything is mutated; the bundle's code is
then installed next to the program, every captured site is pointed at a
per-bundle trampoline, and a single guard flip under the process lock
makes all of the bundle's aspects visible at once. Until that flip every
trampoline falls through to the original function, so rolling back only
has to undo rewrites nobody could have observed.
"""
import logging
import time

from csubset import scalar_type
from targetvm import CodeBlock, FUNCTION_SYMBOL, VMError
from targetvm.instructions import CALL, LOADFN
from aspectdsl import PatchBundle, REDIRECT_CALLS, SUBSTITUTE_ADDRESS, RETYPE_DIRECTIVE, SHADOW_DIRECTIVE
from classifier import QUIESCENCE, VALUE_FITS

from .weave_types import (
    WeaveOptions, WeaveTransaction, WeaveReport, WeaveError, RewrittenSite, trampoline_name,
    WOVEN, FAILED_SYMBOLS, FAILED_VALUE_CHECK, TIMED_OUT_QUIESCENT, UNWOVEN,
    RESOLVING, REWRITING, ACTIVATED, ROLLED_BACK,
)
from .site_resolution import resolve_sites, invalidate
from .quiescence import poll_checkpoints, blocking_symbol

logger = logging.getLogger("hotmend.weaver")

_SITE_OPCODES = {REDIRECT_CALLS: (CALL,), SUBSTITUTE_ADDRESS: (LOADFN,)}


class _Stopwatch:
    def __init__(self, process):
        self.process = process
        self.started = time.perf_counter()
        self.start_clock = process.clock

    def report(self, bundle_id, outcome, **fields):
        return WeaveReport(
            bundle_id=bundle_id,
            outcome=outcome,
            elapsed_us=int((time.perf_counter() - self.started) * 1_000_000),
            elapsed_steps=self.process.clock - self.start_clock,
            **fields,
        )


def _yield(driver):
    if driver is not None:
        driver.yield_to_executors(1)


# ---------------------------------------------------------------- checks

def _held_symbols(process):
    held = {}
    for other in process.woven.values():
        for symbol in other.trampolines:
            held[symbol] = other.bundle_id
        for symbol, _, _ in other.retyped:
            held[symbol] = other.bundle_id
    return held


def missing_symbols(process, bundle: PatchBundle, adopted=()):
    """Everything that keeps `bundle` from being woven into `process`, as a list of descriptions."""
    missing = []
    with process.lock:
        for name in bundle.required_symbols:
            if not process.has_symbol(name):
                missing.append(name)
        for struct_name, field_name in bundle.manifest['required_fields']:
            layout = process.structs.get(struct_name)
            if layout is None or layout.field_tag(field_name) is None:
                missing.append(f"struct {struct_name}.{field_name}")
        for old in bundle.replacements():
            symbol = process.symbols.get(old)
            if symbol is not None and symbol.kind != FUNCTION_SYMBOL:
                missing.append(f"{old} (not a function)")
        for directive in bundle.directives_of(RETYPE_DIRECTIVE):
            cell = process.cells.get(directive['symbol'])
            if cell is not None and cell.type_tag != directive['old_type']:
                missing.append(f"{directive['symbol']} (is {cell.type_tag}, not {directive['old_type']})")
        for directive in bundle.directives_of(SHADOW_DIRECTIVE):
            if directive['struct'] not in process.structs:
                missing.append(f"struct {directive['struct']}")
        for name in [f.name for f in bundle.functions] + [g.name for g in bundle.globals]:
            if process.has_symbol(name) and name not in adopted:
                missing.append(f"{name} (already defined)")
        held = _held_symbols(process)
        targets = list(bundle.replacements()) + [d['symbol'] for d in bundle.directives_of(RETYPE_DIRECTIVE)]
        for symbol in targets:
            if symbol in held:
                missing.append(f"{symbol} (held by {held[symbol]})")
    return missing


def _value_checks(bundle: PatchBundle):
    checks = {(d['symbol'], d['new_type']) for d in bundle.directives_of(RETYPE_DIRECTIVE) if d['checked']}
    checks.update((c['symbol'], c['type']) for c in bundle.runtime_checks if c['kind'] == VALUE_FITS)
    return sorted(checks)


def _quiescence_symbols(bundle: PatchBundle):
    symbols = set(bundle.replacements())
    symbols.update(c['symbol'] for c in bundle.runtime_checks if c['kind'] == QUIESCENCE)
    return sorted(symbols)


def _failing_value(process, checks):
    for symbol, type_name in checks:
        value = process.read_global(symbol)
        if not scalar_type(type_name).represents(value):
            return symbol, value, type_name
    return None


# ------------------------------------------------------- install / undo

def _install(process, txn: WeaveTransaction, adopted):
    bundle = txn.bundle
    for layout in bundle.structs:
        if layout.name not in process.structs:
            process.install_struct(layout)
            txn.structs.append(layout.name)
    for function in bundle.functions:
        if function.name not in adopted:
            process.install_function(function, origin=bundle.bundle_id)
        txn.functions.append(function.name)
    for spec in bundle.globals:
        if spec.name not in adopted:
            process.define_global(spec, origin=bundle.bundle_id)
        txn.globals.append(spec.name)
    for old, new in bundle.replacements().items():
        name = trampoline_name(bundle.bundle_id, old)
        process.install_trampoline(name, bundle.bundle_id, new, old)
        txn.trampolines[old] = name


def _restore_sites(process, txn: WeaveTransaction, driver=None):
    restored = 0
    for site in reversed(txn.all_sites()):
        with process.lock:
            block = process.block_at(site.address)
            if block is None or process.instruction_at(site.address).symbol not in (site.redirected, site.original):
                continue
            process.rewrite_site(site.address, site.original)
            restored += 1
        _yield(driver)
    return restored


def _remove_trampolines(process, txn: WeaveTransaction):
    for name in txn.trampolines.values():
        if process.has_symbol(name):
            process.remove_code(name)


def _retire(process, txn: WeaveTransaction):
    entry = process.retired.setdefault(txn.bundle_id, {'functions': [], 'globals': [], 'structs': [], 'shadow': []})
    entry['functions'].extend(n for n in txn.functions if n not in entry['functions'])
    entry['globals'].extend(n for n in txn.globals if n not in entry['globals'])
    entry['structs'].extend(n for n in txn.structs if n not in entry['structs'])
    entry['shadow'].extend((d['struct'], d['field']) for d in txn.bundle.directives_of(SHADOW_DIRECTIVE))


def _rollback(process, txn: WeaveTransaction, adopted):
    """Undo an unactivated weave: the guard was never set, so no thread ever ran bundle code."""
    with process.lock:
        _restore_sites(process, txn)
        _remove_trampolines(process, txn)
        for name in txn.functions:
            if name not in adopted and process.has_symbol(name):
                process.remove_code(name)
        for name in txn.globals:
            if name not in adopted and name in process.cells:
                process.remove_global(name)
        for name in txn.structs:
            process.structs.pop(name, None)
        process.guards.pop(txn.bundle_id, None)
        if adopted:
            process.retired[txn.bundle_id] = _adopted_entry(txn, adopted)
        invalidate(process)
        txn.phase = ROLLED_BACK


def _adopted_entry(txn, adopted):
    return {
        'functions': [n for n in txn.functions if n in adopted],
        'globals': [n for n in txn.globals if n in adopted],
        'structs': [],
        'shadow': [],
    }


def collect_retired(process):
    """
    Remove unwoven replacement code that no frame or value refers to any
    more; globals and shadow tables of a bundle go with its last function.
    Returns the number of code blocks removed.
    """
    removed = 0
    with process.lock:
        for bundle_id in list(process.retired):
            entry = process.retired[bundle_id]
            for name in list(entry['functions']):
                if not process.has_symbol(name):
                    entry['functions'].remove(name)
                    continue
                block: CodeBlock = process.block_named(name)
                if not process.code_in_use(block.base):
                    process.remove_code(name)
                    entry['functions'].remove(name)
                    removed += 1
            if entry['functions']:
                continue
            for name in entry['globals']:
                if name in process.cells:
                    process.remove_global(name)
            for name in entry['structs']:
                process.structs.pop(name, None)
            shadowed = {(d['struct'], d['field']) for t in process.woven.values()
                        for d in t.bundle.directives_of(SHADOW_DIRECTIVE)}
            for key in entry['shadow']:
                if tuple(key) not in shadowed:
                    process.shadow.pop(tuple(key), None)
            process.guards.pop(bundle_id, None)
            del process.retired[bundle_id]
    if removed:
        logger.debug("%s: removed %d retired code block(s)", process.name, removed)
    return removed


# ------------------------------------------------------------------ weave

def weave(process, bundle: PatchBundle, options: WeaveOptions = None, driver=None) -> WeaveReport:
    """
    Weave `bundle` into `process`.

    `driver` is whatever runs the target meanwhile: a Scheduler (simulated
    time) or a RequestLoad (real executor threads). The weaver hands control
    to it between site rewrites and while waiting for quiescence.
    """
    options = options or WeaveOptions()
    with process.weave_lock:
        clock = _Stopwatch(process)
        bundle_id = bundle.bundle_id
        if bundle_id in process.woven:
            raise WeaveError(f"bundle {bundle_id} is already woven into {process.name}")
        collect_retired(process)

        txn = WeaveTransaction(bundle, options, phase=RESOLVING)
        with process.lock:
            retired = process.retired.pop(bundle_id, None)
            adopted = set(retired['functions'] + retired['globals']) if retired else set()
            missing = missing_symbols(process, bundle, adopted)
            if missing:
                if retired:
                    process.retired[bundle_id] = retired
                logger.warning("%s: cannot weave %s, missing %s", process.name, bundle_id, ', '.join(missing))
                return clock.report(bundle_id, FAILED_SYMBOLS, missing_symbols=tuple(missing))
            try:
                _install(process, txn, adopted)
            except VMError as e:
                _rollback(process, txn, adopted)
                raise WeaveError(f"cannot install {bundle_id}: {e}") from None

        txn.phase = REWRITING
        for directive in bundle.directives:
            opcodes = _SITE_OPCODES.get(directive['kind'])
            if opcodes is None:
                continue
            trampoline = txn.trampolines[directive['symbol']]
            rewritten = txn.sites.setdefault(directive['aspect'], [])
            for address in resolve_sites(process, directive['symbol'], opcodes):
                previous = process.rewrite_site(address, trampoline)
                rewritten.append(RewrittenSite(address, previous, trampoline, directive['aspect']))
                _yield(driver)
        logger.debug("%s: %s rewrote %d site(s)", process.name, bundle_id, txn.sites_rewritten)

        value_checks = _value_checks(bundle)
        wait_symbols = _quiescence_symbols(bundle) if options.wait_for_quiescence else []
        state = {'blocking': None, 'failure': None}
        retypes = bundle.directives_of(RETYPE_DIRECTIVE)

        def activate():
            failure = _failing_value(process, value_checks)
            if failure is not None:
                state['failure'] = failure
                return False
            state['blocking'] = blocking_symbol(process, wait_symbols)
            if state['blocking'] is not None:
                return None
            process.set_guard(bundle_id, True)
            for directive in retypes:
                process.retype_global(directive['symbol'], directive['new_type'])
                txn.retyped.append((directive['symbol'], directive['old_type'], directive['new_type']))
            txn.activated_at = process.clock
            txn.phase = ACTIVATED
            process.woven[bundle_id] = txn
            return True

        waited_from = process.clock
        activated = poll_checkpoints(process, activate, options.quiescence_timeout, driver)
        sites = txn.sites_rewritten

        if activated is not True:
            _rollback(process, txn, adopted)
            if state['failure'] is not None:
                symbol, value, type_name = state['failure']
                logger.warning("%s: %s rolled back, %s = %s does not fit %s", process.name, bundle_id,
                               symbol, value, type_name)
                return clock.report(bundle_id, FAILED_VALUE_CHECK, sites_rewritten=sites, symbol=symbol,
                                    value=value, target_type=type_name)
            logger.warning("%s: %s rolled back, %s stayed on the stack", process.name, bundle_id, state['blocking'])
            return clock.report(bundle_id, TIMED_OUT_QUIESCENT, sites_rewritten=sites,
                                symbol=state['blocking'] or '', waited_steps=process.clock - waited_from)

        waited = txn.activated_at - waited_from
        if options.collapse_trampolines:
            replacements = bundle.replacements()
            for site in txn.all_sites():
                process.rewrite_site(site.address, replacements[site.original])
                _yield(driver)
            txn.collapsed = True

        report = clock.report(bundle_id, WOVEN, sites_rewritten=sites, waited_steps=waited,
                              activated_at=txn.activated_at)
        logger.info("%s: %s", process.name, report)
        return report


def unweave(process, bundle_id, driver=None) -> WeaveReport:
    """
    Remove a woven bundle. The guard is cleared before any site is
    restored, so no thread enters replacement code once restoration starts;
    threads already inside it finish there and the code is collected later.
    """
    with process.weave_lock:
        clock = _Stopwatch(process)
        txn = process.woven.get(bundle_id)
        if txn is None:
            raise WeaveError(f"bundle {bundle_id} is not woven into {process.name}")

        if txn.collapsed:
            for site in txn.all_sites():
                process.rewrite_site(site.address, site.redirected)
                _yield(driver)
            txn.collapsed = False

        with process.lock:
            for symbol, old_tag, _ in txn.retyped:
                value = process.read_global(symbol)
                if not scalar_type(old_tag).represents(value):
                    logger.warning("%s: cannot unweave %s, %s = %s does not fit %s", process.name, bundle_id,
                                   symbol, value, old_tag)
                    return clock.report(bundle_id, FAILED_VALUE_CHECK, symbol=symbol, value=value,
                                        target_type=old_tag)
            process.set_guard(bundle_id, False)
            for symbol, old_tag, _ in reversed(txn.retyped):
                process.retype_global(symbol, old_tag)
            del process.woven[bundle_id]

        restored = _restore_sites(process, txn, driver)
        with process.lock:
            _remove_trampolines(process, txn)
            _retire(process, txn)
            invalidate(process)
            txn.phase = ROLLED_BACK
        collect_retired(process)

        report = clock.report(bundle_id, UNWOVEN, sites_rewritten=restored)
        logger.info("%s: %s", process.name, report)
        return report


def woven_bundles(process):
    with process.lock:
        return sorted(process.woven)


def transaction_of(process, bundle_id) -> WeaveTransaction:
    with process.lock:
        txn = process.woven.get(bundle_id)
        if txn is None:
            raise WeaveError(f"bundle {bundle_id} is not woven into {process.name}")
        return txn

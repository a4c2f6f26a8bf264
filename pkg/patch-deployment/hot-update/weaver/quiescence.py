"""
Waiting until functions have left every call stack.

The weaver never stops the target: it checks the stacks under the process
lock, and if a function is still active it releases the lock and lets the
executors run before looking again. Under the deterministic scheduler the
timeout is simulated time (one step is one microsecond); with real
executor threads, or with no driver at all, it is wall-clock time.
"""
import time
from typing import Callable, Iterable, Optional

from targetvm import Scheduler

US_PER_SECOND = 1_000_000
WALL_POLL_INTERVAL = 0.0005


def blocking_symbol(process, symbols: Iterable[str]) -> Optional[str]:
    """First of `symbols` with a frame on some live thread, or None."""
    with process.lock:
        return next((s for s in symbols if process.stack_contains(s)), None)


def poll_checkpoints(process, attempt: Callable, timeout, driver=None):
    """
    Call attempt() under the process lock at successive checkpoints until it
    returns something other than None; return that value, or None once
    `timeout` seconds have passed.
    """
    simulated = isinstance(driver, Scheduler)
    start_clock = process.clock
    deadline = time.monotonic() + timeout
    while True:
        with process.lock:
            result = attempt()
            if result is not None:
                return result
            if simulated and process.clock - start_clock >= timeout * US_PER_SECOND:
                return None
        if not simulated and time.monotonic() >= deadline:
            return None
        if driver is not None:
            driver.yield_to_executors(1)
        else:
            time.sleep(WALL_POLL_INTERVAL)


def await_quiescence(process, symbols, timeout=5.0, driver=None) -> bool:
    """True as soon as none of `symbols` is on any call stack; False on timeout."""
    if isinstance(symbols, str):
        symbols = (symbols,)
    symbols = tuple(symbols)
    return poll_checkpoints(process, lambda: True if blocking_symbol(process, symbols) is None else None,
                            timeout, driver) is not None

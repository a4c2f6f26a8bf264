"""
Trace checker for bundle atomicity.

The trace is cut into windows at every guard transition of the bundle.
Inside a window every resolution of a replaced function, whether by its
own name or through the bundle's trampoline, must land on the same side:
the replacement while the guard is on, the original while it is off.
"""
from dataclasses import dataclass
from typing import Iterable, List

from .weave_types import trampoline_name


@dataclass(frozen=True)
class AtomicityViolation:
    clock: int
    thread: int
    requested: str
    resolved: str
    guard_on: bool

    def __str__(self):
        expected = 'replacement' if self.guard_on else 'original'
        return (f"clock {self.clock}, thread {self.thread}: {self.requested} resolved to {self.resolved} "
                f"while the {expected} was due")


def check_bundle_atomicity(trace: Iterable, bundle) -> List[AtomicityViolation]:
    """All resolutions that break the window rule; empty when the trace is consistent."""
    replacements = bundle.replacements()
    old_names = set(replacements)
    new_names = set(replacements.values())
    requested_names = old_names | {trampoline_name(bundle.bundle_id, old) for old in old_names}

    guard_on = False
    violations = []
    for event in trace:
        if event.kind == 'guard' and event.symbol == bundle.bundle_id:
            guard_on = event.detail == 'on'
        elif event.kind == 'resolve' and event.symbol in requested_names:
            if event.detail not in old_names | new_names:
                continue
            if (event.detail in new_names) != guard_on:
                violations.append(AtomicityViolation(event.clock, event.thread, event.symbol, event.detail, guard_on))
    return violations

"""
Conservative def-use check for replaced functions.

Code added by a patch runs against data the old version already produced.
If an added statement of f' reads a global that old f writes, the value it
sees may have been written under the old semantics; the officer has to
confirm that this is harmless. Within the subset there is no aliasing of
globals, so the check may over-warn but never misses a read.
"""
from collections import Counter
from typing import List

from csubset import TranslationUnit, FunctionUsage, statement_units, statement_usage, transitive_usage, FUNCTION_BODY_CHANGED

from .change_set import ClassifiedChange, StaleReadWarning


def added_statement_units(old_headers, new_function):
    """Statement units of the new body that have no counterpart in the old body (multiset difference)."""
    remaining = Counter(old_headers)
    added = []
    for stmt in statement_units(new_function.body):
        if remaining[stmt.header] > 0:
            remaining[stmt.header] -= 1
        else:
            added.append(stmt)
    return added


def check_stale_reads(change: ClassifiedChange, new_unit: TranslationUnit) -> List[StaleReadWarning]:
    if change.kind != FUNCTION_BODY_CHANGED:
        return []
    new_function = new_unit.function(change.old_name)
    if new_function is None:
        return []

    written_by_old = set(change.old_global_writes)
    warnings = []
    warned = set()
    cache = {}
    for stmt in added_statement_units(change.old_statement_headers, new_function):
        usage = statement_usage(stmt, FunctionUsage(), recurse=False)
        reads = usage.reads | transitive_usage(new_unit, usage.calls, cache).reads
        for global_name in sorted(reads & written_by_old):
            if global_name in warned:
                continue
            warned.add(global_name)
            warnings.append(StaleReadWarning(change.old_name, global_name, stmt.line, stmt.header))
    return warnings

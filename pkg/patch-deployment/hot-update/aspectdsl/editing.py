"""
Audit-time edits of a generated patch.

The officer may attach an intrusion alarm to the failure path a patch
introduces: it is raised right before the replacement calls fatal(),
i.e. exactly when the new validity test rejects an input.
"""
import dataclasses

from csubset import CParseError, tokenize, unqualified

from .aspects import Aspect, DynamicPatch, CallSite, InvokeAlarm, PatchReferenceError, BEFORE, MANUAL_ORIGIN
from .generation import aspect_ident

FAILURE_PATH = 'fatal'


def _calls(source, callee):
    try:
        tokens = tokenize(source)
    except CParseError:
        return False
    return any(a.kind == 'id' and a.text == callee and b.text == '(' for a, b in zip(tokens, tokens[1:]))


def insert_alarm(patch: DynamicPatch, target, message, name=None) -> DynamicPatch:
    """
    Append an alarm aspect to the replacement of `target`; existing aspects
    are left untouched.
    """
    replacement = patch.replacement_for(target)
    if replacement is None:
        raise PatchReferenceError(f"{target} is not replaced by this patch")
    if not _calls(replacement.source, FAILURE_PATH):
        raise PatchReferenceError(f"{unqualified(replacement.name)} never calls {FAILURE_PATH}(); "
                                  "there is no failure path to watch")

    taken = {a.name for a in patch.aspects}
    base = name or f"alarm_{aspect_ident(target)}"
    name, counter = base, 2
    while name in taken:
        name = f"{base}_{counter}"
        counter += 1
    aspect = Aspect(name, CallSite(FAILURE_PATH, within=replacement.name), InvokeAlarm(message), BEFORE, MANUAL_ORIGIN)
    return dataclasses.replace(patch, aspects=patch.aspects + (aspect,))

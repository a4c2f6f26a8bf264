"""
Call-site resolution with a per-process cache.

The code store is scanned once into an index symbol -> sites; later
lookups reuse it until the process's code generation moves on, which
happens on every install, removal and site rewrite. Unweave drops the
index explicitly.
"""
import weakref
from collections import defaultdict

from targetvm import SITE_OPCODES, TRAMPOLINE_SYMBOL

_INDEXES = weakref.WeakKeyDictionary()


class SiteIndex:
    def __init__(self, process):
        self.generation = process.code_generation
        self.sites = defaultdict(list)          # symbol -> [(address, opcode)]
        for base in sorted(process.blocks):
            block = process.blocks[base]
            if block.kind == TRAMPOLINE_SYMBOL:
                continue
            for index, instruction in enumerate(block.code):
                if instruction.op in SITE_OPCODES:
                    self.sites[instruction.symbol].append((base + index, instruction.op))

    def current(self, process):
        return self.generation == process.code_generation

    def lookup(self, symbol, opcodes):
        return [address for address, op in self.sites.get(symbol, ()) if op in opcodes]


def resolve_sites(process, symbol, opcodes=SITE_OPCODES):
    """Addresses of every CALL/LOADFN naming `symbol`, outside trampolines."""
    with process.lock:
        index = _INDEXES.get(process)
        if index is None or not index.current(process):
            index = SiteIndex(process)
            _INDEXES[process] = index
        return index.lookup(symbol, opcodes)


def invalidate(process):
    _INDEXES.pop(process, None)
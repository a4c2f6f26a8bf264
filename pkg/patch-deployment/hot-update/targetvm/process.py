"""
A running target process: code store, symbol table, data, threads and an
execution trace.

Every mutation and every instruction step happens under one re-entrant
lock, so a single step observes the code store either entirely before or
entirely after any change made by the weaver. One step advances the
simulated clock by one microsecond.
"""
import logging
import re
import threading
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from utilities import HotmendError, canonical_text
from csubset import scalar_type

from .instructions import (
    Instruction, SITE_OPCODES, CONST, MOV, CAST, LOADG, STOREG, ADDR, LOADFN, CALL, ICALL, BINOP, UNOP,
    JUMP, BRANCHZ, RET, FATAL, ALARM, MARK, HALT, LOADF, STOREF, LOADSH, STORESH, GUARD,
)
from .lowering import lower_unit, convert_value, zero_value, SCALAR_TAGS
from .program_image import ProgramImage, LoweredFunction, GlobalSpec, StructLayout

logger = logging.getLogger("hotmend.targetvm")

READY = 'ready'
PARKED = 'parked'
DONE = 'done'
FATAL_EXIT = 'fatal'
ERROR = 'error'
HALTED = 'halted'

LIVE_STATUSES = (READY, PARKED)

FUNCTION_SYMBOL = 'function'
TRAMPOLINE_SYMBOL = 'trampoline'
GLOBAL_SYMBOL = 'global'

CODE_BASE = 0x1000
CODE_STRIDE = 0x1000
DATA_BASE = 0x100000
HEAP_BASE = 0x200000
MAX_CALL_DEPTH = 256

PROGRAM_ORIGIN = 'program'


class VMError(HotmendError):
    pass


class SiteError(VMError):
    pass


class _Fault(Exception):
    """Runtime fault of one thread; the thread dies, the process lives on."""


@dataclass
class Symbol:
    name: str
    kind: str
    address: int


@dataclass
class CodeBlock:
    base: int
    name: str
    kind: str
    code: List[Instruction]
    params: Tuple[str, ...] = ()
    return_type: str = 'void'
    registers: int = 0
    origin: str = PROGRAM_ORIGIN

    def contains(self, address):
        return self.base <= address < self.base + len(self.code)

    def to_plain(self):
        return {
            'base': self.base,
            'name': self.name,
            'kind': self.kind,
            'code': [instruction.to_plain() for instruction in self.code],
        }


@dataclass
class GlobalCell:
    name: str
    type_tag: str
    value: object
    address: int
    origin: str = PROGRAM_ORIGIN


@dataclass
class StructInstance:
    struct_name: str
    fields: Dict[str, object]


@dataclass
class Frame:
    symbol: str
    base: int
    pc: int
    regs: List[object]
    dst: Optional[int] = None


@dataclass
class ThreadState:
    tid: int
    entry: str
    frames: List[Frame] = field(default_factory=list)
    status: str = READY
    result: object = None
    message: str = ''
    request: Optional[str] = None

    def call_stack(self):
        return [(frame.symbol, frame.pc) for frame in self.frames]


@dataclass(frozen=True)
class TraceEvent:
    clock: int
    thread: int
    kind: str
    symbol: str = ''
    detail: str = ''

    def render(self):
        return f"{self.clock:>8} T{self.thread:<4} {self.kind:<8} {self.symbol} {self.detail}".rstrip()


_FORMAT_DIRECTIVE = re.compile(r"%(l{0,2}|z)([diuxXs%])")


def format_message(fmt, args):
    """printf-style formatting for the directives the subset uses."""
    values = iter(args)

    def substitute(match):
        conversion = match.group(2)
        if conversion == '%':
            return '%'
        value = next(values, '')
        if conversion == 's':
            return str(value)
        if conversion in 'xX':
            text = format(int(value) & 0xFFFFFFFFFFFFFFFF, 'x')
            return text.upper() if conversion == 'X' else text
        return str(int(value))

    return _FORMAT_DIRECTIVE.sub(substitute, str(fmt))


def _truncating_div(a, b):
    quotient = abs(a) // abs(b)
    return -quotient if (a < 0) != (b < 0) else quotient


def _binop(op, a, b):
    try:
        if op in ('/', '%'):
            if b == 0:
                raise _Fault("division by zero")
            if isinstance(a, int) and isinstance(b, int):
                quotient = _truncating_div(a, b)
                return quotient if op == '/' else a - b * quotient
            if op == '/':
                return a / b
            return a - b * int(a / b)
        if op == '+':
            return a + b
        if op == '-':
            return a - b
        if op == '*':
            return a * b
        if op == '<<':
            return a << b
        if op == '>>':
            return a >> b
        if op == '&':
            return a & b
        if op == '|':
            return a | b
        if op == '^':
            return a ^ b
        if op == '==':
            return int(a == b)
        if op == '!=':
            return int(a != b)
        if op == '<':
            return int(a < b)
        if op == '<=':
            return int(a <= b)
        if op == '>':
            return int(a > b)
        if op == '>=':
            return int(a >= b)
    except TypeError as e:
        raise _Fault(f"bad operands for {op!r}: {e}") from None
    raise _Fault(f"unknown operator {op!r}")


def _unop(op, a):
    try:
        if op == '-':
            return -a
        if op == '!':
            return int(not a)
        if op == '!!':
            return int(bool(a))
        if op == '~':
            return ~a
    except TypeError as e:
        raise _Fault(f"bad operand for {op!r}: {e}") from None
    raise _Fault(f"unknown operator {op!r}")


class TargetProcess:
    """
    Usage:
        process = load_program(parse_translation_unit(source, 'sshd.c'))
        tid = process.spawn_thread('serve_request', [1, 2])
        while process.step(tid) == READY:
            pass
    """

    def __init__(self, name='', trace_limit=None):
        self.name = name
        self.lock = threading.RLock()
        self.weave_lock = threading.Lock()
        self.clock = 0
        self.symbols: Dict[str, Symbol] = {}
        self.blocks: Dict[int, CodeBlock] = {}
        self.cells: Dict[str, GlobalCell] = {}
        self.structs: Dict[str, StructLayout] = {}
        self.heap: Dict[int, StructInstance] = {}
        self.shadow: Dict[Tuple[str, str], Dict[int, object]] = {}
        self.guards: Dict[str, bool] = {}
        self.threads: Dict[int, ThreadState] = {}
        self.trace = deque(maxlen=trace_limit)
        self.halted = False
        self.code_generation = 0
        self.outcomes = Counter()
        self.woven = {}          # bundle id -> active weave transaction
        self.retired = {}        # bundle id -> code and data kept until unreferenced
        self._next_tid = 1
        self._next_code = CODE_BASE
        self._next_data = DATA_BASE
        self._next_heap = HEAP_BASE

    # ----------------------------------------------------------- tracing

    def record(self, kind, thread=0, symbol='', detail=''):
        self.trace.append(TraceEvent(self.clock, thread, kind, symbol, str(detail)))

    def events(self, kind=None):
        with self.lock:
            return [e for e in self.trace if kind is None or e.kind == kind]

    def render_trace(self):
        with self.lock:
            return "\n".join(event.render() for event in self.trace) + ("\n" if self.trace else "")

    # ------------------------------------------------------ code and data

    def install_struct(self, layout: StructLayout):
        with self.lock:
            existing = self.structs.get(layout.name)
            if existing is not None and existing != layout:
                raise VMError(f"struct {layout.name} is already defined with another layout")
            self.structs[layout.name] = layout

    def _check_free(self, name):
        if name in self.symbols:
            raise VMError(f"symbol {name} is already defined")

    def _allocate_code(self, size):
        if size > CODE_STRIDE:
            raise VMError(f"code block of {size} instructions does not fit a {CODE_STRIDE:#x} slot")
        base = self._next_code
        self._next_code += CODE_STRIDE
        return base

    def install_function(self, function: LoweredFunction, origin=PROGRAM_ORIGIN) -> CodeBlock:
        with self.lock:
            self._check_free(function.name)
            base = self._allocate_code(len(function.code))
            block = CodeBlock(base, function.name, FUNCTION_SYMBOL, list(function.code), function.params,
                              function.return_type, function.registers, origin)
            self.blocks[base] = block
            self.symbols[function.name] = Symbol(function.name, FUNCTION_SYMBOL, base)
            self.code_generation += 1
            logger.debug("installed %s at %#x (%s)", function.name, base, origin)
            return block

    def install_trampoline(self, name, bundle_id, new_symbol, old_symbol) -> CodeBlock:
        with self.lock:
            self._check_free(name)
            old = self.blocks[self.resolve(old_symbol).address]
            base = self._allocate_code(1)
            block = CodeBlock(base, name, TRAMPOLINE_SYMBOL, [Instruction(GUARD, (bundle_id, new_symbol, old_symbol))],
                              old.params, old.return_type, 0, bundle_id)
            self.blocks[base] = block
            self.symbols[name] = Symbol(name, TRAMPOLINE_SYMBOL, base)
            self.code_generation += 1
            return block

    def remove_code(self, name):
        with self.lock:
            symbol = self.symbols.get(name)
            if symbol is None or symbol.kind == GLOBAL_SYMBOL:
                raise VMError(f"no code symbol {name}")
            del self.symbols[name]
            del self.blocks[symbol.address]
            self.code_generation += 1

    def define_global(self, spec: GlobalSpec, origin=PROGRAM_ORIGIN) -> GlobalCell:
        with self.lock:
            self._check_free(spec.name)
            tag = spec.type_tag
            if tag.startswith('struct ') and not tag.endswith('*'):
                value = self.allocate_instance(tag[len('struct '):])
            elif isinstance(spec.initial, dict):
                value = self.resolve(spec.initial['function']).address
            elif spec.initial is None:
                value = zero_value(tag)
            else:
                value = convert_value(tag, spec.initial)
            cell = GlobalCell(spec.name, tag, value, self._next_data, origin)
            self._next_data += 8
            self.cells[spec.name] = cell
            self.symbols[spec.name] = Symbol(spec.name, GLOBAL_SYMBOL, cell.address)
            return cell

    def remove_global(self, name):
        with self.lock:
            if name not in self.cells:
                raise VMError(f"no global {name}")
            del self.cells[name]
            del self.symbols[name]

    def allocate_instance(self, struct_name):
        with self.lock:
            layout = self.structs.get(struct_name)
            if layout is None:
                raise VMError(f"unknown struct {struct_name}")
            key = self._next_heap
            self._next_heap += 16
            self.heap[key] = StructInstance(struct_name, {f: zero_value(t) for f, t in layout.fields})
            return key

    def resolve(self, name) -> Symbol:
        symbol = self.symbols.get(name)
        if symbol is None:
            raise VMError(f"unresolved symbol {name}")
        return symbol

    def has_symbol(self, name):
        return name in self.symbols

    def function_symbols(self):
        return sorted(n for n, s in self.symbols.items() if s.kind == FUNCTION_SYMBOL)

    def global_symbols(self):
        return sorted(self.cells)

    def block_named(self, name) -> CodeBlock:
        return self.blocks[self.resolve(name).address]

    def block_at(self, address) -> Optional[CodeBlock]:
        if not isinstance(address, int) or address < CODE_BASE:
            return None
        block = self.blocks.get(address - (address - CODE_BASE) % CODE_STRIDE)
        return block if block is not None and block.contains(address) else None

    def instruction_at(self, address) -> Instruction:
        block = self.block_at(address)
        if block is None:
            raise SiteError(f"no instruction at {address:#x}")
        return block.code[address - block.base]

    def verify_references(self):
        """Every symbol an instruction names must resolve to a symbol of the right kind."""
        with self.lock:
            for block in self.blocks.values():
                for instruction in block.code:
                    name = instruction.symbol
                    if name is None:
                        continue
                    symbol = self.symbols.get(name)
                    wants_code = instruction.op in SITE_OPCODES
                    if symbol is None or (symbol.kind == GLOBAL_SYMBOL) == wants_code:
                        raise VMError(f"unresolved symbol {name} referenced by {block.name}")

    # ---------------------------------------------------------- globals

    def read_global(self, name):
        with self.lock:
            return self._cell(name).value

    def write_global(self, name, value):
        with self.lock:
            cell = self._cell(name)
            cell.value = convert_value(cell.type_tag, value)
            self.record('write', 0, name, cell.value)

    def retype_global(self, name, new_tag):
        """Reinterpret a scalar global under a new type; the caller has checked the value fits."""
        with self.lock:
            cell = self._cell(name)
            if cell.type_tag not in SCALAR_TAGS or new_tag not in SCALAR_TAGS:
                raise VMError(f"cannot retype {name} from {cell.type_tag} to {new_tag}")
            old_tag = cell.type_tag
            cell.value = scalar_type(new_tag).convert(cell.value)
            cell.type_tag = new_tag
            self.record('retype', 0, name, f"{old_tag} -> {new_tag}")

    def global_values(self):
        with self.lock:
            return {name: cell.value for name, cell in sorted(self.cells.items())}

    def _cell(self, name) -> GlobalCell:
        cell = self.cells.get(name)
        if cell is None:
            raise VMError(f"no global {name}")
        return cell

    # ------------------------------------------------------------ sites

    def sites_of(self, symbol, opcodes=SITE_OPCODES):
        """Addresses of every instruction in live non-trampoline code that names `symbol`."""
        with self.lock:
            sites = []
            for base in sorted(self.blocks):
                block = self.blocks[base]
                if block.kind == TRAMPOLINE_SYMBOL:
                    continue
                for index, instruction in enumerate(block.code):
                    if instruction.op in opcodes and instruction.symbol == symbol:
                        sites.append(base + index)
            return sites

    def rewrite_site(self, address, new_symbol):
        """Swap the symbol operand of one CALL or LOADFN; returns the previous operand."""
        with self.lock:
            block = self.block_at(address)
            if block is None:
                raise SiteError(f"no instruction at {address:#x}")
            index = address - block.base
            instruction = block.code[index]
            if not instruction.is_site:
                raise SiteError(f"{address:#x} in {block.name} is {instruction.op}, not a call site")
            target = self.symbols.get(new_symbol)
            if target is None or target.kind == GLOBAL_SYMBOL:
                raise SiteError(f"cannot point {address:#x} at {new_symbol}: not a code symbol")
            previous = instruction.symbol
            block.code[index] = instruction.with_symbol(new_symbol)
            self.code_generation += 1
            self.record('rewrite', 0, block.name, f"{address:#x} {previous} -> {new_symbol}")
            return previous

    def set_guard(self, bundle_id, active):
        with self.lock:
            self.guards[bundle_id] = bool(active)
            self.record('guard', 0, bundle_id, 'on' if active else 'off')

    # ------------------------------------------------------------ threads

    def spawn_thread(self, entry, args=(), request=None) -> int:
        with self.lock:
            tid = self._next_tid
            self._next_tid += 1
            thread = ThreadState(tid, entry, request=request)
            self.threads[tid] = thread
            self.record('spawn', tid, entry, request or '')
            try:
                target = self._dispatch(thread, entry)
                self._enter(thread, target, list(args), None)
            except _Fault as e:
                del self.threads[tid]
                raise VMError(f"cannot start {entry}: {e}") from None
            return tid

    def park(self, tid):
        with self.lock:
            thread = self.threads[tid]
            if thread.status == READY:
                thread.status = PARKED
                self.record('park', tid)

    def unpark(self, tid):
        with self.lock:
            thread = self.threads[tid]
            if thread.status == PARKED:
                thread.status = READY
                self.record('unpark', tid)

    def reap(self, tid):
        """Forget a finished thread; its trace events stay."""
        with self.lock:
            thread = self.threads.get(tid)
            if thread is not None and thread.status not in LIVE_STATUSES:
                del self.threads[tid]
            return thread

    def runnable(self):
        with self.lock:
            if self.halted:
                return []
            return sorted(tid for tid, t in self.threads.items() if t.status == READY)

    def live_threads(self):
        with self.lock:
            return [t for t in self.threads.values() if t.status in LIVE_STATUSES]

    def stack_contains(self, symbol):
        with self.lock:
            return any(frame.symbol == symbol for t in self.live_threads() for frame in t.frames)

    def code_in_use(self, base):
        """True while a frame executes the block at `base` or any value holds its address."""
        with self.lock:
            for thread in self.live_threads():
                for frame in thread.frames:
                    if frame.base == base or base in (v for v in frame.regs if isinstance(v, int)):
                        return True
            if any(cell.value == base for cell in self.cells.values() if isinstance(cell.value, int)):
                return True
            for instance in self.heap.values():
                if base in (v for v in instance.fields.values() if isinstance(v, int)):
                    return True
            return False

    def advance_clock(self, steps=1):
        with self.lock:
            self.clock += steps

    def step(self, tid):
        """Execute one instruction of thread `tid`. A thread that is not ready is left alone."""
        with self.lock:
            thread = self.threads.get(tid)
            if thread is None:
                raise VMError(f"no thread {tid}")
            if self.halted and thread.status in LIVE_STATUSES:
                thread.status = HALTED
            if thread.status != READY:
                return thread.status
            self.clock += 1
            frame = thread.frames[-1]
            try:
                block = self.blocks.get(frame.base)
                if block is None:
                    raise _Fault(f"code at {frame.base:#x} was removed")
                instruction = block.code[frame.pc]
                frame.pc += 1
                self._execute(thread, frame, instruction)
            except (_Fault, KeyError, IndexError) as e:
                thread.status = ERROR
                thread.message = str(e)
                thread.frames.clear()
                self.outcomes[ERROR] += 1
                self.record('error', tid, frame.symbol, e)
                logger.debug("thread %d failed in %s: %s", tid, frame.symbol, e)
            return thread.status

    def run_thread(self, tid, max_steps=1_000_000):
        for _ in range(max_steps):
            if self.step(tid) != READY:
                return self.threads[tid]
        raise VMError(f"thread {tid} did not finish within {max_steps} steps")

    def call(self, entry, args=(), max_steps=1_000_000) -> ThreadState:
        """Run `entry` to completion on a fresh thread (tests and the CLI use this)."""
        return self.run_thread(self.spawn_thread(entry, args), max_steps)

    # -------------------------------------------------------- execution

    def _dispatch(self, thread, name) -> CodeBlock:
        symbol = self.symbols.get(name)
        if symbol is None or symbol.kind == GLOBAL_SYMBOL:
            raise _Fault(f"unresolved code symbol {name}")
        block = self.blocks[symbol.address]
        if block.kind == TRAMPOLINE_SYMBOL:
            bundle_id, new_symbol, old_symbol = block.code[0].args
            chosen = new_symbol if self.guards.get(bundle_id) else old_symbol
            block = self.blocks[self.resolve(chosen).address]
        self.record('resolve', thread.tid, name, block.name)
        return block

    def _enter(self, thread, block: CodeBlock, args, dst):
        if len(args) != len(block.params):
            raise _Fault(f"{block.name} takes {len(block.params)} argument(s), {len(args)} given")
        if len(thread.frames) >= MAX_CALL_DEPTH:
            raise _Fault("call stack overflow")
        regs = [0] * max(block.registers, len(args))
        regs[:len(args)] = args
        thread.frames.append(Frame(block.name, block.base, 0, regs, dst))
        self.record('call', thread.tid, block.name)

    def _instance(self, key, struct_name) -> StructInstance:
        instance = self.heap.get(key) if isinstance(key, int) else None
        if instance is None:
            raise _Fault(f"invalid struct {struct_name} pointer {key!r}")
        if instance.struct_name != struct_name:
            raise _Fault(f"pointer {key:#x} is a struct {instance.struct_name}, not struct {struct_name}")
        return instance

    def _finish(self, thread, status, result=None, message=''):
        thread.status = status
        thread.result = result
        thread.message = message
        thread.frames.clear()
        self.outcomes[status] += 1

    def _execute(self, thread, frame, instruction):
        op, a = instruction.op, instruction.args
        regs = frame.regs
        tid = thread.tid
        if op == CONST:
            regs[a[0]] = a[1]
        elif op == MOV:
            regs[a[0]] = regs[a[1]]
        elif op == CAST:
            value = regs[a[1]]
            if not isinstance(value, (int, float)):
                raise _Fault(f"cannot convert {value!r} to {a[2]}")
            regs[a[0]] = scalar_type(a[2]).convert(value)
        elif op == LOADG:
            value = self.cells[a[1]].value
            regs[a[0]] = value
            self.record('read', tid, a[1], value)
        elif op == STOREG:
            cell = self.cells[a[0]]
            cell.value = convert_value(cell.type_tag, regs[a[1]])
            self.record('write', tid, a[0], cell.value)
        elif op == ADDR:
            regs[a[0]] = self.cells[a[1]].value
        elif op == LOADFN:
            regs[a[0]] = self._dispatch(thread, a[1]).base
        elif op == CALL:
            target = self._dispatch(thread, a[1])
            self._enter(thread, target, [regs[r] for r in a[2]], a[0])
        elif op == ICALL:
            pointer = regs[a[1]]
            target = self.blocks.get(pointer) if isinstance(pointer, int) else None
            if target is None:
                raise _Fault(f"call through invalid function pointer {pointer!r}")
            if target.kind == TRAMPOLINE_SYMBOL:
                target = self._dispatch(thread, target.name)
            self._enter(thread, target, [regs[r] for r in a[2]], a[0])
        elif op == BINOP:
            regs[a[0]] = _binop(a[1], regs[a[2]], regs[a[3]])
        elif op == UNOP:
            regs[a[0]] = _unop(a[1], regs[a[2]])
        elif op == JUMP:
            frame.pc = a[0]
        elif op == BRANCHZ:
            if not regs[a[0]]:
                frame.pc = a[1]
        elif op == RET:
            value = None if a[0] is None else regs[a[0]]
            thread.frames.pop()
            self.record('return', tid, frame.symbol, value)
            if thread.frames:
                if frame.dst is not None:
                    thread.frames[-1].regs[frame.dst] = value
            else:
                self._finish(thread, DONE, value)
        elif op == FATAL:
            message = format_message(regs[a[0]], [regs[r] for r in a[1]])
            self.record('fatal', tid, frame.symbol, message)
            logger.info("thread %d: fatal in %s: %s", tid, frame.symbol, message)
            self._finish(thread, FATAL_EXIT, message=message)
        elif op == ALARM:
            message = str(regs[a[0]])
            self.record('alarm', tid, frame.symbol, message)
            logger.warning("ALARM from %s: %s", frame.symbol, message)
        elif op == MARK:
            self.record('mark', tid, frame.symbol, regs[a[0]])
        elif op == HALT:
            self.halted = True
            self.record('halt', tid, frame.symbol)
            self._finish(thread, HALTED)
        elif op == LOADF:
            instance = self._instance(regs[a[1]], a[2])
            if a[3] not in instance.fields:
                raise _Fault(f"struct {a[2]} has no field {a[3]}")
            regs[a[0]] = instance.fields[a[3]]
        elif op == STOREF:
            instance = self._instance(regs[a[0]], a[1])
            tag = self.structs[a[1]].field_tag(a[2])
            if tag is None:
                raise _Fault(f"struct {a[1]} has no field {a[2]}")
            instance.fields[a[2]] = convert_value(tag, regs[a[3]])
        elif op == LOADSH:
            key = regs[a[1]]
            self._instance(key, a[2])
            table = self.shadow.setdefault((a[2], a[3]), {})
            if key not in table:
                table[key] = convert_value(a[4], a[5])
            regs[a[0]] = table[key]
        elif op == STORESH:
            key = regs[a[0]]
            self._instance(key, a[1])
            self.shadow.setdefault((a[1], a[2]), {})[key] = convert_value(a[3], regs[a[4]])
        elif op == GUARD:
            raise _Fault("trampoline executed as a function")
        else:
            raise _Fault(f"unknown opcode {op}")

    # ------------------------------------------------------------ images

    def image_bytes(self) -> bytes:
        """Canonical bytes of the code store; equal stores give equal bytes."""
        with self.lock:
            return canonical_text([self.blocks[base].to_plain() for base in sorted(self.blocks)]).encode('utf-8')

    def status(self):
        with self.lock:
            return {
                'name': self.name,
                'clock_us': self.clock,
                'functions': len(self.function_symbols()),
                'globals': len(self.cells),
                'live_threads': len(self.live_threads()),
                'outcomes': dict(self.outcomes),
                'active_bundles': sorted(self.woven),
                'retired_bundles': sorted(self.retired),
                'halted': self.halted,
            }


def load_program(source, name=None, trace_limit=None) -> TargetProcess:
    """Load a parsed program (or an already lowered image) into a fresh process."""
    image = source if isinstance(source, ProgramImage) else lower_unit(source, name)
    process = TargetProcess(name or image.name, trace_limit)
    for layout in image.structs:
        process.install_struct(layout)
    for function in image.functions:
        process.install_function(function)
    for spec in image.globals:
        process.define_global(spec)
    process.verify_references()
    logger.info("loaded %s: %d function(s), %d global(s)", process.name,
                len(image.functions), len(image.globals))
    return process

"""
Instruction set of the simulated target.

Registers are frame-local integers. Symbol operands are names resolved
through the process symbol table when the instruction is decoded, so a
CALL or LOADFN site can be retargeted by swapping its operand.
"""
from dataclasses import dataclass
from typing import Tuple

CONST = 'CONST'        # dst value
MOV = 'MOV'            # dst src
CAST = 'CAST'          # dst src type
LOADG = 'LOADG'        # dst symbol
STOREG = 'STOREG'      # symbol src
ADDR = 'ADDR'          # dst symbol            (instance key of a global struct)
LOADFN = 'LOADFN'      # dst symbol
CALL = 'CALL'          # dst symbol (args)     dst is None when the result is discarded
ICALL = 'ICALL'        # dst reg (args)
BINOP = 'BINOP'        # dst op a b
UNOP = 'UNOP'          # dst op a
JUMP = 'JUMP'          # target
BRANCHZ = 'BRANCHZ'    # reg target
RET = 'RET'            # src or None
FATAL = 'FATAL'        # fmt_reg (arg regs)
ALARM = 'ALARM'        # message_reg
MARK = 'MARK'          # label_reg
HALT = 'HALT'
LOADF = 'LOADF'        # dst key_reg struct field
STOREF = 'STOREF'      # key_reg struct field src
LOADSH = 'LOADSH'      # dst key_reg struct field type default
STORESH = 'STORESH'    # key_reg struct field type src
GUARD = 'GUARD'        # bundle new_symbol old_symbol   (trampoline bodies only)

OPCODES = (
    CONST, MOV, CAST, LOADG, STOREG, ADDR, LOADFN, CALL, ICALL, BINOP, UNOP, JUMP, BRANCHZ, RET,
    FATAL, ALARM, MARK, HALT, LOADF, STOREF, LOADSH, STORESH, GUARD,
)

SITE_OPCODES = (CALL, LOADFN)
SHADOW_OPCODES = (LOADSH, STORESH)

# Position of the symbol operand for instructions that name one.
_SYMBOL_OPERAND = {LOADG: 1, STOREG: 0, ADDR: 1, LOADFN: 1, CALL: 1}


@dataclass(frozen=True)
class Instruction:
    op: str
    args: Tuple = ()

    @property
    def is_site(self):
        return self.op in SITE_OPCODES

    @property
    def symbol(self):
        index = _SYMBOL_OPERAND.get(self.op)
        return None if index is None else self.args[index]

    def with_symbol(self, symbol):
        index = _SYMBOL_OPERAND[self.op]
        args = list(self.args)
        args[index] = symbol
        return Instruction(self.op, tuple(args))

    def to_plain(self):
        return [self.op] + [list(a) if isinstance(a, tuple) else a for a in self.args]

    @classmethod
    def from_plain(cls, plain):
        op, *args = plain
        if op not in OPCODES:
            raise ValueError(f"unknown opcode {op!r}")
        return cls(op, tuple(tuple(a) if isinstance(a, list) else a for a in args))

    def __str__(self):
        def operand(a):
            if isinstance(a, tuple):
                return '(' + ', '.join(operand(x) for x in a) + ')'
            if isinstance(a, int) and not isinstance(a, bool):
                return f"r{a}"
            return repr(a) if isinstance(a, str) and ' ' in a else str(a)
        if self.op == CONST:
            return f"CONST r{self.args[0]} {self.args[1]!r}"
        if self.op == JUMP:
            return f"JUMP @{self.args[0]}"
        if self.op == BRANCHZ:
            return f"BRANCHZ r{self.args[0]} @{self.args[1]}"
        return ' '.join([self.op] + [operand(a) for a in self.args])

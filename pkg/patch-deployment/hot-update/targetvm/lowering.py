"""
Lowering of resolved C-subset functions to target instructions.

Arithmetic runs on unbounded Python numbers; values are narrowed to their
declared C type wherever C stores them (locals, parameters, return values,
globals and fields). Shadow fields and alarm insertion only appear in
patch code: a program lowered without them never touches shadow storage.
"""
from typing import Dict, Iterable, Optional, Tuple

from utilities import HotmendError
from csubset import (
    ScalarType, StructRef, StringType, FunctionPointerType, TranslationUnit, FunctionDef,
    ALL_SCALAR_TYPES, scalar_type, PARAM, LOCAL, GLOBAL, FUNCTION, EXTERN,
)
from csubset.c_ast import (
    IntLiteral, FloatLiteral, StringLiteral, Name, Unary, Binary, Cast, AddressOf, Member, Call,
    Block, LocalDecl, Assign, ExprStmt, If, While, Return, Break, Continue,
)

from .instructions import (
    Instruction, CONST, MOV, CAST, LOADG, STOREG, ADDR, LOADFN, CALL, ICALL, BINOP, UNOP, JUMP,
    BRANCHZ, RET, FATAL, ALARM, MARK, HALT, LOADF, STOREF, LOADSH, STORESH,
)
from .program_image import LoweredFunction, GlobalSpec, StructLayout, ProgramImage

BUILTINS = ('fatal', 'trace_mark', 'ids_alarm', 'halt')

VOID = 'void'
STRING = 'string'
FNPTR = 'fnptr'
SCALAR_TAGS = frozenset(t.name for t in ALL_SCALAR_TYPES)

# (struct, field) -> (type tag, default value)
ShadowFields = Dict[Tuple[str, str], Tuple[str, object]]


class LoweringError(HotmendError):
    pass


def type_tag(c_type) -> str:
    if c_type is None:
        return VOID
    if isinstance(c_type, ScalarType):
        return c_type.name
    if isinstance(c_type, StructRef):
        return f"struct {c_type.name}{' *' if c_type.pointer else ''}"
    if isinstance(c_type, StringType):
        return STRING
    if isinstance(c_type, FunctionPointerType):
        return FNPTR
    raise TypeError(f"not a C type: {c_type!r}")


def convert_value(tag, value):
    """Store conversion for a typed cell; non-scalar cells hold values as is."""
    if tag in SCALAR_TAGS:
        return scalar_type(tag).convert(value)
    return value


def zero_value(tag):
    if tag in SCALAR_TAGS:
        return scalar_type(tag).convert(0)
    return None if tag == STRING else 0


class _FunctionLowering:
    def __init__(self, function: FunctionDef, shadow_fields: Optional[ShadowFields], alarms: Iterable[str]):
        self.function = function
        self.shadow_fields = shadow_fields or {}
        self.alarms = tuple(alarms)
        self.code = []
        self.labels = {}
        self.label_count = 0
        self.register_count = 0
        self.scopes = [{}]
        self.loops = []

    def error(self, message, line):
        raise LoweringError(f"{self.function.name}: line {line}: {message}")

    def register(self):
        self.register_count += 1
        return self.register_count - 1

    def new_label(self):
        self.label_count += 1
        return f"L{self.label_count}"

    def place(self, label):
        self.labels[label] = len(self.code)

    def emit(self, op, *args):
        self.code.append(Instruction(op, args))

    def local(self, ident, line):
        for scope in reversed(self.scopes):
            if ident in scope:
                return scope[ident]
        self.error(f"no register for {ident!r}", line)

    # --------------------------------------------------------------- entry

    def lower(self) -> LoweredFunction:
        function = self.function
        signature = function.signature
        if signature.variadic:
            self.error("variadic function definitions are not supported", function.span.start_line)
        param_tags = tuple(type_tag(p) for p in signature.params)
        for param_name, tag in zip(function.param_names, param_tags):
            reg = self.register()
            self.scopes[0][param_name] = reg
            if tag in SCALAR_TAGS:
                self.emit(CAST, reg, reg, tag)
        self.lower_block(function.body, new_scope=False)

        return_tag = type_tag(signature.return_type)
        if return_tag == VOID:
            self.emit(RET, None)
        else:
            reg = self.register()
            self.emit(CONST, reg, zero_value(return_tag))
            self.emit(RET, reg)
        return LoweredFunction(function.name, param_tags, return_tag, self.register_count, self.resolve_labels())

    def resolve_labels(self):
        resolved = []
        for instruction in self.code:
            if instruction.op == JUMP:
                instruction = Instruction(JUMP, (self.labels[instruction.args[0]],))
            elif instruction.op == BRANCHZ:
                instruction = Instruction(BRANCHZ, (instruction.args[0], self.labels[instruction.args[1]]))
            resolved.append(instruction)
        return tuple(resolved)

    # ---------------------------------------------------------- statements

    def lower_block(self, block: Block, new_scope=True):
        if new_scope:
            self.scopes.append({})
        for stmt in block.stmts:
            self.lower_stmt(stmt)
        if new_scope:
            self.scopes.pop()

    def lower_scoped(self, stmt):
        self.scopes.append({})
        self.lower_stmt(stmt)
        self.scopes.pop()

    def lower_stmt(self, stmt):
        if isinstance(stmt, Block):
            self.lower_block(stmt)
        elif isinstance(stmt, LocalDecl):
            tag = type_tag(stmt.var_type)
            if isinstance(stmt.var_type, StructRef) and not stmt.var_type.pointer:
                self.error("struct values as locals are not supported", stmt.line)
            reg = self.register()
            if stmt.init is not None:
                self.store_local(reg, self.expr(stmt.init), tag)
            else:
                self.emit(CONST, reg, zero_value(tag))
            self.scopes[-1][stmt.name] = reg
        elif isinstance(stmt, Assign):
            self.lower_assign(stmt)
        elif isinstance(stmt, ExprStmt):
            self.expr(stmt.expr)
        elif isinstance(stmt, If):
            otherwise, end = self.new_label(), self.new_label()
            self.emit(BRANCHZ, self.expr(stmt.cond), otherwise)
            self.lower_scoped(stmt.then)
            self.emit(JUMP, end)
            self.place(otherwise)
            if stmt.otherwise is not None:
                self.lower_scoped(stmt.otherwise)
            self.place(end)
        elif isinstance(stmt, While):
            top, end = self.new_label(), self.new_label()
            self.place(top)
            self.emit(BRANCHZ, self.expr(stmt.cond), end)
            self.loops.append((top, end))
            self.lower_scoped(stmt.body)
            self.loops.pop()
            self.emit(JUMP, top)
            self.place(end)
        elif isinstance(stmt, Return):
            self.lower_return(stmt)
        elif isinstance(stmt, Break):
            self.emit(JUMP, self.loops[-1][1])
        elif isinstance(stmt, Continue):
            self.emit(JUMP, self.loops[-1][0])
        else:
            self.error(f"unexpected statement {type(stmt).__name__}", getattr(stmt, 'line', 0))

    def lower_return(self, stmt: Return):
        tag = type_tag(self.function.signature.return_type)
        if stmt.value is None:
            if tag != VOID:
                self.error("return without a value in a non-void function", stmt.line)
            self.emit(RET, None)
            return
        value = self.expr(stmt.value)
        if tag in SCALAR_TAGS:
            narrowed = self.register()
            self.emit(CAST, narrowed, value, tag)
            value = narrowed
        self.emit(RET, value)

    def store_local(self, reg, value, tag):
        if tag in SCALAR_TAGS:
            self.emit(CAST, reg, value, tag)
        else:
            self.emit(MOV, reg, value)

    def lower_assign(self, stmt: Assign):
        target = stmt.target
        binop = None if stmt.op == '=' else stmt.op[:-1]
        if isinstance(target, Name) and target.kind in (PARAM, LOCAL):
            reg = self.local(target.ident, stmt.line)
            value = self.expr(stmt.value)
            if binop:
                value = self.binop(binop, reg, value)
            self.store_local(reg, value, type_tag(target.c_type))
        elif isinstance(target, Name) and target.kind == GLOBAL:
            if isinstance(target.c_type, StructRef) and not target.c_type.pointer:
                self.error("struct assignment is not supported", stmt.line)
            value = self.expr(stmt.value)
            if binop:
                current = self.register()
                self.emit(LOADG, current, target.qualified)
                value = self.binop(binop, current, value)
            self.emit(STOREG, target.qualified, value)
        elif isinstance(target, Member):
            key = self.member_key(target)
            value = self.expr(stmt.value)
            if binop:
                value = self.binop(binop, self.load_member(key, target), value)
            shadow = self.shadow_fields.get((target.struct_name, target.field_name))
            if shadow is not None:
                self.emit(STORESH, key, target.struct_name, target.field_name, shadow[0], value)
            else:
                self.emit(STOREF, key, target.struct_name, target.field_name, value)
        else:
            self.error("unsupported assignment target", stmt.line)

    # --------------------------------------------------------- expressions

    def binop(self, op, left, right):
        reg = self.register()
        self.emit(BINOP, reg, op, left, right)
        return reg

    def expr(self, e):
        if isinstance(e, (IntLiteral, FloatLiteral, StringLiteral)):
            reg = self.register()
            self.emit(CONST, reg, e.value)
            return reg
        if isinstance(e, Name):
            return self.lower_name(e)
        if isinstance(e, Unary):
            operand = self.expr(e.operand)
            reg = self.register()
            self.emit(UNOP, reg, e.op, operand)
            return reg
        if isinstance(e, Binary):
            if e.op in ('&&', '||'):
                return self.lower_logical(e)
            left = self.expr(e.left)
            return self.binop(e.op, left, self.expr(e.right))
        if isinstance(e, Cast):
            operand = self.expr(e.operand)
            tag = type_tag(e.target)
            if tag not in SCALAR_TAGS:
                return operand
            reg = self.register()
            self.emit(CAST, reg, operand, tag)
            return reg
        if isinstance(e, AddressOf):
            return self.lower_name(e.target, address=True)
        if isinstance(e, Member):
            return self.load_member(self.member_key(e), e)
        if isinstance(e, Call):
            return self.lower_call(e)
        self.error(f"unexpected expression {type(e).__name__}", getattr(e, 'line', 0))

    def lower_name(self, name: Name, address=False):
        if name.kind in (PARAM, LOCAL):
            return self.local(name.ident, name.line)
        reg = self.register()
        if name.kind == GLOBAL:
            if isinstance(name.c_type, StructRef) and not name.c_type.pointer:
                self.emit(ADDR, reg, name.qualified)
            else:
                self.emit(LOADG, reg, name.qualified)
            return reg
        if name.kind == EXTERN and name.ident in BUILTINS:
            self.error(f"builtin {name.ident!r} cannot be used as a value", name.line)
        self.emit(LOADFN, reg, name.qualified)
        return reg

    def lower_logical(self, e: Binary):
        reg = self.register()
        skip, end = self.new_label(), self.new_label()
        left = self.expr(e.left)
        self.emit(BRANCHZ, left, skip)
        if e.op == '&&':
            self.emit(UNOP, reg, '!!', self.expr(e.right))
            self.emit(JUMP, end)
            self.place(skip)
            self.emit(CONST, reg, 0)
        else:
            self.emit(CONST, reg, 1)
            self.emit(JUMP, end)
            self.place(skip)
            self.emit(UNOP, reg, '!!', self.expr(e.right))
        self.place(end)
        return reg

    def member_key(self, member: Member):
        base = member.base
        if isinstance(base, Name) and base.kind == GLOBAL and isinstance(base.c_type, StructRef) \
                and not base.c_type.pointer:
            reg = self.register()
            self.emit(ADDR, reg, base.qualified)
            return reg
        if isinstance(base, Member) and not member.arrow:
            self.error("nested struct values are not supported", member.line)
        return self.expr(base)

    def load_member(self, key, member: Member):
        reg = self.register()
        shadow = self.shadow_fields.get((member.struct_name, member.field_name))
        if shadow is not None:
            tag, default = shadow
            self.emit(LOADSH, reg, key, member.struct_name, member.field_name, tag, default)
        else:
            self.emit(LOADF, reg, key, member.struct_name, member.field_name)
        return reg

    def lower_call(self, call: Call):
        callee = call.callee
        if isinstance(callee, Name) and callee.kind == EXTERN and callee.ident in BUILTINS:
            return self.lower_builtin(callee.ident, call)
        if call.indirect:
            target = self.expr(callee)
            args = tuple(self.expr(a) for a in call.args)
            reg = self.register()
            self.emit(ICALL, reg, target, args)
            return reg
        args = tuple(self.expr(a) for a in call.args)
        reg = self.register()
        self.emit(CALL, reg, callee.qualified, args)
        return reg

    def lower_builtin(self, builtin, call: Call):
        args = [self.expr(a) for a in call.args]
        if builtin == 'fatal':
            for message in self.alarms:
                reg = self.register()
                self.emit(CONST, reg, message)
                self.emit(ALARM, reg)
            self.emit(FATAL, args[0], tuple(args[1:]))
        elif builtin == 'trace_mark':
            self.emit(MARK, args[0])
        elif builtin == 'ids_alarm':
            self.emit(ALARM, args[0])
        else:
            self.emit(HALT)
        return self.register()


def lower_function(function: FunctionDef, shadow_fields: Optional[ShadowFields] = None,
                   alarms: Iterable[str] = ()) -> LoweredFunction:
    """
    Lower one resolved function. `alarms` are raised just before every
    fatal() call of the function; `shadow_fields` route the listed member
    accesses to shadow storage.
    """
    return _FunctionLowering(function, shadow_fields, alarms).lower()


def _constant(expr, tag):
    if isinstance(expr, (IntLiteral, FloatLiteral, StringLiteral)):
        return expr.value
    if isinstance(expr, Unary) and expr.op in ('-', '~', '!'):
        value = _constant(expr.operand, tag)
        if expr.op == '-':
            return -value
        return ~value if expr.op == '~' else int(not value)
    if isinstance(expr, Cast):
        return convert_value(type_tag(expr.target), _constant(expr.operand, tag))
    if isinstance(expr, AddressOf):
        expr = expr.target
    if isinstance(expr, Name) and expr.kind in (FUNCTION, EXTERN):
        return {'function': expr.qualified}
    raise LoweringError(f"initializer is not a constant expression (line {getattr(expr, 'line', 0)})")


def global_spec(variable) -> GlobalSpec:
    tag = type_tag(variable.var_type)
    if variable.initializer is None:
        return GlobalSpec(variable.name, tag, None)
    value = _constant(variable.initializer, tag)
    if not isinstance(value, dict):
        value = convert_value(tag, value)
    return GlobalSpec(variable.name, tag, value)


def struct_layout(struct) -> StructLayout:
    return StructLayout(struct.name, tuple((name, type_tag(t)) for name, t in struct.fields))


def lower_unit(unit: TranslationUnit, name: Optional[str] = None) -> ProgramImage:
    """Lower a whole single-file program into a loadable image."""
    undefined = [g.name for g in unit.globals if g.is_extern]
    if undefined:
        raise LoweringError(f"global {undefined[0]} is declared extern but never defined")
    return ProgramImage(
        name=name or unit.filename,
        structs=tuple(struct_layout(s) for s in unit.structs),
        globals=tuple(global_spec(g) for g in unit.globals),
        functions=tuple(lower_function(f) for f in unit.functions),
    )

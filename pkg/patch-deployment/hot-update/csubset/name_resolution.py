"""
Second pass over a parsed unit: bind every identifier, qualify statics,
type member accesses, check call arity and compute address_taken.
"""
from .c_ast import (
    StructRef, StringType, FunctionPointerType, Signature, IntLiteral, FloatLiteral, StringLiteral,
    Name, Unary, Binary, Cast, AddressOf, Member, Call, Block, LocalDecl, Assign, ExprStmt, If, While,
    Return, TranslationUnit, qualified_name,
)
from .lexer import CParseError

PARAM = 'param'
LOCAL = 'local'
GLOBAL = 'global'
FUNCTION = 'function'
EXTERN = 'extern'

VARIABLE_KINDS = (PARAM, LOCAL, GLOBAL)

# Functions the host provides to every program (see targetvm lowering).
HOST_BUILTINS = {
    'fatal': Signature(None, (StringType(),), variadic=True),
    'trace_mark': Signature(None, (StringType(),)),
    'ids_alarm': Signature(None, (StringType(),)),
    'halt': Signature(None, ()),
}


class _Resolver:
    def __init__(self, unit: TranslationUnit):
        self.unit = unit
        self.filename = unit.filename
        self.file_scope = {}
        self.scopes = []
        self.address_taken = set()
        self.in_loop = 0

    def error(self, message, line):
        raise CParseError(message, line, 0, self.filename)

    # --------------------------------------------------------- file scope

    def build_file_scope(self):
        unit = self.unit
        defined = {f.name for f in unit.functions}
        for ident, signature in HOST_BUILTINS.items():
            self.file_scope[ident] = (ident, EXTERN, signature)
        seen_structs = set()
        for struct in unit.structs:
            if struct.name in seen_structs:
                self.error(f"redefinition of struct {struct.name!r}", struct.span.start_line)
            seen_structs.add(struct.name)

        for prototype in unit.prototypes:
            kind = FUNCTION if prototype.name in defined else EXTERN
            previous = self.file_scope.get(prototype.ident)
            if previous and previous[2] != prototype.signature:
                self.error(f"conflicting types for {prototype.ident!r}", prototype.span.start_line)
            self.file_scope[prototype.ident] = (prototype.name, kind, prototype.signature)
        for function in unit.functions:
            previous = self.file_scope.get(function.ident)
            if previous and previous[2] != function.signature:
                self.error(f"conflicting types for {function.ident!r}", function.span.start_line)
            self.file_scope[function.ident] = (function.name, FUNCTION, function.signature)
        for variable in unit.globals:
            if variable.ident in self.file_scope and isinstance(self.file_scope[variable.ident][2], Signature):
                self.error(f"{variable.ident!r} redeclared as a different kind of symbol", variable.span.start_line)
            self.check_type(variable.var_type, variable.span.start_line)
            self.file_scope[variable.ident] = (variable.name, GLOBAL, variable.var_type)

    def check_type(self, c_type, line):
        if isinstance(c_type, StructRef) and self.unit.struct(c_type.name) is None:
            self.error(f"unknown struct {c_type.name!r}", line)
        if isinstance(c_type, FunctionPointerType):
            for param in c_type.signature.params:
                self.check_type(param, line)

    def lookup(self, ident, line):
        for scope in reversed(self.scopes):
            if ident in scope:
                return scope[ident]
        if ident in self.file_scope:
            return self.file_scope[ident]
        self.error(f"undeclared identifier {ident!r}", line)

    # -------------------------------------------------------- expressions

    def bind(self, name: Name):
        qualified, kind, c_type = self.lookup(name.ident, name.line)
        name.qualified = qualified
        name.kind = kind
        name.c_type = FunctionPointerType(c_type) if isinstance(c_type, Signature) else c_type
        return name

    def expr_type(self, expr):
        if isinstance(expr, Name):
            return expr.c_type
        if isinstance(expr, Member):
            struct = self.unit.struct(expr.struct_name)
            return struct.field_type(expr.field_name) if struct else None
        if isinstance(expr, Call):
            signature = self.callee_signature(expr)
            return signature.return_type if signature else None
        if isinstance(expr, Cast):
            return expr.target
        if isinstance(expr, StringLiteral):
            return StringType()
        if isinstance(expr, AddressOf):
            return expr.target.c_type
        return None

    def callee_signature(self, call: Call):
        callee_type = self.expr_type(call.callee)
        if isinstance(callee_type, FunctionPointerType):
            return callee_type.signature
        return None

    def resolve_expr(self, expr, callee=False):
        if isinstance(expr, (IntLiteral, FloatLiteral, StringLiteral)):
            return
        if isinstance(expr, Name):
            self.bind(expr)
            if expr.kind == FUNCTION and not callee:
                self.address_taken.add(expr.qualified)
            return
        if isinstance(expr, Unary):
            self.resolve_expr(expr.operand)
        elif isinstance(expr, Binary):
            self.resolve_expr(expr.left)
            self.resolve_expr(expr.right)
        elif isinstance(expr, Cast):
            self.check_type(expr.target, expr.line)
            self.resolve_expr(expr.operand)
        elif isinstance(expr, AddressOf):
            target = self.bind(expr.target)
            if target.kind == FUNCTION:
                self.address_taken.add(target.qualified)
            elif target.kind == EXTERN:
                pass
            elif not (target.kind == GLOBAL and isinstance(target.c_type, StructRef)
                      and not target.c_type.pointer):
                self.error(f"cannot take the address of {expr.target.ident!r}", expr.line)
        elif isinstance(expr, Member):
            self.resolve_expr(expr.base)
            base_type = self.expr_type(expr.base)
            if not isinstance(base_type, StructRef):
                self.error(f"member access .{expr.field_name} on a non-struct value", expr.line)
            if base_type.pointer != expr.arrow:
                operator = '->' if base_type.pointer else '.'
                self.error(f"use {operator!r} to access {expr.field_name!r} of {base_type}", expr.line)
            struct = self.unit.struct(base_type.name)
            if struct is None or struct.field_type(expr.field_name) is None:
                self.error(f"struct {base_type.name} has no field {expr.field_name!r}", expr.line)
            expr.struct_name = base_type.name
        elif isinstance(expr, Call):
            self.resolve_call(expr)
        else:
            raise TypeError(f"unexpected expression node {expr!r}")

    def resolve_call(self, call: Call):
        callee = call.callee
        self.resolve_expr(callee, callee=isinstance(callee, Name))
        call.indirect = not (isinstance(callee, Name) and callee.kind in (FUNCTION, EXTERN))
        signature = self.callee_signature(call)
        if signature is None:
            self.error("called object is not a function", call.line)
        expected = len(signature.params)
        given = len(call.args)
        if given < expected or (given > expected and not signature.variadic):
            self.error(f"wrong number of arguments ({given} given, {expected} expected)", call.line)
        for arg in call.args:
            self.resolve_expr(arg)

    # --------------------------------------------------------- statements

    def resolve_function(self, function):
        self.scopes = [{}]
        for param_name, param_type in zip(function.param_names, function.signature.params):
            self.check_type(param_type, function.span.start_line)
            if param_name in self.scopes[0]:
                self.error(f"duplicate parameter {param_name!r}", function.span.start_line)
            self.scopes[0][param_name] = (param_name, PARAM, param_type)
        self.resolve_block(function.body, new_scope=False)
        self.scopes = []

    def resolve_block(self, block: Block, new_scope=True):
        if new_scope:
            self.scopes.append({})
        for stmt in block.stmts:
            self.resolve_stmt(stmt)
        if new_scope:
            self.scopes.pop()

    def resolve_stmt(self, stmt):
        if isinstance(stmt, Block):
            self.resolve_block(stmt)
        elif isinstance(stmt, LocalDecl):
            self.check_type(stmt.var_type, stmt.line)
            if stmt.init is not None:
                self.resolve_expr(stmt.init)
            if stmt.name in self.scopes[-1]:
                self.error(f"redeclaration of {stmt.name!r}", stmt.line)
            self.scopes[-1][stmt.name] = (stmt.name, LOCAL, stmt.var_type)
        elif isinstance(stmt, Assign):
            self.resolve_expr(stmt.target)
            if isinstance(stmt.target, Name) and stmt.target.kind not in VARIABLE_KINDS:
                self.error(f"cannot assign to function {stmt.target.ident!r}", stmt.line)
            self.resolve_expr(stmt.value)
        elif isinstance(stmt, ExprStmt):
            self.resolve_expr(stmt.expr)
        elif isinstance(stmt, If):
            self.resolve_expr(stmt.cond)
            self.resolve_scoped(stmt.then)
            if stmt.otherwise is not None:
                self.resolve_scoped(stmt.otherwise)
        elif isinstance(stmt, While):
            self.resolve_expr(stmt.cond)
            self.in_loop += 1
            self.resolve_scoped(stmt.body)
            self.in_loop -= 1
        elif isinstance(stmt, Return):
            if stmt.value is not None:
                self.resolve_expr(stmt.value)
        elif not self.in_loop:
            self.error(f"'{stmt.header.split()[0]}' outside a loop", stmt.line)

    def resolve_scoped(self, stmt):
        if isinstance(stmt, Block):
            self.resolve_block(stmt)
        else:
            self.scopes.append({})
            self.resolve_stmt(stmt)
            self.scopes.pop()

    # ---------------------------------------------------------------- run

    def run(self):
        self.build_file_scope()
        for variable in self.unit.globals:
            if variable.initializer is not None:
                self.scopes = []
                self.resolve_expr(variable.initializer)
        for function in self.unit.functions:
            self.resolve_function(function)
        for function in self.unit.functions:
            function.address_taken = function.name in self.address_taken
        return self.unit


def resolve_names(unit: TranslationUnit) -> TranslationUnit:
    return _Resolver(unit).run()


def qualify(unit: TranslationUnit, ident):
    """Qualified name of a file-scope identifier of `unit`, or None."""
    for candidate in (qualified_name(unit.filename, ident, True), ident):
        if unit.function(candidate) or unit.global_var(candidate) or unit.prototype(candidate):
            return candidate
    return None

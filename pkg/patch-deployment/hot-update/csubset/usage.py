"""
Def-use facts over resolved function bodies: which globals a function reads
and writes, whom it calls directly, whose address it takes and which struct
fields it touches. Aliasing-free: writes through struct pointers are field
accesses, never global writes.
"""
from dataclasses import dataclass, field
from typing import Set, Tuple

from .c_ast import (
    Name, Unary, Binary, Cast, AddressOf, Member, Call, Block, LocalDecl, Assign, ExprStmt, If, While,
    Return, FunctionDef, TranslationUnit,
)
from .name_resolution import GLOBAL, FUNCTION, EXTERN


@dataclass
class FunctionUsage:
    reads: Set[str] = field(default_factory=set)
    writes: Set[str] = field(default_factory=set)
    calls: Set[str] = field(default_factory=set)
    address_refs: Set[str] = field(default_factory=set)
    fields_read: Set[Tuple[str, str]] = field(default_factory=set)
    fields_written: Set[Tuple[str, str]] = field(default_factory=set)

    @property
    def referenced_symbols(self):
        return self.reads | self.writes | self.calls | self.address_refs

    def merge(self, other):
        self.reads |= other.reads
        self.writes |= other.writes
        self.calls |= other.calls
        self.address_refs |= other.address_refs
        self.fields_read |= other.fields_read
        self.fields_written |= other.fields_written


def _expression_usage(expr, usage: FunctionUsage, callee=False):
    if isinstance(expr, Name):
        if expr.kind == GLOBAL:
            usage.reads.add(expr.qualified)
        elif expr.kind in (FUNCTION, EXTERN) and not callee:
            usage.address_refs.add(expr.qualified)
    elif isinstance(expr, Unary):
        _expression_usage(expr.operand, usage)
    elif isinstance(expr, Binary):
        _expression_usage(expr.left, usage)
        _expression_usage(expr.right, usage)
    elif isinstance(expr, Cast):
        _expression_usage(expr.operand, usage)
    elif isinstance(expr, AddressOf):
        if expr.target.kind in (FUNCTION, EXTERN):
            usage.address_refs.add(expr.target.qualified)
        else:
            usage.reads.add(expr.target.qualified)
    elif isinstance(expr, Member):
        _expression_usage(expr.base, usage)
        usage.fields_read.add((expr.struct_name, expr.field_name))
    elif isinstance(expr, Call):
        if not expr.indirect and isinstance(expr.callee, Name):
            usage.calls.add(expr.callee.qualified)
        else:
            _expression_usage(expr.callee, usage)
        for arg in expr.args:
            _expression_usage(arg, usage)


def statement_usage(stmt, usage: FunctionUsage, recurse=True):
    """Usage of one statement. With recurse=False compound statements contribute their header only."""
    if isinstance(stmt, Block):
        if recurse:
            for inner in stmt.stmts:
                statement_usage(inner, usage)
    elif isinstance(stmt, LocalDecl):
        if stmt.init is not None:
            _expression_usage(stmt.init, usage)
    elif isinstance(stmt, Assign):
        target = stmt.target
        if isinstance(target, Name):
            if target.kind == GLOBAL:
                usage.writes.add(target.qualified)
                if stmt.op != '=':
                    usage.reads.add(target.qualified)
        else:
            _expression_usage(target.base, usage)
            usage.fields_written.add((target.struct_name, target.field_name))
            if stmt.op != '=':
                usage.fields_read.add((target.struct_name, target.field_name))
            root = _member_root(target)
            if isinstance(root, Name) and root.kind == GLOBAL:
                usage.writes.add(root.qualified)
        _expression_usage(stmt.value, usage)
    elif isinstance(stmt, ExprStmt):
        _expression_usage(stmt.expr, usage)
    elif isinstance(stmt, If):
        _expression_usage(stmt.cond, usage)
        if recurse:
            statement_usage(stmt.then, usage)
            if stmt.otherwise is not None:
                statement_usage(stmt.otherwise, usage)
    elif isinstance(stmt, While):
        _expression_usage(stmt.cond, usage)
        if recurse:
            statement_usage(stmt.body, usage)
    elif isinstance(stmt, Return):
        if stmt.value is not None:
            _expression_usage(stmt.value, usage)
    return usage


def _member_root(member):
    node = member
    while isinstance(node, Member):
        node = node.base
    return node


def function_usage(function: FunctionDef) -> FunctionUsage:
    return statement_usage(function.body, FunctionUsage())


def statement_units(stmt):
    """
    Flatten a body into its statement units in source order. A unit is a
    simple statement, or the header (condition) of an if/while.
    """
    units = []

    def visit(node):
        if isinstance(node, Block):
            for inner in node.stmts:
                visit(inner)
            return
        units.append(node)
        if isinstance(node, If):
            visit(node.then)
            if node.otherwise is not None:
                visit(node.otherwise)
        elif isinstance(node, While):
            visit(node.body)

    visit(stmt)
    return units


def transitive_usage(unit: TranslationUnit, names, cache=None) -> FunctionUsage:
    """Usage of the named functions merged with everything they reach by direct calls."""
    cache = {} if cache is None else cache
    total = FunctionUsage()
    pending = list(names)
    seen = set()
    while pending:
        name = pending.pop()
        if name in seen:
            continue
        seen.add(name)
        function = unit.function(name)
        if function is None:
            continue
        if name not in cache:
            cache[name] = function_usage(function)
        total.merge(cache[name])
        pending.extend(sorted(cache[name].calls))
    return total


def unit_usage(unit: TranslationUnit):
    """Usage per function name, including global initializers under the key ''."""
    usages = {function.name: function_usage(function) for function in unit.functions}
    initializers = FunctionUsage()
    for variable in unit.globals:
        if variable.initializer is not None:
            _expression_usage(variable.initializer, initializers)
    usages[''] = initializers
    return usages

"""
Recursive-descent parser for the C subset.

Accepted: struct definitions, scalar / struct / string / function-pointer
globals, function prototypes and definitions, block-scoped locals,
assignment (including compound forms and ++/--), arithmetic and comparison,
if/else, while, return, break, continue, direct calls, calls through
function-pointer variables, address-of, casts and struct member access.

Anything else that is valid C (typedef, union, enum, goto, switch, for, do,
arrays, bitfields, pointer dereference, the ternary operator, sizeof) is
rejected with UnsupportedConstructError so the operator can tell "not C"
from "not handled".
"""
from typing import List

from .c_ast import (
    SIGNED, UNSIGNED, FLOAT, ScalarType, StructRef, StringType, Signature, FunctionPointerType,
    SourceSpan, IntLiteral, FloatLiteral, StringLiteral, Name, Unary, Binary, Cast, AddressOf,
    Member, Call, Block, LocalDecl, Assign, ExprStmt, If, While, Return, Break, Continue,
    FunctionDef, GlobalVar, StructDef, Prototype, TranslationUnit, qualified_name,
)
from .lexer import CParseError, UnsupportedConstructError, Token, UNSUPPORTED_KEYWORDS, tokenize, unescape, int_literal_value

# Fixed-width and common system names that behave like scalar keywords.
TYPE_NAMES = {
    'int8_t': ScalarType(SIGNED, 8), 'int16_t': ScalarType(SIGNED, 16),
    'int32_t': ScalarType(SIGNED, 32), 'int64_t': ScalarType(SIGNED, 64),
    'uint8_t': ScalarType(UNSIGNED, 8), 'uint16_t': ScalarType(UNSIGNED, 16),
    'uint32_t': ScalarType(UNSIGNED, 32), 'uint64_t': ScalarType(UNSIGNED, 64),
    'u_char': ScalarType(UNSIGNED, 8), 'u_short': ScalarType(UNSIGNED, 16),
    'u_int': ScalarType(UNSIGNED, 32), 'u_int32_t': ScalarType(UNSIGNED, 32),
    'size_t': ScalarType(UNSIGNED, 64), 'ssize_t': ScalarType(SIGNED, 64),
}

_TYPE_KEYWORDS = {'void', 'char', 'short', 'int', 'long', 'float', 'double', 'signed', 'unsigned', 'const', 'struct'}

ASSIGNMENT_OPERATORS = ('=', '+=', '-=', '*=', '/=', '%=', '&=', '|=', '^=', '<<=', '>>=')

BINARY_PRECEDENCE = {
    '||': 1, '&&': 2, '|': 3, '^': 4, '&': 5,
    '==': 6, '!=': 6, '<': 7, '>': 7, '<=': 7, '>=': 7,
    '<<': 8, '>>': 8, '+': 9, '-': 9, '*': 10, '/': 10, '%': 10,
}

_VOID = object()


class _Parser:
    def __init__(self, tokens: List[Token], filename):
        self.tokens = tokens
        self.pos = 0
        self.filename = filename

    # ------------------------------------------------------------ helpers

    def peek(self, offset=0) -> Token:
        index = min(self.pos + offset, len(self.tokens) - 1)
        return self.tokens[index]

    def next(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind != 'eof':
            self.pos += 1
        return token

    def at(self, text, offset=0):
        token = self.peek(offset)
        return token.kind in ('punct', 'keyword') and token.text == text

    def accept(self, text):
        if self.at(text):
            return self.next()
        return None

    def expect(self, text):
        token = self.peek()
        if not self.at(text):
            found = 'end of input' if token.kind == 'eof' else repr(token.text)
            self.error(f"expected {text!r}, found {found}", token)
        return self.next()

    def expect_identifier(self):
        token = self.peek()
        if token.kind != 'id':
            found = 'end of input' if token.kind == 'eof' else repr(token.text)
            self.error(f"expected identifier, found {found}", token)
        return self.next()

    def error(self, message, token=None):
        token = token or self.peek()
        raise CParseError(message, token.line, token.column, self.filename)

    def unsupported(self, what, token=None):
        token = token or self.peek()
        raise UnsupportedConstructError(f"{what} is outside the supported C subset",
                                        token.line, token.column, self.filename)

    def reject_unsupported_keyword(self):
        token = self.peek()
        if token.kind == 'keyword' and token.text in UNSUPPORTED_KEYWORDS:
            self.unsupported(f"'{token.text}'", token)

    def text_between(self, start, end):
        return ' '.join(t.text for t in self.tokens[start:end])

    def starts_type(self, offset=0):
        token = self.peek(offset)
        if token.kind == 'keyword':
            return token.text in _TYPE_KEYWORDS
        return token.kind == 'id' and token.text in TYPE_NAMES

    # -------------------------------------------------------------- types

    def parse_type(self):
        """Type specifier plus pointer stars. Returns a CType, or _VOID for plain void."""
        first = self.peek()
        words = []
        struct_name = None
        named = None
        while True:
            self.reject_unsupported_keyword()
            token = self.peek()
            if token.kind == 'keyword' and token.text == 'struct':
                self.next()
                struct_name = self.expect_identifier().text
                if self.at('{'):
                    self.unsupported("a struct definition inside a declaration")
            elif token.kind == 'keyword' and token.text in _TYPE_KEYWORDS:
                words.append(self.next().text)
            elif token.kind == 'id' and token.text in TYPE_NAMES and named is None and not words:
                named = TYPE_NAMES[self.next().text]
            else:
                break

        stars = 0
        while self.accept('*'):
            stars += 1
            while self.accept('const'):
                pass

        words = [w for w in words if w != 'const']
        if struct_name is not None:
            if words or named:
                self.error("conflicting type specifiers", first)
            if stars > 1:
                self.unsupported("pointer to pointer", first)
            return StructRef(struct_name, pointer=stars == 1)
        if named is not None:
            if words:
                self.error("conflicting type specifiers", first)
            base = named
        elif not words:
            self.error("expected a type", first)
        else:
            base = self._keyword_type(words, first)

        if stars == 0:
            return base
        if stars == 1 and isinstance(base, ScalarType) and base.width == 8 and base.numeric_class != FLOAT:
            return StringType()
        if base is _VOID:
            self.unsupported("'void *'", first)
        self.unsupported("pointer to scalar (use a struct)", first)

    def _keyword_type(self, words, token):
        if 'void' in words:
            if len(words) > 1:
                self.error("conflicting type specifiers", token)
            return _VOID
        unsigned = 'unsigned' in words
        core = [w for w in words if w not in ('signed', 'unsigned')]
        longs = core.count('long')
        if 'double' in core:
            if longs:
                self.unsupported("'long double'", token)
            return ScalarType(FLOAT, 64)
        if 'float' in core:
            return ScalarType(FLOAT, 32)
        numeric_class = UNSIGNED if unsigned else SIGNED
        if 'char' in core:
            return ScalarType(numeric_class, 8)
        if 'short' in core:
            return ScalarType(numeric_class, 16)
        if longs:
            return ScalarType(numeric_class, 64)
        return ScalarType(numeric_class, 32)

    def parse_declarator(self, base, allow_anonymous=False):
        """Returns (name_token_or_None, ctype). Handles `(*name)(params)` function pointers."""
        if self.at('(') and self.at('*', 1):
            self.next()
            self.next()
            name = self.expect_identifier() if not (allow_anonymous and self.at(')')) else None
            self.expect(')')
            self.expect('(')
            params, _, variadic = self.parse_params(require_names=False)
            signature = Signature(None if base is _VOID else base, tuple(params), variadic)
            return name, FunctionPointerType(signature)
        if self.peek().kind == 'id':
            name = self.next()
        elif allow_anonymous:
            name = None
        else:
            name = self.expect_identifier()
        if self.at('['):
            self.unsupported("arrays")
        return name, base

    def parse_params(self, require_names):
        """After '('. Returns (types, names, variadic); consumes ')'."""
        types, names = [], []
        variadic = False
        if self.at('void') and self.at(')', 1):
            self.next()
            self.next()
            return types, names, variadic
        if self.accept(')'):
            return types, names, variadic
        while True:
            if self.accept('...'):
                if not types:
                    self.error("a variadic parameter list needs at least one fixed parameter")
                variadic = True
                break
            base = self.parse_type()
            start = self.peek()
            name, ctype = self.parse_declarator(base, allow_anonymous=not require_names)
            if ctype is _VOID:
                self.error("parameter of type void", start)
            types.append(ctype)
            names.append(name.text if name else '')
            if not self.accept(','):
                break
        self.expect(')')
        return types, names, variadic

    # ---------------------------------------------------------- top level

    def parse_unit(self, source):
        unit = TranslationUnit(filename=self.filename, source=source, tokens=tuple(self.tokens))
        while self.peek().kind != 'eof':
            self.reject_unsupported_keyword()
            if self.at('struct') and self.peek(1).kind == 'id' and self.at('{', 2):
                unit.structs.append(self.parse_struct())
            else:
                self.parse_declaration(unit)
        return unit

    def parse_struct(self):
        start = self.pos
        first = self.next()
        name = self.next().text
        self.expect('{')
        fields = []
        seen = set()
        while not self.accept('}'):
            base = self.parse_type()
            field_start = self.peek()
            field_name, ctype = self.parse_declarator(base)
            if ctype is _VOID:
                self.error("field of type void", field_start)
            if self.at(':'):
                self.unsupported("bitfields")
            if field_name.text in seen:
                self.error(f"duplicate field {field_name.text!r} in struct {name}", field_name)
            seen.add(field_name.text)
            fields.append((field_name.text, ctype))
            self.expect(';')
        last = self.expect(';')
        return StructDef(name, tuple(fields), SourceSpan(first.line, last.line, start, self.pos))

    def parse_declaration(self, unit):
        start = self.pos
        first = self.peek()
        is_static = bool(self.accept('static'))
        is_extern = not is_static and bool(self.accept('extern'))
        base = self.parse_type()
        name_token, ctype = self.parse_declarator(base)
        ident = name_token.text
        name = qualified_name(self.filename, ident, is_static)

        if self.at('(') and not isinstance(ctype, FunctionPointerType):
            self.next()
            params, param_names, variadic = self.parse_params(require_names=False)
            signature = Signature(None if base is _VOID else base, tuple(params), variadic)
            if self.at(';'):
                last = self.next()
                unit.prototypes.append(Prototype(name, signature, SourceSpan(first.line, last.line, start, self.pos),
                                                 is_static, is_extern, ident))
                return
            if not self.at('{'):
                self.error("expected ';' or function body")
            if any(not n for n in param_names):
                self.error(f"parameter name omitted in definition of {ident!r}")
            body_start = self.pos
            body = self.parse_block()
            last = self.tokens[self.pos - 1]
            function = FunctionDef(
                name=name,
                signature=signature,
                param_names=tuple(param_names),
                body=body,
                span=SourceSpan(first.line, last.line, start, self.pos),
                is_static=is_static,
                ident=ident,
                body_tokens=tuple(t.text for t in self.tokens[body_start:self.pos]),
            )
            if unit.function(name) is not None:
                self.error(f"redefinition of function {ident!r}", name_token)
            unit.functions.append(function)
            return

        if ctype is _VOID:
            self.error(f"variable {ident!r} declared void", name_token)
        initializer = None
        if self.accept('='):
            if self.at('{'):
                self.unsupported("brace initializers")
            initializer = self.parse_expression()
        if self.at(','):
            self.unsupported("multiple declarators in one declaration")
        last = self.expect(';')
        existing = unit.global_var(name)
        variable = GlobalVar(name, ctype, initializer, SourceSpan(first.line, last.line, start, self.pos),
                             is_static, is_extern, ident)
        if existing is not None:
            if not existing.is_extern and not is_extern:
                self.error(f"redefinition of global {ident!r}", name_token)
            if existing.var_type != ctype:
                self.error(f"conflicting types for {ident!r}", name_token)
            if is_extern:
                return
            unit.globals.remove(existing)
        unit.globals.append(variable)

    # --------------------------------------------------------- statements

    def parse_block(self):
        open_brace = self.expect('{')
        stmts = []
        while not self.accept('}'):
            if self.peek().kind == 'eof':
                self.error("unexpected end of input inside a block")
            stmts.append(self.parse_statement())
        return Block(stmts, open_brace.line)

    def parse_statement(self):
        self.reject_unsupported_keyword()
        start = self.pos
        token = self.peek()

        if self.at('{'):
            return self.parse_block()
        if self.at('if'):
            self.next()
            self.expect('(')
            cond = self.parse_expression()
            self.expect(')')
            header = self.text_between(start, self.pos)
            then = self.parse_statement()
            otherwise = self.parse_statement() if self.accept('else') else None
            return If(cond, then, otherwise, token.line, header)
        if self.at('while'):
            self.next()
            self.expect('(')
            cond = self.parse_expression()
            self.expect(')')
            header = self.text_between(start, self.pos)
            return While(cond, self.parse_statement(), token.line, header)
        if self.at('return'):
            self.next()
            value = None if self.at(';') else self.parse_expression()
            self.expect(';')
            return Return(value, token.line, self.text_between(start, self.pos))
        if self.at('break'):
            self.next()
            self.expect(';')
            return Break(token.line)
        if self.at('continue'):
            self.next()
            self.expect(';')
            return Continue(token.line)
        if self.at(';'):
            self.next()
            return Block([], token.line)
        if self.at('static') or self.at('extern'):
            self.unsupported(f"'{token.text}' local declaration")
        if self.starts_type():
            return self.parse_local_declaration(start)
        if self.at('++') or self.at('--'):
            op = self.next().text
            target = self.parse_unary()
            self.expect(';')
            return Assign(target, op[0] + '=', IntLiteral(1, token.line), token.line,
                          self.text_between(start, self.pos))

        expr = self.parse_expression()
        if self.at('++') or self.at('--'):
            op = self.next().text
            self.expect(';')
            return Assign(expr, op[0] + '=', IntLiteral(1, token.line), token.line,
                          self.text_between(start, self.pos))
        operator = self.peek()
        if operator.kind == 'punct' and operator.text in ASSIGNMENT_OPERATORS:
            self.next()
            if not isinstance(expr, (Name, Member)):
                self.error("invalid assignment target", operator)
            value = self.parse_expression()
            self.expect(';')
            return Assign(expr, operator.text, value, token.line, self.text_between(start, self.pos))
        self.expect(';')
        return ExprStmt(expr, token.line, self.text_between(start, self.pos))

    def parse_local_declaration(self, start):
        token = self.peek()
        base = self.parse_type()
        if base is _VOID:
            self.error("variable declared void", token)
        name, ctype = self.parse_declarator(base)
        init = None
        if self.accept('='):
            if self.at('{'):
                self.unsupported("brace initializers")
            init = self.parse_expression()
        if self.at(','):
            self.unsupported("multiple declarators in one declaration")
        self.expect(';')
        if isinstance(ctype, StructRef) and not ctype.pointer:
            self.unsupported("struct values in local scope", token)
        return LocalDecl(name.text, ctype, init, token.line, self.text_between(start, self.pos))

    # -------------------------------------------------------- expressions

    def parse_expression(self, min_precedence=1):
        left = self.parse_unary()
        while True:
            token = self.peek()
            if token.kind == 'punct' and token.text == '?':
                self.unsupported("the conditional operator", token)
            if token.kind == 'punct' and token.text in ('++', '--') and min_precedence > 1:
                self.unsupported("increment inside an expression", token)
            precedence = BINARY_PRECEDENCE.get(token.text) if token.kind == 'punct' else None
            if precedence is None or precedence < min_precedence:
                return left
            self.next()
            right = self.parse_expression(precedence + 1)
            left = Binary(token.text, left, right, token.line)

    def parse_unary(self):
        token = self.peek()
        if token.kind == 'punct':
            if token.text in ('-', '!', '~', '+'):
                self.next()
                operand = self.parse_unary()
                if token.text == '+':
                    return operand
                if token.text == '-' and isinstance(operand, (IntLiteral, FloatLiteral)):
                    return type(operand)(-operand.value, token.line)
                return Unary(token.text, operand, token.line)
            if token.text == '&':
                self.next()
                target = self.parse_postfix()
                if not isinstance(target, Name):
                    self.unsupported("address-of on anything but a named function or global", token)
                return AddressOf(target, token.line)
            if token.text == '*':
                self.unsupported("pointer dereference", token)
            if token.text in ('++', '--'):
                self.unsupported("increment inside an expression", token)
            if token.text == '(' and self.starts_type(1):
                self.next()
                target = self.parse_type()
                if target is _VOID:
                    target = None
                self.expect(')')
                return Cast(target, self.parse_unary(), token.line)
        return self.parse_postfix()

    def parse_postfix(self):
        expr = self.parse_primary()
        while True:
            token = self.peek()
            if self.at('('):
                self.next()
                args = []
                if not self.accept(')'):
                    while True:
                        args.append(self.parse_expression())
                        if not self.accept(','):
                            break
                    self.expect(')')
                expr = Call(expr, args, token.line)
            elif self.at('.') or self.at('->'):
                self.next()
                field_name = self.expect_identifier().text
                expr = Member(expr, field_name, token.text == '->', token.line)
            elif self.at('['):
                self.unsupported("array subscripts", token)
            else:
                return expr

    def parse_primary(self):
        self.reject_unsupported_keyword()
        token = self.next()
        if token.kind == 'int':
            return IntLiteral(int_literal_value(token.text), token.line)
        if token.kind == 'float':
            return FloatLiteral(float(token.text.rstrip('fFlL')), token.line)
        if token.kind == 'char':
            body = unescape(token.text[1:-1])
            if len(body) != 1:
                self.error("multi-character constant", token)
            return IntLiteral(ord(body), token.line)
        if token.kind == 'string':
            parts = [unescape(token.text[1:-1])]
            while self.peek().kind == 'string':
                parts.append(unescape(self.next().text[1:-1]))
            return StringLiteral(''.join(parts), token.line)
        if token.kind == 'id':
            return Name(token.text, token.line, offset=token.offset)
        if token.kind == 'punct' and token.text == '(':
            expr = self.parse_expression()
            self.expect(')')
            return expr
        found = 'end of input' if token.kind == 'eof' else repr(token.text)
        self.error(f"expected an expression, found {found}", token)


def parse_syntax(source, filename='') -> TranslationUnit:
    """Parse without name resolution. Most callers want parse_translation_unit."""
    parser = _Parser(tokenize(source, filename), filename)
    return parser.parse_unit(source)

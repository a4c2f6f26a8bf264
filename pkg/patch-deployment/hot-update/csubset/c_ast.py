"""
Abstract syntax of the C subset.

Types are frozen (they are compared and hashed during semantic diffing);
AST nodes are plain dataclasses because name resolution fills them in after
the whole unit has been read.
"""
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

SIGNED = 'signed'
UNSIGNED = 'unsigned'
FLOAT = 'float'

NUMERIC_CLASSES = (SIGNED, UNSIGNED, FLOAT)
INTEGER_WIDTHS = (8, 16, 32, 64)
FLOAT_WIDTHS = (32, 64)


@dataclass(frozen=True)
class ScalarType:
    numeric_class: str
    width: int

    def __post_init__(self):
        if self.numeric_class not in NUMERIC_CLASSES:
            raise ValueError(f"unknown numeric class {self.numeric_class!r}")
        allowed = FLOAT_WIDTHS if self.numeric_class == FLOAT else INTEGER_WIDTHS
        if self.width not in allowed:
            raise ValueError(f"width {self.width} not allowed for {self.numeric_class}")

    @property
    def name(self):
        prefix = {SIGNED: 'int', UNSIGNED: 'uint', FLOAT: 'float'}[self.numeric_class]
        return f"{prefix}{self.width}"

    @property
    def c_name(self):
        if self.numeric_class == FLOAT:
            return 'float' if self.width == 32 else 'double'
        return f"{self.name}_t"

    @property
    def is_integer(self):
        return self.numeric_class != FLOAT

    @property
    def min_value(self):
        if self.numeric_class == UNSIGNED:
            return 0
        if self.numeric_class == SIGNED:
            return -(1 << (self.width - 1))
        return None

    @property
    def max_value(self):
        if self.numeric_class == UNSIGNED:
            return (1 << self.width) - 1
        if self.numeric_class == SIGNED:
            return (1 << (self.width - 1)) - 1
        return None

    def represents(self, value):
        """True iff `value` is exactly representable in this type."""
        if isinstance(value, float):
            if value != value or value in (float('inf'), float('-inf')):
                return self.numeric_class == FLOAT
            if self.numeric_class == FLOAT:
                return True if self.width == 64 else float(_to_float32(value)) == value
            if not value.is_integer():
                return False
            value = int(value)
        if self.numeric_class == FLOAT:
            try:
                as_float = float(value)
            except OverflowError:
                return False
            if self.width == 32:
                as_float = _to_float32(as_float)
            return as_float not in (float('inf'), float('-inf')) and int(as_float) == value
        return self.min_value <= value <= self.max_value

    def convert(self, value):
        """C conversion on store: wrap integers to width, truncate floats toward zero."""
        if self.numeric_class == FLOAT:
            result = float(value)
            return _to_float32(result) if self.width == 32 else result
        if isinstance(value, float):
            if value != value or value in (float('inf'), float('-inf')):
                return 0
            value = int(value)
        value &= (1 << self.width) - 1
        if self.numeric_class == SIGNED and value >= (1 << (self.width - 1)):
            value -= 1 << self.width
        return value

    def __str__(self):
        return self.name


def _to_float32(value):
    try:
        return struct.unpack('<f', struct.pack('<f', value))[0]
    except OverflowError:
        return float('inf') if value > 0 else float('-inf')


ALL_SCALAR_TYPES = tuple(
    [ScalarType(SIGNED, w) for w in INTEGER_WIDTHS]
    + [ScalarType(UNSIGNED, w) for w in INTEGER_WIDTHS]
    + [ScalarType(FLOAT, w) for w in FLOAT_WIDTHS]
)

SCALAR_BY_NAME = {t.name: t for t in ALL_SCALAR_TYPES}


def scalar_type(name) -> ScalarType:
    try:
        return SCALAR_BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown scalar type {name!r}") from None


@dataclass(frozen=True)
class StructRef:
    name: str
    pointer: bool = False

    def __str__(self):
        return f"struct {self.name}{' *' if self.pointer else ''}"


@dataclass(frozen=True)
class StringType:
    def __str__(self):
        return 'const char *'


@dataclass(frozen=True)
class Signature:
    return_type: Optional[Union[ScalarType, StructRef]]
    params: Tuple = ()
    variadic: bool = False

    def __post_init__(self):
        if self.variadic and not self.params:
            raise ValueError("a variadic signature needs at least one fixed parameter")

    def __str__(self):
        params = [c_type_text(p) for p in self.params] or ['void']
        if self.variadic:
            params.append('...')
        return f"{c_type_text(self.return_type)} ({', '.join(params)})"


@dataclass(frozen=True)
class FunctionPointerType:
    signature: Signature

    def __str__(self):
        return f"{self.signature} *"


CType = Union[ScalarType, StructRef, StringType, FunctionPointerType, None]


def c_type_text(c_type: CType, name=''):
    """Render a declaration of `name` with type `c_type` in C syntax."""
    spacer = f" {name}" if name else ''
    if c_type is None:
        return f"void{spacer}"
    if isinstance(c_type, ScalarType):
        return f"{c_type.c_name}{spacer}"
    if isinstance(c_type, StructRef):
        return f"struct {c_type.name} *{name}" if c_type.pointer else f"struct {c_type.name}{spacer}"
    if isinstance(c_type, StringType):
        return f"const char *{name}"
    if isinstance(c_type, FunctionPointerType):
        sig = c_type.signature
        params = [c_type_text(p) for p in sig.params] or ['void']
        if sig.variadic:
            params.append('...')
        return f"{c_type_text(sig.return_type)} (*{name})({', '.join(params)})"
    raise TypeError(f"not a C type: {c_type!r}")


def qualified_name(filename, ident, is_static):
    """File-local names live in their own namespace: `sshd.c!helper`."""
    if not is_static:
        return ident
    base = filename.replace('\\', '/').rsplit('/', 1)[-1]
    return f"{base}!{ident}"


def unqualified(name):
    return name.split('!', 1)[-1]


# ---------------------------------------------------------------- spans

@dataclass(frozen=True)
class SourceSpan:
    start_line: int
    end_line: int
    start_token: int
    end_token: int      # exclusive

    def contains_line(self, line):
        return self.start_line <= line <= self.end_line


# ---------------------------------------------------------- expressions

@dataclass
class IntLiteral:
    value: int
    line: int = 0


@dataclass
class FloatLiteral:
    value: float
    line: int = 0


@dataclass
class StringLiteral:
    value: str
    line: int = 0


@dataclass
class Name:
    ident: str
    line: int = 0
    qualified: Optional[str] = None
    kind: Optional[str] = None          # param | local | global | function | extern
    c_type: CType = None
    offset: int = -1                    # source offset of the identifier token


@dataclass
class Unary:
    op: str
    operand: object
    line: int = 0


@dataclass
class Binary:
    op: str
    left: object
    right: object
    line: int = 0


@dataclass
class Cast:
    target: CType
    operand: object
    line: int = 0


@dataclass
class AddressOf:
    target: Name
    line: int = 0


@dataclass
class Member:
    base: object
    field_name: str
    arrow: bool
    line: int = 0
    struct_name: Optional[str] = None


@dataclass
class Call:
    callee: object
    args: List[object]
    line: int = 0
    indirect: bool = False


# ----------------------------------------------------------- statements

@dataclass
class Block:
    stmts: List[object]
    line: int = 0


@dataclass
class LocalDecl:
    name: str
    var_type: CType
    init: Optional[object]
    line: int = 0
    header: str = ''


@dataclass
class Assign:
    target: object
    op: str
    value: object
    line: int = 0
    header: str = ''


@dataclass
class ExprStmt:
    expr: object
    line: int = 0
    header: str = ''


@dataclass
class If:
    cond: object
    then: object
    otherwise: Optional[object]
    line: int = 0
    header: str = ''


@dataclass
class While:
    cond: object
    body: object
    line: int = 0
    header: str = ''


@dataclass
class Return:
    value: Optional[object]
    line: int = 0
    header: str = ''


@dataclass
class Break:
    line: int = 0
    header: str = 'break ;'


@dataclass
class Continue:
    line: int = 0
    header: str = 'continue ;'


# -------------------------------------------------------- top level

@dataclass
class FunctionDef:
    name: str                       # qualified (file!name for statics)
    signature: Signature
    param_names: Tuple[str, ...]
    body: Block
    span: SourceSpan
    address_taken: bool = False
    is_static: bool = False
    ident: str = ''
    body_tokens: Tuple[str, ...] = ()


@dataclass
class GlobalVar:
    name: str
    var_type: CType
    initializer: Optional[object]
    span: SourceSpan
    is_static: bool = False
    is_extern: bool = False
    ident: str = ''


@dataclass
class StructDef:
    name: str
    fields: Tuple[Tuple[str, CType], ...]
    span: SourceSpan

    def field_type(self, field_name):
        for name, field_type in self.fields:
            if name == field_name:
                return field_type
        return None


@dataclass
class Prototype:
    name: str
    signature: Signature
    span: SourceSpan
    is_static: bool = False
    is_extern: bool = False
    ident: str = ''


@dataclass
class TranslationUnit:
    filename: str = ''
    functions: List[FunctionDef] = field(default_factory=list)
    globals: List[GlobalVar] = field(default_factory=list)
    structs: List[StructDef] = field(default_factory=list)
    prototypes: List[Prototype] = field(default_factory=list)
    source: str = ''
    tokens: Tuple = ()

    def function(self, name) -> Optional[FunctionDef]:
        return next((f for f in self.functions if f.name == name), None)

    def global_var(self, name) -> Optional[GlobalVar]:
        return next((g for g in self.globals if g.name == name), None)

    def struct(self, name) -> Optional[StructDef]:
        return next((s for s in self.structs if s.name == name), None)

    def prototype(self, name) -> Optional[Prototype]:
        return next((p for p in self.prototypes if p.name == name), None)

    def signature_of(self, name) -> Optional[Signature]:
        function = self.function(name)
        if function is not None:
            return function.signature
        prototype = self.prototype(name)
        return prototype.signature if prototype is not None else None

    def source_text(self, span: SourceSpan):
        """Exact source text covered by a span (from its first to last token)."""
        first = self.tokens[span.start_token]
        last = self.tokens[span.end_token - 1]
        return self.source[first.offset:last.offset + len(last.text)]

    def token_lines(self):
        lines = set()
        for token in self.tokens:
            lines.update(range(token.line, token.line + token.text.count('\n') + 1))
        return lines

    def symbol_names(self):
        return sorted({f.name for f in self.functions} | {g.name for g in self.globals})

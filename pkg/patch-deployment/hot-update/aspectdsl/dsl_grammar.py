"""
Concrete syntax of dynamic patches (.dpatch).

    dpatch v1
    advisory "CA-2002-18";
    check quiescence(input_userauth_info_response);

    declarations "sshd.c" {{{
    extern void fatal(const char *, ...);
    }}}

    function input_userauth_info_response_new replaces input_userauth_info_response file "sshd.c" {{{
    void input_userauth_info_response_new(uint32_t nresp, struct authctxt *authctxt)
    { ... }
    }}}

    aspect replace_call_input_userauth_info_response {
        pointcut: call(input_userauth_info_response);
        action: instead redirect(input_userauth_info_response_new);
        origin: "FunctionBodyChanged input_userauth_info_response";
    }

C code sits between {{{ and }}} lines, verbatim. '#' starts a comment
outside code blocks and strings.
"""
import re

from pyparsing import (
    Keyword, Optional, ParseBaseException, QuotedString, Regex, StringEnd, Suppress, ZeroOrMore, oneOf,
    pythonStyleComment,
)

from utilities import HotmendError
from classifier import RuntimeCheck, QUIESCENCE, VALUE_FITS

from .aspects import (
    Aspect, DynamicPatch, ReplacementFunction, GlobalDefinition, Declarations, CallSite, PointerRead,
    GlobalRead, GlobalWrite, FieldAccess, RedirectCall, SubstituteAddress, SubstituteValue, InvokeAlarm,
    ShadowStorage, BEFORE, INSTEAD, MANUAL_ORIGIN, validate_patch,
)

HEADER = 'dpatch v1'
CODE_CLOSE = '}}}'


class PatchSyntaxError(HotmendError):
    def __init__(self, message, line=0, column=0):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}" if line else message)


# ------------------------------------------------------------- rendering

_ESCAPES = {'\\': '\\\\', '"': '\\"', '\n': '\\n', '\t': '\\t', '\r': '\\r'}
_UNESCAPES = {'n': '\n', 't': '\t', 'r': '\r'}


def quote(text):
    return '"' + ''.join(_ESCAPES.get(c, c) for c in text) + '"'


def unquote(raw):
    return re.sub(r"\\(.)", lambda m: _UNESCAPES.get(m.group(1), m.group(1)), raw)


def pointcut_text(pointcut):
    if isinstance(pointcut, CallSite):
        within = f" within({pointcut.within})" if pointcut.within else ''
        return f"call({pointcut.symbol}){within}"
    if isinstance(pointcut, PointerRead):
        return f"pointer({pointcut.symbol})"
    if isinstance(pointcut, GlobalRead):
        return f"get({pointcut.symbol})"
    if isinstance(pointcut, GlobalWrite):
        return f"set({pointcut.symbol})"
    if isinstance(pointcut, FieldAccess):
        return f"field({pointcut.struct_name}.{pointcut.field_name})"
    raise TypeError(f"not a pointcut: {pointcut!r}")


def action_text(action):
    if isinstance(action, RedirectCall):
        return f"redirect({action.symbol})"
    if isinstance(action, SubstituteAddress):
        return f"address({action.symbol})"
    if isinstance(action, SubstituteValue):
        return f"value({quote(action.expression)})"
    if isinstance(action, InvokeAlarm):
        return f"alarm({quote(action.message)})"
    if isinstance(action, ShadowStorage):
        return f"shadow({action.type_name}, {quote(action.default)})"
    raise TypeError(f"not an action: {action!r}")


def _code_block(source):
    if CODE_CLOSE in source:
        raise PatchSyntaxError(f"code contains {CODE_CLOSE!r} and cannot be embedded")
    return "{{{\n" + source + "\n}}}"


def _check_text(check: RuntimeCheck):
    if check.kind == QUIESCENCE:
        return f"check quiescence({check.symbol});"
    return f"check value({check.symbol}, {check.type_name});"


def render_patch(patch: DynamicPatch) -> str:
    sections = [[HEADER, f"# {len(patch.aspects)} aspect(s), {len(patch.functions)} function(s)"]]
    metadata = []
    if patch.advisory:
        metadata.append(f"advisory {quote(patch.advisory)};")
    if patch.description:
        metadata.append(f"description {quote(patch.description)};")
    sections.append(metadata)
    sections.append([f"note {quote(note)};" for note in patch.notes])
    sections.append([_check_text(check) for check in patch.checks])
    for block in patch.declarations:
        sections.append([f"declarations {quote(block.file)} {_code_block(block.source)}"])
    for definition in patch.globals:
        sections.append([f"global {definition.name} file {quote(definition.file)} {_code_block(definition.source)}"])
    for function in patch.functions:
        replaces = f" replaces {function.replaces}" if function.replaces else ''
        sections.append([f"function {function.name}{replaces} file {quote(function.file)} "
                         f"{_code_block(function.source)}"])
    for aspect in patch.aspects:
        sections.append([
            f"aspect {aspect.name} {{",
            f"    pointcut: {pointcut_text(aspect.pointcut)};",
            f"    action: {aspect.advice} {action_text(aspect.action)};",
            f"    origin: {quote(aspect.origin)};",
            "}",
        ])
    return "\n\n".join("\n".join(lines) for lines in sections if lines) + "\n"


# --------------------------------------------------------------- grammar

def _build_grammar():
    LPAR, RPAR, LBRACE, RBRACE, SEMI, COLON, COMMA, DOT = map(Suppress, "(){};:,.")
    ident = Regex(r"[A-Za-z_][A-Za-z0-9_]*")
    symbol = Regex(r"[A-Za-z_][A-Za-z0-9_.\-]*(?:![A-Za-z_][A-Za-z0-9_]*)?")
    string = QuotedString('"', escChar='\\', unquoteResults=False)
    string.setParseAction(lambda t: unquote(t[0][1:-1]))
    code = Regex(r"\{\{\{\n(.*?)\n\}\}\}", flags=re.DOTALL)
    code.setParseAction(lambda t: t[0][4:-4])

    def kw(word):
        return Suppress(Keyword(word))

    header = Suppress(Regex(r"dpatch[ \t]+v1\b"))

    advisory = (kw('advisory') + string + SEMI).setParseAction(lambda t: ('advisory', t[0]))
    description = (kw('description') + string + SEMI).setParseAction(lambda t: ('description', t[0]))
    note = (kw('note') + string + SEMI).setParseAction(lambda t: ('note', t[0]))
    check = kw('check') + (
        (kw('quiescence') + LPAR + symbol + RPAR).setParseAction(lambda t: RuntimeCheck(QUIESCENCE, t[0]))
        | (kw('value') + LPAR + symbol + COMMA + ident + RPAR).setParseAction(
            lambda t: RuntimeCheck(VALUE_FITS, t[0], t[1]))
    ) + SEMI
    declarations = (kw('declarations') + string + code).setParseAction(lambda t: Declarations(t[0], t[1]))
    global_def = (kw('global') + symbol + kw('file') + string + code).setParseAction(
        lambda t: GlobalDefinition(t[0], t[1], t[2]))
    function_def = (kw('function') + symbol + Optional(kw('replaces') + symbol, default=None)
                    + kw('file') + string + code).setParseAction(
        lambda t: ReplacementFunction(t[0], t[2], t[3], replaces=t[1]))

    pointcut = (
        (kw('call') + LPAR + symbol + RPAR + Optional(kw('within') + LPAR + symbol + RPAR, default=None))
        .setParseAction(lambda t: CallSite(t[0], t[1]))
        | (kw('pointer') + LPAR + symbol + RPAR).setParseAction(lambda t: PointerRead(t[0]))
        | (kw('get') + LPAR + symbol + RPAR).setParseAction(lambda t: GlobalRead(t[0]))
        | (kw('set') + LPAR + symbol + RPAR).setParseAction(lambda t: GlobalWrite(t[0]))
        | (kw('field') + LPAR + ident + DOT + ident + RPAR).setParseAction(lambda t: FieldAccess(t[0], t[1]))
    )
    action = (
        (kw('redirect') + LPAR + symbol + RPAR).setParseAction(lambda t: RedirectCall(t[0]))
        | (kw('address') + LPAR + symbol + RPAR).setParseAction(lambda t: SubstituteAddress(t[0]))
        | (kw('value') + LPAR + string + RPAR).setParseAction(lambda t: SubstituteValue(t[0]))
        | (kw('alarm') + LPAR + string + RPAR).setParseAction(lambda t: InvokeAlarm(t[0]))
        | (kw('shadow') + LPAR + ident + COMMA + string + RPAR).setParseAction(lambda t: ShadowStorage(t[0], t[1]))
    )
    advice = Optional(oneOf([BEFORE, INSTEAD]), default=INSTEAD)
    aspect = (
        kw('aspect') + ident + LBRACE
        + kw('pointcut') + COLON + pointcut + SEMI
        + kw('action') + COLON + advice + action + SEMI
        + Optional(kw('origin') + COLON + string + SEMI, default=MANUAL_ORIGIN)
        + RBRACE
    ).setParseAction(lambda t: Aspect(t[0], t[1], t[3], t[2], t[4]))

    statement = advisory | description | note | check | declarations | global_def | function_def | aspect
    grammar = header + ZeroOrMore(statement) + StringEnd()
    grammar.ignore(pythonStyleComment)
    # keep tabs inside code blocks
    grammar.parseWithTabs()
    return grammar


_GRAMMAR = _build_grammar()


def parse_patch(text, validate=True) -> DynamicPatch:
    """
    Parse .dpatch text. Raises PatchSyntaxError with line and column on
    grammar errors and PatchReferenceError on dangling symbol references.
    """
    try:
        statements = _GRAMMAR.parseString(text, parseAll=True).asList()
    except ParseBaseException as e:
        raise PatchSyntaxError(e.msg, e.lineno, e.col) from None

    fields = {'advisory': '', 'description': ''}
    collected = {'notes': [], 'checks': [], 'declarations': [], 'globals': [], 'functions': [], 'aspects': []}
    for statement in statements:
        if isinstance(statement, tuple) and statement[0] in ('advisory', 'description'):
            fields[statement[0]] = statement[1]
        elif isinstance(statement, tuple):
            collected['notes'].append(statement[1])
        elif isinstance(statement, RuntimeCheck):
            collected['checks'].append(statement)
        elif isinstance(statement, Declarations):
            collected['declarations'].append(statement)
        elif isinstance(statement, GlobalDefinition):
            collected['globals'].append(statement)
        elif isinstance(statement, ReplacementFunction):
            collected['functions'].append(statement)
        else:
            collected['aspects'].append(statement)

    patch = DynamicPatch(
        advisory=fields['advisory'],
        description=fields['description'],
        **{key: tuple(values) for key, values in collected.items()},
    )
    return validate_patch(patch) if validate else patch

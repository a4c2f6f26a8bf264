"""
Tokenizer for the C subset. Comments and whitespace never produce tokens, so
two sources that differ only cosmetically produce identical token streams.
"""
import re
from dataclasses import dataclass

from utilities import HotmendError


class CParseError(HotmendError):
    def __init__(self, message, line=0, column=0, filename=''):
        where = f"{filename}:" if filename else ''
        super().__init__(f"{where}{line}:{column}: {message}")
        self.line = line
        self.column = column
        self.filename = filename


class UnsupportedConstructError(CParseError):
    """A valid C construct that the subset deliberately leaves out."""


@dataclass(frozen=True)
class Token:
    kind: str          # id | keyword | int | float | string | char | punct | eof
    text: str
    line: int
    column: int
    offset: int


KEYWORDS = {
    'void', 'char', 'short', 'int', 'long', 'float', 'double', 'signed', 'unsigned',
    'const', 'static', 'extern', 'struct', 'if', 'else', 'while', 'return', 'break', 'continue',
    # recognised so they can be rejected with a precise message
    'typedef', 'union', 'goto', 'switch', 'case', 'default', 'for', 'do', 'enum', 'sizeof',
    'volatile', 'register', 'auto', 'inline',
}

UNSUPPORTED_KEYWORDS = {
    'typedef', 'union', 'goto', 'switch', 'case', 'default', 'for', 'do', 'enum', 'sizeof',
    'volatile', 'register', 'auto', 'inline',
}

PUNCTUATORS = [
    '...', '<<=', '>>=',
    '->', '++', '--', '<<', '>>', '<=', '>=', '==', '!=', '&&', '||',
    '+=', '-=', '*=', '/=', '%=', '&=', '|=', '^=',
    '{', '}', '(', ')', '[', ']', ';', ',', '=', '<', '>', '+', '-', '*', '/', '%',
    '!', '&', '|', '^', '~', '.', '?', ':',
]

_TOKEN_PATTERNS = [
    ('ws', r'[ \t\f\v]+'),
    ('newline', r'\n'),
    ('line_comment', r'//[^\n]*'),
    ('block_comment', r'/\*.*?\*/'),
    ('open_comment', r'/\*'),
    ('float', r'(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fFlL]?|\d+[eE][+-]?\d+[fFlL]?'),
    ('int', r'0[xX][0-9a-fA-F]+[uUlL]*|\d+[uUlL]*'),
    ('string', r'"(?:[^"\\\n]|\\.)*"'),
    ('char', r"'(?:[^'\\\n]|\\.)+'"),
    ('id', r'[A-Za-z_][A-Za-z0-9_]*'),
    ('punct', '|'.join(re.escape(p) for p in PUNCTUATORS)),
]
_MASTER = re.compile('|'.join(f'(?P<{name}>{pattern})' for name, pattern in _TOKEN_PATTERNS), re.DOTALL)

_ESCAPES = {'n': '\n', 't': '\t', 'r': '\r', '0': '\0', '\\': '\\', "'": "'", '"': '"'}


def unescape(body):
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == '\\' and i + 1 < len(body):
            out.append(_ESCAPES.get(body[i + 1], body[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return ''.join(out)


def int_literal_value(text):
    digits = text.rstrip("uUlL")
    if digits[:2].lower() == "0x":
        return int(digits, 16)
    if len(digits) > 1 and digits[0] == "0" and all(c in "01234567" for c in digits):
        return int(digits, 8)
    return int(digits, 10)


_PREPROCESSOR = re.compile(r"[ \t]*#")


def tokenize(source, filename=''):
    tokens = []
    line = 1
    line_start = 0
    position = 0
    at_line_start = True
    length = len(source)

    while position < length:
        if at_line_start:
            if _PREPROCESSOR.match(source, position):
                raise UnsupportedConstructError(
                    "preprocessor directive (sources must be pre-expanded)",
                    line, position - line_start + 1, filename)

        match = _MASTER.match(source, position)
        if not match:
            raise CParseError(f"unexpected character {source[position]!r}",
                              line, position - line_start + 1, filename)
        kind = match.lastgroup
        text = match.group()
        column = position - line_start + 1

        if kind == 'newline':
            line += 1
            line_start = match.end()
            at_line_start = True
        elif kind == 'block_comment':
            newlines = text.count('\n')
            if newlines:
                line += newlines
                line_start = position + text.rfind('\n') + 1
        elif kind == 'open_comment':
            raise CParseError("unterminated comment", line, column, filename)
        elif kind in ('ws', 'line_comment'):
            pass
        else:
            at_line_start = False
            if kind == 'id' and text in KEYWORDS:
                kind = 'keyword'
            tokens.append(Token(kind, text, line, column, position))
        position = match.end()

    tokens.append(Token('eof', '', line, position - line_start + 1, length))
    return tokens
"""Tokenizer for policy files. Tracks line/column for error reporting."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import AdsimError

# Multi-character symbols must be matched before their one-character prefixes.
_SYMBOLS = ("==", "!=", "<=", ">=", "&&", "||", "->", "{", "}", "(", ")", ";", ",", "=", "<", ">", "!", ".")

IDENT = "IDENT"
NUMBER = "NUMBER"
STRING = "STRING"
EOF = "EOF"


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, NUMBER, STRING, EOF, or the symbol itself
    text: str
    line: int
    col: int


class ParseError(AdsimError):
    """Lexing or parsing failure: position plus the tokens that were expected."""

    def __init__(self, message: str, line: int, col: int, expected: tuple[str, ...] = ()):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col
        self.expected = expected


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":  # line comment
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch == '"':
            start_col = col
            j = i + 1
            while j < n and source[j] not in '"\n':
                j += 1
            if j >= n or source[j] != '"':
                raise ParseError("unterminated string", line, start_col, ('"',))
            tokens.append(Token(STRING, source[i + 1 : j], line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            start_col = col
            j = i
            seen_dot = False
            while j < n and (source[j].isdigit() or (source[j] == "." and not seen_dot)):
                if source[j] == ".":
                    # a dot not followed by a digit belongs to a field path
                    if j + 1 >= n or not source[j + 1].isdigit():
                        break
                    seen_dot = True
                j += 1
            tokens.append(Token(NUMBER, source[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if _is_ident_start(ch):
            start_col = col
            j = i
            while j < n and _is_ident_char(source[j]):
                j += 1
            tokens.append(Token(IDENT, source[i:j], line, start_col))
            col += j - i
            i = j
            continue
        for sym in _SYMBOLS:
            if source.startswith(sym, i):
                tokens.append(Token(sym, sym, line, col))
                col += len(sym)
                i += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token(EOF, "", line, col))
    return tokens

"""Recursive-descent parser for policy files.

Grammar (first error aborts; errors carry line, column, expected tokens):

    policy  := "policy" STRING "{" "default" "->" pathway ";" rule* "}"
    rule    := "rule" IDENT "when" expr "->" pathway ";"
    pathway := "ai_only" | "clinician_only"
             | "clinician_and_ai" ["(" "priority" "=" IDENT ")"]
    expr    := and_expr ("||" and_expr)*        # "!" binds over "&&" over "||"
    and_expr:= unary ("&&" unary)*
    unary   := "!" unary | "(" expr ")" | test
    test    := path op literal | path "in" "{" literal ("," literal)* "}"
    path    := IDENT ("." IDENT)+
    literal := NUMBER | "true" | "false" | IDENT
"""

from __future__ import annotations

from ..model import Pathway, PathwayKind, PRIORITIES
from .ast import And, Comparison, Expr, Literal, Membership, Not, Or, Policy, Rule
from .lexer import EOF, IDENT, NUMBER, STRING, ParseError, Token, tokenize

_PATHWAY_KEYWORDS = tuple(k.value for k in PathwayKind)
_COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.cur
        self.pos += 1
        return tok

    def error(self, expected: tuple[str, ...]) -> ParseError:
        tok = self.cur
        got = tok.text if tok.kind != EOF else "end of input"
        return ParseError(
            f"expected {' or '.join(expected)}, found {got!r}", tok.line, tok.col, expected
        )

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.cur
        if tok.kind != kind or (text is not None and tok.text != text):
            raise self.error((text if text is not None else kind,))
        return self.advance()

    # -- top level ----------------------------------------------------------

    def policy(self) -> Policy:
        self.expect(IDENT, "policy")
        name = self.expect(STRING).text
        self.expect("{")
        self.expect(IDENT, "default")
        self.expect("->")
        default = self.pathway()
        self.expect(";")
        rules = []
        while self.cur.kind == IDENT and self.cur.text == "rule":
            rules.append(self.rule())
        self.expect("}")
        self.expect(EOF)
        return Policy(name=name, default_pathway=default, rules=tuple(rules))

    def rule(self) -> Rule:
        self.expect(IDENT, "rule")
        rule_id = self.expect(IDENT).text
        self.expect(IDENT, "when")
        condition = self.expr()
        self.expect("->")
        target = self.pathway()
        self.expect(";")
        return Rule(rule_id=rule_id, condition=condition, target=target)

    def pathway(self) -> Pathway:
        tok = self.cur
        if tok.kind != IDENT or tok.text not in _PATHWAY_KEYWORDS:
            raise self.error(_PATHWAY_KEYWORDS)
        self.advance()
        kind = PathwayKind(tok.text)
        priority = None
        if kind is PathwayKind.CLINICIAN_AND_AI and self.cur.kind == "(":
            self.advance()
            self.expect(IDENT, "priority")
            self.expect("=")
            ptok = self.cur
            if ptok.kind != IDENT or ptok.text not in PRIORITIES:
                raise self.error(PRIORITIES)
            self.advance()
            priority = ptok.text
            self.expect(")")
        return Pathway(kind, priority)

    # -- expressions --------------------------------------------------------

    def expr(self) -> Expr:
        node = self.and_expr()
        while self.cur.kind == "||":
            self.advance()
            node = Or(node, self.and_expr())
        return node

    def and_expr(self) -> Expr:
        node = self.unary()
        while self.cur.kind == "&&":
            self.advance()
            node = And(node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.cur.kind == "!":
            self.advance()
            return Not(self.unary())
        if self.cur.kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        return self.test()

    def test(self) -> Expr:
        path = self.path()
        tok = self.cur
        if tok.kind in _COMPARE_OPS:
            self.advance()
            return Comparison(path, tok.kind, self.literal())
        if tok.kind == IDENT and tok.text == "in":
            self.advance()
            self.expect("{")
            values = [self.literal()]
            while self.cur.kind == ",":
                self.advance()
                values.append(self.literal())
            self.expect("}")
            return Membership(path, tuple(values))
        raise self.error(_COMPARE_OPS + ("in",))

    def path(self) -> tuple[str, ...]:
        parts = [self.expect(IDENT).text]
        self.expect(".")
        parts.append(self.expect(IDENT).text)
        while self.cur.kind == ".":
            self.advance()
            parts.append(self.expect(IDENT).text)
        return tuple(parts)

    def literal(self) -> Literal:
        tok = self.cur
        if tok.kind == NUMBER:
            self.advance()
            return float(tok.text)
        if tok.kind == IDENT:
            self.advance()
            if tok.text == "true":
                return True
            if tok.text == "false":
                return False
            return tok.text
        raise self.error((NUMBER, "true", "false", "tag"))


def parse_policy(source: str) -> Policy:
    """Parse policy text into an AST, preserving rule order. Raises ParseError."""
    return _Parser(tokenize(source)).policy()


def parse_expr(source: str) -> Expr:
    """Parse a bare condition expression (used by tests and tooling)."""
    parser = _Parser(tokenize(source))
    node = parser.expr()
    parser.expect(EOF)
    return node

"""Formula mini-language: lexing, parsing, normalization, and printing.

Grammar sketch (whitespace insignificant, ``<sum>`` and ``<in>`` verbatim):

    formula  := chain (',' chain)*          commas inside braces do not split
    chain    := addsub (REL addsub)*        REL in <=, >=, <, >, =
    addsub   := muldiv (('+'|'-') muldiv)*
    muldiv   := unary (('*'|'/') unary)*
    unary    := '-' unary | primary
    primary  := NUMBER | ref | '(' addsub ')' | sum
    ref      := IDENT ['_' '{' IDENT (',' IDENT)* '}']
    sum      := '<sum>' '_' '{' bindings '}' muldiv
    bindings := IDENT '<in>' IDENT ((','? IDENT '<in>' IDENT))*

A missing ``*`` between two adjacent value tokens is inserted automatically,
and directly nested sums are merged into a single multi-binding sum.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Union


class FormulaError(ValueError):
    """Base error for the formula language; carries the byte offset."""

    def __init__(self, message: str, text: str = "", pos: int | None = None) -> None:
        if pos is not None and text:
            excerpt = text[max(0, pos - 20) : pos + 20]
            caret = " " * (pos - max(0, pos - 20)) + "^"
            message = f"{message} at offset {pos}\n    {excerpt}\n    {caret}"
        super().__init__(message)
        self.pos = pos


class FormulaSyntaxError(FormulaError):
    pass


class NestedDomainError(FormulaError):
    """Braces nested inside an index dimension."""


class DuplicateIndexError(FormulaError):
    """The same index name bound twice in one dimension."""


class NumericSubscriptError(FormulaError):
    """Numeric literal used as a subscript, e.g. ``x_{i,1}``."""


class ParametrizedSumDomainError(FormulaError):
    """Subscripted set used as a summation domain, e.g. ``Successors_{k}``."""


class DomainFilterError(FormulaError):
    """Filter predicate inside an index dimension (not supported)."""


class Relation(enum.Enum):
    LE = "<="
    GE = ">="
    LT = "<"
    GT = ">"
    EQ = "="


@dataclass(frozen=True)
class IndexBinding:
    index: str
    set_name: str


@dataclass(frozen=True)
class DomainSpec:
    bindings: tuple[IndexBinding, ...] = ()

    @property
    def indices(self) -> tuple[str, ...]:
        return tuple(b.index for b in self.bindings)

    def __len__(self) -> int:
        return len(self.bindings)


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Ref:
    name: str
    subscripts: tuple[str, ...] = ()


@dataclass(frozen=True)
class Add:
    left: "FormulaAst"
    right: "FormulaAst"


@dataclass(frozen=True)
class Sub:
    left: "FormulaAst"
    right: "FormulaAst"


@dataclass(frozen=True)
class Mul:
    left: "FormulaAst"
    right: "FormulaAst"


@dataclass(frozen=True)
class Div:
    left: "FormulaAst"
    right: "FormulaAst"


@dataclass(frozen=True)
class Neg:
    operand: "FormulaAst"


@dataclass(frozen=True)
class Sum:
    bindings: DomainSpec
    body: "FormulaAst"


@dataclass(frozen=True)
class CompareChain:
    operands: tuple["FormulaAst", ...]
    relations: tuple[Relation, ...]


FormulaAst = Union[Number, Ref, Add, Sub, Mul, Div, Neg, Sum, CompareChain]


# ---------------------------------------------------------------------------
# Lexer


class _Tok(enum.Enum):
    NUMBER = enum.auto()
    IDENT = enum.auto()
    SUM = enum.auto()
    IN = enum.auto()
    UNDERSCORE = enum.auto()
    LBRACE = enum.auto()
    RBRACE = enum.auto()
    LPAREN = enum.auto()
    RPAREN = enum.auto()
    PLUS = enum.auto()
    MINUS = enum.auto()
    STAR = enum.auto()
    SLASH = enum.auto()
    COMMA = enum.auto()
    REL = enum.auto()
    FILTER = enum.auto()  # ':' or '|', only meaningful inside domains
    END = enum.auto()


@dataclass(frozen=True)
class _Token:
    kind: _Tok
    text: str
    pos: int
    relation: Relation | None = None


_SINGLE = {
    "{": _Tok.LBRACE,
    "}": _Tok.RBRACE,
    "(": _Tok.LPAREN,
    ")": _Tok.RPAREN,
    "+": _Tok.PLUS,
    "-": _Tok.MINUS,
    "*": _Tok.STAR,
    "/": _Tok.SLASH,
    ",": _Tok.COMMA,
}


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "<":
            if text.startswith("<sum>", i):
                tokens.append(_Token(_Tok.SUM, "<sum>", i))
                i += 5
            elif text.startswith("<in>", i):
                tokens.append(_Token(_Tok.IN, "<in>", i))
                i += 4
            elif text.startswith("<=", i):
                tokens.append(_Token(_Tok.REL, "<=", i, Relation.LE))
                i += 2
            else:
                tokens.append(_Token(_Tok.REL, "<", i, Relation.LT))
                i += 1
            continue
        if ch == ">":
            if text.startswith(">=", i):
                tokens.append(_Token(_Tok.REL, ">=", i, Relation.GE))
                i += 2
            else:
                tokens.append(_Token(_Tok.REL, ">", i, Relation.GT))
                i += 1
            continue
        if ch == "=":
            width = 2 if text.startswith("==", i) else 1
            tokens.append(_Token(_Tok.REL, text[i : i + width], i, Relation.EQ))
            i += width
            continue
        if ch in _SINGLE:
            tokens.append(_Token(_SINGLE[ch], ch, i))
            i += 1
            continue
        if ch in ":|":
            tokens.append(_Token(_Tok.FILTER, ch, i))
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == ".":
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tokens.append(_Token(_Tok.NUMBER, text[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            # a trailing '_' directly before '{' marks a subscript, not the name
            if j > i + 1 and text[j - 1] == "_" and j < n and text[j] == "{":
                j -= 1
            word = text[i:j]
            if word == "_":
                tokens.append(_Token(_Tok.UNDERSCORE, "_", i))
            else:
                tokens.append(_Token(_Tok.IDENT, word, i))
            i = j
            continue
        raise FormulaSyntaxError(f"unexpected character {ch!r}", text, i)
    tokens.append(_Token(_Tok.END, "", n))
    return tokens


def _insert_implicit_mul(tokens: list[_Token], text: str) -> list[_Token]:
    """Insert ``*`` between adjacent value-ending and value-starting tokens.

    A ``}`` only ends a value when it closes a subscript group (``x_{i}``),
    not when it closes a sum's index dimension.
    """
    brace_kinds: list[str] = []
    closes_subscript: dict[int, bool] = {}
    for idx, tok in enumerate(tokens):
        if tok.kind is _Tok.LBRACE:
            if idx >= 2 and tokens[idx - 1].kind is _Tok.UNDERSCORE:
                opener = tokens[idx - 2].kind
                brace_kinds.append("subscript" if opener is _Tok.IDENT else "domain")
            else:
                brace_kinds.append("other")
        elif tok.kind is _Tok.RBRACE:
            kind = brace_kinds.pop() if brace_kinds else "other"
            closes_subscript[idx] = kind == "subscript"

    starts = (_Tok.NUMBER, _Tok.IDENT, _Tok.LPAREN, _Tok.SUM)
    out: list[_Token] = []
    for idx, tok in enumerate(tokens):
        out.append(tok)
        if idx + 1 >= len(tokens):
            continue
        nxt = tokens[idx + 1]
        ends_value = tok.kind in (_Tok.NUMBER, _Tok.IDENT, _Tok.RPAREN) or (
            tok.kind is _Tok.RBRACE and closes_subscript.get(idx, False)
        )
        if ends_value and nxt.kind in starts:
            out.append(_Token(_Tok.STAR, "*", nxt.pos))
    return out


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, tokens: list[_Token], text: str) -> None:
        self.tokens = tokens
        self.text = text
        self.pos = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: _Tok, what: str) -> _Token:
        if self.current.kind is not kind:
            self.fail(f"expected {what}, found {self.current.text or 'end of input'!r}")
        return self.advance()

    def fail(self, message: str, error: type[FormulaError] = FormulaSyntaxError) -> None:
        raise error(message, self.text, self.current.pos)

    # -- bindings ----------------------------------------------------------

    def parse_bindings(self) -> DomainSpec:
        bindings: list[IndexBinding] = []
        seen: set[str] = set()
        while True:
            tok = self.current
            if tok.kind is _Tok.RBRACE:
                break
            if tok.kind is _Tok.LBRACE:
                self.fail("nested braces in index dimension", NestedDomainError)
            if tok.kind is _Tok.FILTER:
                self.fail("filter predicates in index dimensions are not supported",
                          DomainFilterError)
            if tok.kind is _Tok.COMMA:
                self.advance()
                continue
            if tok.kind is not _Tok.IDENT:
                self.fail(f"expected an index name, found {tok.text!r}")
            index = self.advance().text
            if self.current.kind is not _Tok.IN:
                self.fail("expected '<in>' after index name")
            self.advance()
            if self.current.kind is _Tok.LBRACE:
                self.fail("nested braces in index dimension", NestedDomainError)
            set_tok = self.current
            if set_tok.kind is not _Tok.IDENT:
                self.fail(f"expected a set name, found {set_tok.text!r}")
            self.advance()
            if self.current.kind is _Tok.UNDERSCORE:
                self.fail(
                    f"subscripted set {set_tok.text!r} cannot be a summation domain",
                    ParametrizedSumDomainError,
                )
            if index in seen:
                self.fail(f"duplicate index {index!r} in dimension", DuplicateIndexError)
            seen.add(index)
            bindings.append(IndexBinding(index, set_tok.text))
        if not bindings:
            self.fail("empty index dimension")
        return DomainSpec(tuple(bindings))

    def parse_braced_bindings(self) -> DomainSpec:
        self.expect(_Tok.LBRACE, "'{'")
        spec = self.parse_bindings()
        self.expect(_Tok.RBRACE, "'}'")
        return spec

    # -- expressions -------------------------------------------------------

    def parse_chain(self) -> FormulaAst:
        operands = [self.parse_addsub()]
        relations: list[Relation] = []
        while self.current.kind is _Tok.REL:
            relations.append(self.advance().relation)  # type: ignore[arg-type]
            operands.append(self.parse_addsub())
        if self.current.kind is not _Tok.END:
            self.fail(f"unexpected {self.current.text!r}")
        if relations:
            return CompareChain(tuple(operands), tuple(relations))
        return operands[0]

    def parse_addsub(self) -> FormulaAst:
        node = self.parse_muldiv()
        while self.current.kind in (_Tok.PLUS, _Tok.MINUS):
            op = self.advance().kind
            right = self.parse_muldiv()
            node = Add(node, right) if op is _Tok.PLUS else Sub(node, right)
        return node

    def parse_muldiv(self) -> FormulaAst:
        node = self.parse_unary()
        while self.current.kind in (_Tok.STAR, _Tok.SLASH):
            op = self.advance().kind
            right = self.parse_unary()
            node = Mul(node, right) if op is _Tok.STAR else Div(node, right)
        return node

    def parse_unary(self) -> FormulaAst:
        if self.current.kind is _Tok.MINUS:
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> FormulaAst:
        tok = self.current
        if tok.kind is _Tok.NUMBER:
            self.advance()
            return Number(float(tok.text))
        if tok.kind is _Tok.IDENT:
            self.advance()
            if self.current.kind is _Tok.UNDERSCORE:
                self.advance()
                self.expect(_Tok.LBRACE, "'{' after '_'")
                subs = self.parse_subscripts()
                self.expect(_Tok.RBRACE, "'}'")
                return Ref(tok.text, subs)
            return Ref(tok.text)
        if tok.kind is _Tok.LPAREN:
            self.advance()
            node = self.parse_addsub()
            self.expect(_Tok.RPAREN, "')'")
            return node
        if tok.kind is _Tok.SUM:
            self.advance()
            self.expect(_Tok.UNDERSCORE, "'_' after '<sum>'")
            spec = self.parse_braced_bindings()
            body = self.parse_muldiv()
            return Sum(spec, body)
        self.fail(f"unexpected {tok.text or 'end of input'!r}")
        raise AssertionError("unreachable")

    def parse_subscripts(self) -> tuple[str, ...]:
        subs: list[str] = []
        while True:
            tok = self.current
            if tok.kind is _Tok.NUMBER:
                self.fail(
                    f"numeric subscript {tok.text!r} is not supported", NumericSubscriptError
                )
            if tok.kind is not _Tok.IDENT:
                self.fail(f"expected a subscript identifier, found {tok.text!r}")
            subs.append(self.advance().text)
            if self.current.kind is _Tok.COMMA:
                self.advance()
                continue
            break
        return tuple(subs)


# ---------------------------------------------------------------------------
# Normalization


def _normalize(node: FormulaAst, text: str) -> FormulaAst:
    if isinstance(node, (Number, Ref)):
        return node
    if isinstance(node, Add):
        return Add(_normalize(node.left, text), _normalize(node.right, text))
    if isinstance(node, Sub):
        return Sub(_normalize(node.left, text), _normalize(node.right, text))
    if isinstance(node, Mul):
        return Mul(_normalize(node.left, text), _normalize(node.right, text))
    if isinstance(node, Div):
        return Div(_normalize(node.left, text), _normalize(node.right, text))
    if isinstance(node, Neg):
        return Neg(_normalize(node.operand, text))
    if isinstance(node, Sum):
        body = _normalize(node.body, text)
        bindings = node.bindings.bindings
        while isinstance(body, Sum):
            bindings = bindings + body.bindings.bindings
            body = body.body
        indices = [b.index for b in bindings]
        if len(set(indices)) != len(indices):
            dup = next(i for i in indices if indices.count(i) > 1)
            raise DuplicateIndexError(f"duplicate index {dup!r} after merging sums", text, 0)
        return Sum(DomainSpec(tuple(bindings)), body)
    if isinstance(node, CompareChain):
        return CompareChain(
            tuple(_normalize(op, text) for op in node.operands), node.relations
        )
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Public operations


def parse_domain(text: str) -> DomainSpec:
    """Parse a component domain string like ``{a <in> Aircraft}``.

    The empty (or blank) string denotes a scalar domain.
    """
    if not text.strip():
        return DomainSpec(())
    tokens = _lex(text)
    parser = _Parser(tokens, text)
    if parser.current.kind is not _Tok.LBRACE:
        parser.fail("domain must be enclosed in braces")
    parser.advance()
    spec = parser.parse_bindings()
    if parser.current.kind is not _Tok.RBRACE:
        parser.fail("expected '}'")
    parser.advance()
    if parser.current.kind is not _Tok.END:
        parser.fail(f"unexpected {parser.current.text!r} after domain")
    return spec


def _split_segments(tokens: list[_Token]) -> list[list[_Token]]:
    segments: list[list[_Token]] = []
    current: list[_Token] = []
    depth = 0
    for tok in tokens:
        if tok.kind is _Tok.END:
            break
        if tok.kind is _Tok.LBRACE:
            depth += 1
        elif tok.kind is _Tok.RBRACE:
            depth = max(0, depth - 1)
        if tok.kind is _Tok.COMMA and depth == 0:
            segments.append(current)
            current = []
        else:
            current.append(tok)
    segments.append(current)
    return segments


def parse_formula(text: str) -> list[FormulaAst]:
    """Parse a formula string into one AST per top-level comma segment."""
    tokens = _insert_implicit_mul(_lex(text), text)
    asts: list[FormulaAst] = []
    for segment in _split_segments(tokens):
        if not segment:
            raise FormulaSyntaxError("empty formula segment", text, 0)
        end_pos = segment[-1].pos + len(segment[-1].text)
        parser = _Parser(segment + [_Token(_Tok.END, "", end_pos)], text)
        asts.append(_normalize(parser.parse_chain(), text))
    return asts


_PREC_CHAIN = 0
_PREC_SUM = 1.5
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_ATOM = 4


def _prec(node: FormulaAst) -> float:
    if isinstance(node, (Add, Sub)):
        return _PREC_ADD
    if isinstance(node, (Mul, Div)):
        return _PREC_MUL
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, Sum):
        return _PREC_SUM
    if isinstance(node, CompareChain):
        return _PREC_CHAIN
    return _PREC_ATOM


def print_domain(spec: DomainSpec) -> str:
    inner = ", ".join(f"{b.index} <in> {b.set_name}" for b in spec.bindings)
    return "{" + inner + "}"


def _print(node: FormulaAst, parent_prec: float, is_right: bool) -> str:
    prec = _prec(node)
    text: str
    if isinstance(node, Number):
        value = node.value
        text = str(int(value)) if float(value).is_integer() and abs(value) < 1e16 else repr(value)
    elif isinstance(node, Ref):
        text = node.name
        if node.subscripts:
            text += "_{" + ",".join(node.subscripts) + "}"
    elif isinstance(node, Add):
        text = f"{_print(node.left, prec, False)} + {_print(node.right, prec, True)}"
    elif isinstance(node, Sub):
        text = f"{_print(node.left, prec, False)} - {_print(node.right, prec, True)}"
    elif isinstance(node, Mul):
        text = f"{_print(node.left, prec, False)}*{_print(node.right, prec, True)}"
    elif isinstance(node, Div):
        text = f"{_print(node.left, prec, False)}/{_print(node.right, prec, True)}"
    elif isinstance(node, Neg):
        text = f"-{_print(node.operand, prec, False)}"
    elif isinstance(node, Sum):
        body = _print(node.body, _PREC_MUL, False)
        if _prec(node.body) < _PREC_MUL:
            body = f"({body})"
        text = f"<sum>_{print_domain(node.bindings)} {body}"
        # the sum body above is already wrapped when looser than a product
        if parent_prec > _PREC_SUM:
            return f"({text})"
        return text
    elif isinstance(node, CompareChain):
        parts = [_print(node.operands[0], _PREC_ADD, False)]
        for rel, operand in zip(node.relations, node.operands[1:]):
            parts.append(rel.value)
            parts.append(_print(operand, _PREC_ADD, False))
        return " ".join(parts)
    else:
        raise TypeError(f"unknown node {node!r}")

    if prec < parent_prec or (prec == parent_prec and is_right and parent_prec != _PREC_ATOM):
        return f"({text})"
    return text


def print_formula(ast: FormulaAst) -> str:
    """Emit canonical text that re-parses to a structurally equal AST."""
    return _print(ast, _PREC_CHAIN, False)


def _walk_free(node: FormulaAst, bound: frozenset[str], out: set[str]) -> None:
    if isinstance(node, Number):
        return
    if isinstance(node, Ref):
        for sub in node.subscripts:
            if sub not in bound:
                out.add(sub)
        return
    if isinstance(node, (Add, Sub, Mul, Div)):
        _walk_free(node.left, bound, out)
        _walk_free(node.right, bound, out)
        return
    if isinstance(node, Neg):
        _walk_free(node.operand, bound, out)
        return
    if isinstance(node, Sum):
        _walk_free(node.body, bound | set(node.bindings.indices), out)
        return
    if isinstance(node, CompareChain):
        for operand in node.operands:
            _walk_free(operand, bound, out)
        return
    raise TypeError(f"unknown node {node!r}")


def free_indices(ast: FormulaAst) -> set[str]:
    """Subscript identifiers not bound by any enclosing sum."""
    out: set[str] = set()
    _walk_free(ast, frozenset(), out)
    return out

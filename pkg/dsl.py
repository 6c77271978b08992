"""
The prochern document language.

A document declares atoms, varieties, morphisms, towers, bonding systems,
proconstructible functions, cylinders and series, then lists queries and
checks. Newlines carry no meaning; `#` starts a comment. `parse` scans,
parses and resolves a document, so every error it raises is a DSLError
with a line and column.

    atom E euler 0
    variety P1 { stratum pt class 1; stratum cell class L }
    morphism c : P1 -> P1 { map pt -> pt fiber 1; map cell -> cell fiber 1 } strict
    tower T = product(P1)
    profn F on T level 2 { pt.cell: 1 }
    query chipro F
    check diagrams depth 3 seed 7
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from errors import DSLError, LexError, ParseError, ProchernError, ResolutionError
from rings import UNIT, AtomTable, DenominatorSet, GClass, LocClass

MAX_DEPTH = 64
MAX_EXPONENT = 64
MAX_INT_DIGITS = 60
MAX_LEVEL = 16

Loc = Tuple[int, int]
NOWHERE: Loc = (0, 0)


# Scanner

def is_name_first(c: str) -> bool:
    return c.isascii() and (c.isalpha() or c == "_")


def is_name_rest(c: str) -> bool:
    return c.isascii() and (c.isalnum() or c in "_.")


PUNCT = "{}()[];,:=^*+-/"


@dataclass(frozen=True)
class Token:
    kind: str  # NAME, INT, PUNCT, EOF
    text: str
    line: int
    col: int

    @property
    def loc(self) -> Loc:
        return (self.line, self.col)


class Scanner:
    def __init__(self, src: str):
        self._src = src
        self._pos = 0
        self._line = 1
        self._col = 1

    def tokens(self) -> List[Token]:
        out = []
        while True:
            tok = self.next_token()
            out.append(tok)
            if tok.kind == "EOF":
                return out

    def next_token(self) -> Token:
        self._skip_blank()
        line, col = self._line, self._col
        c = self._current_char()
        if c == "":
            return Token("EOF", "", line, col)
        if is_name_first(c):
            return Token("NAME", self._word(is_name_rest), line, col)
        if c in "0123456789":
            text = self._word(lambda ch: ch in "0123456789")
            if len(text) > MAX_INT_DIGITS:
                raise LexError(f"integer literal longer than {MAX_INT_DIGITS} digits", line, col)
            return Token("INT", text, line, col)
        if c == "-" and self._peek() == ">":
            self._advance()
            self._advance()
            return Token("PUNCT", "->", line, col)
        if c in PUNCT:
            self._advance()
            return Token("PUNCT", c, line, col)
        raise LexError(f"unexpected character {c!r}", line, col)

    def _current_char(self) -> str:
        return self._src[self._pos] if self._pos < len(self._src) else ""

    def _peek(self) -> str:
        return self._src[self._pos + 1] if self._pos + 1 < len(self._src) else ""

    def _advance(self) -> None:
        if self._src[self._pos] == "\n":
            self._line += 1
            self._col = 1
        else:
            self._col += 1
        self._pos += 1

    def _word(self, is_rest) -> str:
        start = self._pos
        self._advance()
        while self._current_char() and is_rest(self._current_char()):
            self._advance()
        return self._src[start:self._pos]

    def _skip_blank(self) -> None:
        while True:
            c = self._current_char()
            if c and c.isspace():
                self._advance()
            elif c == "#":
                while self._current_char() not in ("", "\n"):
                    self._advance()
            else:
                return


# Class expressions


@dataclass(frozen=True)
class Num:
    value: int
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Sym:
    name: str
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return self.name


@dataclass(frozen=True)
class Group:
    inner: Any
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"({self.inner.render()})"


@dataclass(frozen=True)
class Pow:
    base: Any
    exp: int
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"{self.base.render()}^{self.exp}"


@dataclass(frozen=True)
class Mul:
    factors: Tuple[Any, ...]
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return "*".join(f.render() for f in self.factors)


@dataclass(frozen=True)
class Add:
    terms: Tuple[Tuple[int, Any], ...]  # (sign, term)
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        out = ""
        for i, (sign, term) in enumerate(self.terms):
            if i == 0:
                out = ("-" if sign < 0 else "") + term.render()
            else:
                out += (" - " if sign < 0 else " + ") + term.render()
        return out


@dataclass(frozen=True)
class Frac:
    """A localized class: numerator over a denominator factor."""
    num: Any
    den: Any
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"{self.num.render()}/{self.den.render()}"


CExpr = Union[Num, Sym, Group, Pow, Mul, Add]


# References and arguments


@dataclass(frozen=True)
class Ref:
    name: str
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return self.name


@dataclass(frozen=True)
class One:
    tower: Ref
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"one({self.tower.render()})"


@dataclass(frozen=True)
class InlineCyl:
    tower: Ref
    level: int
    members: Optional[Tuple[Ref, ...]]  # None means every stratum
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"cyl({self.tower.render()}, {self.level}, {render_members(self.members)})"


@dataclass(frozen=True)
class RatLit:
    num: int
    den: int = 1
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"{self.num}/{self.den}" if self.den != 1 else str(self.num)

    def value(self) -> Fraction:
        if self.den == 0:
            raise ResolutionError("zero denominator", *self.loc)
        return Fraction(self.num, self.den)


@dataclass(frozen=True)
class Entry:
    key: Any  # Ref for strata, int for integrand values
    value: Any
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        key = self.key.render() if hasattr(self.key, "render") else str(self.key)
        value = self.value.render() if hasattr(self.value, "render") else str(self.value)
        return f"{key}: {value}"


@dataclass(frozen=True)
class Table:
    entries: Tuple[Entry, ...]
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return "{" + ", ".join(e.render() for e in self.entries) + "}"


@dataclass(frozen=True)
class Integrand:
    """`id`, `one`, or a table of values."""
    kind: str
    table: Optional[Table] = None
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return "f=" + (self.table.render() if self.kind == "table" else self.kind)


@dataclass(frozen=True)
class StepSpec:
    """`own`, or a tuple of step values optionally repeated periodically."""
    values: Optional[Tuple[Any, ...]]
    periodic: bool = False
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        if self.values is None:
            return "by own"
        inner = ", ".join(v.render() for v in self.values)
        return f"by ({inner})" + (" periodic" if self.periodic else "")


@dataclass(frozen=True)
class Point:
    ids: Tuple[Ref, ...]
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return "at (" + ", ".join(r.render() for r in self.ids) + ")"


@dataclass(frozen=True)
class Opt:
    key: str
    value: int
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        if self.key == "w":
            return f"w={self.value}"
        return f"{self.key} {self.value}"


@dataclass(frozen=True)
class Word:
    text: str
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return self.text


def render_members(members: Optional[Sequence[Ref]]) -> str:
    if members is None:
        return "all"
    return "{" + ", ".join(m.render() for m in members) + "}"


# Statements


@dataclass(frozen=True)
class AtomDecl:
    name: str
    euler: int
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"atom {self.name} euler {self.euler}"


@dataclass(frozen=True)
class StratumDecl:
    name: str
    cls: Any
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"stratum {self.name} class {self.cls.render()}"


@dataclass(frozen=True)
class VarietyDecl:
    name: str
    strata: Tuple[StratumDecl, ...]
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"variety {self.name} {{ " + "; ".join(s.render() for s in self.strata) + " }"


@dataclass(frozen=True)
class MapDecl:
    source: Ref
    target: Ref
    fiber: Any
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"map {self.source.render()} -> {self.target.render()} fiber {self.fiber.render()}"


@dataclass(frozen=True)
class MorphismDecl:
    name: str
    source: Ref
    target: Ref
    maps: Tuple[MapDecl, ...]
    strict: bool = False
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        body = "; ".join(m.render() for m in self.maps)
        out = f"morphism {self.name} : {self.source.render()} -> {self.target.render()} {{ {body} }}"
        return out + (" strict" if self.strict else "")


@dataclass(frozen=True)
class TowerGen:
    kind: str  # product, bundle, arcs, steps, projective
    args: Tuple[Ref, ...]
    fibers: Tuple[Any, ...] = ()
    periodic: bool = False
    number: int = 0  # dim for arcs, shift for projective
    singular: bool = False
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        names = ", ".join(a.render() for a in self.args)
        if self.kind == "bundle":
            inner = ", ".join(f.render() for f in self.fibers) + (" periodic" if self.periodic else "")
            return f"bundle({names}; {inner})"
        if self.kind == "arcs":
            return f"arcs({names}, dim={self.number}" + (", singular)" if self.singular else ")")
        if self.kind == "projective" and self.number:
            return f"projective({names}, shift={self.number})"
        return f"{self.kind}({names})"


@dataclass(frozen=True)
class TowerDecl:
    name: str
    gen: TowerGen
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"tower {self.name} = {self.gen.render()}"


@dataclass(frozen=True)
class SystemDecl:
    name: str
    tower: Ref
    weights: Optional[Table]  # None for the unit system
    overrides: Tuple[Tuple[int, Table], ...] = ()
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        out = f"system {self.name} on {self.tower.render()} = "
        out += "unit" if self.weights is None else f"weights {self.weights.render()}"
        for n, table in self.overrides:
            out += f" override {n} {table.render()}"
        return out


@dataclass(frozen=True)
class ProfnDecl:
    name: str
    tower: Ref
    level: int
    system: Optional[Ref]
    values: Table
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        out = f"profn {self.name} on {self.tower.render()} level {self.level}"
        if self.system is not None:
            out += f" system {self.system.render()}"
        return out + f" {self.values.render()}"


@dataclass(frozen=True)
class CylDecl:
    name: str
    tower: Ref
    level: int
    members: Optional[Tuple[Ref, ...]]
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"cyl {self.name} on {self.tower.render()} level {self.level} {render_members(self.members)}"


@dataclass(frozen=True)
class FnDecl:
    name: str
    variety: Ref
    values: Table
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        return f"fn {self.name} on {self.variety.render()} {self.values.render()}"


@dataclass(frozen=True)
class SeriesDecl:
    name: str
    tower: Ref
    terms: Tuple[Any, ...] = ()
    greedy: Optional[RatLit] = None
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        out = f"series {self.name} on {self.tower.render()} "
        if self.greedy is not None:
            return out + f"= greedy({self.greedy.render()})"
        return out + "{" + ", ".join(t.render() for t in self.terms) + "}"


@dataclass(frozen=True)
class PromorphismDecl:
    name: str
    source: Ref
    target: Ref
    morphism: Optional[Ref]  # None for the identity promorphism
    loc: Loc = field(default=NOWHERE, compare=False)

    def render(self) -> str:
        rhs = "identity" if self.morphism is None else f"pullback({self.morphism.render()})"
        return f"promorphism {self.name} : {self.source.render()} -> {self.target.render()} = {rhs}"


@dataclass(frozen=True)
class Query:
    op: str
    args: Tuple[Any, ...]
    loc: Loc = field(default=NOWHERE, compare=False)

    @property
    def title(self) -> str:
        return " ".join([self.op] + [a.render() for a in self.args])

    def render(self) -> str:
        return f"query {self.title}"


@dataclass(frozen=True)
class Check:
    op: str
    args: Tuple[Any, ...]
    loc: Loc = field(default=NOWHERE, compare=False)

    @property
    def title(self) -> str:
        return " ".join([self.op] + [a.render() for a in self.args])

    def option(self, key: str, default: Optional[int] = None) -> Optional[int]:
        for a in self.args:
            if isinstance(a, Opt) and a.key == key:
                return a.value
        return default

    def render(self) -> str:
        return f"check {self.title}"


Declaration = Union[AtomDecl, VarietyDecl, MorphismDecl, TowerDecl, SystemDecl, ProfnDecl,
                    CylDecl, FnDecl, SeriesDecl, PromorphismDecl]


@dataclass
class Document:
    statements: Tuple[Any, ...]
    env: Optional["Env"] = field(default=None, compare=False, repr=False)

    @property
    def declarations(self) -> List[Any]:
        return [s for s in self.statements if not isinstance(s, (Query, Check))]

    @property
    def queries(self) -> List[Query]:
        return [s for s in self.statements if isinstance(s, Query)]

    @property
    def checks(self) -> List[Check]:
        return [s for s in self.statements if isinstance(s, Check)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Document):
            return NotImplemented
        return self.statements == other.statements


def render(doc: Document) -> str:
    return "".join(s.render() + "\n" for s in doc.statements)


# Parser

QUERY_OPS = (
    "chi", "gamma", "push", "pull", "chif", "chipro", "gammapro", "stchipro", "stgammapro",
    "stable", "measure", "integrate", "eval", "partial", "equal", "levelsets", "limit",
)
CHECK_OPS = ("projection_formula", "naturality", "system", "diagrams", "stability", "welldefined", "limits")
OPTION_KEYS = ("depth", "seed", "horizon")
STATEMENT_KEYWORDS = ("atom", "variety", "morphism", "tower", "system", "profn", "cyl", "fn", "series",
                      "promorphism", "query", "check")


class Parser:
    def __init__(self, src: str):
        self._tokens = Scanner(src).tokens()
        self._i = 0
        self._depth = 0

    def parse(self) -> Document:
        statements = []
        while self._current.kind != "EOF":
            statements.append(self._statement())
        return Document(tuple(statements))

    # Helpers

    @property
    def _current(self) -> Token:
        return self._tokens[self._i]

    def _peek(self, k: int = 1) -> Token:
        return self._tokens[min(self._i + k, len(self._tokens) - 1)]

    def _advance(self) -> Token:
        tok = self._tokens[self._i]
        if tok.kind != "EOF":
            self._i += 1
        return tok

    def _error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self._current
        found = tok.text if tok.kind != "EOF" else "end of input"
        return ParseError(f"{message}, found '{found}'", tok.line, tok.col)

    def _at(self, text: str) -> bool:
        tok = self._current
        return tok.kind in ("NAME", "PUNCT") and tok.text == text

    def _accept(self, text: str) -> bool:
        if self._at(text):
            self._advance()
            return True
        return False

    def _consume(self, text: str) -> Token:
        if not self._at(text):
            raise self._error(f"expected '{text}'")
        return self._advance()

    def _name(self, what: str = "a name") -> Token:
        if self._current.kind != "NAME":
            raise self._error(f"expected {what}")
        return self._advance()

    def _ref(self, what: str = "a name") -> Ref:
        tok = self._name(what)
        return Ref(tok.text, tok.loc)

    def _int(self) -> int:
        negative = self._accept("-")
        if self._current.kind != "INT":
            raise self._error("expected an integer")
        value = int(self._advance().text)
        return -value if negative else value

    def _rat(self) -> RatLit:
        loc = self._current.loc
        num = self._int()
        den = 1
        if self._accept("/"):
            if self._current.kind != "INT":
                raise self._error("expected a denominator")
            den = int(self._advance().text)
        return RatLit(num, den, loc)

    def _comma_separated(self, closing: str, item) -> Tuple[Any, ...]:
        out = []
        if not self._at(closing):
            out.append(item())
            while self._accept(","):
                out.append(item())
        self._consume(closing)
        return tuple(out)

    def _table(self, value, int_keys: bool = False) -> Table:
        loc = self._consume("{").loc

        def entry() -> Entry:
            tok = self._current
            key: Any = self._int() if int_keys else self._ref("a stratum")
            self._consume(":")
            return Entry(key, value(), tok.loc)

        return Table(self._comma_separated("}", entry), loc)

    def _members(self) -> Optional[Tuple[Ref, ...]]:
        if self._accept("all"):
            return None
        self._consume("{")
        return self._comma_separated("}", self._ref)

    def _nested(self):
        self._depth += 1
        if self._depth > MAX_DEPTH:
            raise self._error("expression nested too deeply")

    # Class expressions: sum of products of powers of atoms

    def class_expr(self) -> Any:
        self._nested()
        loc = self._current.loc
        terms = []
        sign = -1 if self._accept("-") else 1
        terms.append((sign, self._product()))
        while self._at("+") or self._at("-"):
            sign = 1 if self._advance().text == "+" else -1
            terms.append((sign, self._product()))
        self._depth -= 1
        if len(terms) == 1 and terms[0][0] == 1:
            return terms[0][1]
        return Add(tuple(terms), loc)

    def _product(self) -> Any:
        loc = self._current.loc
        factors = [self._power()]
        while self._accept("*"):
            factors.append(self._power())
        return factors[0] if len(factors) == 1 else Mul(tuple(factors), loc)

    def _power(self) -> Any:
        loc = self._current.loc
        base = self._primary()
        if self._accept("^"):
            if self._current.kind != "INT":
                raise self._error("expected an exponent")
            tok = self._advance()
            exp = int(tok.text)
            if exp > MAX_EXPONENT:
                raise ParseError(f"exponent {exp} exceeds {MAX_EXPONENT}", tok.line, tok.col)
            return Pow(base, exp, loc)
        return base

    def _primary(self) -> Any:
        tok = self._current
        if tok.kind == "INT":
            self._advance()
            return Num(int(tok.text), tok.loc)
        if tok.kind == "NAME":
            self._advance()
            return Sym(tok.text, tok.loc)
        if self._accept("("):
            inner = self.class_expr()
            self._consume(")")
            return Group(inner, tok.loc)
        raise self._error("expected a class expression")

    def class_value(self) -> Any:
        """A class, or a class over a parenthesized or atomic denominator."""
        loc = self._current.loc
        num = self.class_expr()
        if self._accept("/"):
            return Frac(num, self._power(), loc)
        return num

    # Statements

    def _statement(self) -> Any:
        tok = self._name("a statement keyword")
        handler = getattr(self, f"_stmt_{tok.text}", None)
        if handler is None:
            raise ParseError(f"unknown statement '{tok.text}'", tok.line, tok.col)
        return handler(tok)

    def _stmt_atom(self, tok: Token) -> AtomDecl:
        name = self._name("an atom name").text
        self._consume("euler")
        return AtomDecl(name, self._int(), tok.loc)

    def _stmt_variety(self, tok: Token) -> VarietyDecl:
        name = self._name("a variety name").text
        self._consume("{")
        strata = []
        while not self._at("}"):
            start = self._consume("stratum")
            sname = self._name("a stratum name").text
            self._consume("class")
            strata.append(StratumDecl(sname, self.class_expr(), start.loc))
            if not self._accept(";"):
                break
        self._consume("}")
        return VarietyDecl(name, tuple(strata), tok.loc)

    def _stmt_morphism(self, tok: Token) -> MorphismDecl:
        name = self._name("a morphism name").text
        self._consume(":")
        source = self._ref("a source variety")
        self._consume("->")
        target = self._ref("a target variety")
        self._consume("{")
        maps = []
        while not self._at("}"):
            start = self._consume("map")
            s = self._ref("a source stratum")
            self._consume("->")
            t = self._ref("a target stratum")
            self._consume("fiber")
            maps.append(MapDecl(s, t, self.class_expr(), start.loc))
            if not self._accept(";"):
                break
        self._consume("}")
        strict = self._accept("strict")
        return MorphismDecl(name, source, target, tuple(maps), strict, tok.loc)

    def _stmt_tower(self, tok: Token) -> TowerDecl:
        name = self._name("a tower name").text
        self._consume("=")
        gen_tok = self._name("a tower generator")
        kind = gen_tok.text
        self._consume("(")
        if kind == "product":
            gen = TowerGen(kind, (self._ref("a variety"),), loc=gen_tok.loc)
            self._consume(")")
        elif kind == "bundle":
            base = self._ref("a variety")
            self._consume(";")
            fibers = [self.class_expr()]
            while self._accept(","):
                fibers.append(self.class_expr())
            periodic = self._accept("periodic")
            self._consume(")")
            gen = TowerGen(kind, (base,), tuple(fibers), periodic, loc=gen_tok.loc)
        elif kind == "arcs":
            base = self._ref("a variety")
            self._consume(",")
            self._consume("dim")
            self._consume("=")
            dim = self._int()
            singular = False
            if self._accept(","):
                self._consume("singular")
                singular = True
            self._consume(")")
            gen = TowerGen(kind, (base,), number=dim, singular=singular, loc=gen_tok.loc)
        elif kind == "steps":
            gen = TowerGen(kind, self._comma_separated(")", lambda: self._ref("a morphism")), loc=gen_tok.loc)
        elif kind == "projective":
            base = self._ref("a variety")
            shift = 0
            if self._accept(","):
                self._consume("shift")
                self._consume("=")
                shift = self._int()
            self._consume(")")
            gen = TowerGen(kind, (base,), number=shift, loc=gen_tok.loc)
        else:
            raise ParseError(f"unknown tower generator '{kind}'", gen_tok.line, gen_tok.col)
        return TowerDecl(name, gen, tok.loc)

    def _stmt_system(self, tok: Token) -> SystemDecl:
        name = self._name("a system name").text
        self._consume("on")
        tower = self._ref("a tower")
        self._consume("=")
        weights = None
        if not self._accept("unit"):
            self._consume("weights")
            weights = self._table(self._int)
        overrides = []
        while self._accept("override"):
            n = self._int()
            overrides.append((n, self._table(self._int)))
        return SystemDecl(name, tower, weights, tuple(overrides), tok.loc)

    def _stmt_profn(self, tok: Token) -> ProfnDecl:
        name = self._name("a function name").text
        self._consume("on")
        tower = self._ref("a tower")
        self._consume("level")
        level = self._int()
        system = self._ref("a system") if self._accept("system") else None
        return ProfnDecl(name, tower, level, system, self._table(self._int), tok.loc)

    def _stmt_cyl(self, tok: Token) -> CylDecl:
        name = self._name("a cylinder name").text
        self._consume("on")
        tower = self._ref("a tower")
        self._consume("level")
        level = self._int()
        return CylDecl(name, tower, level, self._members(), tok.loc)

    def _stmt_fn(self, tok: Token) -> FnDecl:
        name = self._name("a function name").text
        self._consume("on")
        variety = self._ref("a variety")
        return FnDecl(name, variety, self._table(self._int), tok.loc)

    def _stmt_series(self, tok: Token) -> SeriesDecl:
        name = self._name("a series name").text
        self._consume("on")
        tower = self._ref("a tower")
        if self._accept("="):
            self._consume("greedy")
            self._consume("(")
            x = self._rat()
            self._consume(")")
            return SeriesDecl(name, tower, greedy=x, loc=tok.loc)
        self._consume("{")
        return SeriesDecl(name, tower, self._comma_separated("}", self._pfref), loc=tok.loc)

    def _stmt_promorphism(self, tok: Token) -> PromorphismDecl:
        name = self._name("a promorphism name").text
        self._consume(":")
        source = self._ref("a source tower")
        self._consume("->")
        target = self._ref("a target tower")
        self._consume("=")
        if self._accept("identity"):
            return PromorphismDecl(name, source, target, None, tok.loc)
        self._consume("pullback")
        self._consume("(")
        morphism = self._ref("a morphism")
        self._consume(")")
        return PromorphismDecl(name, source, target, morphism, tok.loc)

    # Query and check arguments

    def _pfref(self) -> Any:
        tok = self._current
        if self._at("one") and self._peek().text == "(":
            self._advance()
            self._consume("(")
            tower = self._ref("a tower")
            self._consume(")")
            return One(tower, tok.loc)
        if self._at("cyl") and self._peek().text == "(":
            return self._inline_cyl()
        return self._ref("a function, cylinder or one(TOWER)")

    def _inline_cyl(self) -> InlineCyl:
        tok = self._consume("cyl")
        self._consume("(")
        tower = self._ref("a tower")
        self._consume(",")
        level = self._int()
        self._consume(",")
        members = self._members()
        self._consume(")")
        return InlineCyl(tower, level, members, tok.loc)

    def _cylref(self) -> Any:
        if self._at("cyl") and self._peek().text == "(":
            return self._inline_cyl()
        return self._ref("a cylinder")

    def _shift(self) -> List[Opt]:
        if self._at("w") and self._peek().text == "=":
            tok = self._advance()
            self._consume("=")
            return [Opt("w", self._int(), tok.loc)]
        return []

    def _step_spec(self, classes: bool) -> StepSpec:
        tok = self._consume("by")
        if self._accept("own"):
            return StepSpec(None, loc=tok.loc)
        self._consume("(")
        item = self.class_expr if classes else self._rat
        values = self._comma_separated(")", item)
        if not values:
            raise self._error("expected at least one step value")
        return StepSpec(values, self._accept("periodic"), tok.loc)

    def _integrand(self, classes: bool) -> Integrand:
        tok = self._consume("f")
        self._consume("=")
        if self._accept("id"):
            return Integrand("id", loc=tok.loc)
        if self._accept("one"):
            return Integrand("one", loc=tok.loc)
        return Integrand("table", self._table(self.class_value if classes else self._rat, int_keys=True), tok.loc)

    def _word(self, *choices: str) -> Word:
        tok = self._current
        if tok.kind != "NAME" or tok.text not in choices:
            raise self._error("expected one of " + ", ".join(choices))
        self._advance()
        return Word(tok.text, tok.loc)

    def _stmt_query(self, tok: Token) -> Query:
        op_tok = self._name("a query")
        op = op_tok.text
        if op not in QUERY_OPS:
            raise ParseError(f"unknown query '{op}'", op_tok.line, op_tok.col)
        args: List[Any] = []
        if op in ("chi", "gamma"):
            args.append(self._ref("a function or variety"))
        elif op in ("push", "pull"):
            args += [self._ref("a morphism"), self._ref("a function")]
        elif op == "chif":
            args.append(self._ref("a morphism"))
        elif op in ("chipro", "gammapro"):
            args.append(self._pfref())
            args += self._shift()
        elif op in ("stchipro", "stgammapro"):
            args += [self._pfref(), self._step_spec(classes=op == "stgammapro")]
        elif op == "stable":
            which = self._word("chi", "gamma")
            args += [which, self._pfref(), self._step_spec(classes=which.text == "gamma")]
        elif op == "measure":
            args.append(self._cylref())
            args += self._shift()
        elif op == "integrate":
            which = self._word("chi", "gamma", "chipro", "gammapro")
            args.append(which)
            if which.text in ("chi", "gamma"):
                args.append(self._ref("a function"))
            else:
                args += [self._pfref(), self._step_spec(classes=which.text == "gammapro")]
            args.append(self._integrand(classes=which.text in ("gamma", "gammapro")))
        elif op == "eval":
            args.append(self._pfref())
            at = self._consume("at")
            self._consume("(")
            args.append(Point(self._comma_separated(")", self._ref), at.loc))
        elif op == "partial":
            args.append(self._ref("a series"))
            n = self._current
            args.append(Num(self._int(), n.loc))
        elif op == "equal":
            args += [self._pfref(), self._pfref()]
        elif op == "levelsets":
            args.append(self._pfref())
        elif op == "limit":
            args.append(self._table(self._int, int_keys=True))
            by = self._consume("by")
            # a bare multiplier p is the constant list (p) periodic
            if self._accept("("):
                values = self._comma_separated(")", lambda: Num(self._int()))
                if not values:
                    raise self._error("expected at least one multiplier")
                args.append(StepSpec(values, self._accept("periodic"), by.loc))
            else:
                args.append(StepSpec((Num(self._int()),), True, by.loc))
            args += self._shift()
        return Query(op, tuple(args), tok.loc)

    def _at_argument(self) -> bool:
        """An optional check argument follows, rather than an option or the next statement."""
        tok = self._current
        if tok.kind != "NAME" or tok.text in OPTION_KEYS:
            return False
        return tok.text not in STATEMENT_KEYWORDS or self._peek().text == "("

    def _options(self) -> List[Opt]:
        out = []
        while self._current.kind == "NAME" and self._current.text in OPTION_KEYS:
            key = self._advance()
            out.append(Opt(key.text, self._int(), key.loc))
        return out

    def _stmt_check(self, tok: Token) -> Check:
        op_tok = self._name("a check")
        op = op_tok.text
        if op not in CHECK_OPS:
            raise ParseError(f"unknown check '{op}'", op_tok.line, op_tok.col)
        args: List[Any] = []
        if op == "projection_formula":
            if self._at_argument():
                args.append(self._ref("a morphism"))
                args.append(self._word("along"))
                args.append(self._ref("a morphism"))
        elif op == "naturality":
            if self._at_argument():
                args.append(self._ref("a promorphism"))
        elif op == "system":
            args.append(self._ref("a system"))
        elif op == "stability":
            which = self._word("chi", "gamma")
            args += [which, self._pfref(), self._step_spec(classes=which.text == "gamma")]
        elif op == "welldefined":
            if self._at_argument():
                args.append(self._pfref())
        args += self._options()
        return Check(op, tuple(args), tok.loc)


def parse_syntax(text: str) -> Document:
    """Scan and parse without resolving names."""
    try:
        return Parser(text).parse()
    except RecursionError:
        raise ParseError("input nested too deeply", 1, 1) from None


def parse(text: str) -> Document:
    doc = parse_syntax(text)
    doc.env = resolve(doc)
    return doc


def parse_bytes(data: bytes) -> Document:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        prefix = data[: e.start].decode("utf-8", errors="replace")
        line = prefix.count("\n") + 1
        col = len(prefix) - (prefix.rfind("\n") + 1) + 1
        raise LexError("input is not valid UTF-8", line, col) from None
    return parse(text)


def parse_class_value(text: str, table: AtomTable) -> Union[GClass, LocClass]:
    """Read back a rendered class or localized class."""
    parser = Parser(text)
    node = parser.class_value()
    if parser._current.kind != "EOF":
        raise parser._error("expected end of class")
    return class_value(node, table, None)


def parse_rational(text: str) -> Fraction:
    parser = Parser(text)
    lit = parser._rat()
    if parser._current.kind != "EOF":
        raise parser._error("expected end of rational")
    return lit.value()


# Resolution

from arcspace import arc_tower  # noqa: E402
from bivariant import BivariantFn, BivClassSystem, unit_system  # noqa: E402
from geom import ConstructibleFunction, MorphismModel, VarietyModel  # noqa: E402
from prosys import (  # noqa: E402
    BundleTower,
    CylinderSet,
    ProductTower,
    ProFunction,
    ProMorphism,
    ProjectiveTower,
    SeriesProFunction,
    StepsTower,
    Tower,
    greedy_series,
    identity_promorphism,
    procharacteristic,
    product_weight_system,
    pullback_promorphism,
)


@dataclass
class Env:
    """Everything a resolved document declares, by name."""
    table: AtomTable
    kinds: Dict[str, str] = field(default_factory=dict)
    varieties: Dict[str, VarietyModel] = field(default_factory=dict)
    morphisms: Dict[str, MorphismModel] = field(default_factory=dict)
    towers: Dict[str, Tower] = field(default_factory=dict)
    systems: Dict[str, BivClassSystem] = field(default_factory=dict)
    profns: Dict[str, ProFunction] = field(default_factory=dict)
    cyls: Dict[str, CylinderSet] = field(default_factory=dict)
    fns: Dict[str, ConstructibleFunction] = field(default_factory=dict)
    series: Dict[str, SeriesProFunction] = field(default_factory=dict)
    promorphisms: Dict[str, ProMorphism] = field(default_factory=dict)

    def get(self, ref: Ref, kind: str):
        found = self.kinds.get(ref.name)
        if found is None:
            raise ResolutionError(f"'{ref.name}' is not declared", *ref.loc)
        if found != kind:
            raise ResolutionError(f"'{ref.name}' is a {found}, expected a {kind}", *ref.loc)
        return getattr(self, _STORES[kind])[ref.name]

    def cylinder(self, tower_ref: Ref, level: int, members: Optional[Tuple[Ref, ...]], loc: Loc) -> CylinderSet:
        tower = self.get(tower_ref, "tower")
        model = tower.level(check_level(level, loc))
        if members is None:
            return CylinderSet.whole(tower, level)
        for m in members:
            if m.name not in model:
                raise ResolutionError(f"'{model.name}' has no stratum '{m.name}'", *m.loc)
        return CylinderSet(tower, level, [m.name for m in members])

    def cylinder_of(self, ref: Any) -> CylinderSet:
        if isinstance(ref, InlineCyl):
            return self.cylinder(ref.tower, ref.level, ref.members, ref.loc)
        return self.get(ref, "cyl")

    def profunction(self, ref: Any) -> ProFunction:
        """A PFREF: a declared function, a cylinder's indicator, or one(TOWER)."""
        if isinstance(ref, One):
            return procharacteristic(self.get(ref.tower, "tower"))
        if isinstance(ref, InlineCyl):
            return self.cylinder_of(ref).indicator()
        if self.kinds.get(ref.name) == "cyl":
            return self.cyls[ref.name].indicator()
        return self.get(ref, "profn")


def check_level(level: int, loc: Loc) -> int:
    if level > MAX_LEVEL:
        raise ResolutionError(f"level {level} exceeds {MAX_LEVEL}", *loc)
    return level


_STORES = {
    "atom": "kinds",
    "variety": "varieties",
    "morphism": "morphisms",
    "tower": "towers",
    "system": "systems",
    "profn": "profns",
    "cyl": "cyls",
    "fn": "fns",
    "series": "series",
    "promorphism": "promorphisms",
}


def class_of(node: Any, table: AtomTable, declared: Optional[Dict[str, Loc]], use: Loc = NOWHERE) -> GClass:
    """Evaluate a class expression; atoms must be declared before `use` when `declared` is given."""
    if isinstance(node, Num):
        return table.integer(node.value)
    if isinstance(node, Sym):
        if node.name == UNIT:
            return table.one()
        if node.name not in table:
            raise ResolutionError(f"unknown atom '{node.name}'", *node.loc)
        if declared is not None and node.name in declared and declared[node.name] > use:
            raise ResolutionError(f"atom '{node.name}' is used before its declaration", *node.loc)
        return table.atom(node.name)
    if isinstance(node, Group):
        return class_of(node.inner, table, declared, use)
    if isinstance(node, Pow):
        return class_of(node.base, table, declared, use) ** node.exp
    if isinstance(node, Mul):
        out = table.one()
        for f in node.factors:
            out = out * class_of(f, table, declared, use)
        return out
    if isinstance(node, Add):
        out = table.zero()
        for sign, term in node.terms:
            value = class_of(term, table, declared, use)
            out = out + value if sign > 0 else out - value
        return out
    raise ResolutionError("expected a class expression", *getattr(node, "loc", NOWHERE))


def class_value(node: Any, table: AtomTable, declared: Optional[Dict[str, Loc]], use: Loc = NOWHERE):
    if isinstance(node, Frac):
        num = class_of(node.num, table, declared, use)
        den = class_of(node.den, table, declared, use)
        try:
            return LocClass.fraction(num, den, DenominatorSet.generated_by(table, [den]))
        except ProchernError as e:
            raise ResolutionError(str(e), *node.loc) from None
    return class_of(node, table, declared, use)


class Resolver:
    def __init__(self, doc: Document):
        self.doc = doc
        atoms = [s for s in doc.statements if isinstance(s, AtomDecl)]
        self.declared: Dict[str, Loc] = {}
        for a in atoms:
            if a.name in self.declared:
                raise ResolutionError(f"atom '{a.name}' declared twice", *a.loc)
            self.declared[a.name] = a.loc
        try:
            table = AtomTable((a.name, a.euler) for a in atoms)
        except ProchernError as e:
            loc = atoms[0].loc if atoms else (1, 1)
            raise ResolutionError(str(e), *loc) from None
        self.env = Env(table)

    def resolve(self) -> Env:
        for stmt in self.doc.statements:
            if isinstance(stmt, (Query, Check)):
                name = f"{type(stmt).__name__.lower()} {stmt.op}"
                handler = self._check_refs
            else:
                name = stmt.name
                if name in self.env.kinds:
                    raise ResolutionError(f"'{name}' is already declared", *stmt.loc)
                handler = getattr(self, f"_{type(stmt).__name__}")
            try:
                handler(stmt)
            except DSLError:
                raise
            except ProchernError as e:
                raise ResolutionError(f"{name}: {e}", *stmt.loc) from None
        return self.env

    def _declare(self, name: str, kind: str, value: Any) -> None:
        self.env.kinds[name] = kind
        if kind != "atom":
            getattr(self.env, _STORES[kind])[name] = value

    def cls(self, node: Any, use: Loc) -> GClass:
        return class_of(node, self.env.table, self.declared, use)

    def _strata_values(self, table: Table, model: VarietyModel) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for e in table.entries:
            if e.key.name not in model:
                raise ResolutionError(f"'{model.name}' has no stratum '{e.key.name}'", *e.loc)
            if e.key.name in out:
                raise ResolutionError(f"stratum '{e.key.name}' listed twice", *e.loc)
            out[e.key.name] = e.value
        return out

    # Declarations

    def _AtomDecl(self, stmt: AtomDecl) -> None:
        self._declare(stmt.name, "atom", None)

    def _VarietyDecl(self, stmt: VarietyDecl) -> None:
        for s in stmt.strata:
            if "." in s.name:
                raise ResolutionError(f"stratum name '{s.name}' may not contain '.'", *s.loc)
        strata = [(s.name, self.cls(s.cls, stmt.loc)) for s in stmt.strata]
        self._declare(stmt.name, "variety", VarietyModel(stmt.name, strata, self.env.table))

    def _MorphismDecl(self, stmt: MorphismDecl) -> None:
        source = self.env.get(stmt.source, "variety")
        target = self.env.get(stmt.target, "variety")
        stratum_map: Dict[str, str] = {}
        fiber: Dict[str, GClass] = {}
        for m in stmt.maps:
            if m.source.name in stratum_map:
                raise ResolutionError(f"stratum '{m.source.name}' mapped twice", *m.loc)
            if m.source.name not in source:
                raise ResolutionError(f"'{source.name}' has no stratum '{m.source.name}'", *m.source.loc)
            if m.target.name not in target:
                raise ResolutionError(f"'{target.name}' has no stratum '{m.target.name}'", *m.target.loc)
            stratum_map[m.source.name] = m.target.name
            fiber[m.source.name] = self.cls(m.fiber, stmt.loc)
        self._declare(stmt.name, "morphism",
                      MorphismModel(stmt.name, source, target, stratum_map, fiber, stmt.strict))

    def _TowerDecl(self, stmt: TowerDecl) -> None:
        gen = stmt.gen
        if gen.kind == "steps":
            tower: Tower = StepsTower(stmt.name, [self.env.get(r, "morphism") for r in gen.args])
        else:
            X = self.env.get(gen.args[0], "variety")
            if abs(gen.number) > MAX_EXPONENT:
                raise ResolutionError(f"{gen.kind} parameter {gen.number} exceeds {MAX_EXPONENT}", *gen.loc)
            if gen.kind == "product":
                tower = ProductTower(stmt.name, X)
            elif gen.kind == "bundle":
                tower = BundleTower(stmt.name, X, [self.cls(f, stmt.loc) for f in gen.fibers], gen.periodic)
            elif gen.kind == "arcs":
                tower = arc_tower(X, gen.number, smooth=not gen.singular, name=stmt.name)
            else:
                tower = ProjectiveTower(stmt.name, X, gen.number)
        self._declare(stmt.name, "tower", tower)

    def _SystemDecl(self, stmt: SystemDecl) -> None:
        tower = self.env.get(stmt.tower, "tower")
        if stmt.weights is None:
            system = unit_system(tower, stmt.name)
        else:
            if not isinstance(tower, ProductTower):
                raise ResolutionError(f"weight systems need a product tower, '{tower.name}' is not one",
                                      *stmt.tower.loc)
            system = product_weight_system(tower, self._strata_values(stmt.weights, tower.X), stmt.name)
        for n, table in stmt.overrides:
            check_level(n, table.loc)
            step = tower.step(n)
            values = self._strata_values(table, step.source)
            system = system.with_override(n, BivariantFn(step, ConstructibleFunction.from_sparse(step.source, values)))
        self._declare(stmt.name, "system", system)

    def _ProfnDecl(self, stmt: ProfnDecl) -> None:
        tower = self.env.get(stmt.tower, "tower")
        level = check_level(stmt.level, stmt.loc)
        system = self.env.get(stmt.system, "system") if stmt.system is not None else None
        if system is not None and system.tower is not tower:
            raise ResolutionError(f"system '{stmt.system.name}' is not on '{tower.name}'", *stmt.system.loc)
        values = self._strata_values(stmt.values, tower.level(level))
        self._declare(stmt.name, "profn", ProFunction.sparse(tower, level, values, system))

    def _CylDecl(self, stmt: CylDecl) -> None:
        self._declare(stmt.name, "cyl", self.env.cylinder(stmt.tower, stmt.level, stmt.members, stmt.loc))

    def _FnDecl(self, stmt: FnDecl) -> None:
        X = self.env.get(stmt.variety, "variety")
        values = self._strata_values(stmt.values, X)
        self._declare(stmt.name, "fn", ConstructibleFunction.from_sparse(X, values))

    def _SeriesDecl(self, stmt: SeriesDecl) -> None:
        tower = self.env.get(stmt.tower, "tower")
        if stmt.greedy is not None:
            series = greedy_series(tower, stmt.greedy.value())
        else:
            terms = [self.env.profunction(t) for t in stmt.terms]
            for t, ref in zip(terms, stmt.terms):
                if t.tower is not tower:
                    raise ResolutionError(f"term '{ref.render()}' is not on '{tower.name}'", *ref.loc)
            series = SeriesProFunction(tower, terms)
        self._declare(stmt.name, "series", series)

    def _PromorphismDecl(self, stmt: PromorphismDecl) -> None:
        target = self.env.get(stmt.target, "tower")
        if stmt.morphism is None:
            source = self.env.get(stmt.source, "tower")
            if source is not target:
                raise ResolutionError("an identity promorphism needs the same source and target",
                                      *stmt.source.loc)
            phi = identity_promorphism(target)
        else:
            if stmt.source.name in self.env.kinds:
                raise ResolutionError(f"'{stmt.source.name}' is already declared", *stmt.source.loc)
            phi = pullback_promorphism(stmt.source.name, target, self.env.get(stmt.morphism, "morphism"))
            self._declare(stmt.source.name, "tower", phi.source)
        phi.name = stmt.name
        self._declare(stmt.name, "promorphism", phi)

    def _check_refs(self, stmt: Any) -> None:
        for arg in stmt.args:
            if isinstance(arg, (One, InlineCyl)):
                self.env.profunction(arg)
            elif isinstance(arg, Ref) and arg.name not in self.env.kinds:
                raise ResolutionError(f"'{arg.name}' is not declared", *arg.loc)


def resolve(doc: Document) -> Env:
    try:
        return Resolver(doc).resolve()
    except DSLError:
        raise
    except (ProchernError, RecursionError) as e:
        raise ResolutionError(str(e), 1, 1) from None

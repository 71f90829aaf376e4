"""Mission formulas over task symbols and their finite-word automata.

Formulas are syntactically co-safe: negation on atoms only, temporal
operators limited to next / until / eventually, satisfaction decided by a
finite prefix.  A formula compiles to a finite automaton whose letters are
single task symbols; guards carry an optional required symbol and a forbid
set so that formulas like ``!c U b`` do not blow up the transition count.
"""

from __future__ import annotations

from dataclasses import dataclass, field



class FormulaSyntaxError(ValueError):
    """Raised on malformed mission text, with position and expectation."""

    def __init__(self, pos: int, expected: str, found: str):
        self.pos = pos
        self.expected = expected
        self.found = found
        super().__init__(f"at position {pos}: expected {expected}, found {found!r}")


class NotCoSafeError(ValueError):
    """Raised when a construct outside the co-safe fragment is used."""

    def __init__(self, operator: str):
        self.operator = operator
        super().__init__(f"operator {operator!r} is not allowed in co-safe formulas")


class UnknownSymbolError(KeyError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class TrueF:
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not:
    sub: Atom

    def __str__(self):
        return f"!{self.sub}"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class Next:
    sub: "Formula"

    def __str__(self):
        return f"X {self.sub}"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"({self.left} U {self.right})"


@dataclass(frozen=True)
class Eventually:
    sub: "Formula"

    def __str__(self):
        return f"F {self.sub}"


Formula = TrueF | Atom | Not | And | Or | Next | Until | Eventually

# internal sentinel used during automaton construction only
@dataclass(frozen=True)
class _FalseF:
    def __str__(self):
        return "false"


def atoms_of(f) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset({f.name})
    if isinstance(f, Not):
        return frozenset({f.sub.name})
    if isinstance(f, (And, Or, Until)):
        return atoms_of(f.left) | atoms_of(f.right)
    if isinstance(f, (Next, Eventually)):
        return atoms_of(f.sub)
    return frozenset()


# ---------------------------------------------------------------------------
# Parser.  Grammar: atoms [a-zA-Z_][a-zA-Z0-9_]*; '!' on atoms only;
# precedence ! > X,F > U > & > |, with U/&/| left-associative.

_OPS = {"X", "F", "U", "G"}


def _tokenize(text: str):
    toks = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "()!&|":
            toks.append((c, i))
            i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append((text[i:j], i))
            i = j
            continue
        raise FormulaSyntaxError(i, "operator, atom or parenthesis", c)
    toks.append(("<end>", n))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.idx = 0

    def peek(self):
        return self.toks[self.idx][0]

    def pos(self):
        return self.toks[self.idx][1]

    def eat(self):
        tok = self.toks[self.idx]
        self.idx += 1
        return tok

    def parse(self):
        f = self.parse_or()
        if self.peek() != "<end>":
            raise FormulaSyntaxError(self.pos(), "end of input", self.peek())
        return f

    def parse_or(self):
        f = self.parse_and()
        while self.peek() == "|":
            self.eat()
            f = Or(f, self.parse_and())
        return f

    def parse_and(self):
        f = self.parse_until()
        while self.peek() == "&":
            self.eat()
            f = And(f, self.parse_until())
        return f

    def parse_until(self):
        f = self.parse_unary()
        while self.peek() == "U":
            self.eat()
            f = Until(f, self.parse_unary())
        return f

    def parse_unary(self):
        tok = self.peek()
        if tok == "G":
            raise NotCoSafeError("G")
        if tok == "X":
            self.eat()
            return Next(self.parse_unary())
        if tok == "F":
            self.eat()
            return Eventually(self.parse_unary())
        if tok == "!":
            pos = self.pos()
            self.eat()
            inner = self.peek()
            if inner in _OPS or not (inner[0].isalpha() or inner[0] == "_") or inner == "<end>":
                raise NotCoSafeError("!")
            if inner == "(":
                raise NotCoSafeError("!")
            name, _ = self.eat()
            return Not(Atom(name))
        if tok == "(":
            self.eat()
            f = self.parse_or()
            if self.peek() != ")":
                raise FormulaSyntaxError(self.pos(), "')'", self.peek())
            self.eat()
            return f
        if tok == "<end>":
            raise FormulaSyntaxError(self.pos(), "formula", "<end>")
        if tok[0].isalpha() or tok[0] == "_":
            if tok == "true":
                self.eat()
                return TrueF()
            self.eat()
            return Atom(tok)
        raise FormulaSyntaxError(self.pos(), "formula", tok)


def parse_formula(text: str) -> Formula:
    """Parse mission text into a co-safe formula AST."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Finite-word semantics (independent oracle: plain recursive definition)


def semantic_eval(f: Formula, word) -> bool:
    """Whether the finite ``word`` of task symbols satisfies ``f``.

    Standard finite-trace semantics; atoms (and their negations) require a
    current letter, so the empty word satisfies nothing but ``true``.
    """
    return _sat(f, tuple(word), 0)


def _sat(f, w, i) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, Atom):
        return i < len(w) and w[i] == f.name
    if isinstance(f, Not):
        return i < len(w) and w[i] != f.sub.name
    if isinstance(f, And):
        return _sat(f.left, w, i) and _sat(f.right, w, i)
    if isinstance(f, Or):
        return _sat(f.left, w, i) or _sat(f.right, w, i)
    if isinstance(f, Next):
        return i < len(w) and _sat(f.sub, w, i + 1)
    if isinstance(f, Eventually):
        return any(_sat(f.sub, w, j) for j in range(i, len(w) + 1))
    if isinstance(f, Until):
        for j in range(i, len(w) + 1):
            if _sat(f.right, w, j):
                return True
            if not _sat(f.left, w, j):
                return False
        return False
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Automaton


@dataclass(frozen=True)
class Guard:
    """Transition guard: optionally require one symbol, forbid a set."""

    require: str | None = None
    forbid: frozenset[str] = frozenset()

    def admits(self, sym: str) -> bool:
        return (self.require is None or sym == self.require) and sym not in self.forbid


@dataclass(frozen=True)
class TaskAutomaton:
    states: frozenset[str]
    initial: frozenset[str]
    alphabet: frozenset[str]
    transitions: tuple  # of (from, Guard, to)
    accepting: frozenset[str]

    @property
    def _out(self):
        out = getattr(self, "_outmap", None)
        if out is None:
            out = {}
            for frm, g, to in self.transitions:
                out.setdefault(frm, []).append((g, to))
            object.__setattr__(self, "_outmap", out)
        return out

    def successors(self, state: str, sym: str) -> frozenset[str]:
        return frozenset(to for g, to in self._out.get(state, ()) if g.admits(sym))


# Construction works on a normalized term representation: plain nested
# tuples with flattened, deduplicated n-ary conjunction/disjunction, so
# residual obligations that are equal modulo associativity/commutativity/
# idempotence collapse into one automaton state.
_T = ("T",)
_FALSE = ("0",)


def _nand(children):
    flat = set()
    for c in children:
        if c == _FALSE:
            return _FALSE
        if c == _T:
            continue
        if c[0] == "&":
            flat.update(c[1])
        else:
            flat.add(c)
    if not flat:
        return _T
    if len(flat) == 1:
        return next(iter(flat))
    return ("&", frozenset(flat))


def _nor(children):
    flat = set()
    for c in children:
        if c == _T:
            return _T
        if c == _FALSE:
            continue
        if c[0] == "|":
            flat.update(c[1])
        else:
            flat.add(c)
    if not flat:
        return _FALSE
    if len(flat) == 1:
        return next(iter(flat))
    return ("|", frozenset(flat))


def _to_term(f):
    if isinstance(f, TrueF):
        return _T
    if isinstance(f, _FalseF):
        return _FALSE
    if isinstance(f, Atom):
        return ("a", f.name)
    if isinstance(f, Not):
        return ("n", f.sub.name)
    if isinstance(f, And):
        return _nand([_to_term(f.left), _to_term(f.right)])
    if isinstance(f, Or):
        return _nor([_to_term(f.left), _to_term(f.right)])
    if isinstance(f, Next):
        t = _to_term(f.sub)
        return _FALSE if t == _FALSE else ("X", t)
    if isinstance(f, Eventually):
        t = _to_term(f.sub)
        if t in (_T, _FALSE):
            return t
        return ("Ev", t)
    if isinstance(f, Until):
        l, r = _to_term(f.left), _to_term(f.right)
        if r in (_T, _FALSE):
            return r
        if l == _FALSE:
            return r
        if l == _T:
            return ("Ev", r)
        return ("U", l, r)
    raise TypeError(f"not a formula: {f!r}")


def _term_atoms(t, acc):
    tag = t[0]
    if tag in ("a", "n"):
        acc.add(t[1])
    elif tag in ("&", "|"):
        for c in t[1]:
            _term_atoms(c, acc)
    elif tag in ("X", "Ev"):
        _term_atoms(t[1], acc)
    elif tag == "U":
        _term_atoms(t[1], acc)
        _term_atoms(t[2], acc)


def _deriv(t, sym):
    # sym=None stands for any symbol not mentioned in the term
    tag = t[0]
    if tag in ("T", "0"):
        return t
    if tag == "a":
        return _T if sym == t[1] else _FALSE
    if tag == "n":
        return _FALSE if sym == t[1] else _T
    if tag == "&":
        return _nand([_deriv(c, sym) for c in t[1]])
    if tag == "|":
        return _nor([_deriv(c, sym) for c in t[1]])
    if tag == "X":
        return t[1]
    if tag == "Ev":
        return _nor([_deriv(t[1], sym), t])
    if tag == "U":
        return _nor([_deriv(t[2], sym), _nand([_deriv(t[1], sym), t])])
    raise TypeError(f"bad term {t!r}")


def _clauses(t):
    # disjunctive normal form over sub-obligation terms, as clause sets
    tag = t[0]
    if tag == "T":
        return {frozenset()}
    if tag == "0":
        return set()
    if tag == "|":
        out = set()
        for c in t[1]:
            out |= _clauses(c)
        return out
    if tag == "&":
        acc = {frozenset()}
        for c in t[1]:
            acc = {a | b for a in acc for b in _clauses(c)}
        return acc
    return {frozenset({t})}


def _norm(t):
    """Canonicalize residual obligations so equal states collapse.

    Converts to DNF over the formula's subterm closure and drops subsumed
    clauses; keeps the state space finite and shallow across derivatives.
    """
    cls = _clauses(t)
    if not cls:
        return _FALSE
    if frozenset() in cls:
        return _T
    minimal = [c for c in cls if not any(o < c for o in cls)]
    parts = [next(iter(c)) if len(c) == 1 else ("&", c) for c in set(minimal)]
    if len(parts) == 1:
        return parts[0]
    return ("|", frozenset(parts))


def build_automaton(f: Formula, alphabet=None) -> TaskAutomaton:
    """Compile a co-safe formula into a finite-word automaton.

    States are residual obligations; the single accepting state is the
    fully-discharged one, which loops on every symbol.  States that cannot
    reach the accepting state are pruned.
    """
    t0 = _norm(_to_term(f))
    if t0 == _FALSE:
        raise ValueError("formula is unsatisfiable")
    sigma = frozenset(alphabet) if alphabet is not None else atoms_of(f)

    out: dict = {}  # term -> list of (require|None, forbidset, term)
    queue = [t0]
    seen = {t0}
    while queue:
        cur = queue.pop()
        if cur == _T:
            out[cur] = [(None, frozenset(), cur)]
            continue
        mentioned = set()
        _term_atoms(cur, mentioned)
        default = _norm(_deriv(cur, None))
        edges = []
        distinct = []
        for s in sorted(mentioned):
            d = _norm(_deriv(cur, s))
            if d == default:
                continue
            distinct.append(s)
            if d != _FALSE:
                edges.append((s, frozenset(), d))
        if default != _FALSE and not (sigma and sigma <= set(distinct)):
            edges.append((None, frozenset(distinct), default))
        out[cur] = edges
        for _, _, d in edges:
            if d not in seen:
                seen.add(d)
                queue.append(d)

    # drop states that cannot reach the accepting state
    rev: dict = {}
    for frm, edges in out.items():
        for _, _, to in edges:
            rev.setdefault(to, set()).add(frm)
    alive = {_T} if _T in out else set()
    stack = list(alive)
    while stack:
        k = stack.pop()
        for p in rev.get(k, ()):
            if p not in alive:
                alive.add(p)
                stack.append(p)
    if t0 not in alive:
        raise ValueError("formula is unsatisfiable over finite words")

    order = {t0: 0}
    bfs = [t0]
    i = 0
    while i < len(bfs):
        for req, _, to in out[bfs[i]]:
            if to in alive and to not in order:
                order[to] = len(order)
                bfs.append(to)
        i += 1
    name = {k: f"q{idx}" for k, idx in order.items()}
    trans = tuple(sorted(
        (
            (name[frm], Guard(require=req, forbid=fb), name[to])
            for frm in order
            for req, fb, to in out[frm]
            if to in name
        ),
        key=lambda e: (e[0], e[1].require or "", sorted(e[1].forbid), e[2]),
    ))
    return TaskAutomaton(
        states=frozenset(name.values()),
        initial=frozenset({name[t0]}),
        alphabet=sigma,
        transitions=trans,
        accepting=frozenset({name[_T]}),
    )


def automaton_accepts(a: TaskAutomaton, word) -> bool:
    reach = set(a.initial)
    for sym in word:
        reach = {q2 for q in reach for q2 in a.successors(q, sym)}
        if not reach:
            return False
    return bool(reach & set(a.accepting))


def advance(a: TaskAutomaton, reach: frozenset[str], sym: str) -> frozenset[str]:
    """One-letter update of a reachable state set; empty means no progress."""
    if sym not in a.alphabet:
        raise UnknownSymbolError(sym)
    return frozenset(q2 for q in reach for q2 in a.successors(q, sym))


def accepting_distance(a: TaskAutomaton) -> dict[str, int]:
    """Hop distance of every state to the nearest accepting state (guards ignored)."""
    dist = {q: 0 for q in a.accepting}
    rev: dict[str, set] = {}
    for frm, _, to in a.transitions:
        rev.setdefault(to, set()).add(frm)
    frontier = list(a.accepting)
    while frontier:
        nxt = []
        for q in frontier:
            for p in rev.get(q, ()):
                if p not in dist:
                    dist[p] = dist[q] + 1
                    nxt.append(p)
        frontier = nxt
    return dist

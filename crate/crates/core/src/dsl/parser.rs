use std::collections::HashSet;

use crate::expr::{Expr, LookupTable};
use crate::model::{DraftBody, DraftDecl, DraftRow, ModelDraft, Modifiability, Observability, Position};
use crate::value::{parse_rational, Rational, Value};
use crate::worlds::Selector;

use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;

/// A parsed query, not yet resolved against a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryAst {
    Prob { event: Vec<(String, Value)>, regime: RegimeAst, given: Option<Vec<(String, Value)>> },
    Expect { var: String, regime: RegimeAst, given: Option<Vec<(String, Value)>> },
    Ace { x: String, y: String },
    Adjust { x: String, y: String, adjust: Vec<String> },
    Decompose { x: String, y: String, selector: Selector },
    Identity { name: String, args: Vec<(String, Option<Value>)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegimeAst {
    Observational,
    Do(Vec<AssignAst>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssignAst {
    Value {
        var: String,
        value: Value,
    },
    /// `(V, W) = solve(...)` or `U = solve(...)`.
    Solve {
        vars: Vec<String>,
        solve: SolveAst,
    },
    /// `X = X@do(W=0)`: take the value from a donor world.
    Import {
        var: String,
        donor_var: String,
        donor: RegimeAst,
    },
}

/// `solve(target=value; index...; control...; selector)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveAst {
    pub target: String,
    pub value: Value,
    pub index: Vec<String>,
    /// Defaults to the assigned variables.
    pub control: Option<Vec<String>>,
    pub selector: Selector,
    pub pos: Position,
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
    end: Position,
}

type PResult<T> = Result<T, ParseError>;
type Atoms = Vec<(String, Value)>;

fn end_position(text: &str) -> Position {
    let mut line = 1;
    let mut column = 1;
    for c in text.chars() {
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    Position { line, column }
}

impl Parser {
    fn new(text: &str) -> PResult<Self> {
        Ok(Self { toks: tokenize(text)?, at: 0, end: end_position(text) })
    }

    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.at)
    }

    fn peek_at(&self, k: usize) -> Option<&Token> {
        self.toks.get(self.at + k)
    }

    fn here(&self) -> Position {
        self.peek().map_or(self.end, |t| Position { line: t.line, column: t.column })
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let found = self.peek().map_or("end of input".to_string(), |t| t.to_string());
        let expected: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        let pos = self.here();
        ParseError { message: format!("unexpected {found}"), line: pos.line, column: pos.column, expected }
    }

    fn check(&self, lexeme: &str) -> bool {
        self.peek().is_some_and(|t| t.is(lexeme))
    }

    fn eat(&mut self, lexeme: &str) -> bool {
        if self.check(lexeme) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lexeme: &str) -> PResult<Position> {
        let pos = self.here();
        if self.eat(lexeme) {
            Ok(pos)
        } else {
            Err(self.error(&[&format!("`{lexeme}`")]))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                let s = t.lexeme.clone();
                self.at += 1;
                Ok(s)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn check_ident(&self, word: &str) -> bool {
        self.peek().is_some_and(|t| t.kind == TokenKind::Ident && t.lexeme == word)
    }

    fn literal(&mut self) -> PResult<Value> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Rational => {
                let r = parse_rational(&t.lexeme).ok_or_else(|| self.error(&["rational"]))?;
                self.at += 1;
                Ok(Value::Num(r))
            }
            Some(t) if t.kind == TokenKind::Ident => {
                let s = t.lexeme.clone();
                self.at += 1;
                Ok(Value::Sym(s))
            }
            _ => Err(self.error(&["literal"])),
        }
    }

    fn rational(&mut self) -> PResult<Rational> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Rational => match parse_rational(&t.lexeme) {
                Some(r) => {
                    self.at += 1;
                    Ok(r)
                }
                None => Err(ParseError {
                    message: format!("malformed rational `{}`", t.lexeme),
                    line: t.line,
                    column: t.column,
                    expected: vec!["rational".into()],
                }),
            },
            _ => Err(self.error(&["rational"])),
        }
    }

    /// `item {"," item}` up to (not including) `close`; allows a trailing comma.
    fn separated<T>(&mut self, close: &str, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = Vec::new();
        if self.check(close) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if !self.eat(",") || self.check(close) {
                break;
            }
        }
        Ok(out)
    }

    fn names_until(&mut self, stops: &[&str]) -> PResult<Vec<String>> {
        let mut out = Vec::new();
        if stops.iter().any(|s| self.check(s)) {
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            if !self.eat(",") {
                break;
            }
        }
        Ok(out)
    }

    fn at_end(&self) -> PResult<()> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.error(&["end of input"])),
        }
    }

    // ── model ──

    fn model(&mut self) -> PResult<ModelDraft> {
        let mut decls = Vec::new();
        while self.peek().is_some() {
            if self.check("exo") {
                decls.push(self.exo()?);
            } else if self.check("var") {
                decls.push(self.var()?);
            } else {
                return Err(self.error(&["`exo`", "`var`"]));
            }
        }
        resolve_labels(&mut decls);
        Ok(ModelDraft { decls })
    }

    fn domain(&mut self) -> PResult<Vec<Value>> {
        self.expect("{")?;
        let d = self.separated("}", |p| p.literal())?;
        self.expect("}")?;
        Ok(d)
    }

    fn dist(&mut self) -> PResult<Vec<(Value, Rational)>> {
        self.expect("{")?;
        let entries = self.separated("}", |p| {
            let v = p.literal()?;
            p.expect(":")?;
            Ok((v, p.rational()?))
        })?;
        self.expect("}")?;
        Ok(entries)
    }

    fn key(&mut self) -> PResult<Vec<Value>> {
        if self.eat("(") {
            let k = self.separated(")", |p| p.literal())?;
            self.expect(")")?;
            Ok(k)
        } else {
            Ok(vec![self.literal()?])
        }
    }

    fn flags(&mut self, decl: &mut DraftDecl) -> PResult<()> {
        loop {
            let pos = self.here();
            let (obs, modi) = if self.eat("observed") {
                (Some(Observability::Observed), None)
            } else if self.eat("latent") {
                (Some(Observability::Latent), None)
            } else if self.eat("modifiable") {
                (None, Some(Modifiability::Modifiable))
            } else if self.eat("nonmodifiable") {
                (None, Some(Modifiability::NonModifiable))
            } else {
                return Ok(());
            };
            let conflict = (obs.is_some() && decl.observability.is_some_and(|o| Some(o) != obs))
                || (modi.is_some() && decl.modifiability.is_some_and(|m| Some(m) != modi));
            if conflict {
                return Err(ParseError {
                    message: format!("conflicting flags on `{}`", decl.name),
                    line: pos.line,
                    column: pos.column,
                    expected: vec![],
                });
            }
            decl.observability = obs.or(decl.observability);
            decl.modifiability = modi.or(decl.modifiability);
        }
    }

    fn exo(&mut self) -> PResult<DraftDecl> {
        let pos = self.expect("exo")?;
        let name = self.ident()?;
        let domain = if self.eat("in") { Some(self.domain()?) } else { None };
        let conditioners = if self.eat("given") { self.names_until(&["~"])? } else { Vec::new() };
        self.expect("~")?;
        let rows = if conditioners.is_empty() {
            vec![DraftRow { given: vec![], probs: self.dist()? }]
        } else {
            self.expect("{")?;
            let rows = self.separated("}", |p| {
                let given = p.key()?;
                p.expect(":")?;
                Ok(DraftRow { given, probs: p.dist()? })
            })?;
            self.expect("}")?;
            rows
        };
        let mut decl = DraftDecl {
            name,
            pos: Some(pos),
            observability: None,
            modifiability: None,
            body: DraftBody::Exogenous { domain, conditioners, rows },
        };
        self.flags(&mut decl)?;
        Ok(decl)
    }

    fn var(&mut self) -> PResult<DraftDecl> {
        let pos = self.expect("var")?;
        let name = self.ident()?;
        self.expect("in")?;
        let domain = self.domain()?;
        self.expect(":=")?;
        let body = self.expr()?;
        let mut decl = DraftDecl {
            name,
            pos: Some(pos),
            observability: None,
            modifiability: None,
            body: DraftBody::Endogenous { domain, body },
        };
        self.flags(&mut decl)?;
        Ok(decl)
    }

    fn args(&mut self, min: usize, max: Option<usize>) -> PResult<Vec<Expr>> {
        self.expect("(")?;
        let open = self.here();
        let args = self.separated(")", |p| p.expr())?;
        if args.len() < min || max.is_some_and(|m| args.len() > m) {
            let want = match max {
                Some(m) if m == min => format!("{min}"),
                Some(m) => format!("{min} to {m}"),
                None => format!("at least {min}"),
            };
            return Err(ParseError {
                message: format!("expected {want} argument(s), found {}", args.len()),
                line: open.line,
                column: open.column,
                expected: vec![],
            });
        }
        self.expect(")")?;
        Ok(args)
    }

    fn expr(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error(&["expression"]));
        };
        match (tok.kind, tok.lexeme.as_str()) {
            (TokenKind::Rational, _) => Ok(Expr::Lit(self.literal()?)),
            (TokenKind::Ident, _) => {
                self.at += 1;
                Ok(Expr::Var(tok.lexeme))
            }
            (TokenKind::Keyword, "and" | "or" | "xor") => {
                self.at += 1;
                let args = self.args(1, None)?;
                Ok(match tok.lexeme.as_str() {
                    "and" => Expr::And(args),
                    "or" => Expr::Or(args),
                    _ => Expr::Xor(args),
                })
            }
            (TokenKind::Keyword, "not") => {
                self.at += 1;
                let mut a = self.args(1, Some(1))?;
                Ok(Expr::not(a.remove(0)))
            }
            (TokenKind::Keyword, "eq") => {
                self.at += 1;
                let mut a = self.args(2, Some(2))?;
                let b = a.remove(1);
                Ok(Expr::eq(a.remove(0), b))
            }
            (TokenKind::Keyword, "if") => {
                self.at += 1;
                let mut a = self.args(3, Some(3))?;
                let e = a.remove(2);
                let t = a.remove(1);
                Ok(Expr::ite(a.remove(0), t, e))
            }
            (TokenKind::Keyword, "table") => {
                self.at += 1;
                self.expect("(")?;
                let keys = self.separated(")", |p| p.ident())?;
                self.expect(")")?;
                self.expect("{")?;
                let mut rows = Vec::new();
                let mut default = None;
                let mut first = true;
                while !self.check("}") {
                    if !first {
                        self.expect(",")?;
                        if self.check("}") {
                            break;
                        }
                    }
                    first = false;
                    if self.eat("_") {
                        self.expect(":")?;
                        default = Some(self.literal()?);
                    } else {
                        let k = self.key()?;
                        self.expect(":")?;
                        rows.push((k, self.literal()?));
                    }
                }
                self.expect("}")?;
                Ok(Expr::Table(LookupTable { keys, rows, default }))
            }
            _ => Err(self.error(&["expression"])),
        }
    }

    // ── query ──

    fn query(&mut self) -> PResult<QueryAst> {
        let q = if self.check_ident("P") {
            self.at += 1;
            self.expect("(")?;
            let event = self.event()?;
            let (regime, given) = if self.eat("|") { self.condition()? } else { (RegimeAst::Observational, None) };
            self.expect(")")?;
            QueryAst::Prob { event, regime, given }
        } else if self.check_ident("E") {
            self.at += 1;
            self.expect("(")?;
            let var = self.ident()?;
            let (regime, given) = if self.eat("|") { self.condition()? } else { (RegimeAst::Observational, None) };
            self.expect(")")?;
            QueryAst::Expect { var, regime, given }
        } else if self.eat("ace") {
            let (x, y) = self.arrow()?;
            if self.eat("adjust") {
                self.expect("{")?;
                let adjust = self.separated("}", |p| p.ident())?;
                self.expect("}")?;
                QueryAst::Adjust { x, y, adjust }
            } else {
                QueryAst::Ace { x, y }
            }
        } else if self.eat("decompose") {
            let (x, y) = self.arrow()?;
            let selector = if self.eat("select") { self.selector()? } else { Selector::First };
            QueryAst::Decompose { x, y, selector }
        } else if self.eat("check") {
            let name = self.ident()?;
            let mut args = Vec::new();
            while self.peek().is_some() {
                let key = self.ident()?;
                let value = if self.eat("=") { Some(self.literal()?) } else { None };
                args.push((key, value));
            }
            QueryAst::Identity { name, args }
        } else {
            return Err(self.error(&["`P`", "`E`", "`ace`", "`decompose`", "`check`"]));
        };
        self.at_end()?;
        Ok(q)
    }

    fn arrow(&mut self) -> PResult<(String, String)> {
        let x = self.ident()?;
        self.expect("->")?;
        Ok((x, self.ident()?))
    }

    fn selector(&mut self) -> PResult<Selector> {
        if self.check_ident("first") {
            self.at += 1;
            Ok(Selector::First)
        } else if self.check_ident("last") {
            self.at += 1;
            Ok(Selector::Last)
        } else if self.peek().is_some_and(|t| t.kind == TokenKind::Rational) {
            let pos = self.here();
            let r = self.rational()?;
            let n = r.to_integer().to_string().parse::<usize>().ok().filter(|_| r.is_integer());
            n.map(Selector::Nth).ok_or(ParseError {
                message: "selector index must be a non-negative integer".into(),
                line: pos.line,
                column: pos.column,
                expected: vec![],
            })
        } else {
            Err(self.error(&["`first`", "`last`", "integer"]))
        }
    }

    fn event(&mut self) -> PResult<Atoms> {
        let mut atoms = Vec::new();
        loop {
            let name = self.ident()?;
            self.expect("=")?;
            atoms.push((name, self.literal()?));
            // A comma followed by `given` belongs to the enclosing condition.
            if self.check(",") && !self.peek_at(1).is_some_and(|t| t.is("given")) {
                self.at += 1;
            } else {
                return Ok(atoms);
            }
        }
    }

    fn condition(&mut self) -> PResult<(RegimeAst, Option<Atoms>)> {
        if self.eat("given") {
            return Ok((RegimeAst::Observational, Some(self.event()?)));
        }
        let regime = self.regime()?;
        let given = if self.eat(",") {
            self.expect("given")?;
            Some(self.event()?)
        } else {
            None
        };
        Ok((regime, given))
    }

    fn regime(&mut self) -> PResult<RegimeAst> {
        if self.eat("obs") {
            return Ok(RegimeAst::Observational);
        }
        if !self.eat("do") {
            return Err(self.error(&["`do`", "`obs`", "`given`"]));
        }
        self.expect("(")?;
        let assigns = self.separated(")", |p| p.assign())?;
        self.expect(")")?;
        Ok(RegimeAst::Do(assigns))
    }

    fn assign(&mut self) -> PResult<AssignAst> {
        if self.eat("(") {
            let vars = self.separated(")", |p| p.ident())?;
            self.expect(")")?;
            self.expect("=")?;
            return Ok(AssignAst::Solve { vars, solve: self.solve()? });
        }
        let var = self.ident()?;
        self.expect("=")?;
        if self.check("solve") {
            return Ok(AssignAst::Solve { vars: vec![var], solve: self.solve()? });
        }
        if self.peek().is_some_and(|t| t.kind == TokenKind::Ident) && self.peek_at(1).is_some_and(|t| t.is("@")) {
            let donor_var = self.ident()?;
            self.expect("@")?;
            return Ok(AssignAst::Import { var, donor_var, donor: self.regime()? });
        }
        Ok(AssignAst::Value { var, value: self.literal()? })
    }

    fn solve(&mut self) -> PResult<SolveAst> {
        let pos = self.expect("solve")?;
        self.expect("(")?;
        let target = self.ident()?;
        self.expect("=")?;
        let value = self.literal()?;
        self.expect(";")?;
        let index = self.names_until(&[";", ")"])?;
        let mut control = None;
        let mut selector = Selector::First;
        if self.eat(";") {
            if !self.check(";") {
                control = Some(self.names_until(&[";", ")"])?);
            }
            if self.eat(";") {
                selector = self.selector()?;
            }
        }
        self.expect(")")?;
        Ok(SolveAst { target, value, index, control, selector, pos })
    }
}

/// Free names that are not declared variables but occur in some declared
/// domain are symbolic literals.
fn resolve_labels(decls: &mut [DraftDecl]) {
    let declared: HashSet<String> = decls.iter().map(|d| d.name.clone()).collect();
    let mut labels: HashSet<String> = HashSet::new();
    for d in decls.iter() {
        let values: Vec<&Value> = match &d.body {
            DraftBody::Endogenous { domain, .. } => domain.iter().collect(),
            DraftBody::Exogenous { domain, rows, .. } => {
                domain.iter().flatten().chain(rows.iter().flat_map(|r| r.probs.iter().map(|(v, _)| v))).collect()
            }
        };
        labels.extend(values.into_iter().filter_map(|v| match v {
            Value::Sym(s) => Some(s.clone()),
            Value::Num(_) => None,
        }));
    }
    fn walk(e: &mut Expr, declared: &HashSet<String>, labels: &HashSet<String>) {
        match e {
            Expr::Var(n) if !declared.contains(n) && labels.contains(n) => *e = Expr::Lit(Value::Sym(n.clone())),
            Expr::Lit(_) | Expr::Var(_) | Expr::Table(_) => {}
            Expr::And(a) | Expr::Or(a) | Expr::Xor(a) => a.iter_mut().for_each(|x| walk(x, declared, labels)),
            Expr::Not(a) => walk(a, declared, labels),
            Expr::Eq(a, b) => {
                walk(a, declared, labels);
                walk(b, declared, labels);
            }
            Expr::If(c, t, f) => {
                walk(c, declared, labels);
                walk(t, declared, labels);
                walk(f, declared, labels);
            }
        }
    }
    for d in decls.iter_mut() {
        if let DraftBody::Endogenous { body, .. } = &mut d.body {
            walk(body, &declared, &labels);
        }
    }
}

/// Parses a model file into an unvalidated description.
pub fn parse_model_draft(text: &str) -> Result<ModelDraft, ParseError> {
    Parser::new(text)?.model()
}

pub fn parse_query(text: &str) -> Result<QueryAst, ParseError> {
    Parser::new(text)?.query()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_model, ModelError};
    use crate::model::ViolationKind;

    #[test]
    fn parses_static_query() {
        let q = parse_query("P(Y=1 | do(X=1))").unwrap();
        assert_eq!(
            q,
            QueryAst::Prob {
                event: vec![("Y".into(), Value::int(1))],
                regime: RegimeAst::Do(vec![AssignAst::Value { var: "X".into(), value: Value::int(1) }]),
                given: None,
            }
        );
    }

    #[test]
    fn parses_dynamic_query() {
        let q = parse_query("P(Y=1 | do(U = solve(X=1; W)))").unwrap();
        let QueryAst::Prob { regime: RegimeAst::Do(a), .. } = q else { panic!() };
        let AssignAst::Solve { vars, solve } = &a[0] else { panic!() };
        assert_eq!(vars, &vec!["U".to_string()]);
        assert_eq!((solve.target.as_str(), &solve.index, &solve.control), ("X", &vec!["W".to_string()], &None));
    }

    #[test]
    fn parses_adjust_and_given() {
        assert_eq!(
            parse_query("ace X -> Y adjust {W}").unwrap(),
            QueryAst::Adjust { x: "X".into(), y: "Y".into(), adjust: vec!["W".into()] }
        );
        assert_eq!(
            parse_query("ace X -> Y adjust {}").unwrap(),
            QueryAst::Adjust { x: "X".into(), y: "Y".into(), adjust: vec![] }
        );
        let q = parse_query("P(Y=1, W=0 | do(X=0), given X=0)").unwrap();
        let QueryAst::Prob { event, given, .. } = q else { panic!() };
        assert_eq!(event.len(), 2);
        assert_eq!(given.unwrap().len(), 1);
        assert!(matches!(
            parse_query("P(Y=1 | given X=1)").unwrap(),
            QueryAst::Prob { regime: RegimeAst::Observational, .. }
        ));
    }

    #[test]
    fn parses_nested_and_multi_solve() {
        let q = parse_query("E(Y | do(W=1, X = X@do(W=0)))").unwrap();
        let QueryAst::Expect { regime: RegimeAst::Do(a), .. } = q else { panic!() };
        assert!(matches!(&a[1], AssignAst::Import { var, donor_var, .. } if var == "X" && donor_var == "X"));
        let q = parse_query("P(Y=1 | do(X=1, W = solve(X=1; ϑ, Z; V, W; last)))").unwrap();
        let QueryAst::Prob { regime: RegimeAst::Do(a), .. } = q else { panic!() };
        let AssignAst::Solve { solve, .. } = &a[1] else { panic!() };
        assert_eq!(solve.control.as_ref().unwrap().len(), 2);
        assert_eq!(solve.selector, Selector::Last);
    }

    #[test]
    fn query_errors_are_positioned() {
        let err = parse_query("P(Y=1 | do(X=1)").unwrap_err();
        assert_eq!((err.line, err.column), (1, 16));
        let err = parse_query("ace X Y").unwrap_err();
        assert_eq!((err.line, err.column), (1, 7));
        assert_eq!(err.expected, vec!["`->`"]);
        assert!(parse_query("Q(Y=1)").is_err());
    }

    #[test]
    fn missing_assign_operator() {
        let err = parse_model_draft("exo U ~ {0: 1/2, 1: 1/2}\nvar X in {0, 1} U").unwrap_err();
        assert_eq!((err.line, err.column), (2, 17));
        assert_eq!(err.expected, vec!["`:=`"]);
    }

    #[test]
    fn duplicate_declaration_points_at_second() {
        let src = "exo U ~ {0: 1/2, 1: 1/2}\nvar X in {0, 1} := U\nvar X in {0, 1} := U\n";
        let Err(ModelError::Invalid(errs)) = parse_model(src) else { panic!() };
        let v = &errs.0[0];
        assert!(matches!(v.kind, ViolationKind::DuplicateDeclaration(_)));
        assert_eq!(v.pos, Some(Position { line: 3, column: 1 }));
    }

    #[test]
    fn labels_resolve_against_domains() {
        let src = "exo A ~ {0: 1/2, 1: 1/2}\nvar S in {lean, obese} := if(A, obese, lean)\n";
        let scm = parse_model(src).unwrap();
        assert_eq!(scm.equation("S").unwrap().parents, vec!["A"]);
        let bad = "exo A ~ {0: 1/2, 1: 1/2}\nvar S in {0, 1} := Q\n";
        let Err(ModelError::Invalid(errs)) = parse_model(bad) else { panic!() };
        assert!(errs.kinds().any(|k| matches!(k, ViolationKind::UnknownVariable { .. })));
    }

    #[test]
    fn conditional_table_and_flags() {
        let src = "exo T ~ {0: 1/2, 1: 1/2}\nexo V given T ~ {0: {0: 1/4, 1: 3/4}, 1: {0: 3/4, 1: 1/4}} modifiable observed\n";
        let draft = parse_model_draft(src).unwrap();
        assert_eq!(draft.decls[1].modifiability, Some(Modifiability::Modifiable));
        assert_eq!(draft.decls[1].observability, Some(Observability::Observed));
        assert!(parse_model_draft("exo T ~ {0: 1} latent observed").is_err());
    }
}

//! Parser and canonical serializer for the `.iosa` model format.
//!
//! A model file holds file-scoped clock declarations, automaton blocks,
//! an optional `system = A || B || ...;` line, and named queries:
//!
//! ```text
//! clock x ~ exponential(2.0);
//! automaton I1 {
//!   init s0 clocks {x};
//!   s0 --{x}, a!, {}--> s1;
//!   s1 --{}, c!!, {}--> s2;
//! }
//! system = I1;
//! query done = mean_time_to(I1.s2);
//! ```
//!
//! Action suffixes fix direction and urgency at first use: `a!` output,
//! `a!!` urgent output, `a?` input, `a??` urgent input. `tau!!` is the
//! silent action. Parsing is total: any byte input yields either a model
//! or a positioned error, never a panic.

mod lexer;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Automaton, ClockDecl, Distribution, Kind, ModelError};
use crate::query::{Predicate, Query, QueryKind};
use lexer::{lex, Pos, Spanned, Tok};

#[derive(Debug, Error)]
#[error("parse error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// Everything a `.iosa` file declares.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub automata: Vec<Automaton>,
    /// Component names of the `system = ...;` line, in composition order.
    pub system: Option<Vec<String>>,
    pub queries: Vec<Query>,
}

impl ModelFile {
    pub fn automaton(&self, name: &str) -> Option<&Automaton> {
        self.automata.iter().find(|a| a.name() == name)
    }

    pub fn query(&self, name: &str) -> Option<&Query> {
        self.queries.iter().find(|q| q.name == name)
    }

    /// The automata named by the system line, in order. With no system
    /// line and exactly one automaton, that automaton is the system.
    pub fn system_components(&self) -> Result<Vec<&Automaton>, ModelError> {
        match &self.system {
            Some(names) => names
                .iter()
                .map(|n| {
                    self.automaton(n)
                        .ok_or_else(|| ModelError::UnknownComponent { name: n.clone() })
                })
                .collect(),
            None if self.automata.len() == 1 => Ok(vec![&self.automata[0]]),
            None => Err(ModelError::NoSystem {
                count: self.automata.len(),
            }),
        }
    }

    /// Canonical text form; see [`serialize_model`].
    pub fn to_canonical_string(&self) -> Result<String, ModelError> {
        let autos: Vec<&Automaton> = self.automata.iter().collect();
        serialize_model(&autos, self.system.as_deref(), &self.queries)
    }
}

/// Parse a model from UTF-8 text.
pub fn parse_model(src: &str) -> Result<ModelFile, ParseError> {
    Parser::new(src)?.file()
}

/// Parse a model from raw bytes; non-UTF-8 input is a parse error.
pub fn parse_model_bytes(bytes: &[u8]) -> Result<ModelFile, ParseError> {
    let src = std::str::from_utf8(bytes).map_err(|e| ParseError {
        line: 0,
        col: e.valid_up_to(),
        message: format!("input is not UTF-8 (valid up to byte {})", e.valid_up_to()),
    })?;
    parse_model(src)
}

struct RawTransition {
    source: String,
    trigger: Vec<String>,
    action: String,
    kind: Kind,
    urgent: bool,
    resets: Vec<String>,
    target: String,
    pos: Pos,
}

struct Parser {
    toks: Vec<Spanned>,
    at: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: lex(src)?,
            at: 0,
        })
    }

    fn pos(&self) -> Pos {
        self.toks
            .get(self.at)
            .map(|s| s.pos)
            .unwrap_or_else(|| match self.toks.last() {
                Some(s) => s.pos,
                None => Pos { line: 1, col: 1 },
            })
    }

    fn err<T>(&self, message: String) -> Result<T, ParseError> {
        let p = self.pos();
        Err(ParseError {
            line: p.line,
            col: p.col,
            message,
        })
    }

    fn err_at<T>(&self, pos: Pos, message: String) -> Result<T, ParseError> {
        Err(ParseError {
            line: pos.line,
            col: pos.col,
            message,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|s| &s.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|s| s.tok.clone());
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t == want => {
                self.at += 1;
                Ok(())
            }
            Some(t) => {
                let found = t.describe();
                self.err(format!("expected {}, found {found}", want.describe()))
            }
            None => self.err(format!("expected {}, found end of input", want.describe())),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            Some(t) => {
                let found = t.describe();
                self.err(format!("expected {what}, found {found}"))
            }
            None => self.err(format!("expected {what}, found end of input")),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        match self.peek() {
            Some(Tok::Number(n)) => {
                let n = *n;
                self.at += 1;
                Ok(n)
            }
            Some(t) => {
                let found = t.describe();
                self.err(format!("expected {what}, found {found}"))
            }
            None => self.err(format!("expected {what}, found end of input")),
        }
    }

    /// Keyword = identifier with a fixed spelling.
    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let got = self.ident(&format!("keyword `{kw}`"))?;
        if got == kw {
            Ok(())
        } else {
            self.err(format!("expected keyword `{kw}`, found `{got}`"))
        }
    }

    /// `ident (| ident)*`, joined back with `|` — composite state ids
    /// round-trip through here.
    fn state_id(&mut self) -> Result<String, ParseError> {
        let mut id = self.ident("state id")?;
        while self.peek() == Some(&Tok::Pipe) {
            self.at += 1;
            let part = self.ident("state id after `|`")?;
            id.push('|');
            id.push_str(&part);
        }
        Ok(id)
    }

    /// `{ a, b, c }` (possibly empty).
    fn clock_set(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect(&Tok::LBrace)?;
        let mut out = Vec::new();
        if self.peek() == Some(&Tok::RBrace) {
            self.at += 1;
            return Ok(out);
        }
        loop {
            out.push(self.ident("clock id")?);
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RBrace) => return Ok(out),
                Some(t) => {
                    let found = t.describe();
                    return self.err(format!("expected `,` or `}}` in clock set, found {found}"));
                }
                None => return self.err("unterminated clock set".into()),
            }
        }
    }

    fn distribution(&mut self) -> Result<Distribution, ParseError> {
        let pos = self.pos();
        let family = self.ident("distribution family")?;
        self.expect(&Tok::LParen)?;
        let mut params = vec![self.number("distribution parameter")?];
        while self.peek() == Some(&Tok::Comma) {
            self.at += 1;
            params.push(self.number("distribution parameter")?);
        }
        self.expect(&Tok::RParen)?;
        let wrong_arity = |want: usize| {
            format!(
                "distribution `{family}` takes {want} parameter{}, got {}",
                if want == 1 { "" } else { "s" },
                params.len()
            )
        };
        let dist = match family.as_str() {
            "exponential" => {
                if params.len() != 1 {
                    return self.err_at(pos, wrong_arity(1));
                }
                Distribution::Exponential { rate: params[0] }
            }
            "uniform" => {
                if params.len() != 2 {
                    return self.err_at(pos, wrong_arity(2));
                }
                Distribution::Uniform {
                    lo: params[0],
                    hi: params[1],
                }
            }
            "weibull" => {
                if params.len() != 2 {
                    return self.err_at(pos, wrong_arity(2));
                }
                Distribution::Weibull {
                    shape: params[0],
                    scale: params[1],
                }
            }
            "lognormal" => {
                if params.len() != 2 {
                    return self.err_at(pos, wrong_arity(2));
                }
                Distribution::LogNormal {
                    mu: params[0],
                    sigma: params[1],
                }
            }
            "erlang" => {
                if params.len() != 2 {
                    return self.err_at(pos, wrong_arity(2));
                }
                if params[0].fract() != 0.0 || params[0] < 1.0 || params[0] > u32::MAX as f64 {
                    return self.err_at(pos, format!("erlang k must be a positive integer, got {}", params[0]));
                }
                Distribution::Erlang {
                    k: params[0] as u32,
                    rate: params[1],
                }
            }
            other => {
                return self.err_at(
                    pos,
                    format!("unknown distribution `{other}` (expected exponential, uniform, weibull, lognormal, or erlang)"),
                )
            }
        };
        if let Err(e) = dist.validate("") {
            return self.err_at(pos, e.to_string());
        }
        Ok(dist)
    }

    /// Action name plus `!`/`!!`/`?`/`??` suffix.
    fn action(&mut self) -> Result<(String, Kind, bool), ParseError> {
        let name = self.ident("action name")?;
        match self.next() {
            Some(Tok::Bang) => Ok((name, Kind::Output, false)),
            Some(Tok::BangBang) => Ok((name, Kind::Output, true)),
            Some(Tok::Quest) => Ok((name, Kind::Input, false)),
            Some(Tok::QuestQuest) => Ok((name, Kind::Input, true)),
            Some(t) => {
                let found = t.describe();
                self.err(format!(
                    "action `{name}` needs a direction suffix (`!`, `!!`, `?`, `??`), found {found}"
                ))
            }
            None => self.err(format!("action `{name}` needs a direction suffix")),
        }
    }

    fn file(&mut self) -> Result<ModelFile, ParseError> {
        let mut clock_table: BTreeMap<String, Distribution> = BTreeMap::new();
        let mut automata: Vec<Automaton> = Vec::new();
        let mut system: Option<Vec<String>> = None;
        let mut queries: Vec<Query> = Vec::new();

        while let Some(tok) = self.peek() {
            let pos = self.pos();
            match tok {
                Tok::Ident(kw) if kw == "clock" => {
                    self.at += 1;
                    let id = self.ident("clock id")?;
                    self.expect(&Tok::Tilde)?;
                    let dist = self.distribution()?;
                    self.expect(&Tok::Semi)?;
                    if clock_table.insert(id.clone(), dist).is_some() {
                        return self.err_at(pos, format!("clock `{id}` declared twice"));
                    }
                }
                Tok::Ident(kw) if kw == "automaton" => {
                    let a = self.automaton(&clock_table)?;
                    if automata.iter().any(|b| b.name() == a.name()) {
                        return self.err_at(pos, format!("automaton `{}` declared twice", a.name()));
                    }
                    automata.push(a);
                }
                Tok::Ident(kw) if kw == "system" => {
                    self.at += 1;
                    if system.is_some() {
                        return self.err_at(pos, "more than one system line".into());
                    }
                    self.expect(&Tok::Eq)?;
                    let mut names = vec![self.ident("automaton name")?];
                    while self.peek() == Some(&Tok::PipePipe) {
                        self.at += 1;
                        names.push(self.ident("automaton name after `||`")?);
                    }
                    self.expect(&Tok::Semi)?;
                    system = Some(names);
                }
                Tok::Ident(kw) if kw == "query" => {
                    self.at += 1;
                    let name = self.ident("query name")?;
                    if queries.iter().any(|q| q.name == name) {
                        return self.err_at(pos, format!("query `{name}` declared twice"));
                    }
                    self.expect(&Tok::Eq)?;
                    let kind = self.query_kind()?;
                    self.expect(&Tok::Semi)?;
                    queries.push(Query { name, kind });
                }
                t => {
                    let found = t.describe();
                    return self.err(format!(
                        "expected `clock`, `automaton`, `system`, or `query`, found {found}"
                    ));
                }
            }
        }

        // Late checks against declared automata.
        if let Some(names) = &system {
            for n in names {
                if !automata.iter().any(|a| a.name() == n) {
                    return self.err_at(
                        Pos { line: 1, col: 1 },
                        format!("system line references unknown automaton `{n}`"),
                    );
                }
            }
        }
        Ok(ModelFile {
            automata,
            system,
            queries,
        })
    }

    fn automaton(
        &mut self,
        clock_table: &BTreeMap<String, Distribution>,
    ) -> Result<Automaton, ParseError> {
        self.keyword("automaton")?;
        let name = self.ident("automaton name")?;
        self.expect(&Tok::LBrace)?;

        let mut complete_inputs = false;
        while let Some(Tok::Pragma(p)) = self.peek() {
            let pos = self.pos();
            if p == "complete-inputs" {
                complete_inputs = true;
                self.at += 1;
            } else {
                let p = p.clone();
                return self.err_at(pos, format!("unknown pragma `#{p}`"));
            }
        }

        self.keyword("init")?;
        let init_state = self.state_id()?;
        self.keyword("clocks")?;
        let init_clocks = self.clock_set()?;
        self.expect(&Tok::Semi)?;

        let mut raw: Vec<RawTransition> = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.at += 1;
                    break;
                }
                Some(Tok::Ident(_)) => {
                    let pos = self.pos();
                    let source = self.state_id()?;
                    self.expect(&Tok::DashDash)?;
                    let trigger = self.clock_set()?;
                    self.expect(&Tok::Comma)?;
                    let (action, kind, urgent) = self.action()?;
                    self.expect(&Tok::Comma)?;
                    let resets = self.clock_set()?;
                    self.expect(&Tok::Arrow)?;
                    let target = self.state_id()?;
                    self.expect(&Tok::Semi)?;
                    raw.push(RawTransition {
                        source,
                        trigger,
                        action,
                        kind,
                        urgent,
                        resets,
                        target,
                        pos,
                    });
                }
                Some(t) => {
                    let found = t.describe();
                    return self.err(format!("expected a transition or `}}`, found {found}"));
                }
                None => return self.err(format!("unterminated automaton `{name}`")),
            }
        }

        // Assemble through the builder; map its errors back to positions.
        let mut b = Automaton::builder(&name)
            .complete_inputs(complete_inputs)
            .initial(&init_state, &init_clocks.iter().map(|s| s.as_str()).collect::<Vec<_>>());
        let mut referenced: Vec<(String, Pos)> = init_clocks
            .iter()
            .map(|c| (c.clone(), Pos { line: 1, col: 1 }))
            .collect();
        for t in &raw {
            for c in t.trigger.iter().chain(t.resets.iter()) {
                referenced.push((c.clone(), t.pos));
            }
        }
        let mut added = std::collections::BTreeSet::new();
        for (c, pos) in referenced {
            if added.insert(c.clone()) {
                match clock_table.get(&c) {
                    Some(d) => {
                        b = b
                            .clock(&c, d.clone())
                            .map_err(|e| self.builder_err(e, pos))?
                    }
                    None => {
                        return self.err_at(
                            pos,
                            format!("automaton `{name}` references undeclared clock `{c}`"),
                        )
                    }
                }
            }
        }
        for t in raw {
            b = b
                .transition(
                    &t.source,
                    &t.trigger.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                    (&t.action, t.kind, t.urgent),
                    &t.resets.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                    &t.target,
                )
                .map_err(|e| self.builder_err(e, t.pos))?;
        }
        b.build().map_err(|e| self.builder_err(e, Pos { line: 1, col: 1 }))
    }

    fn builder_err(&self, e: ModelError, pos: Pos) -> ParseError {
        ParseError {
            line: pos.line,
            col: pos.col,
            message: e.to_string(),
        }
    }

    fn query_kind(&mut self) -> Result<QueryKind, ParseError> {
        let pos = self.pos();
        let fun = self.ident("query kind")?;
        self.expect(&Tok::LParen)?;
        let kind = match fun.as_str() {
            "transient_reach" => {
                let predicate = self.predicate()?;
                self.expect(&Tok::Comma)?;
                let horizon = self.positive("horizon")?;
                QueryKind::TransientReach { predicate, horizon }
            }
            "steady_fraction" => {
                let predicate = self.predicate()?;
                self.expect(&Tok::Comma)?;
                let horizon = self.positive("horizon")?;
                let warmup = if self.peek() == Some(&Tok::Comma) {
                    self.at += 1;
                    let w = self.number("warmup")?;
                    if w < 0.0 {
                        return self.err("warmup must be >= 0".into());
                    }
                    w
                } else {
                    0.0
                };
                QueryKind::SteadyFraction {
                    predicate,
                    horizon,
                    warmup,
                }
            }
            "mean_time_to" => QueryKind::MeanTimeTo {
                predicate: self.predicate()?,
            },
            other => {
                return self.err_at(
                    pos,
                    format!("unknown query kind `{other}` (expected transient_reach, steady_fraction, or mean_time_to)"),
                )
            }
        };
        self.expect(&Tok::RParen)?;
        Ok(kind)
    }

    fn positive(&mut self, what: &str) -> Result<f64, ParseError> {
        let n = self.number(what)?;
        if n > 0.0 {
            Ok(n)
        } else {
            self.err(format!("{what} must be > 0, got {n}"))
        }
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        let mut p = self.pred_and()?;
        while self.peek() == Some(&Tok::PipePipe) {
            self.at += 1;
            let rhs = self.pred_and()?;
            p = Predicate::Or(Box::new(p), Box::new(rhs));
        }
        Ok(p)
    }

    fn pred_and(&mut self) -> Result<Predicate, ParseError> {
        let mut p = self.pred_not()?;
        while self.peek() == Some(&Tok::AmpAmp) {
            self.at += 1;
            let rhs = self.pred_not()?;
            p = Predicate::And(Box::new(p), Box::new(rhs));
        }
        Ok(p)
    }

    fn pred_not(&mut self) -> Result<Predicate, ParseError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.at += 1;
                Ok(Predicate::Not(Box::new(self.pred_not()?)))
            }
            Some(Tok::LParen) => {
                self.at += 1;
                let p = self.predicate()?;
                self.expect(&Tok::RParen)?;
                Ok(p)
            }
            _ => {
                let automaton = self.ident("automaton name in predicate")?;
                self.expect(&Tok::Dot)?;
                let state = self.state_id()?;
                Ok(Predicate::At { automaton, state })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Canonical serialization.

fn fmt_clock_names(names: &[&str]) -> String {
    format!("{{{}}}", names.join(", "))
}

/// Render automata (sorted by name), an optional system line, and queries
/// (sorted by name) in the canonical form: sorted clock declarations
/// first, sorted transitions one per line, stable number formatting.
/// `parse(serialize(m))` is structurally `m`, and serializing again is
/// byte-identical.
pub fn serialize_model(
    automata: &[&Automaton],
    system: Option<&[String]>,
    queries: &[Query],
) -> Result<String, ModelError> {
    // The syntax has no standalone state declarations: states exist by
    // being initial or appearing on a transition. A state that is
    // neither would silently vanish on reparse, so refuse it up front.
    for a in automata {
        let mut state_used = vec![false; a.state_count()];
        state_used[a.initial()] = true;
        for t in a.transitions() {
            state_used[t.source] = true;
            state_used[t.target] = true;
        }
        if let Some(i) = state_used.iter().position(|u| !u) {
            return Err(ModelError::Unserializable {
                automaton: a.name().to_string(),
                detail: format!("state `{}` appears in no transition", a.state_name(i)),
            });
        }
    }

    // File-scope clock table: union of per-automaton declarations, which
    // must agree where they overlap. Clocks attach to automata by
    // mention only, so an entry an automaton never starts nor resets —
    // behaviorally inert, common in compositions that deadlock early —
    // is omitted rather than refused.
    let mut clock_table: BTreeMap<&str, &ClockDecl> = BTreeMap::new();
    for a in automata {
        let mut mentioned = vec![false; a.clocks().len()];
        for &c in a.initial_clocks() {
            mentioned[c] = true;
        }
        for t in a.transitions() {
            for &c in t.trigger.iter().chain(t.resets.iter()) {
                mentioned[c] = true;
            }
        }
        for (i, c) in a.clocks().iter().enumerate() {
            if !mentioned[i] {
                continue;
            }
            match clock_table.get(c.id.as_str()) {
                Some(existing) if **existing != *c => {
                    return Err(ModelError::DuplicateClock {
                        automaton: a.name().to_string(),
                        clock: c.id.clone(),
                    })
                }
                _ => {
                    clock_table.insert(&c.id, c);
                }
            }
        }
    }

    let mut out = String::new();
    for decl in clock_table.values() {
        let _ = writeln!(out, "clock {} ~ {};", decl.id, decl.distribution);
    }

    let mut sorted: Vec<&Automaton> = automata.to_vec();
    sorted.sort_by(|a, b| a.name().cmp(b.name()));
    for a in sorted {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "automaton {} {{", a.name());
        if a.complete_inputs_requested() {
            out.push_str("  #complete-inputs\n");
        }
        let init_clocks: Vec<&str> = a
            .initial_clocks()
            .iter()
            .map(|&c| a.clock_name(c))
            .collect();
        let _ = writeln!(
            out,
            "  init {} clocks {};",
            a.initial_name(),
            fmt_clock_names(&init_clocks)
        );
        let mut lines: Vec<String> = a
            .transitions()
            .iter()
            .map(|t| format!("  {};", a.transition_display(t)))
            .collect();
        lines.sort();
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out.push_str("}\n");
    }

    if let Some(names) = system {
        out.push('\n');
        let _ = writeln!(out, "system = {};", names.join(" || "));
    }
    if !queries.is_empty() {
        out.push('\n');
        let mut qs: Vec<&Query> = queries.iter().collect();
        qs.sort_by(|a, b| a.name.cmp(&b.name));
        for q in qs {
            let _ = writeln!(out, "{q}");
        }
    }
    Ok(out)
}

/// Canonical form of a single automaton (no system line, no queries).
/// Fails only when a state appears in no transition: the syntax cannot
/// express it.
pub fn serialize_automaton(a: &Automaton) -> Result<String, ModelError> {
    serialize_model(&[a], None, &[])
}

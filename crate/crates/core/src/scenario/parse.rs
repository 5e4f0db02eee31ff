use std::collections::BTreeSet;

use thiserror::Error;

use super::{
    ApplicationSpec, EndpointKind, EndpointSpec, FogNodeSpec, LinkSpec, Scenario, StreamSpec,
    SwitchSpec, TaskSpec, DEFAULT_CORES,
};
use crate::time::Time;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: duplicate identifier `{id}`")]
    DuplicateIdentifier { id: String, line: usize, col: usize },
    #[error("{line}:{col}: reference to undeclared `{id}`")]
    UnknownReference { id: String, line: usize, col: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    LBrace,
    RBrace,
    Comma,
    Arrow,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let push = |tok, out: &mut Vec<Token>| {
                out.push(Token {
                    tok,
                    line: line_no,
                    col,
                })
            };
            match c {
                '#' => break,
                c if c.is_whitespace() => i += 1,
                '{' => {
                    push(Tok::LBrace, &mut out);
                    i += 1;
                }
                '}' => {
                    push(Tok::RBrace, &mut out);
                    i += 1;
                }
                ',' => {
                    push(Tok::Comma, &mut out);
                    i += 1;
                }
                '-' if chars.get(i + 1) == Some(&'>') => {
                    push(Tok::Arrow, &mut out);
                    i += 2;
                }
                '"' => {
                    let start = i + 1;
                    let mut j = start;
                    while j < chars.len() && chars[j] != '"' {
                        j += 1;
                    }
                    if j == chars.len() {
                        return Err(ParseError::Syntax {
                            line: line_no,
                            col,
                            message: "unterminated string".into(),
                        });
                    }
                    push(Tok::Str(chars[start..j].iter().collect()), &mut out);
                    i = j + 1;
                }
                _ => {
                    let start = i;
                    while i < chars.len() {
                        let c = chars[i];
                        if c.is_whitespace() || matches!(c, '{' | '}' | ',' | '"' | '#') {
                            break;
                        }
                        if c == '-' && chars.get(i + 1) == Some(&'>') {
                            break;
                        }
                        i += 1;
                    }
                    push(Tok::Word(chars[start..i].iter().collect()), &mut out);
                }
            }
        }
    }
    Ok(out)
}

struct Ref {
    id: String,
    line: usize,
    col: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    scenario: Scenario,
    refs: Vec<Ref>,
    entity_ids: BTreeSet<String>,
    stream_ids: BTreeSet<String>,
    app_ids: BTreeSet<String>,
    link_defaults: Vec<usize>,
}

/// Parses a scenario document, filling every default.
pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
        scenario: Scenario::default(),
        refs: Vec::new(),
        entity_ids: BTreeSet::new(),
        stream_ids: BTreeSet::new(),
        app_ids: BTreeSet::new(),
        link_defaults: Vec::new(),
    };
    while p.pos < p.toks.len() {
        p.statement()?;
    }
    p.finish()
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn eof_error(&self, what: &str) -> ParseError {
        let (line, col) = self.toks.last().map(|t| (t.line, t.col)).unwrap_or((1, 1));
        ParseError::Syntax {
            line,
            col,
            message: format!("unexpected end of input, expected {what}"),
        }
    }

    fn error_at(&self, tok: &Token, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: tok.line,
            col: tok.col,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<Token, ParseError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.eof_error(what))?;
        self.pos += 1;
        Ok(t)
    }

    fn word(&mut self, what: &str) -> Result<(String, Token), ParseError> {
        let t = self.next(what)?;
        match &t.tok {
            Tok::Word(w) => Ok((w.clone(), t)),
            _ => Err(self.error_at(&t, format!("expected {what}"))),
        }
    }

    /// A bare word or a quoted string.
    fn name(&mut self, what: &str) -> Result<(String, Token), ParseError> {
        let t = self.next(what)?;
        match &t.tok {
            Tok::Word(w) | Tok::Str(w) => Ok((w.clone(), t)),
            _ => Err(self.error_at(&t, format!("expected {what}"))),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        let t = self.next(what)?;
        if t.tok == tok {
            Ok(t)
        } else {
            Err(self.error_at(&t, format!("expected {what}")))
        }
    }

    fn at(&self, tok: &Tok) -> bool {
        self.peek().map(|t| &t.tok == tok).unwrap_or(false)
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Word(x), .. }) if x == w)
    }

    fn reference(&mut self, id: String, tok: &Token) {
        self.refs.push(Ref {
            id,
            line: tok.line,
            col: tok.col,
        });
    }

    fn declare_entity(&mut self, id: &str, tok: &Token) -> Result<(), ParseError> {
        if !self.entity_ids.insert(id.to_string()) {
            return Err(ParseError::DuplicateIdentifier {
                id: id.into(),
                line: tok.line,
                col: tok.col,
            });
        }
        Ok(())
    }

    /// Numeric literal with a unit suffix, either glued (`10ms`) or as the
    /// following word (`10 ms`).
    fn quantity(&mut self, what: &str, units: &[&str]) -> Result<(f64, String, Token), ParseError> {
        let (w, tok) = self.word(what)?;
        let split = w
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .unwrap_or(w.len());
        let (num, unit) = w.split_at(split);
        let value: f64 = num
            .parse()
            .map_err(|_| self.error_at(&tok, format!("expected {what}, found `{w}`")))?;
        let mut unit = unit.to_string();
        if unit.is_empty() {
            if let Some(Token {
                tok: Tok::Word(next),
                ..
            }) = self.peek()
            {
                if units.contains(&next.as_str()) {
                    unit = next.clone();
                    self.pos += 1;
                }
            }
        }
        if !unit.is_empty() && !units.contains(&unit.as_str()) {
            return Err(self.error_at(&tok, format!("unknown unit `{unit}` for {what}")));
        }
        Ok((value, unit, tok))
    }

    fn time(&mut self, what: &str) -> Result<Time, ParseError> {
        let (v, unit, tok) = self.quantity(what, &["ms", "us", "s"])?;
        let us = match unit.as_str() {
            "ms" => v * 1e3,
            "s" => v * 1e6,
            "us" => v,
            _ => return Err(self.error_at(&tok, format!("{what} needs a unit (ms, us or s)"))),
        };
        let t = Time::from_us_round(us);
        if (t.as_us() - us).abs() > 1e-6 {
            return Err(self.error_at(&tok, format!("{what} is finer than 0.1us")));
        }
        Ok(t)
    }

    /// Microseconds as an exact real; used for WCETs.
    fn duration_us(&mut self, what: &str) -> Result<f64, ParseError> {
        let (v, unit, tok) = self.quantity(what, &["ms", "us", "s"])?;
        match unit.as_str() {
            "ms" => Ok(v * 1e3),
            "s" => Ok(v * 1e6),
            "us" => Ok(v),
            _ => Err(self.error_at(&tok, format!("{what} needs a unit (ms, us or s)"))),
        }
    }

    fn rate(&mut self) -> Result<u64, ParseError> {
        let (v, unit, tok) = self.quantity("link rate", &["bps", "kbps", "Mbps", "Gbps"])?;
        let scale = match unit.as_str() {
            "" | "bps" => 1.0,
            "kbps" => 1e3,
            "Mbps" => 1e6,
            "Gbps" => 1e9,
            _ => unreachable!(),
        };
        let bps = v * scale;
        if bps.fract() != 0.0 {
            return Err(self.error_at(&tok, "link rate must be a whole number of bps"));
        }
        Ok(bps as u64)
    }

    fn integer<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, ParseError> {
        let (w, tok) = self.word(what)?;
        w.parse()
            .map_err(|_| self.error_at(&tok, format!("expected {what}, found `{w}`")))
    }

    fn real(&mut self, what: &str) -> Result<f64, ParseError> {
        let (w, tok) = self.word(what)?;
        w.parse()
            .map_err(|_| self.error_at(&tok, format!("expected {what}, found `{w}`")))
    }

    fn statement(&mut self) -> Result<(), ParseError> {
        let (kw, tok) = self.word("a declaration")?;
        match kw.as_str() {
            "node" => self.node(),
            "switch" => {
                let (id, t) = self.word("switch identifier")?;
                self.declare_entity(&id, &t)?;
                self.scenario.switches.push(SwitchSpec { id });
                Ok(())
            }
            "endpoint" => self.endpoint(),
            "link" => self.link(),
            "stream" => self.stream(),
            "app" => self.app(),
            "params" => self.params(),
            other => Err(self.error_at(&tok, format!("unknown declaration `{other}`"))),
        }
    }

    fn block_fields(
        &mut self,
        mut field: impl FnMut(&mut Self, &str, &Token) -> Result<(), ParseError>,
    ) -> Result<(), ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        loop {
            if self.at(&Tok::RBrace) {
                self.pos += 1;
                return Ok(());
            }
            let (key, tok) = self.word("a field name or `}`")?;
            field(self, &key, &tok)?;
        }
    }

    fn node(&mut self) -> Result<(), ParseError> {
        let (id, t) = self.word("node identifier")?;
        self.declare_entity(&id, &t)?;
        let mut node = FogNodeSpec {
            id,
            cores: DEFAULT_CORES,
            class: 1,
        };
        if self.at(&Tok::LBrace) {
            self.block_fields(|p, key, tok| match key {
                "cores" => {
                    node.cores = p.integer("core count")?;
                    Ok(())
                }
                "class" => {
                    node.class = p.integer("node class")?;
                    Ok(())
                }
                _ => Err(p.error_at(tok, format!("unknown node field `{key}`"))),
            })?;
        }
        self.scenario.nodes.push(node);
        Ok(())
    }

    fn endpoint(&mut self) -> Result<(), ParseError> {
        let (id, t) = self.word("endpoint identifier")?;
        self.declare_entity(&id, &t)?;
        let mut kind = EndpointKind::Sensor;
        if self.at(&Tok::LBrace) {
            self.block_fields(|p, key, tok| match key {
                "kind" => {
                    let (k, kt) = p.word("endpoint kind")?;
                    kind = match k.as_str() {
                        "sensor" => EndpointKind::Sensor,
                        "actuator" => EndpointKind::Actuator,
                        _ => return Err(p.error_at(&kt, "expected `sensor` or `actuator`")),
                    };
                    Ok(())
                }
                _ => Err(p.error_at(tok, format!("unknown endpoint field `{key}`"))),
            })?;
        }
        self.scenario.endpoints.push(EndpointSpec { id, kind });
        Ok(())
    }

    fn link(&mut self) -> Result<(), ParseError> {
        let (from, ft) = self.word("link source")?;
        self.expect(Tok::Arrow, "`->`")?;
        let (to, tt) = self.word("link destination")?;
        self.reference(from.clone(), &ft);
        self.reference(to.clone(), &tt);
        let rate_bps = if self.at_word("rate") {
            self.pos += 1;
            self.rate()?
        } else {
            self.link_defaults.push(self.scenario.links.len());
            0
        };
        self.scenario.links.push(LinkSpec { from, to, rate_bps });
        Ok(())
    }

    fn stream(&mut self) -> Result<(), ParseError> {
        let (id, t) = self.name("stream name")?;
        if !self.stream_ids.insert(id.clone()) {
            return Err(ParseError::DuplicateIdentifier {
                id,
                line: t.line,
                col: t.col,
            });
        }
        let mut src = None;
        let mut dst = None;
        let mut size = None;
        let mut period = None;
        let mut deadline = None;
        let mut criticality = None;
        let mut route = Vec::new();
        self.block_fields(|p, key, tok| {
            match key {
                "src" => {
                    let (v, vt) = p.word("source entity")?;
                    p.reference(v.clone(), &vt);
                    src = Some(v);
                }
                "dst" => {
                    let (v, vt) = p.word("destination entity")?;
                    p.reference(v.clone(), &vt);
                    dst = Some(v);
                }
                "size" => {
                    let (v, _, vt) = p.quantity("frame size", &["B"])?;
                    if v.fract() != 0.0 || v < 0.0 {
                        return Err(p.error_at(&vt, "frame size must be a whole number of bytes"));
                    }
                    size = Some(v as u32);
                }
                "period" => period = Some(p.time("period")?),
                "deadline" => deadline = Some(p.time("deadline")?),
                "criticality" => criticality = Some(p.integer::<u8>("criticality level")?),
                "route" => loop {
                    let (hop, ht) = p.word("route entity")?;
                    p.reference(hop.clone(), &ht);
                    route.push(hop);
                    if p.at(&Tok::Comma) || p.at(&Tok::Arrow) {
                        p.pos += 1;
                    } else {
                        break;
                    }
                },
                _ => return Err(p.error_at(tok, format!("unknown stream field `{key}`"))),
            }
            Ok(())
        })?;
        let missing = |field: &str| self.error_at(&t, format!("stream `{id}` lacks `{field}`"));
        let period = period.ok_or_else(|| missing("period"))?;
        let spec = StreamSpec {
            src: src.ok_or_else(|| missing("src"))?,
            dst: dst.ok_or_else(|| missing("dst"))?,
            size_bytes: size.ok_or_else(|| missing("size"))?,
            period,
            deadline: deadline.unwrap_or(period),
            criticality: criticality.ok_or_else(|| missing("criticality"))?,
            route,
            id: id.clone(),
        };
        self.scenario.streams.push(spec);
        Ok(())
    }

    fn app(&mut self) -> Result<(), ParseError> {
        let (id, t) = self.name("application name")?;
        if !self.app_ids.insert(id.clone()) {
            return Err(ParseError::DuplicateIdentifier {
                id,
                line: t.line,
                col: t.col,
            });
        }
        if !self.at_word("on") {
            let tok = self.peek().cloned();
            return Err(match tok {
                Some(tok) => self.error_at(&tok, "expected `on <node>`"),
                None => self.eof_error("`on <node>`"),
            });
        }
        self.pos += 1;
        let (node, nt) = self.word("node identifier")?;
        self.reference(node.clone(), &nt);

        let mut level = None;
        let mut task_count = None;
        let mut period = None;
        let mut util = None;
        let mut tasks: Vec<(TaskSpec, Option<Time>, Option<Time>, Token)> = Vec::new();
        self.block_fields(|p, key, tok| {
            match (key, tasks.last_mut()) {
                ("task", _) => {
                    let (tid, tt) = p.name("task name")?;
                    let blank = TaskSpec {
                        id: tid,
                        wcet_us: 0.0,
                        period: Time::ZERO,
                        deadline: Time::ZERO,
                    };
                    tasks.push((blank, None, None, tt));
                }
                ("wcet", Some(task)) => task.0.wcet_us = p.duration_us("wcet")?,
                ("period", Some(task)) => task.1 = Some(p.time("task period")?),
                ("deadline", Some(task)) => task.2 = Some(p.time("task deadline")?),
                ("level", _) => level = Some(p.integer::<u8>("criticality level")?),
                ("tasks", _) => task_count = Some(p.integer::<u32>("task count")?),
                ("period", None) => period = Some(p.time("period")?),
                ("util", _) => util = Some(p.real("utilization")?),
                _ => return Err(p.error_at(tok, format!("unknown application field `{key}`"))),
            }
            Ok(())
        })?;
        let missing =
            |field: &str| self.error_at(&t, format!("application `{id}` lacks `{field}`"));
        let period = period.ok_or_else(|| missing("period"))?;
        let mut explicit = Vec::with_capacity(tasks.len());
        for (mut task, tp, td, tt) in tasks {
            task.period = tp.unwrap_or(period);
            task.deadline = td.unwrap_or(task.period);
            if task.wcet_us == 0.0 {
                return Err(self.error_at(&tt, format!("task `{}` lacks `wcet`", task.id)));
            }
            explicit.push(task);
        }
        let task_count = match task_count {
            Some(n) => n,
            None if !explicit.is_empty() => explicit.len() as u32,
            None => return Err(missing("tasks")),
        };
        let level = level.ok_or_else(|| missing("level"))?;
        let utilization = match util {
            Some(u) => u,
            None if !explicit.is_empty() => explicit.iter().map(TaskSpec::utilization).sum(),
            None => return Err(missing("util")),
        };
        self.scenario.applications.push(ApplicationSpec {
            id,
            node,
            level,
            task_count,
            period,
            utilization,
            tasks: explicit,
        });
        Ok(())
    }

    fn params(&mut self) -> Result<(), ParseError> {
        let mut params = self.scenario.params.clone();
        self.block_fields(|p, key, tok| {
            match key {
                "d_hop" => params.d_hop = p.time("d_hop")?,
                "weight_base" => params.weight_base = p.real("weight base")?,
                "seed" => params.solver_seed = p.integer("seed")?,
                "rate" => params.default_link_rate_bps = p.rate()?,
                "budget" => params.node_budget = p.integer("node budget")?,
                _ => return Err(p.error_at(tok, format!("unknown params field `{key}`"))),
            }
            Ok(())
        })?;
        self.scenario.params = params;
        Ok(())
    }

    fn finish(mut self) -> Result<Scenario, ParseError> {
        for r in &self.refs {
            if !self.entity_ids.contains(&r.id) {
                return Err(ParseError::UnknownReference {
                    id: r.id.clone(),
                    line: r.line,
                    col: r.col,
                });
            }
        }
        let rate = self.scenario.params.default_link_rate_bps;
        for &i in &self.link_defaults {
            self.scenario.links[i].rate_bps = rate;
        }
        Ok(self.scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document() {
        let s = parse_scenario("# nothing here\n\n").unwrap();
        assert_eq!(s, Scenario::default());
    }

    #[test]
    fn undeclared_route_entity() {
        let text = "switch W1\nnode E1\nendpoint S1\nlink S1 -> W1\nlink W1 -> E1\n\
                    stream \"x\" { src S1 dst E1 size 100B period 10ms criticality 3 route S1,W9,E1 }\n";
        match parse_scenario(text) {
            Err(ParseError::UnknownReference { id, line, .. }) => {
                assert_eq!(id, "W9");
                assert_eq!(line, 6);
            }
            other => panic!("expected UnknownReference, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_scenario("node E1 { cores two }").unwrap_err();
        assert_eq!(
            err,
            ParseError::Syntax {
                line: 1,
                col: 17,
                message: "expected core count, found `two`".into()
            }
        );
        assert!(matches!(
            parse_scenario("frobnicate"),
            Err(ParseError::Syntax {
                line: 1,
                col: 1,
                ..
            })
        ));
        assert!(matches!(
            parse_scenario("node E1 {"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn duplicate_entity() {
        let err = parse_scenario("node E1\nswitch E1").unwrap_err();
        assert!(matches!(
            err,
            ParseError::DuplicateIdentifier { line: 2, .. }
        ));
    }

    #[test]
    fn defaults_are_filled() {
        let text = "params { d_hop 3us rate 1Gbps }\nnode E1\nswitch W1\nlink W1 -> E1\nlink E1 -> W1 rate 10Mbps\n\
                    stream s { src E1 dst W1 size 64B period 1ms criticality 0 route E1 -> W1 }";
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.nodes[0].cores, 2);
        assert_eq!(s.params.d_hop, Time::from_us(3));
        assert_eq!(s.links[0].rate_bps, 1_000_000_000);
        assert_eq!(s.links[1].rate_bps, 10_000_000);
        assert_eq!(s.streams[0].deadline, Time::from_ms(1));
        assert_eq!(s.streams[0].route, vec!["E1", "W1"]);
    }

    #[test]
    fn explicit_tasks_and_spaced_units() {
        let text = "node E1 { cores 1 class 2 }\n\
                    app \"ctl\" on E1 { level 3 tasks 2 period 10 ms util 0.3\n\
                      task a wcet 1000us period 10ms\n\
                      task \"b b\" wcet 2ms period 10ms deadline 8ms }";
        let s = parse_scenario(text).unwrap();
        let a = &s.applications[0];
        assert_eq!(a.period, Time::from_ms(10));
        assert_eq!(a.tasks.len(), 2);
        assert_eq!(a.tasks[1].id, "b b");
        assert_eq!(a.tasks[1].deadline, Time::from_ms(8));
        assert_eq!(a.tasks[1].wcet_us, 2000.0);
    }
}

use std::fmt;

use super::{Checker, ProgramError, PulseProgram, Statement, DEFAULT_TRIAL_BUDGET_NS};
use crate::fock::Spin;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub budget_ns: u64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            budget_ns: DEFAULT_TRIAL_BUDGET_NS,
        }
    }
}

/// First error found in a program source. `line` and `column` are 1-based;
/// the column counts characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)?;
        if !self.token.is_empty() {
            write!(f, " (at `{}`)", self.token)?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

pub fn parse(source: &str) -> Result<PulseProgram, ParseError> {
    parse_with(source, &ParseOptions::default())
}

/// Parses and checks a program. Statements may also be separated by `;`.
pub fn parse_with(source: &str, options: &ParseOptions) -> Result<PulseProgram, ParseError> {
    let source = source.strip_prefix('\u{feff}').unwrap_or(source);
    let mut statements = Vec::new();
    let mut checker = Checker::new(options.budget_ns);
    for (lineno, raw) in source.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let code = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let mut offset = 0;
        for chunk in code.split(';') {
            let tokens = tokenize(chunk, lineno + 1, offset);
            offset += chunk.chars().count() + 1;
            if tokens.is_empty() {
                continue;
            }
            let st = parse_statement(&tokens)?;
            checker
                .push(statements.len(), &st)
                .map_err(|e| tokens[0].error(semantic_message(&e)))?;
            statements.push(st);
        }
    }
    Ok(PulseProgram { statements })
}

fn semantic_message(e: &ProgramError) -> String {
    match e {
        ProgramError::ReadBeforePrepare { spin, .. } => format!("read {spin} before any prepare"),
        ProgramError::PreparedTwice { spin, .. } => format!("{spin} is already prepared"),
        ProgramError::ReadTwice { spin, .. } => format!("{spin} is already read"),
        ProgramError::OverBudget {
            total_ns, budget_ns, ..
        } => format!("program reaches {total_ns} ns, over the {budget_ns} ns trial budget"),
    }
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

impl Token<'_> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: self.column,
            message: message.into(),
            token: self.text.to_string(),
        }
    }

    fn lower(&self) -> String {
        self.text.to_ascii_lowercase()
    }
}

fn tokenize(chunk: &str, line: usize, offset: usize) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut col = offset;
    for (byte, ch) in chunk.char_indices() {
        col += 1;
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                tokens.push(Token {
                    text: &chunk[b..byte],
                    line,
                    column: c,
                });
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((b, c)) = start {
        tokens.push(Token {
            text: &chunk[b..],
            line,
            column: c,
        });
    }
    tokens
}

fn parse_statement(tokens: &[Token<'_>]) -> Result<Statement, ParseError> {
    let head = &tokens[0];
    let rest = &tokens[1..];
    match head.lower().as_str() {
        "prepare" => Ok(Statement::Prepare(single_target(head, rest)?)),
        "read" => Ok(Statement::Read(single_target(head, rest)?)),
        "wait" => parse_wait(head, rest),
        "raman" => parse_raman(head, rest),
        _ => Err(head.error("unknown keyword")),
    }
}

fn single_target(head: &Token<'_>, rest: &[Token<'_>]) -> Result<Spin, ParseError> {
    let Some(tok) = rest.first() else {
        return Err(head.error("expected target s1 or s2"));
    };
    let spin = match tok.lower().as_str() {
        "s1" => Spin::S1,
        "s2" => Spin::S2,
        _ => return Err(tok.error("expected target s1 or s2")),
    };
    if let Some(extra) = rest.get(1) {
        return Err(extra.error("unexpected token"));
    }
    Ok(spin)
}

fn parse_wait(head: &Token<'_>, rest: &[Token<'_>]) -> Result<Statement, ParseError> {
    let Some(tok) = rest.first() else {
        return Err(head.error("expected duration"));
    };
    let lower = tok.lower();
    let (ns, used) = if let Some(num) = lower.strip_suffix("ns") {
        (parse_duration(tok, num)?, 1)
    } else {
        let ns = parse_duration(tok, &lower)?;
        match rest.get(1) {
            Some(unit) if unit.lower() == "ns" => (ns, 2),
            Some(unit) => return Err(unit.error("expected unit ns")),
            None => return Err(tok.error("missing unit ns")),
        }
    };
    if let Some(extra) = rest.get(used) {
        return Err(extra.error("unexpected token"));
    }
    Ok(Statement::Wait(ns))
}

fn parse_raman(head: &Token<'_>, rest: &[Token<'_>]) -> Result<Statement, ParseError> {
    let mut duration = None;
    let mut kshift = None;
    let mut rabi = None;
    for tok in rest {
        let lower = tok.lower();
        let Some((key, value)) = lower.split_once('=') else {
            return Err(tok.error("expected key=value"));
        };
        match key {
            "duration" => {
                if duration.is_some() {
                    return Err(tok.error("duplicate key duration"));
                }
                let num = value
                    .strip_suffix("ns")
                    .ok_or_else(|| tok.error("missing unit ns"))?;
                duration = Some(parse_duration(tok, num)?);
            }
            "angle" => {
                if kshift.is_some() {
                    return Err(tok.error("duplicate key angle"));
                }
                let k: i32 = value
                    .parse()
                    .map_err(|_| tok.error("malformed integer"))?;
                kshift = Some(k);
            }
            "rabi" => {
                if rabi.is_some() {
                    return Err(tok.error("duplicate key rabi"));
                }
                let num = value
                    .strip_suffix("mhz")
                    .ok_or_else(|| tok.error("missing unit mhz"))?;
                if !num.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
                    return Err(tok.error("malformed number"));
                }
                let r: f64 = num.parse().map_err(|_| tok.error("malformed number"))?;
                if !(r.is_finite() && r > 0.0) {
                    return Err(tok.error("rabi frequency must be positive"));
                }
                rabi = Some(r);
            }
            _ => return Err(tok.error("unknown raman key")),
        }
    }
    let Some(duration_ns) = duration else {
        return Err(head.error("raman needs duration=<int>ns"));
    };
    Ok(Statement::Raman {
        duration_ns,
        kshift: kshift.unwrap_or(0),
        rabi_mhz: rabi,
    })
}

fn parse_duration(tok: &Token<'_>, num: &str) -> Result<u64, ParseError> {
    if num.starts_with('-') {
        return Err(tok.error("negative duration"));
    }
    if num.is_empty() || !num.bytes().all(|b| b.is_ascii_digit()) {
        return Err(tok.error("malformed number"));
    }
    num.parse().map_err(|_| tok.error("duration out of range"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIP: &str = "prepare s1\nprepare s2\nraman duration=155ns\nread s1\nread s2";

    #[test]
    fn dip_sequence() {
        let p = parse(DIP).unwrap();
        assert_eq!(
            p.statements,
            vec![
                Statement::Prepare(Spin::S1),
                Statement::Prepare(Spin::S2),
                Statement::Raman {
                    duration_ns: 155,
                    kshift: 0,
                    rabi_mhz: None
                },
                Statement::Read(Spin::S1),
                Statement::Read(Spin::S2),
            ]
        );
        assert_eq!(p.print(), format!("{DIP}\n"));
    }

    #[test]
    fn empty_and_comments() {
        assert!(parse("").unwrap().statements.is_empty());
        assert!(parse("# nothing\n\n   \r\n").unwrap().statements.is_empty());
        assert_eq!(PulseProgram::default().print(), "");
    }

    #[test]
    fn negative_duration() {
        let e = parse("raman duration=-5ns").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("negative"));
    }

    #[test]
    fn case_crlf_and_separators() {
        let p = parse("PREPARE S1\r\nRaman Duration=77NS Angle=-1 rabi=1.626MHz ; wait 10 ns\r\nread s2").unwrap();
        assert_eq!(p.statements.len(), 4);
        assert_eq!(p.statements[2], Statement::Wait(10));
        assert_eq!(
            p.print(),
            "prepare s1\nraman duration=77ns angle=-1 rabi=1.626mhz\nwait 10ns\nread s2\n"
        );
    }

    #[test]
    fn rabi_override_printed() {
        let p = parse("raman duration=10ns rabi=1.626mhz").unwrap();
        assert!(p.print().contains("rabi=1.626mhz"));
    }

    #[test]
    fn error_locations() {
        let cases = [
            ("prepare s1\nfoo", 2, 1),
            ("prepare s1\n  wait 10", 2, 8),
            ("prepare s1\nwait 1x0ns", 2, 6),
            ("raman duration=5ns duration=6ns", 1, 20),
            ("raman angle=2", 1, 1),
            ("raman duration=5", 1, 7),
            ("prepare s1\nprepare s1", 2, 1),
            ("read s1", 1, 1),
            ("prepare s1\nread s1\nread s1", 3, 1),
            ("prepare s3", 1, 9),
            ("prepare s1 s2", 1, 12),
            ("prepare s1; bogus", 1, 13),
            ("raman duration=5ns rabi=-1mhz", 1, 20),
        ];
        for (src, line, column) in cases {
            let e = parse(src).unwrap_err();
            assert_eq!((e.line, e.column), (line, column), "{src:?}: {e}");
        }
    }

    #[test]
    fn budget() {
        let ok = "prepare s1\nwait 9800ns";
        assert!(parse(ok).is_ok());
        let e = parse("prepare s1\nwait 9801ns").unwrap_err();
        assert_eq!(e.line, 2);
        let opts = ParseOptions { budget_ns: 20_000 };
        assert!(parse_with("prepare s1\nwait 9801ns", &opts).is_ok());
    }

    #[test]
    fn first_error_wins() {
        let e = parse("prepare s1\nfoo\nwait -3ns").unwrap_err();
        assert_eq!(e.line, 2);
    }
}

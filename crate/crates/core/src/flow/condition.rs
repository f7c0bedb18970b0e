//! Condition mini-language used in the `condition` column of a flow sheet.
//!
//! ```text
//! expr    = or ;
//! or      = and , { "|" , and } ;
//! and     = unary , { "&" , unary } ;
//! unary   = [ "!" ] , primary ;
//! primary = call | "default" | "(" , expr , ")" ;
//! call    = ident , "(" , [ arg , { "," , arg } ] , ")" ;
//! arg     = ident | number ;
//! ```
//!
//! Precedence is `!` > `&` > `|`. `default` is only legal as the whole
//! expression.

use std::fmt;

use thiserror::Error;

/// Built-in predicates available to conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Keyword,
    Label,
    Sentiment,
    Example,
    Profile,
    IsQuestion,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Keyword => "keyword",
            Builtin::Label => "label",
            Builtin::Sentiment => "sentiment",
            Builtin::Example => "example",
            Builtin::Profile => "profile",
            Builtin::IsQuestion => "is_question",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "keyword" => Builtin::Keyword,
            "label" => Builtin::Label,
            "sentiment" => Builtin::Sentiment,
            "example" => Builtin::Example,
            "profile" => Builtin::Profile,
            "is_question" => Builtin::IsQuestion,
            _ => return None,
        })
    }

    /// Inclusive (min, max) argument count.
    pub fn arity(self) -> (usize, usize) {
        match self {
            Builtin::Keyword | Builtin::Label | Builtin::Sentiment => (1, 1),
            Builtin::Example | Builtin::Profile => (1, 2),
            Builtin::IsQuestion => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Call {
    pub func: Builtin,
    pub args: Vec<String>,
}

impl Call {
    pub fn new(func: Builtin, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            func,
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

/// Parsed condition tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConditionExpr {
    Or(Vec<ConditionExpr>),
    And(Vec<ConditionExpr>),
    Not(Box<ConditionExpr>),
    Call(Call),
    Default,
}

impl ConditionExpr {
    pub fn call(func: Builtin, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ConditionExpr::Call(Call::new(func, args))
    }

    pub fn is_default(&self) -> bool {
        matches!(self, ConditionExpr::Default)
    }

    /// Visit every call node in the tree.
    pub fn calls(&self) -> Vec<&Call> {
        let mut out = Vec::new();
        self.collect_calls(&mut out);
        out
    }

    fn collect_calls<'a>(&'a self, out: &mut Vec<&'a Call>) {
        match self {
            ConditionExpr::Or(c) | ConditionExpr::And(c) => {
                c.iter().for_each(|e| e.collect_calls(out))
            }
            ConditionExpr::Not(inner) => inner.collect_calls(out),
            ConditionExpr::Call(call) => out.push(call),
            ConditionExpr::Default => {}
        }
    }

    /// Profile keys this condition requires to be set whenever it is true.
    ///
    /// Only positive `profile(k)` calls reachable through `And` nodes count; an
    /// `Or` contributes the keys shared by all of its branches.
    pub fn implied_profile_keys(&self) -> Vec<String> {
        match self {
            ConditionExpr::Call(Call {
                func: Builtin::Profile,
                args,
            }) => args.first().cloned().into_iter().collect(),
            ConditionExpr::And(children) => {
                let mut keys: Vec<String> = children
                    .iter()
                    .flat_map(|c| c.implied_profile_keys())
                    .collect();
                keys.sort();
                keys.dedup();
                keys
            }
            ConditionExpr::Or(children) => {
                let mut iter = children.iter().map(|c| c.implied_profile_keys());
                let Some(mut common) = iter.next() else {
                    return Vec::new();
                };
                for keys in iter {
                    common.retain(|k| keys.contains(k));
                }
                common
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("`{func}` takes {min}..={max} arguments, got {got} (byte {offset})")]
    Arity {
        func: &'static str,
        min: usize,
        max: usize,
        got: usize,
        offset: usize,
    },
    #[error("invalid argument `{arg}` for `{func}` at byte {offset}: {reason}")]
    InvalidArgument {
        func: &'static str,
        arg: String,
        offset: usize,
        reason: &'static str,
    },
    #[error("`default` must be the whole condition (byte {offset})")]
    NestedDefault { offset: usize },
}

impl ConditionError {
    pub fn offset(&self) -> usize {
        match self {
            ConditionError::Syntax { offset, .. }
            | ConditionError::UnknownFunction { offset, .. }
            | ConditionError::Arity { offset, .. }
            | ConditionError::InvalidArgument { offset, .. }
            | ConditionError::NestedDefault { offset } => *offset,
        }
    }
}

pub fn parse_condition(src: &str) -> Result<ConditionExpr, ConditionError> {
    let mut parser = Parser {
        src,
        pos: 0,
        default_offsets: Vec::new(),
    };
    parser.skip_ws();
    if parser.at_end() {
        return Err(ConditionError::Syntax {
            offset: 0,
            message: "empty condition".into(),
        });
    }
    let expr = parser.parse_or()?;
    parser.skip_ws();
    if !parser.at_end() {
        return Err(parser.syntax("unexpected trailing input"));
    }
    if expr.is_default() {
        return Ok(expr);
    }
    if let Some(offset) = parser.default_offsets.first() {
        return Err(ConditionError::NestedDefault { offset: *offset });
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    default_offsets: Vec<usize>,
}

// `default` positions are tracked on the side so the nested check can run
// once the whole expression is known.
impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn syntax(&self, message: &str) -> ConditionError {
        ConditionError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ConditionError> {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{want}`")))
        }
    }

    fn parse_or(&mut self) -> Result<ConditionExpr, ConditionError> {
        let mut children = vec![self.parse_and()?];
        loop {
            self.skip_ws();
            if self.peek() == Some('|') {
                self.bump();
                children.push(self.parse_and()?);
            } else {
                break;
            }
        }
        Ok(if children.len() == 1 {
            children.pop().unwrap()
        } else {
            ConditionExpr::Or(children)
        })
    }

    fn parse_and(&mut self) -> Result<ConditionExpr, ConditionError> {
        let mut children = vec![self.parse_unary()?];
        loop {
            self.skip_ws();
            if self.peek() == Some('&') {
                self.bump();
                children.push(self.parse_unary()?);
            } else {
                break;
            }
        }
        Ok(if children.len() == 1 {
            children.pop().unwrap()
        } else {
            ConditionExpr::And(children)
        })
    }

    fn parse_unary(&mut self) -> Result<ConditionExpr, ConditionError> {
        self.skip_ws();
        if self.peek() == Some('!') {
            self.bump();
            let inner = self.parse_primary()?;
            Ok(ConditionExpr::Not(Box::new(inner)))
        } else {
            self.parse_primary()
        }
    }

    fn parse_primary(&mut self) -> Result<ConditionExpr, ConditionError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.bump();
                let inner = self.parse_or()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(c) if is_ident_start(c) => {
                let start = self.pos;
                let name = self.ident();
                self.skip_ws();
                if self.peek() == Some('(') {
                    self.parse_call(name, start)
                } else if name == "default" {
                    self.default_offsets.push(start);
                    Ok(ConditionExpr::Default)
                } else {
                    Err(ConditionError::Syntax {
                        offset: self.pos,
                        message: format!("expected `(` after `{name}`"),
                    })
                }
            }
            Some(_) => Err(self.syntax("expected a call, `default` or `(`")),
            None => Err(self.syntax("unexpected end of input")),
        }
    }

    fn parse_call(&mut self, name: &'a str, start: usize) -> Result<ConditionExpr, ConditionError> {
        let func = Builtin::from_name(name).ok_or_else(|| ConditionError::UnknownFunction {
            name: name.to_string(),
            offset: start,
        })?;
        self.expect('(')?;
        let mut args = Vec::new();
        let mut arg_offsets = Vec::new();
        self.skip_ws();
        if self.peek() == Some(')') {
            self.bump();
        } else {
            loop {
                self.skip_ws();
                arg_offsets.push(self.pos);
                args.push(self.arg()?);
                self.skip_ws();
                match self.bump() {
                    Some(',') => continue,
                    Some(')') => break,
                    _ => {
                        return Err(ConditionError::Syntax {
                            offset: self.pos,
                            message: "expected `,` or `)` in argument list".into(),
                        })
                    }
                }
            }
        }
        let (min, max) = func.arity();
        if args.len() < min || args.len() > max {
            return Err(ConditionError::Arity {
                func: func.name(),
                min,
                max,
                got: args.len(),
                offset: start,
            });
        }
        check_args(func, &args, &arg_offsets)?;
        Ok(ConditionExpr::Call(Call { func, args }))
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if is_ident_continue(c)) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn arg(&mut self) -> Result<String, ConditionError> {
        match self.peek() {
            Some(c) if is_ident_start(c) => Ok(self.ident().to_string()),
            Some(c) if c == '-' || c.is_ascii_digit() => {
                let start = self.pos;
                if c == '-' {
                    self.bump();
                }
                let digits = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
                if self.pos == digits {
                    return Err(self.syntax("expected digits"));
                }
                if self.peek() == Some('.') {
                    self.bump();
                    let frac = self.pos;
                    while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                        self.bump();
                    }
                    if self.pos == frac {
                        return Err(self.syntax("expected digits after `.`"));
                    }
                }
                Ok(self.src[start..self.pos].to_string())
            }
            _ => Err(self.syntax("expected an identifier or number")),
        }
    }
}

fn check_args(func: Builtin, args: &[String], offsets: &[usize]) -> Result<(), ConditionError> {
    let bad = |i: usize, reason: &'static str| ConditionError::InvalidArgument {
        func: func.name(),
        arg: args[i].clone(),
        offset: offsets[i],
        reason,
    };
    match func {
        Builtin::Sentiment => {
            if !matches!(args[0].as_str(), "positive" | "negative" | "neutral") {
                return Err(bad(0, "expected positive, negative or neutral"));
            }
        }
        Builtin::Example => {
            if let Some(t) = args.get(1) {
                match t.parse::<f64>() {
                    Ok(v) if (0.0..=1.0).contains(&v) => {}
                    _ => return Err(bad(1, "threshold must be a number in [0, 1]")),
                }
            }
        }
        Builtin::Profile => {
            if !is_slot_key(&args[0]) {
                return Err(bad(0, "profile keys match [a-z0-9_]+"));
            }
        }
        Builtin::Keyword | Builtin::Label | Builtin::IsQuestion => {}
    }
    Ok(())
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

pub(crate) fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// `[a-z0-9_]+`
pub fn is_slot_key(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionExpr::Default => f.write_str("default"),
            ConditionExpr::Call(call) => {
                write!(f, "{}(", call.func.name())?;
                for (i, arg) in call.args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(arg)?;
                }
                f.write_str(")")
            }
            ConditionExpr::Not(inner) => match inner.as_ref() {
                ConditionExpr::Call(_) | ConditionExpr::Default => write!(f, "!{inner}"),
                _ => write!(f, "!({inner})"),
            },
            ConditionExpr::And(children) => {
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    match child {
                        ConditionExpr::Or(_) | ConditionExpr::And(_) => write!(f, "({child})")?,
                        _ => write!(f, "{child}")?,
                    }
                }
                Ok(())
            }
            ConditionExpr::Or(children) => {
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    match child {
                        ConditionExpr::Or(_) => write!(f, "({child})")?,
                        _ => write!(f, "{child}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

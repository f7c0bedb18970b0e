//! `{dotted.key}` placeholder substitution for system utterances.

use std::collections::BTreeMap;

use thiserror::Error;

/// Flat key/value view over a session: `profile.<slot>` and `route1.<field>`,
/// `route2.<field>` once routes have been recommended.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionView {
    values: BTreeMap<String, String>,
}

impl SessionView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.values.insert(key.into(), value.into());
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("placeholder `{{{0}}}` has no value")]
    MissingPlaceholderKey(String),
    #[error("unbalanced brace at byte {0}")]
    Unbalanced(usize),
    #[error("empty placeholder at byte {0}")]
    EmptyPlaceholder(usize),
}

/// Placeholder keys in order of appearance.
pub fn placeholders(template: &str) -> Result<Vec<&str>, TemplateError> {
    let mut keys = Vec::new();
    scan(template, |piece| {
        if let Piece::Key(k) = piece {
            keys.push(k);
        }
        Ok(())
    })?;
    Ok(keys)
}

pub fn render_template(template: &str, view: &SessionView) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    scan(template, |piece| {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Key(k) => out.push_str(
                view.get(k)
                    .ok_or_else(|| TemplateError::MissingPlaceholderKey(k.to_string()))?,
            ),
        }
        Ok(())
    })?;
    Ok(out)
}

enum Piece<'a> {
    Text(&'a str),
    Key(&'a str),
}

fn scan<'a>(
    template: &'a str,
    mut visit: impl FnMut(Piece<'a>) -> Result<(), TemplateError>,
) -> Result<(), TemplateError> {
    let mut rest = template;
    let mut base = 0;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(TemplateError::Unbalanced(base + open));
        }
        let after = &rest[open + 1..];
        let close = after
            .find(['{', '}'])
            .filter(|&i| after.as_bytes()[i] == b'}')
            .ok_or(TemplateError::Unbalanced(base + open))?;
        let key = after[..close].trim();
        if key.is_empty() {
            return Err(TemplateError::EmptyPlaceholder(base + open));
        }
        if open > 0 {
            visit(Piece::Text(&rest[..open]))?;
        }
        visit(Piece::Key(key))?;
        let consumed = open + 1 + close + 1;
        base += consumed;
        rest = &rest[consumed..];
    }
    if !rest.is_empty() {
        visit(Piece::Text(rest))?;
    }
    Ok(())
}

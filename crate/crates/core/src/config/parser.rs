use std::fmt;

use super::{ConfigValue, Span, ValueKind};

/// A syntax error with the 1-based position where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at line {}, column {}: {}", self.line, self.column, self.message)
    }
}

/// Parses a configuration document.
///
/// Accepts strict JSON plus line comments that start with `//` or `#`
/// anywhere outside a string literal. Trailing commas, duplicate object keys
/// and numbers that overflow to infinity are rejected.
pub fn parse_config(text: &str) -> Result<ConfigValue, ParseError> {
    let mut p = Parser { chars: text.chars().collect(), pos: 0, line: 1, column: 1 };
    p.skip_trivia();
    let value = p.value()?;
    p.skip_trivia();
    if p.peek().is_some() {
        return Err(p.error("unexpected content after the end of the document"));
    }
    Ok(value)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.column)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.span(), message)
    }

    fn error_at(&self, span: Span, message: impl Into<String>) -> ParseError {
        ParseError { line: span.line, column: span.column, message: message.into() }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' || (c == '/' && self.peek_at(1) == Some('/')) {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => Err(self.error(format!("expected '{want}', found '{c}'"))),
            None => Err(self.error(format!("expected '{want}', found end of input"))),
        }
    }

    fn value(&mut self) -> Result<ConfigValue, ParseError> {
        let span = self.span();
        let kind = match self.peek() {
            None => return Err(self.error("unexpected end of input")),
            Some('{') => self.object()?,
            Some('[') => self.array()?,
            Some('"') => ValueKind::String(self.string()?),
            Some(c) if c == '-' || c.is_ascii_digit() => self.number()?,
            Some(c) if c.is_alphabetic() => self.keyword()?,
            Some(c) => return Err(self.error(format!("unexpected character '{c}'"))),
        };
        Ok(ConfigValue::with_span(kind, span))
    }

    fn keyword(&mut self) -> Result<ValueKind, ParseError> {
        let span = self.span();
        let mut word = String::new();
        while let Some(c) = self.peek().filter(|c| c.is_alphanumeric() || *c == '_') {
            word.push(c);
            self.bump();
        }
        match word.as_str() {
            "null" => Ok(ValueKind::Null),
            "true" => Ok(ValueKind::Bool(true)),
            "false" => Ok(ValueKind::Bool(false)),
            "NaN" | "Infinity" | "inf" | "nan" => Err(self.error_at(span, format!("non-finite number '{word}' is not allowed"))),
            _ => Err(self.error_at(span, format!("unexpected identifier '{word}' (keys and strings must be quoted)"))),
        }
    }

    fn number(&mut self) -> Result<ValueKind, ParseError> {
        let span = self.span();
        let mut text = String::new();
        if self.peek() == Some('-') {
            text.push('-');
            self.bump();
            if self.peek() == Some('I') {
                return Err(self.error_at(span, "non-finite number '-Infinity' is not allowed"));
            }
        }
        match self.peek() {
            Some('0') => {
                text.push('0');
                self.bump();
                if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    return Err(self.error("leading zeros are not allowed in numbers"));
                }
            }
            Some(c) if c.is_ascii_digit() => self.digits(&mut text),
            _ => return Err(self.error("expected a digit")),
        }
        if self.peek() == Some('.') {
            text.push('.');
            self.bump();
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.error("expected a digit after the decimal point"));
            }
            self.digits(&mut text);
        }
        if let Some(e @ ('e' | 'E')) = self.peek() {
            text.push(e);
            self.bump();
            if let Some(sign @ ('+' | '-')) = self.peek() {
                text.push(sign);
                self.bump();
            }
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.error("expected a digit in the exponent"));
            }
            self.digits(&mut text);
        }
        let n: f64 = text.parse().map_err(|_| self.error_at(span, format!("invalid number '{text}'")))?;
        if !n.is_finite() {
            return Err(self.error_at(span, format!("non-finite number '{text}' is not allowed")));
        }
        Ok(ValueKind::Number(n))
    }

    fn digits(&mut self, out: &mut String) {
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            out.push(c);
            self.bump();
        }
    }

    fn string(&mut self) -> Result<String, ParseError> {
        let start = self.span();
        self.expect('"')?;
        let mut out = String::new();
        loop {
            let Some(c) = self.bump() else {
                return Err(self.error_at(start, "unterminated string"));
            };
            match c {
                '"' => return Ok(out),
                '\\' => out.push(self.escape(start)?),
                '\n' => return Err(self.error_at(start, "unterminated string")),
                c if (c as u32) < 0x20 => return Err(self.error("control character in string")),
                c => out.push(c),
            }
        }
    }

    fn escape(&mut self, start: Span) -> Result<char, ParseError> {
        let Some(c) = self.bump() else {
            return Err(self.error_at(start, "unterminated string"));
        };
        Ok(match c {
            '"' => '"',
            '\\' => '\\',
            '/' => '/',
            'b' => '\u{8}',
            'f' => '\u{c}',
            'n' => '\n',
            'r' => '\r',
            't' => '\t',
            'u' => {
                let high = self.hex4()?;
                if (0xD800..0xDC00).contains(&high) {
                    if self.peek() != Some('\\') || self.peek_at(1) != Some('u') {
                        return Err(self.error("unpaired surrogate in \\u escape"));
                    }
                    self.bump();
                    self.bump();
                    let low = self.hex4()?;
                    if !(0xDC00..0xE000).contains(&low) {
                        return Err(self.error("invalid low surrogate in \\u escape"));
                    }
                    let code = 0x10000 + ((high - 0xD800) << 10) + (low - 0xDC00);
                    char::from_u32(code).ok_or_else(|| self.error("invalid \\u escape"))?
                } else {
                    char::from_u32(high).ok_or_else(|| self.error("unpaired surrogate in \\u escape"))?
                }
            }
            other => return Err(self.error(format!("invalid escape '\\{other}'"))),
        })
    }

    fn hex4(&mut self) -> Result<u32, ParseError> {
        let mut code = 0u32;
        for _ in 0..4 {
            let digit = self.peek().and_then(|c| c.to_digit(16)).ok_or_else(|| self.error("expected four hex digits"))?;
            self.bump();
            code = code * 16 + digit;
        }
        Ok(code)
    }

    fn array(&mut self) -> Result<ValueKind, ParseError> {
        self.expect('[')?;
        let mut items = Vec::new();
        self.skip_trivia();
        if self.peek() == Some(']') {
            self.bump();
            return Ok(ValueKind::Array(items));
        }
        loop {
            self.skip_trivia();
            items.push(self.value()?);
            self.skip_trivia();
            match self.peek() {
                Some(',') => {
                    let comma = self.span();
                    self.bump();
                    self.skip_trivia();
                    if self.peek() == Some(']') {
                        return Err(self.error_at(comma, "trailing comma"));
                    }
                }
                Some(']') => {
                    self.bump();
                    return Ok(ValueKind::Array(items));
                }
                Some(c) => return Err(self.error(format!("expected ',' or ']', found '{c}'"))),
                None => return Err(self.error("unterminated array")),
            }
        }
    }

    fn object(&mut self) -> Result<ValueKind, ParseError> {
        self.expect('{')?;
        let mut entries: Vec<(String, ConfigValue)> = Vec::new();
        self.skip_trivia();
        if self.peek() == Some('}') {
            self.bump();
            return Ok(ValueKind::Object(entries));
        }
        loop {
            self.skip_trivia();
            let key_span = self.span();
            if self.peek() != Some('"') {
                return Err(match self.peek() {
                    Some(c) => self.error(format!("expected a quoted key, found '{c}'")),
                    None => self.error("unterminated object"),
                });
            }
            let key = self.string()?;
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(self.error_at(key_span, format!("duplicate key '{key}'")));
            }
            self.skip_trivia();
            self.expect(':')?;
            self.skip_trivia();
            let value = self.value()?;
            entries.push((key, value));
            self.skip_trivia();
            match self.peek() {
                Some(',') => {
                    let comma = self.span();
                    self.bump();
                    self.skip_trivia();
                    if self.peek() == Some('}') {
                        return Err(self.error_at(comma, "trailing comma"));
                    }
                }
                Some('}') => {
                    self.bump();
                    return Ok(ValueKind::Object(entries));
                }
                Some(c) => return Err(self.error(format!("expected ',' or '}}', found '{c}'"))),
                None => return Err(self.error("unterminated object")),
            }
        }
    }
}

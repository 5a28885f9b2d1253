//! Tokenizer for the SELECT subset shared by the source and target dialects.

use std::fmt;

use crate::error::ParseError;

/// 1-based line/column position in the input text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    /// Keyword or identifier. `quote` is the delimiter when the word was quoted.
    Word { value: String, quote: Option<char> },
    Number(String),
    String(String),
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Period,
    SemiColon,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Eq,
    DoubleEq,
    Neq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Concat,
    DoubleColon,
    Tilde,
    Eof,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Token::Word { value, quote: None } if value.eq_ignore_ascii_case(kw))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Word { value, quote: None } => write!(f, "{value}"),
            Token::Word { value, quote: Some(q) } => write!(f, "{q}{value}{q}"),
            Token::Number(n) => write!(f, "{n}"),
            Token::String(s) => write!(f, "'{s}'"),
            Token::Comma => f.write_str(","),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
            Token::LBracket => f.write_str("["),
            Token::RBracket => f.write_str("]"),
            Token::Period => f.write_str("."),
            Token::SemiColon => f.write_str(";"),
            Token::Star => f.write_str("*"),
            Token::Plus => f.write_str("+"),
            Token::Minus => f.write_str("-"),
            Token::Slash => f.write_str("/"),
            Token::Percent => f.write_str("%"),
            Token::Eq => f.write_str("="),
            Token::DoubleEq => f.write_str("=="),
            Token::Neq => f.write_str("!="),
            Token::Lt => f.write_str("<"),
            Token::LtEq => f.write_str("<="),
            Token::Gt => f.write_str(">"),
            Token::GtEq => f.write_str(">="),
            Token::Concat => f.write_str("||"),
            Token::DoubleColon => f.write_str("::"),
            Token::Tilde => f.write_str("~"),
            Token::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpannedToken {
    pub token: Token,
    pub start: Location,
    pub end: Location,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    loc: Location,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.loc.line += 1;
            self.loc.column = 1;
        } else {
            self.loc.column += 1;
        }
        Some(c)
    }

    fn peek_second(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next()
    }
}

/// Splits `sql` into tokens, dropping whitespace and comments.
/// The returned vector always ends with [`Token::Eof`].
pub fn tokenize(sql: &str) -> Result<Vec<SpannedToken>, ParseError> {
    let mut cur = Cursor {
        chars: sql.chars().peekable(),
        loc: Location { line: 1, column: 1 },
    };
    let mut out = Vec::new();
    loop {
        let start = cur.loc;
        let Some(c) = cur.peek() else {
            out.push(SpannedToken {
                token: Token::Eof,
                start,
                end: start,
            });
            return Ok(out);
        };
        let token = match c {
            c if c.is_whitespace() => {
                cur.bump();
                continue;
            }
            '-' if cur.peek_second() == Some('-') => {
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
                continue;
            }
            '/' if cur.peek_second() == Some('*') => {
                cur.bump();
                cur.bump();
                let mut closed = false;
                while let Some(c) = cur.bump() {
                    if c == '*' && cur.peek() == Some('/') {
                        cur.bump();
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(ParseError::at("unterminated block comment", start));
                }
                continue;
            }
            '\'' => Token::String(read_quoted(&mut cur, '\'', start)?),
            '"' => Token::Word {
                value: read_quoted(&mut cur, '"', start)?,
                quote: Some('"'),
            },
            '`' => Token::Word {
                value: read_quoted(&mut cur, '`', start)?,
                quote: Some('`'),
            },
            '[' => {
                cur.bump();
                Token::LBracket
            }
            ']' => {
                cur.bump();
                Token::RBracket
            }
            c if c.is_ascii_digit() => read_number(&mut cur),
            '.' if cur.peek_second().is_some_and(|c| c.is_ascii_digit()) => read_number(&mut cur),
            c if c.is_alphabetic() || c == '_' => {
                let mut value = String::new();
                while let Some(c) = cur.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '$' {
                        value.push(c);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                Token::Word { value, quote: None }
            }
            _ => {
                cur.bump();
                match c {
                    ',' => Token::Comma,
                    '(' => Token::LParen,
                    ')' => Token::RParen,
                    '.' => Token::Period,
                    ';' => Token::SemiColon,
                    '*' => Token::Star,
                    '+' => Token::Plus,
                    '-' => Token::Minus,
                    '/' => Token::Slash,
                    '%' => Token::Percent,
                    '~' => Token::Tilde,
                    '=' => {
                        if cur.peek() == Some('=') {
                            cur.bump();
                            Token::DoubleEq
                        } else {
                            Token::Eq
                        }
                    }
                    '!' if cur.peek() == Some('=') => {
                        cur.bump();
                        Token::Neq
                    }
                    '<' => match cur.peek() {
                        Some('=') => {
                            cur.bump();
                            Token::LtEq
                        }
                        Some('>') => {
                            cur.bump();
                            Token::Neq
                        }
                        _ => Token::Lt,
                    },
                    '>' => {
                        if cur.peek() == Some('=') {
                            cur.bump();
                            Token::GtEq
                        } else {
                            Token::Gt
                        }
                    }
                    '|' if cur.peek() == Some('|') => {
                        cur.bump();
                        Token::Concat
                    }
                    ':' if cur.peek() == Some(':') => {
                        cur.bump();
                        Token::DoubleColon
                    }
                    other => {
                        return Err(ParseError::at(
                            format!("unexpected character '{other}'"),
                            start,
                        ))
                    }
                }
            }
        };
        out.push(SpannedToken {
            token,
            start,
            end: cur.loc,
        });
    }
}

fn read_quoted(cur: &mut Cursor<'_>, quote: char, start: Location) -> Result<String, ParseError> {
    cur.bump();
    let mut value = String::new();
    loop {
        match cur.bump() {
            Some(c) if c == quote => {
                // doubled delimiter is an escaped delimiter
                if cur.peek() == Some(quote) {
                    cur.bump();
                    value.push(quote);
                } else {
                    return Ok(value);
                }
            }
            Some(c) => value.push(c),
            None => {
                return Err(ParseError::at(
                    format!("unterminated quoted text starting with {quote}"),
                    start,
                ))
            }
        }
    }
}

fn read_number(cur: &mut Cursor<'_>) -> Token {
    let mut text = String::new();
    let mut seen_dot = false;
    let mut seen_exp = false;
    while let Some(c) = cur.peek() {
        if c.is_ascii_digit() {
            text.push(c);
        } else if c == '.' && !seen_dot && !seen_exp {
            seen_dot = true;
            text.push(c);
        } else if (c == 'e' || c == 'E') && !seen_exp {
            let next = cur.peek_second();
            let signed = matches!(next, Some('+') | Some('-'));
            if !(next.is_some_and(|d| d.is_ascii_digit()) || signed) {
                break;
            }
            seen_exp = true;
            text.push(c);
            cur.bump();
            if signed {
                text.push(cur.bump().unwrap_or('+'));
            }
            continue;
        } else {
            break;
        }
        cur.bump();
    }
    Token::Number(text)
}

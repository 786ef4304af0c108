use std::fmt;

use super::{Loc, ParseError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(String),
    Str(String),
    /// `@k` node label in edge-form bodies.
    Label(u32),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Label(n) => write!(f, "`@{n}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

// longest first
const PUNCT: &[&str] = &[
    "==>", "==", "!=", "<=", ">=", "&&", "||", "->", "{", "}", "(", ")", ";", ":", ",", "=", "<",
    ">", "+", "-", "*", "/", "%", "!",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, n: usize| {
        for k in 0..n {
            if chars[*i + k] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        }
        *i += n;
    };
    while i < chars.len() {
        let c = chars[i];
        let loc = Loc { line, column: col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            let mut n = 0;
            while start + n < chars.len() && (chars[start + n].is_ascii_alphanumeric() || chars[start + n] == '_') {
                n += 1;
            }
            let s: String = chars[start..start + n].iter().collect();
            advance(&mut i, &mut line, &mut col, n);
            out.push(Token { tok: Tok::Ident(s), loc });
            continue;
        }
        if c.is_ascii_digit() {
            let mut n = 0;
            while i + n < chars.len() && chars[i + n].is_ascii_digit() {
                n += 1;
            }
            let s: String = chars[i..i + n].iter().collect();
            advance(&mut i, &mut line, &mut col, n);
            out.push(Token { tok: Tok::Int(s), loc });
            continue;
        }
        if c == '@' {
            let mut n = 1;
            while i + n < chars.len() && chars[i + n].is_ascii_digit() {
                n += 1;
            }
            let digits: String = chars[i + 1..i + n].iter().collect();
            let k = digits
                .parse::<u32>()
                .map_err(|_| ParseError::new(loc, "expected node label after `@`"))?;
            advance(&mut i, &mut line, &mut col, n);
            out.push(Token { tok: Tok::Label(k), loc });
            continue;
        }
        if c == '"' {
            let mut n = 1;
            let mut s = String::new();
            loop {
                match chars.get(i + n) {
                    None | Some('\n') => return Err(ParseError::new(loc, "unterminated string")),
                    Some('"') => break,
                    Some('\\') if chars.get(i + n + 1).is_some_and(|c| *c == '"' || *c == '\\') => {
                        s.push(chars[i + n + 1]);
                        n += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        n += 1;
                    }
                }
            }
            advance(&mut i, &mut line, &mut col, n + 1);
            out.push(Token { tok: Tok::Str(s), loc });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                advance(&mut i, &mut line, &mut col, p.len());
                out.push(Token { tok: Tok::Punct(p), loc });
            }
            None => return Err(ParseError::new(loc, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        loc: Loc { line, column: col },
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = tokenize("a ==> b # c\n  @3: \"x\\\"y\"").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("a".into()),
                Tok::Punct("==>"),
                Tok::Ident("b".into()),
                Tok::Label(3),
                Tok::Punct(":"),
                Tok::Str("x\"y".into()),
                Tok::Eof
            ]
        );
        assert_eq!(toks[3].loc, Loc { line: 2, column: 3 });
    }

    #[test]
    fn bad_character() {
        let e = tokenize("x $").unwrap_err();
        assert_eq!(e.loc, Loc { line: 1, column: 3 });
    }
}

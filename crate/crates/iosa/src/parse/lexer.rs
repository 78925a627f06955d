//! Tokenizer for the `.iosa` concrete syntax.

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Tok {
    Ident(String),
    Number(f64),
    Pragma(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Eq,
    Dot,
    Tilde,
    Pipe,
    PipePipe,
    Bang,
    BangBang,
    Quest,
    QuestQuest,
    AmpAmp,
    DashDash,
    Arrow,
}

impl Tok {
    pub(super) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Pragma(p) => format!("pragma `#{p}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Tilde => "`~`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::PipePipe => "`||`".into(),
            Tok::Bang => "`!`".into(),
            Tok::BangBang => "`!!`".into(),
            Tok::Quest => "`?`".into(),
            Tok::QuestQuest => "`??`".into(),
            Tok::AmpAmp => "`&&`".into(),
            Tok::DashDash => "`--`".into(),
            Tok::Arrow => "`-->`".into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(super) struct Pos {
    pub line: usize,
    pub col: usize,
}

pub(super) struct Spanned {
    pub tok: Tok,
    pub pos: Pos,
}

pub(super) fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! err {
        ($pos:expr, $($arg:tt)*) => {
            return Err(ParseError { line: $pos.line, col: $pos.col, message: format!($($arg)*) })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let advance = |n: usize, i: &mut usize, line: &mut usize, col: &mut usize| {
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

        if c.is_whitespace() {
            advance(1, &mut i, &mut line, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i, &mut line, &mut col);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(1, &mut i, &mut line, &mut col);
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Spanned {
                tok: Tok::Ident(word),
                pos,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.')) {
            let start = i;
            if c == '-' {
                advance(1, &mut i, &mut line, &mut col);
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(1, &mut i, &mut line, &mut col);
            }
            if i < chars.len() && chars[i] == '.' {
                advance(1, &mut i, &mut line, &mut col);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(1, &mut i, &mut line, &mut col);
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                advance(1, &mut i, &mut line, &mut col);
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    advance(1, &mut i, &mut line, &mut col);
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(1, &mut i, &mut line, &mut col);
                }
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<f64>() {
                Ok(n) if n.is_finite() => out.push(Spanned {
                    tok: Tok::Number(n),
                    pos,
                }),
                _ => err!(pos, "malformed number `{text}`"),
            }
            continue;
        }
        if c == '#' {
            advance(1, &mut i, &mut line, &mut col);
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '-') {
                advance(1, &mut i, &mut line, &mut col);
            }
            if start == i {
                err!(pos, "`#` must introduce a pragma name");
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Spanned {
                tok: Tok::Pragma(word),
                pos,
            });
            continue;
        }

        // Punctuation, longest match first.
        let two = if i + 1 < chars.len() {
            Some((chars[i], chars[i + 1]))
        } else {
            None
        };
        let tok = match (c, two) {
            ('-', Some(('-', '-'))) => {
                if chars.get(i + 2) == Some(&'>') {
                    advance(3, &mut i, &mut line, &mut col);
                    Tok::Arrow
                } else {
                    advance(2, &mut i, &mut line, &mut col);
                    Tok::DashDash
                }
            }
            ('|', Some(('|', '|'))) => {
                advance(2, &mut i, &mut line, &mut col);
                Tok::PipePipe
            }
            ('!', Some(('!', '!'))) => {
                advance(2, &mut i, &mut line, &mut col);
                Tok::BangBang
            }
            ('?', Some(('?', '?'))) => {
                advance(2, &mut i, &mut line, &mut col);
                Tok::QuestQuest
            }
            ('&', Some(('&', '&'))) => {
                advance(2, &mut i, &mut line, &mut col);
                Tok::AmpAmp
            }
            _ => {
                let single = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '=' => Tok::Eq,
                    '.' => Tok::Dot,
                    '~' => Tok::Tilde,
                    '|' => Tok::Pipe,
                    '!' => Tok::Bang,
                    '?' => Tok::Quest,
                    '&' => err!(pos, "stray `&` (did you mean `&&`?)"),
                    '-' => err!(pos, "stray `-` (transitions are written `--{{...}}, a!, {{...}}-->`)"),
                    other => err!(pos, "unexpected character `{other}`"),
                };
                advance(1, &mut i, &mut line, &mut col);
                single
            }
        };
        out.push(Spanned { tok, pos });
    }
    Ok(out)
}

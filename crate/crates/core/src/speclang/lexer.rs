use super::ast::Span;
use super::error::SpecError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Digits only.
    Nat(String),
    /// Digits with a fractional part.
    Decimal(String),
    Str(String),
    Keyword(&'static str),
    Sym(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Nat(s) | Tok::Decimal(s) => format!("number `{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Keyword(k) => format!("`{k}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub const KEYWORDS: &[&str] = &[
    "model", "dataset", "from", "labeled", "predicate", "goal", "forall", "exists", "in", "not", "true",
    "false", "real", "int", "vector", "label", "argmax",
];

// Longest first so that `<=` wins over `<`.
const SYMBOLS: &[&str] = &[
    "->", "/\\", "\\/", "<=", ">=", "(", ")", "[", "]", ",", ":", ".", ";", "=", "<", ">", "+", "-", "*",
];

pub fn tokenize(source: &str) -> Result<Vec<Token>, SpecError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    fn advance(chars: &[char], i: &mut usize, line: &mut u32, col: &mut u32) {
        if chars[*i] == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
        *i += 1;
    }

    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        if c.is_whitespace() {
            advance(&chars, &mut i, &mut line, &mut col);
            continue;
        }
        if c == '(' && chars.get(i + 1) == Some(&'*') {
            // Comments nest.
            let mut depth = 0usize;
            loop {
                if i >= chars.len() {
                    return Err(SpecError::UnterminatedComment { span });
                }
                if chars[i] == '(' && chars.get(i + 1) == Some(&'*') {
                    depth += 1;
                    advance(&chars, &mut i, &mut line, &mut col);
                    advance(&chars, &mut i, &mut line, &mut col);
                } else if chars[i] == '*' && chars.get(i + 1) == Some(&')') {
                    depth -= 1;
                    advance(&chars, &mut i, &mut line, &mut col);
                    advance(&chars, &mut i, &mut line, &mut col);
                    if depth == 0 {
                        break;
                    }
                } else {
                    advance(&chars, &mut i, &mut line, &mut col);
                }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                advance(&chars, &mut i, &mut line, &mut col);
            }
            let word: String = chars[start..i].iter().collect();
            let tok = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Keyword(k),
                None => Tok::Ident(word),
            };
            tokens.push(Token { tok, span });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(&chars, &mut i, &mut line, &mut col);
            }
            let mut is_decimal = false;
            // A `.` only belongs to the number when a digit follows: `vector 2.` ends a binder.
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_decimal = true;
                advance(&chars, &mut i, &mut line, &mut col);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(&chars, &mut i, &mut line, &mut col);
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if is_decimal { Tok::Decimal(text) } else { Tok::Nat(text) };
            tokens.push(Token { tok, span });
            continue;
        }
        if c == '"' {
            advance(&chars, &mut i, &mut line, &mut col);
            let mut text = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(SpecError::UnterminatedString { span }),
                    Some('"') => {
                        advance(&chars, &mut i, &mut line, &mut col);
                        break;
                    }
                    Some('\\') => {
                        advance(&chars, &mut i, &mut line, &mut col);
                        match chars.get(i) {
                            Some(&e @ ('"' | '\\')) => text.push(e),
                            Some('n') => text.push('\n'),
                            _ => return Err(SpecError::UnterminatedString { span }),
                        }
                        advance(&chars, &mut i, &mut line, &mut col);
                    }
                    Some(&other) => {
                        text.push(other);
                        advance(&chars, &mut i, &mut line, &mut col);
                    }
                }
            }
            tokens.push(Token { tok: Tok::Str(text), span });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                for _ in 0..sym.len() {
                    advance(&chars, &mut i, &mut line, &mut col);
                }
                tokens.push(Token { tok: Tok::Sym(sym), span });
            }
            None => {
                return Err(SpecError::Syntax {
                    span,
                    message: format!("unexpected character `{c}`"),
                    expected: vec![],
                })
            }
        }
    }
    tokens.push(Token { tok: Tok::Eof, span: Span::new(line, col) });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn binder_dot_is_not_part_of_number() {
        assert_eq!(
            toks("vector 2. x"),
            vec![Tok::Keyword("vector"), Tok::Nat("2".into()), Tok::Sym("."), Tok::Ident("x".into()), Tok::Eof]
        );
        assert_eq!(toks("0.5"), vec![Tok::Decimal("0.5".into()), Tok::Eof]);
    }

    #[test]
    fn longest_symbol_wins() {
        assert_eq!(
            toks("a <= b -> c /\\ d"),
            vec![
                Tok::Ident("a".into()),
                Tok::Sym("<="),
                Tok::Ident("b".into()),
                Tok::Sym("->"),
                Tok::Ident("c".into()),
                Tok::Sym("/\\"),
                Tok::Ident("d".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn nested_comments_are_skipped() {
        assert_eq!(toks("(* a (* b *) c *) x"), vec![Tok::Ident("x".into()), Tok::Eof]);
        assert!(matches!(tokenize("(* open"), Err(SpecError::UnterminatedComment { .. })));
    }

    #[test]
    fn unterminated_string() {
        assert!(matches!(tokenize("model M from \"abc"), Err(SpecError::UnterminatedString { .. })));
    }

    #[test]
    fn spans_track_lines() {
        let t = tokenize("a\n  b").unwrap();
        assert_eq!(t[1].span, Span::new(2, 3));
    }
}

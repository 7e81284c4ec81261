use std::fmt;

use super::ParseError;

const KEYWORDS: &[&str] = &[
    "exo",
    "var",
    "given",
    "in",
    "observed",
    "latent",
    "modifiable",
    "nonmodifiable",
    "and",
    "or",
    "xor",
    "not",
    "eq",
    "if",
    "table",
    "do",
    "solve",
    "obs",
    "ace",
    "adjust",
    "decompose",
    "select",
    "check",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Ident,
    Rational,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub line: u32,
    pub column: u32,
}

impl Token {
    pub fn is(&self, lexeme: &str) -> bool {
        self.lexeme == lexeme && matches!(self.kind, TokenKind::Keyword | TokenKind::Punct)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`", self.lexeme)
    }
}

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

/// Splits `text` into tokens, dropping whitespace and `#` comments.
pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let push =
        |out: &mut Vec<Token>, kind, lexeme: String, line, column| out.push(Token { kind, lexeme, line, column });
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }
        let digit_follows = |k: usize| chars.get(k).is_some_and(|d| d.is_ascii_digit());
        if c.is_ascii_digit() || (c == '-' && digit_follows(i + 1)) {
            let mut j = i + 1;
            while digit_follows(j) {
                j += 1;
            }
            if chars.get(j) == Some(&'/') && digit_follows(j + 1) {
                j += 1;
                while digit_follows(j) {
                    j += 1;
                }
            }
            let lexeme: String = chars[i..j].iter().collect();
            col += (j - i) as u32;
            i = j;
            push(&mut out, TokenKind::Rational, lexeme, start_line, start_col);
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let lexeme: String = chars[i..j].iter().collect();
            col += (j - i) as u32;
            i = j;
            let kind = if lexeme == "_" {
                TokenKind::Punct
            } else if is_keyword(&lexeme) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            };
            push(&mut out, kind, lexeme, start_line, start_col);
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let lexeme = match two.as_str() {
            ":=" | "->" => two,
            _ if "(){},:=|;~@".contains(c) => c.to_string(),
            _ => {
                return Err(ParseError {
                    message: format!("illegal character `{c}`"),
                    line,
                    column: col,
                    expected: Vec::new(),
                })
            }
        };
        let n = lexeme.chars().count();
        i += n;
        col += n as u32;
        push(&mut out, TokenKind::Punct, lexeme, start_line, start_col);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexemes(text: &str) -> Vec<String> {
        tokenize(text).unwrap().into_iter().map(|t| t.lexeme).collect()
    }

    #[test]
    fn exo_table_tokens() {
        let toks = tokenize("exo U ~ {0:3/4, 1:1/4}").unwrap();
        assert_eq!(toks.len(), 12);
        assert_eq!(toks.last().unwrap().lexeme, "}");
        assert_eq!(toks[6].kind, TokenKind::Rational);
        assert_eq!(toks[6].lexeme, "3/4");
    }

    #[test]
    fn query_tokens() {
        assert_eq!(lexemes("P(Y=1 | do(X=1))"), ["P", "(", "Y", "=", "1", "|", "do", "(", "X", "=", "1", ")", ")"]);
    }

    #[test]
    fn illegal_character_position() {
        let err = tokenize("%").unwrap_err();
        assert_eq!((err.line, err.column), (1, 1));
        let err = tokenize("var X\n  in $").unwrap_err();
        assert_eq!((err.line, err.column), (2, 6));
    }

    #[test]
    fn comments_arrows_and_negatives() {
        assert_eq!(lexemes("ace X -> Y # trailing"), ["ace", "X", "->", "Y"]);
        assert_eq!(lexemes("-1/2 x_1 _"), ["-1/2", "x_1", "_"]);
        let toks = tokenize("a\n  ξ").unwrap();
        assert_eq!((toks[1].line, toks[1].column), (2, 3));
    }
}

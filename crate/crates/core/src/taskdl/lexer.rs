//! Line-oriented tokenizer. Columns are 1-based character offsets.

use super::Diagnostic;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub col: usize,
}

const SYMBOLS2: [&str; 8] = ["<-", "<=", ">=", "==", "!=", "&&", "||", "+-"];
const SYMBOLS1: [&str; 16] = [
    "+", "-", "*", "/", "^", "(", ")", "[", "]", ",", "<", ">", "=", "!", "~", ":",
];

/// Tokenizes one line; `#` starts a comment that runs to the end of it.
pub fn lex_line(line: &str, lineno: usize) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<f64>() {
                Ok(x) if x.is_finite() => out.push(Token { tok: Tok::Num(x), col }),
                _ => {
                    return Err(Diagnostic::new(lineno, col, format!("malformed number `{text}`")));
                }
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let mut text: String = chars[start..i].iter().collect();
            if text == "δ" {
                text = "delta".into();
            }
            out.push(Token { tok: Tok::Ident(text), col });
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(Diagnostic::new(lineno, col, "unterminated string")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            _ => return Err(Diagnostic::new(lineno, i + 1, "unknown escape in string")),
                        }
                        i += 2;
                    }
                    Some(ch) => {
                        s.push(*ch);
                        i += 1;
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), col });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        if let Some(sym) = SYMBOLS2.iter().find(|s| **s == two) {
            out.push(Token { tok: Tok::Sym(sym), col });
            i += 2;
            continue;
        }
        let one = c.to_string();
        if let Some(sym) = SYMBOLS1.iter().find(|s| **s == one) {
            out.push(Token { tok: Tok::Sym(sym), col });
            i += 1;
            continue;
        }
        return Err(Diagnostic::new(lineno, col, format!("unexpected character `{c}`")));
    }
    Ok(out)
}

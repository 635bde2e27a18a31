//! Lightweight Solidity lexer shared by source normalisation and source
//! obfuscation. It recognises comments, string literals, numbers,
//! identifiers, whitespace and single-character punctuation; it does not
//! parse.

use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Whitespace,
    LineComment,
    BlockComment,
    Str,
    Number,
    Ident,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub kind: Kind,
    pub text: String,
}

impl Token {
    pub fn new(kind: Kind, text: impl Into<String>) -> Self {
        Token {
            kind,
            text: text.into(),
        }
    }

    pub fn is_trivia(&self) -> bool {
        matches!(
            self.kind,
            Kind::Whitespace | Kind::LineComment | Kind::BlockComment
        )
    }

    pub fn is_punct(&self, c: &str) -> bool {
        self.kind == Kind::Punct && self.text == c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexError {
    #[error("unterminated block comment starting on line {line}")]
    UnterminatedComment { line: usize },
    #[error("unterminated string literal starting on line {line}")]
    UnterminatedString { line: usize },
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Tokenises `src`. In lenient mode an unterminated comment or string runs
/// to the end of input instead of failing.
pub(crate) fn tokenize(src: &str, strict: bool) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = src.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let kind = if c.is_whitespace() {
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            Kind::Whitespace
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            Kind::LineComment
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            loop {
                if i + 1 >= chars.len() {
                    if strict {
                        return Err(LexError::UnterminatedComment { line });
                    }
                    i = chars.len();
                    break;
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
            Kind::BlockComment
        } else if c == '"' || c == '\'' {
            i += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        if strict {
                            return Err(LexError::UnterminatedString { line });
                        }
                        break;
                    }
                    Some('\\') => i += 2,
                    Some(&q) if q == c => {
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            i = i.min(chars.len());
            Kind::Str
        } else if c.is_ascii_digit() {
            while i < chars.len() && (is_ident_char(chars[i]) || chars[i] == '.') {
                i += 1;
            }
            Kind::Number
        } else if is_ident_start(c) {
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            Kind::Ident
        } else {
            i += 1;
            Kind::Punct
        };
        let text: String = chars[start..i].iter().collect();
        line += text.matches('\n').count();
        tokens.push(Token { kind, text });
    }
    Ok(tokens)
}

pub(crate) fn render(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.text.as_str()).collect()
}

/// Class of a user-declared name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum DeclKind {
    Function,
    Variable,
    Contract,
}

const ELEMENTARY_TYPES: &[&str] = &[
    "uint", "int", "bool", "address", "string", "bytes", "byte", "var", "fixed", "ufixed",
];

const DECL_MODIFIERS: &[&str] = &[
    "public",
    "private",
    "internal",
    "external",
    "constant",
    "immutable",
    "memory",
    "storage",
    "calldata",
    "indexed",
    "payable",
    "override",
];

/// Keywords, built-in globals and type names that are never renamed.
pub(crate) fn reserved() -> &'static HashSet<&'static str> {
    use std::sync::OnceLock;
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        [
            "pragma",
            "solidity",
            "contract",
            "interface",
            "library",
            "function",
            "modifier",
            "event",
            "struct",
            "enum",
            "mapping",
            "returns",
            "return",
            "if",
            "else",
            "for",
            "while",
            "do",
            "break",
            "continue",
            "new",
            "delete",
            "emit",
            "constructor",
            "fallback",
            "receive",
            "using",
            "is",
            "import",
            "as",
            "from",
            "true",
            "false",
            "this",
            "super",
            "msg",
            "block",
            "tx",
            "now",
            "require",
            "assert",
            "revert",
            "throw",
            "keccak256",
            "sha3",
            "sha256",
            "ripemd160",
            "ecrecover",
            "addmod",
            "mulmod",
            "selfdestruct",
            "suicide",
            "gasleft",
            "abi",
            "type",
            "view",
            "pure",
            "wei",
            "gwei",
            "szabo",
            "finney",
            "ether",
            "seconds",
            "minutes",
            "hours",
            "days",
            "weeks",
            "years",
            "anonymous",
            "virtual",
            "unchecked",
            "assembly",
            "let",
            "try",
            "catch",
            "length",
            "push",
            "pop",
            "sender",
            "value",
            "data",
            "sig",
            "gas",
            "timestamp",
            "number",
            "difficulty",
            "coinbase",
            "gaslimit",
            "origin",
            "gasprice",
            "balance",
            "transfer",
            "send",
            "call",
            "delegatecall",
            "staticcall",
            "callcode",
        ]
        .into_iter()
        .chain(ELEMENTARY_TYPES.iter().copied())
        .chain(DECL_MODIFIERS.iter().copied())
        .collect()
    })
}

pub(crate) fn is_type_keyword(word: &str) -> bool {
    if ELEMENTARY_TYPES.contains(&word) {
        return true;
    }
    let sized = |prefix: &str| {
        word.strip_prefix(prefix)
            .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
    };
    sized("uint") || sized("int") || sized("bytes")
}

pub(crate) fn is_reserved(word: &str) -> bool {
    reserved().contains(word) || is_type_keyword(word)
}

fn next_significant(tokens: &[Token], mut i: usize) -> Option<usize> {
    while i < tokens.len() {
        if !tokens[i].is_trivia() {
            return Some(i);
        }
        i += 1;
    }
    None
}

/// Skips a balanced `open ... close` group starting at `i` (which must be
/// `open`); returns the index after the closing token.
fn skip_group(tokens: &[Token], i: usize, open: &str, close: &str) -> usize {
    let mut depth = 0usize;
    let mut j = i;
    while j < tokens.len() {
        if tokens[j].is_punct(open) {
            depth += 1;
        } else if tokens[j].is_punct(close) {
            depth -= 1;
            if depth == 0 {
                return j + 1;
            }
        }
        j += 1;
    }
    j
}

/// Finds user declarations in first-declaration order. A name is reported
/// once, with the class of its first declaration.
pub(crate) fn declarations(tokens: &[Token]) -> Vec<(String, DeclKind)> {
    fn record(name: &str, kind: DeclKind, out: &mut Vec<(String, DeclKind)>) {
        if !is_reserved(name) && !out.iter().any(|(n, _)| n == name) {
            out.push((name.to_string(), kind));
        }
    }
    let mut out: Vec<(String, DeclKind)> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if t.kind != Kind::Ident {
            i += 1;
            continue;
        }
        let word = t.text.as_str();
        let named = |kind| next_significant(tokens, i + 1).map(|j| (j, kind));
        let decl = match word {
            "function" | "modifier" | "event" => named(DeclKind::Function),
            "contract" | "interface" | "library" => named(DeclKind::Contract),
            _ if is_type_keyword(word) || word == "mapping" => {
                // Walk past `mapping(...)`, array suffixes and modifiers.
                let mut j = i + 1;
                if word == "mapping" {
                    match next_significant(tokens, j) {
                        Some(k) if tokens[k].is_punct("(") => j = skip_group(tokens, k, "(", ")"),
                        _ => {
                            i += 1;
                            continue;
                        }
                    }
                }
                loop {
                    match next_significant(tokens, j) {
                        Some(k) if tokens[k].is_punct("[") => j = skip_group(tokens, k, "[", "]"),
                        Some(k)
                            if tokens[k].kind == Kind::Ident
                                && DECL_MODIFIERS.contains(&tokens[k].text.as_str()) =>
                        {
                            j = k + 1
                        }
                        _ => break,
                    }
                }
                next_significant(tokens, j).map(|k| (k, DeclKind::Variable))
            }
            _ => None,
        };
        if let Some((j, kind)) = decl {
            if tokens[j].kind == Kind::Ident {
                record(&tokens[j].text, kind, &mut out);
            }
        }
        i += 1;
    }
    out
}

use std::collections::{HashMap, HashSet};

use crate::lex::{self, DeclKind, Kind, Token};

/// Stopwords removed when no explicit list is configured.
pub const DEFAULT_STOPWORDS: &[&str] = &["function", "contract"];

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NormalizedSource {
    pub text: String,
}

fn prefix(kind: DeclKind) -> &'static str {
    match kind {
        DeclKind::Function => "FUN",
        DeclKind::Variable => "VAR",
        DeclKind::Contract => "CON",
    }
}

fn canonical_index(word: &str) -> Option<(&'static str, usize)> {
    ["FUN", "VAR", "CON"].into_iter().find_map(|p| {
        let rest = word.strip_prefix(p)?;
        if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        rest.parse().ok().map(|n| (p, n))
    })
}

/// Removes comments, pragma directives, non-ASCII characters, blank lines
/// and stopwords, and renames declared functions, variables and contracts
/// to `FUN<k>`, `VAR<k>`, `CON<k>` in first-declaration order. String
/// literals are kept (minus any non-ASCII bytes). Names already in the
/// canonical form are left alone, which makes the function idempotent.
pub fn normalize_source(source: &str, stopwords: &[&str]) -> NormalizedSource {
    let ascii: String = source.chars().filter(|c| c.is_ascii()).collect();
    let tokens = lex::tokenize(&ascii, false).expect("lenient lexing cannot fail");

    // Comments become whitespace so neighbouring tokens never fuse.
    let mut cleaned: Vec<Token> = Vec::with_capacity(tokens.len());
    let mut iter = tokens.into_iter().peekable();
    while let Some(tok) = iter.next() {
        match tok.kind {
            Kind::LineComment => {}
            Kind::BlockComment => {
                let ws = if tok.text.contains('\n') { "\n" } else { " " };
                cleaned.push(Token::new(Kind::Whitespace, ws));
            }
            Kind::Ident if tok.text == "pragma" => {
                for t in iter.by_ref() {
                    if t.is_punct(";") {
                        break;
                    }
                }
            }
            _ => cleaned.push(tok),
        }
    }

    let in_use: HashSet<(&'static str, usize)> = cleaned
        .iter()
        .filter(|t| t.kind == Kind::Ident)
        .filter_map(|t| canonical_index(&t.text))
        .collect();
    let mut counters: HashMap<&'static str, usize> = HashMap::new();
    let mut renames: HashMap<String, String> = HashMap::new();
    for (name, kind) in lex::declarations(&cleaned) {
        if canonical_index(&name).is_some() {
            continue;
        }
        let p = prefix(kind);
        let counter = counters.entry(p).or_insert(0);
        loop {
            *counter += 1;
            if !in_use.contains(&(p, *counter)) {
                break;
            }
        }
        renames.insert(name, format!("{p}{counter}"));
    }

    let mut out: Vec<Token> = Vec::with_capacity(cleaned.len());
    let mut drop_spaces = false;
    for mut tok in cleaned {
        if drop_spaces && tok.kind == Kind::Whitespace {
            let rest = tok.text.trim_start_matches([' ', '\t']);
            drop_spaces = false;
            if rest.is_empty() {
                continue;
            }
            tok.text = rest.to_string();
        }
        drop_spaces = false;
        if tok.kind == Kind::Ident {
            if stopwords.contains(&tok.text.as_str()) {
                drop_spaces = true;
                continue;
            }
            if let Some(new) = renames.get(&tok.text) {
                tok.text = new.clone();
            }
        }
        out.push(tok);
    }

    let rendered = lex::render(&out);
    let text = rendered
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    NormalizedSource { text }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(s: &str) -> String {
        normalize_source(s, DEFAULT_STOPWORDS).text
    }

    #[test]
    fn strips_pragma_and_comments() {
        assert_eq!(
            norm("pragma solidity ^0.4.26;\n// note\nuint owner;"),
            "uint VAR1;"
        );
    }

    #[test]
    fn empty_input() {
        assert_eq!(norm(""), "");
    }

    #[test]
    fn renames_functions_consistently() {
        let src = "contract Wage {\n  uint dailyWage;\n  function setDailyWage(uint w) public {\n    dailyWage = w;\n  }\n  function bump() public { setDailyWage(dailyWage + 1); }\n}";
        let out = norm(src);
        assert_eq!(
            out,
            "CON1 {\n  uint VAR1;\n  FUN1(uint VAR2) public {\n    VAR1 = VAR2;\n  }\n  FUN2() public { FUN1(VAR1 + 1); }\n}"
        );
        assert!(!out.contains("setDailyWage"));
    }

    #[test]
    fn keeps_strings_removes_non_ascii() {
        let out = norm("string s = \"héllo // not a comment\"; /* block\n comment */ uint x;");
        assert_eq!(out, "string VAR1 = \"hllo // not a comment\";\n uint VAR2;");
    }

    #[test]
    fn idempotent_with_events() {
        let src = "contract A { event Paid(address who); function f() {} uint VAR9; }";
        let once = norm(src);
        assert_eq!(norm(&once), once);
    }

    #[test]
    fn existing_canonical_names_are_reserved() {
        // VAR1 is taken by the user; the fresh declaration skips it.
        let out = norm("uint VAR1; uint other;");
        assert_eq!(out, "uint VAR1; uint VAR2;");
    }

    #[test]
    fn custom_stopwords() {
        assert_eq!(
            normalize_source("function f() public {}", &["public"]).text,
            "function FUN1() {}"
        );
    }
}

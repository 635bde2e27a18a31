use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha1::{Digest, Sha1};

use crate::lex::{self, Kind, LexError, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourcePass {
    Rename,
    Comments,
    Layout,
    Constants,
}

impl SourcePass {
    pub const ALL: [SourcePass; 4] = [
        SourcePass::Rename,
        SourcePass::Comments,
        SourcePass::Layout,
        SourcePass::Constants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SourcePass::Rename => "rename",
            SourcePass::Comments => "comments",
            SourcePass::Layout => "layout",
            SourcePass::Constants => "constants",
        }
    }
}

impl std::str::FromStr for SourcePass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rename" => Ok(SourcePass::Rename),
            "comments" => Ok(SourcePass::Comments),
            "layout" => Ok(SourcePass::Layout),
            "constants" => Ok(SourcePass::Constants),
            other => Err(format!("unknown source pass `{other}`")),
        }
    }
}

/// Digest used by the rename pass.
pub const RENAME_DIGEST: &str = "sha1";

const HEX_PREFIX_LEN: usize = 16;

fn digest_hex(seed: u64, name: &str) -> String {
    let mut h = Sha1::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    hex::encode(h.finalize())
}

fn rename_map(tokens: &[Token], seed: u64) -> HashMap<String, String> {
    let existing: HashSet<&str> = tokens
        .iter()
        .filter(|t| t.kind == Kind::Ident)
        .map(|t| t.text.as_str())
        .collect();
    let mut taken: HashSet<String> = HashSet::new();
    let mut map = HashMap::new();
    for (name, _) in lex::declarations(tokens) {
        let digest = digest_hex(seed, &name);
        let mut len = HEX_PREFIX_LEN;
        let mut candidate = format!("Ox{}", &digest[..len]);
        while taken.contains(&candidate) || existing.contains(candidate.as_str()) {
            len += 1;
            candidate = if len <= digest.len() {
                format!("Ox{}", &digest[..len])
            } else {
                format!("Ox{digest}_{}", len - digest.len())
            };
        }
        taken.insert(candidate.clone());
        map.insert(name, candidate);
    }
    map
}

const UNITS: &[&str] = &[
    "wei", "gwei", "szabo", "finney", "ether", "seconds", "minutes", "hours", "days", "weeks",
    "years",
];

fn plain_decimal(text: &str) -> Option<u128> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if text.len() > 1 && text.starts_with('0') {
        return None;
    }
    text.parse().ok()
}

fn term<R: Rng>(v: u128, rng: &mut R, depth: usize) -> String {
    if depth > 0 && rng.gen_bool(0.35) {
        expand_constant(v, rng, depth - 1)
    } else {
        v.to_string()
    }
}

fn split_sum<R: Rng>(n: u128, rng: &mut R, depth: usize) -> String {
    let a = rng.gen_range(0..=n);
    format!("({} + {})", term(a, rng, depth), term(n - a, rng, depth))
}

/// Builds an expression with the exact value `n`. Every intermediate is a
/// non-negative integer that fits in `u128`, and each division is exact.
pub fn expand_constant<R: Rng>(n: u128, rng: &mut R, depth: usize) -> String {
    let small = rng.gen_range(2..=9u128);
    match rng.gen_range(0..4) {
        0 => match (2..=n.min(64))
            .rev()
            .find(|d| n.is_multiple_of(*d) && *d < n)
        {
            Some(d) => format!("({} * {})", term(d, rng, depth), term(n / d, rng, depth)),
            None => split_sum(n, rng, depth),
        },
        1 => split_sum(n, rng, depth),
        2 if n.checked_add(small).is_some() => {
            format!(
                "({} - {})",
                term(n + small, rng, depth),
                term(small, rng, depth)
            )
        }
        _ => match n.checked_mul(small) {
            Some(m) => format!("({} / {})", term(m, rng, depth), term(small, rng, depth)),
            None => split_sum(n, rng, depth),
        },
    }
}

fn next_word(tokens: &[Token], i: usize) -> Option<&Token> {
    tokens[i + 1..].iter().find(|t| !t.is_trivia())
}

fn needs_space(a: &Token, b: &Token) -> bool {
    let wordish = |t: &Token| matches!(t.kind, Kind::Ident | Kind::Number);
    (wordish(a) && wordish(b)) || (a.kind == Kind::Punct && b.kind == Kind::Punct)
}

/// Source-level obfuscation. Passes run in a fixed order (rename,
/// comments, constants, layout) regardless of how they are listed.
pub fn obf_source(source: &str, seed: u64, passes: &[SourcePass]) -> Result<String, LexError> {
    let mut tokens = lex::tokenize(source, true)?;
    if passes.is_empty() {
        return Ok(source.to_string());
    }
    let has = |p: SourcePass| passes.contains(&p);

    if has(SourcePass::Rename) {
        let map = rename_map(&tokens, seed);
        for t in tokens.iter_mut().filter(|t| t.kind == Kind::Ident) {
            if let Some(new) = map.get(&t.text) {
                t.text = new.clone();
            }
        }
    }

    if has(SourcePass::Comments) {
        tokens = tokens
            .into_iter()
            .filter_map(|t| match t.kind {
                Kind::LineComment => None,
                Kind::BlockComment => Some(Token::new(Kind::Whitespace, " ")),
                _ => Some(t),
            })
            .collect();
    }

    if has(SourcePass::Constants) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
        let mut out = Vec::with_capacity(tokens.len());
        for i in 0..tokens.len() {
            let t = &tokens[i];
            let unit = next_word(&tokens, i)
                .is_some_and(|n| n.kind == Kind::Ident && UNITS.contains(&n.text.as_str()));
            match plain_decimal(&t.text).filter(|_| t.kind == Kind::Number && !unit) {
                Some(n) => {
                    let expr = expand_constant(n, &mut rng, 1);
                    out.extend(lex::tokenize(&expr, true).expect("generated expression lexes"));
                }
                None => out.push(t.clone()),
            }
        }
        tokens = out;
    }

    if has(SourcePass::Layout) {
        let mut dense: Vec<Token> = Vec::with_capacity(tokens.len());
        for mut t in tokens.into_iter().filter(|t| t.kind != Kind::Whitespace) {
            if t.kind == Kind::LineComment {
                let body = t.text.trim_start_matches('/').replace("*/", "* /");
                t = Token::new(Kind::BlockComment, format!("/*{body}*/"));
            }
            if let Some(prev) = dense.last() {
                if needs_space(prev, &t)
                    || prev.kind == Kind::BlockComment
                    || t.kind == Kind::BlockComment
                {
                    dense.push(Token::new(Kind::Whitespace, " "));
                }
            }
            dense.push(t);
        }
        tokens = dense;
    }

    Ok(lex::render(&tokens))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent evaluator for `+ - * /` over parenthesised naturals,
    /// with standard precedence. Fails on negative or inexact steps.
    fn eval(expr: &str) -> Option<u128> {
        fn atom(s: &[u8], i: &mut usize) -> Option<u128> {
            skip(s, i);
            if s.get(*i) == Some(&b'(') {
                *i += 1;
                let v = sum(s, i)?;
                skip(s, i);
                if s.get(*i) != Some(&b')') {
                    return None;
                }
                *i += 1;
                return Some(v);
            }
            let start = *i;
            while *i < s.len() && s[*i].is_ascii_digit() {
                *i += 1;
            }
            std::str::from_utf8(&s[start..*i]).ok()?.parse().ok()
        }
        fn skip(s: &[u8], i: &mut usize) {
            while *i < s.len() && s[*i] == b' ' {
                *i += 1;
            }
        }
        fn product(s: &[u8], i: &mut usize) -> Option<u128> {
            let mut v = atom(s, i)?;
            loop {
                skip(s, i);
                match s.get(*i) {
                    Some(b'*') => {
                        *i += 1;
                        v = v.checked_mul(atom(s, i)?)?;
                    }
                    Some(b'/') => {
                        *i += 1;
                        let d = atom(s, i)?;
                        if d == 0 || v % d != 0 {
                            return None;
                        }
                        v /= d;
                    }
                    _ => return Some(v),
                }
            }
        }
        fn sum(s: &[u8], i: &mut usize) -> Option<u128> {
            let mut v = product(s, i)?;
            loop {
                skip(s, i);
                match s.get(*i) {
                    Some(b'+') => {
                        *i += 1;
                        v = v.checked_add(product(s, i)?)?;
                    }
                    Some(b'-') => {
                        *i += 1;
                        v = v.checked_sub(product(s, i)?)?;
                    }
                    _ => return Some(v),
                }
            }
        }
        let s = expr.as_bytes();
        let mut i = 0;
        let v = sum(s, &mut i)?;
        skip(s, &mut i);
        (i == s.len()).then_some(v)
    }

    #[test]
    fn evaluator_oracle_self_check() {
        assert_eq!(eval("(10 * 10)"), Some(100));
        assert_eq!(eval("5 * 2 + (9 + 1) - 7"), Some(13));
        assert_eq!(eval("(7 / 2)"), None);
    }

    #[test]
    fn expansions_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in (0..300u128).chain([u128::MAX, u128::MAX - 1, 1 << 100]) {
            for _ in 0..5 {
                let e = expand_constant(n, &mut rng, 2);
                assert_eq!(eval(&e), Some(n), "{e}");
            }
        }
    }

    const SRC: &str = "pragma solidity ^0.4.26;\n\
        contract Payroll {\n\
        \x20   uint coefficient = 100; // scale\n\
        \x20   uint delay = 2 days;\n\
        \x20   function pay(address to) public {\n\
        \x20       /* block */ coefficient = coefficient + 1;\n\
        \x20   }\n\
        }\n";

    #[test]
    fn no_passes_is_identity() {
        assert_eq!(obf_source(SRC, 1, &[]).unwrap(), SRC);
    }

    #[test]
    fn rename_is_consistent() {
        let out = obf_source(SRC, 7, &[SourcePass::Rename]).unwrap();
        assert!(!out.contains("coefficient"));
        let name = format!("Ox{}", &digest_hex(7, "coefficient")[..HEX_PREFIX_LEN]);
        assert_eq!(out.matches(&name).count(), 3);
        assert!(out.contains("function"));
        assert_ne!(out, obf_source(SRC, 8, &[SourcePass::Rename]).unwrap());
    }

    #[test]
    fn comments_removed() {
        let out = obf_source(SRC, 0, &[SourcePass::Comments]).unwrap();
        assert!(!out.contains("scale") && !out.contains("block"));
    }

    #[test]
    fn layout_is_dense_and_keeps_comments_safe() {
        let out = obf_source(SRC, 0, &[SourcePass::Layout]).unwrap();
        assert!(!out.contains('\n'));
        assert!(out.contains("/* scale*/"));
        assert!(out.contains("coefficient=coefficient+1;"));
        assert_eq!(
            obf_source("a = b + +c;", 0, &[SourcePass::Layout]).unwrap(),
            "a=b+ +c;"
        );
    }

    #[test]
    fn constants_expand_but_skip_units_and_versions() {
        let out = obf_source(SRC, 3, &[SourcePass::Constants]).unwrap();
        assert!(out.contains("^0.4.26"));
        assert!(out.contains(" 2 days"));
        assert!(!out.contains("= 100;"));
    }

    #[test]
    fn strict_lexing() {
        assert!(obf_source("uint a; /* open", 0, &[SourcePass::Layout]).is_err());
        assert!(obf_source("string s = \"open", 0, &[]).is_err());
    }

    #[test]
    fn deterministic() {
        let all = [
            SourcePass::Rename,
            SourcePass::Comments,
            SourcePass::Layout,
            SourcePass::Constants,
        ];
        assert_eq!(
            obf_source(SRC, 5, &all).unwrap(),
            obf_source(SRC, 5, &all).unwrap()
        );
    }
}

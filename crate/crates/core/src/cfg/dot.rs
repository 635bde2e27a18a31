use std::fmt::Write as _;

use super::{BasicBlock, BlockKind, Cfg};

const EXIT_LABEL: &str = "EXIT_BLOCK";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DotError {
    #[error("unexpected {found:?} at byte {pos}, expected {expected}")]
    Unexpected {
        pos: usize,
        found: String,
        expected: &'static str,
    },
    #[error("unterminated string at byte {0}")]
    UnterminatedString(usize),
    #[error("node {0} is missing attribute {1}")]
    MissingAttribute(usize, &'static str),
    #[error("edge references unknown node {0}")]
    UnknownNode(usize),
    #[error("node ids must be 0..n in order, got {0}")]
    NonContiguousIds(usize),
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders `digraph G { ... }` with one node statement per block (sorted by
/// id) followed by one statement per edge.
pub fn export_dot(cfg: &Cfg) -> String {
    let mut out = String::from("digraph G {\n");
    let mut blocks: Vec<&BasicBlock> = cfg.blocks.iter().collect();
    blocks.sort_by_key(|b| b.id);
    for b in blocks {
        let label = match b.kind {
            BlockKind::Exit => EXIT_LABEL.to_string(),
            BlockKind::Normal => escape(&b.opcode_text),
        };
        let _ = writeln!(
            out,
            "  {} [label=\"{}\", start={}, end={}];",
            b.id, label, b.start_offset, b.end_offset
        );
    }
    let mut edges = cfg.edges.clone();
    edges.sort_unstable();
    for (s, d) in edges {
        let _ = writeln!(out, "  {s} -> {d};");
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Arrow,
    Sym(char),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, DotError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == '"' {
            let start = i;
            let mut s = String::new();
            i += 1;
            loop {
                match bytes.get(i) {
                    None => return Err(DotError::UnterminatedString(start)),
                    Some(b'"') => break,
                    Some(b'\\') if i + 1 < bytes.len() => {
                        s.push(bytes[i + 1] as char);
                        i += 2;
                    }
                    Some(_) => {
                        let ch = text[i..].chars().next().unwrap();
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            i += 1;
            out.push((start, Tok::Str(s)));
        } else if c == '-' && bytes.get(i + 1) == Some(&b'>') {
            out.push((i, Tok::Arrow));
            i += 2;
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Word(text[start..i].to_string())));
        } else {
            out.push((i, Tok::Sym(c)));
            i += c.len_utf8();
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn error(&self, expected: &'static str) -> DotError {
        let (pos, found) = match self.toks.get(self.pos) {
            Some((p, t)) => (*p, format!("{t:?}")),
            None => (self.end, "end of input".to_string()),
        };
        DotError::Unexpected {
            pos,
            found,
            expected,
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn expect_sym(&mut self, c: char) -> Result<(), DotError> {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error("punctuation"))
        }
    }

    fn word(&mut self) -> Result<String, DotError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn number(&mut self) -> Result<usize, DotError> {
        let before = self.pos;
        let w = self.word()?;
        w.parse().map_err(|_| {
            self.pos = before;
            self.error("non-negative integer")
        })
    }
}

/// Parses the subset produced by [`export_dot`].
pub fn parse_dot(text: &str) -> Result<Cfg, DotError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        end: text.len(),
    };
    if p.word()? != "digraph" {
        p.pos -= 1;
        return Err(p.error("`digraph`"));
    }
    if matches!(p.peek(), Some(Tok::Word(_))) {
        p.pos += 1;
    }
    p.expect_sym('{')?;

    let mut blocks = Vec::new();
    let mut edges = Vec::new();
    loop {
        if p.peek() == Some(&Tok::Sym('}')) {
            p.pos += 1;
            break;
        }
        let id = p.number()?;
        match p.peek() {
            Some(Tok::Arrow) => {
                p.pos += 1;
                let dst = p.number()?;
                edges.push((id, dst));
            }
            Some(Tok::Sym('[')) => {
                p.pos += 1;
                let mut label = None;
                let mut start = None;
                let mut end = None;
                loop {
                    match p.peek() {
                        Some(Tok::Sym(']')) => {
                            p.pos += 1;
                            break;
                        }
                        Some(Tok::Sym(',')) => {
                            p.pos += 1;
                            continue;
                        }
                        _ => {}
                    }
                    let key = p.word()?;
                    p.expect_sym('=')?;
                    let value = match p.next() {
                        Some(Tok::Str(s)) | Some(Tok::Word(s)) => s,
                        _ => {
                            p.pos -= 1;
                            return Err(p.error("attribute value"));
                        }
                    };
                    match key.as_str() {
                        "label" => label = Some(value),
                        "start" => start = value.parse().ok(),
                        "end" => end = value.parse().ok(),
                        _ => {}
                    }
                }
                let label = label.ok_or(DotError::MissingAttribute(id, "label"))?;
                if id != blocks.len() {
                    return Err(DotError::NonContiguousIds(id));
                }
                let (kind, opcode_text) = if label == EXIT_LABEL {
                    (BlockKind::Exit, String::new())
                } else {
                    (BlockKind::Normal, label)
                };
                blocks.push(BasicBlock {
                    id,
                    start_offset: start.ok_or(DotError::MissingAttribute(id, "start"))?,
                    end_offset: end.ok_or(DotError::MissingAttribute(id, "end"))?,
                    opcode_text,
                    kind,
                });
            }
            _ => return Err(p.error("`->` or `[`")),
        }
        if p.peek() == Some(&Tok::Sym(';')) {
            p.pos += 1;
        }
    }
    if p.pos < p.toks.len() {
        return Err(p.error("end of input"));
    }
    for &(s, d) in &edges {
        for n in [s, d] {
            if n >= blocks.len() {
                return Err(DotError::UnknownNode(n));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(Cfg { blocks, edges })
}

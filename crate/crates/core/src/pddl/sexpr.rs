//! Tokenizer and s-expression reader for PDDL text.

use super::PddlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Atom(String, Pos),
    List(Vec<SExpr>, Pos),
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Atom(_, p) | SExpr::List(_, p) => *p,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(s, _) => Some(s),
            SExpr::List(..) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items, _) => Some(items),
            SExpr::Atom(..) => None,
        }
    }

    /// First element of a list when it is an atom, e.g. `and` for `(and ...)`.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_atom()
    }
}

pub fn syntax(pos: Pos, expected: impl Into<String>) -> PddlError {
    PddlError::Syntax {
        line: pos.line,
        col: pos.col,
        expected: expected.into(),
    }
}

enum Tok {
    Open(Pos),
    Close(Pos),
    Word(String, Pos),
}

fn tokenize(text: &str) -> Vec<Tok> {
    let mut toks = Vec::new();
    let mut line = 1;
    let mut col = 0;
    let mut word = String::new();
    let mut word_pos = Pos::default();
    let mut in_comment = false;

    let flush = |word: &mut String, pos: Pos, toks: &mut Vec<Tok>| {
        if !word.is_empty() {
            toks.push(Tok::Word(std::mem::take(word).to_lowercase(), pos));
        }
    };

    for ch in text.chars() {
        if ch == '\n' {
            flush(&mut word, word_pos, &mut toks);
            in_comment = false;
            line += 1;
            col = 0;
            continue;
        }
        col += 1;
        if in_comment {
            continue;
        }
        let pos = Pos { line, col };
        match ch {
            ';' => {
                flush(&mut word, word_pos, &mut toks);
                in_comment = true;
            }
            '(' => {
                flush(&mut word, word_pos, &mut toks);
                toks.push(Tok::Open(pos));
            }
            ')' => {
                flush(&mut word, word_pos, &mut toks);
                toks.push(Tok::Close(pos));
            }
            c if c.is_whitespace() => flush(&mut word, word_pos, &mut toks),
            c => {
                if word.is_empty() {
                    word_pos = pos;
                }
                word.push(c);
            }
        }
    }
    flush(&mut word, word_pos, &mut toks);
    toks
}

/// Reads exactly one top-level s-expression; trailing content is an error.
pub fn read(text: &str) -> Result<SExpr, PddlError> {
    let toks = tokenize(text);
    let mut stack: Vec<(Vec<SExpr>, Pos)> = Vec::new();
    let mut done: Option<SExpr> = None;
    let mut end = Pos { line: 1, col: 1 };

    for tok in toks {
        if done.is_some() {
            let pos = match tok {
                Tok::Open(p) | Tok::Close(p) | Tok::Word(_, p) => p,
            };
            return Err(syntax(pos, "end of input"));
        }
        match tok {
            Tok::Open(p) => {
                end = p;
                stack.push((Vec::new(), p));
            }
            Tok::Close(p) => {
                end = p;
                let (items, open) = stack.pop().ok_or_else(|| syntax(p, "`(`"))?;
                let list = SExpr::List(items, open);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(list),
                    None => done = Some(list),
                }
            }
            Tok::Word(w, p) => {
                end = p;
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(SExpr::Atom(w, p)),
                    None => return Err(syntax(p, "`(`")),
                }
            }
        }
    }
    if !stack.is_empty() {
        return Err(syntax(end, "`)`"));
    }
    done.ok_or_else(|| syntax(end, "`(define`"))
}

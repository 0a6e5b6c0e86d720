//! The editing command language.
//!
//! ```text
//! weak   := ("optimize" | "enhance" | "auto") word* [punct]
//! strong := [adverb] verb target attribute [punct]
//!         | verb target attribute [adverb] [punct]
//!         | "set" target attribute signed-decimal [punct]
//! verb   := increase | raise | boost | decrease | reduce | lower   (and -d/-s forms)
//! adverb := slightly | "a bit" | "a little" | moderately | significantly
//! target := "global" | region-label
//! ```
//!
//! Matching is case-insensitive; region labels are lowercased and resolved
//! later against the segmentation.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::Attribute;

/// Version tag of the grammar above.
pub const DSL_VERSION: &str = "pertouch-dsl/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Slightly,
    Moderately,
    Significantly,
}

impl Magnitude {
    pub const ALL: [Magnitude; 3] = [Magnitude::Slightly, Magnitude::Moderately, Magnitude::Significantly];

    pub fn word(self) -> &'static str {
        match self {
            Magnitude::Slightly => "slightly",
            Magnitude::Moderately => "moderately",
            Magnitude::Significantly => "significantly",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Global,
    Region(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Increase(Magnitude),
    Decrease(Magnitude),
    /// Absolute target score in [-1, 1].
    Set(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongInstruction {
    pub target: Target,
    pub attribute: Attribute,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instruction {
    Weak,
    Strong(StrongInstruction),
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format(self))
    }
}

/// Qualitative magnitude to score delta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeTable {
    pub slightly: f64,
    pub moderately: f64,
    pub significantly: f64,
}

impl Default for MagnitudeTable {
    fn default() -> Self {
        Self {
            slightly: 0.15,
            moderately: 0.35,
            significantly: 0.60,
        }
    }
}

impl MagnitudeTable {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.slightly
            && self.slightly < self.moderately
            && self.moderately < self.significantly
            && self.significantly <= 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "magnitude table must be strictly increasing, positive, and at most 2",
            ))
        }
    }

    pub fn delta(&self, m: Magnitude) -> f64 {
        match m {
            Magnitude::Slightly => self.slightly,
            Magnitude::Moderately => self.moderately,
            Magnitude::Significantly => self.significantly,
        }
    }
}

/// What a strong instruction asks of the designated score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetChange {
    Delta(f64),
    Absolute(f64),
}

impl TargetChange {
    pub fn apply(self, current: f64) -> f64 {
        match self {
            TargetChange::Delta(d) => current + d,
            TargetChange::Absolute(v) => v,
        }
    }
}

pub fn to_target_delta(instr: &StrongInstruction, table: &MagnitudeTable) -> TargetChange {
    match instr.action {
        Action::Increase(m) => TargetChange::Delta(table.delta(m)),
        Action::Decrease(m) => TargetChange::Delta(-table.delta(m)),
        Action::Set(v) => TargetChange::Absolute(v),
    }
}

/// Optional pre-translation of free text into the DSL.
pub trait TextFront: Send + Sync {
    fn translate<'a>(&self, text: &'a str) -> Cow<'a, str>;
}

/// Passes text through unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityFront;

impl TextFront for IdentityFront {
    fn translate<'a>(&self, text: &'a str) -> Cow<'a, str> {
        Cow::Borrowed(text)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Number(String),
    Punct,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn perr(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn is_word_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if is_word_start(c) {
            let mut end = i;
            while let Some(&(j, d)) = chars.peek() {
                if !is_word_char(d) {
                    break;
                }
                end = j + d.len_utf8();
                chars.next();
            }
            out.push(Token {
                tok: Tok::Word(text[i..end].to_lowercase()),
                offset: i,
            });
        } else if c.is_ascii_digit() || c == '+' || c == '-' || c == '.' {
            let rest = &text[i..];
            let len = number_len(rest);
            if len == 0 {
                if c == '.' {
                    chars.next();
                    out.push(Token { tok: Tok::Punct, offset: i });
                    continue;
                }
                return Err(perr(i, format!("unexpected character {c:?}")));
            }
            out.push(Token {
                tok: Tok::Number(rest[..len].to_string()),
                offset: i,
            });
            while chars.peek().is_some_and(|&(j, _)| j < i + len) {
                chars.next();
            }
        } else if c == '!' {
            chars.next();
            out.push(Token { tok: Tok::Punct, offset: i });
        } else {
            return Err(perr(i, format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

/// Length of a `[+-]?(digits[.digits] | .digits)` prefix, or 0.
fn number_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    if matches!(b.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let has_int = i > int_start;
    if i < b.len() && b[i] == b'.' {
        let frac_start = i + 1;
        let mut j = frac_start;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > frac_start {
            return j;
        }
    }
    if has_int {
        i
    } else {
        0
    }
}

const WEAK_VERBS: [&str; 3] = ["optimize", "enhance", "auto"];

fn verb(word: &str) -> Option<bool> {
    const UP: [&str; 12] = [
        "increase", "increased", "increases", "raise", "raised", "raises", "boost", "boosted", "boosts",
        "increasing", "raising", "boosting",
    ];
    const DOWN: [&str; 12] = [
        "decrease", "decreased", "decreases", "reduce", "reduced", "reduces", "lower", "lowered",
        "lowers", "decreasing", "reducing", "lowering",
    ];
    if UP.contains(&word) {
        Some(true)
    } else if DOWN.contains(&word) {
        Some(false)
    } else {
        None
    }
}

fn attribute_word(word: &str) -> Option<Attribute> {
    match word {
        "colorfulness" | "colourfulness" => Some(Attribute::Colorfulness),
        "contrast" => Some(Attribute::Contrast),
        "temperature" => Some(Attribute::Temperature),
        "brightness" => Some(Attribute::Brightness),
        _ => None,
    }
}

fn adverb_word(word: &str) -> Option<Magnitude> {
    match word {
        "slightly" => Some(Magnitude::Slightly),
        "moderately" => Some(Magnitude::Moderately),
        "significantly" => Some(Magnitude::Significantly),
        _ => None,
    }
}

/// Words that cannot be region labels.
pub fn is_reserved(word: &str) -> bool {
    WEAK_VERBS.contains(&word)
        || word == "set"
        || word == "global"
        || verb(word).is_some()
        || attribute_word(word).is_some()
        || adverb_word(word).is_some()
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    end: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn peek_word(&self) -> Option<&'t str> {
        match self.peek() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => Some(w.as_str()),
            _ => None,
        }
    }

    fn word(&mut self, expected: &str) -> Result<&'t str> {
        let w = self.peek_word().ok_or_else(|| perr(self.offset(), format!("expected {expected}")))?;
        self.pos += 1;
        Ok(w)
    }

    /// `slightly | moderately | significantly | a bit | a little`
    fn adverb(&mut self) -> Option<Magnitude> {
        let w = self.peek_word()?;
        if let Some(m) = adverb_word(w) {
            self.pos += 1;
            return Some(m);
        }
        if w == "a" {
            if let Some(Token {
                tok: Tok::Word(next), ..
            }) = self.toks.get(self.pos + 1)
            {
                if next == "bit" || next == "little" {
                    self.pos += 2;
                    return Some(Magnitude::Slightly);
                }
            }
        }
        None
    }

    fn target(&mut self) -> Result<Target> {
        let at = self.offset();
        let w = self.word("a region label or \"global\"")?;
        if w == "global" {
            Ok(Target::Global)
        } else if is_reserved(w) {
            Err(perr(at, format!("expected a region label, found keyword {w:?}")))
        } else {
            Ok(Target::Region(w.to_string()))
        }
    }

    fn attribute(&mut self) -> Result<Attribute> {
        let at = self.offset();
        let w = self.word("an attribute")?;
        attribute_word(w).ok_or_else(|| {
            perr(
                at,
                format!("expected colorfulness, contrast, temperature, or brightness, found {w:?}"),
            )
        })
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(Token { tok: Tok::Punct, .. }) = self.peek() {
            self.pos += 1;
        }
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(perr(t.offset, "unexpected trailing input")),
        }
    }
}

/// Parses one instruction.
pub fn parse(text: &str) -> Result<Instruction> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: text.len(),
    };
    let Some(first) = p.peek_word() else {
        return Err(perr(p.offset(), "expected an instruction"));
    };

    if WEAK_VERBS.contains(&first) {
        p.pos += 1;
        while p.peek_word().is_some() {
            p.pos += 1;
        }
        p.finish()?;
        return Ok(Instruction::Weak);
    }

    if first == "set" {
        p.pos += 1;
        let target = p.target()?;
        let attribute = p.attribute()?;
        let at = p.offset();
        let value = match p.peek() {
            Some(Token {
                tok: Tok::Number(s), ..
            }) => s.parse::<f64>().map_err(|_| perr(at, "malformed number"))?,
            _ => return Err(perr(at, "expected a signed decimal")),
        };
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::Range { offset: at, value });
        }
        p.pos += 1;
        p.finish()?;
        return Ok(Instruction::Strong(StrongInstruction {
            target,
            attribute,
            action: Action::Set(value),
        }));
    }

    let leading = p.adverb();
    let at = p.offset();
    let up = p
        .peek_word()
        .and_then(verb)
        .ok_or_else(|| perr(at, "expected optimize, set, or an increase/decrease verb"))?;
    p.pos += 1;
    let target = p.target()?;
    let attribute = p.attribute()?;
    let trailing = if leading.is_none() { p.adverb() } else { None };
    p.finish()?;
    let m = leading.or(trailing).unwrap_or(Magnitude::Moderately);
    Ok(Instruction::Strong(StrongInstruction {
        target,
        attribute,
        action: if up { Action::Increase(m) } else { Action::Decrease(m) },
    }))
}

/// Parses raw bytes; invalid UTF-8 is a parse error at the first bad byte.
pub fn parse_bytes(bytes: &[u8]) -> Result<Instruction> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse(s),
        Err(e) => Err(perr(e.valid_up_to(), "invalid UTF-8")),
    }
}

/// Canonical lowercase form; `parse(format(i)) == i`.
pub fn format(instr: &Instruction) -> String {
    match instr {
        Instruction::Weak => "optimize image".to_string(),
        Instruction::Strong(s) => {
            let target = match &s.target {
                Target::Global => "global",
                Target::Region(r) => r.as_str(),
            };
            match s.action {
                Action::Increase(m) => format!("increase {target} {} {}", s.attribute, m.word()),
                Action::Decrease(m) => format!("decrease {target} {} {}", s.attribute, m.word()),
                Action::Set(v) => format!("set {target} {} {v}", s.attribute),
            }
        }
    }
}

//! Polygon-sequence codec: a floorplan becomes `[BOS, corner..., SEP,
//! corner..., SEP, ..., EOS]` and back.
//!
//! Every corner token carries continuous (x, y) coordinates plus the semantic
//! class of its entity. Entity boundaries are marked by SEP (including after
//! the final entity); EOS terminates the sequence. BOS only ever appears as
//! the start-of-sequence input and is never a prediction target.
//!
//! Decoding is deliberately lenient: it accepts truncated, unterminated, or
//! garbled sequences and simply drops runs that cannot form a valid entity.

use serde::{Deserialize, Serialize};

use crate::geometry::{Entity, EntityKind, Floorplan};

/// Semantic class layout: room classes first, then one class each for
/// windows and doors at the end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub room_classes: usize,
}

impl ClassSpec {
    pub fn total(&self) -> usize {
        self.room_classes + 2
    }

    pub fn window(&self) -> usize {
        self.room_classes
    }

    pub fn door(&self) -> usize {
        self.room_classes + 1
    }

    pub fn is_room_class(&self, c: usize) -> bool {
        c < self.room_classes
    }

    /// Class id for an entity, validating kind/label agreement.
    pub fn class_of(&self, e: &Entity) -> usize {
        match e.kind {
            EntityKind::Room => {
                assert!(self.is_room_class(e.label), "room label {} out of range", e.label);
                e.label
            }
            EntityKind::Window => self.window(),
            EntityKind::Door => self.door(),
        }
    }

    /// Entity kind implied by a class id (ids past the layout count as rooms
    /// of the last room class would be invalid, so out-of-range ids are
    /// clamped to the last valid class first).
    pub fn kind_of(&self, class: usize) -> EntityKind {
        if class == self.window() {
            EntityKind::Window
        } else if class >= self.door() {
            EntityKind::Door
        } else {
            EntityKind::Room
        }
    }
}

/// Token type. The order here fixes the 3-way token-type target layout used
/// by the model: CORNER = 0, SEP = 1, EOS = 2 (BOS is input-only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Bos,
    Corner,
    Sep,
    Eos,
}

impl TokenKind {
    /// Index into the 3-way token-type prediction (None for BOS).
    pub fn target_index(self) -> Option<usize> {
        match self {
            TokenKind::Bos => None,
            TokenKind::Corner => Some(0),
            TokenKind::Sep => Some(1),
            TokenKind::Eos => Some(2),
        }
    }
}

/// One sequence element. Non-corner tokens carry zero coordinates and class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub x: f64,
    pub y: f64,
    pub class: usize,
}

impl Token {
    pub fn bos() -> Self {
        Self { kind: TokenKind::Bos, x: 0.0, y: 0.0, class: 0 }
    }

    pub fn sep() -> Self {
        Self { kind: TokenKind::Sep, x: 0.0, y: 0.0, class: 0 }
    }

    pub fn eos() -> Self {
        Self { kind: TokenKind::Eos, x: 0.0, y: 0.0, class: 0 }
    }

    pub fn corner(x: f64, y: f64, class: usize) -> Self {
        Self { kind: TokenKind::Corner, x, y, class }
    }
}

/// Sequence length `encode_floorplan` will produce: BOS + corners + one SEP
/// per entity + EOS.
pub fn encoded_len(fp: &Floorplan) -> usize {
    let corners: usize = fp.entities.iter().map(|e| e.corners.len()).sum();
    1 + corners + fp.entities.len() + 1
}

/// Serialize a floorplan as a token sequence. The floorplan is canonicalized
/// first, so encoding is independent of entity/corner order in the input.
pub fn encode_floorplan(fp: &Floorplan, spec: &ClassSpec) -> Vec<Token> {
    let canon = fp.canonical();
    let mut out = Vec::with_capacity(encoded_len(&canon));
    out.push(Token::bos());
    for e in &canon.entities {
        let class = spec.class_of(e);
        for &[x, y] in &e.corners {
            out.push(Token::corner(x, y, class));
        }
        out.push(Token::sep());
    }
    out.push(Token::eos());
    out
}

/// Most frequent value; ties resolve to the smallest value. Empty input is a
/// caller bug.
pub fn majority_label<I: IntoIterator<Item = usize>>(classes: I) -> usize {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for c in classes {
        match counts.iter_mut().find(|(v, _)| *v == c) {
            Some((_, n)) => *n += 1,
            None => counts.push((c, 1)),
        }
    }
    assert!(!counts.is_empty(), "majority_label over empty run");
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    counts[0].0
}

/// Parse a token sequence back into a floorplan.
///
/// Lenient by construction: BOS tokens are skipped wherever they appear,
/// processing stops at the first EOS (or the end of the slice), a run missing
/// its trailing SEP is still committed, corners with non-finite coordinates
/// are dropped, and runs too short for their entity kind are discarded.
/// Each run's class is decided by majority vote over its corner classes.
pub fn decode_sequence(tokens: &[Token], width: u32, height: u32, spec: &ClassSpec) -> Floorplan {
    let mut entities = Vec::new();
    let mut run: Vec<Token> = Vec::new();
    let commit = |run: &mut Vec<Token>, entities: &mut Vec<Entity>| {
        if run.is_empty() {
            return;
        }
        let class = majority_label(run.iter().map(|t| t.class.min(spec.total() - 1)));
        let kind = spec.kind_of(class);
        let corners: Vec<[f64; 2]> = run.iter().map(|t| [t.x, t.y]).collect();
        run.clear();
        let entity = match kind {
            EntityKind::Room if corners.len() >= 3 => {
                Some(Entity { kind, label: class, corners })
            }
            EntityKind::Window | EntityKind::Door if corners.len() >= 2 => {
                Some(Entity { kind, label: class, corners: corners[..2].to_vec() })
            }
            _ => None,
        };
        entities.extend(entity);
    };
    for t in tokens {
        match t.kind {
            TokenKind::Bos => {}
            TokenKind::Eos => break,
            TokenKind::Sep => commit(&mut run, &mut entities),
            TokenKind::Corner => {
                if t.x.is_finite() && t.y.is_finite() {
                    run.push(*t);
                }
            }
        }
    }
    commit(&mut run, &mut entities);
    Floorplan { width, height, entities }
}

/// Pad with inert EOS-kind tokens up to `len`; the mask is true for real
/// tokens. Panics if the sequence is already longer than `len`.
pub fn pad_sequence(tokens: &[Token], len: usize) -> (Vec<Token>, Vec<bool>) {
    assert!(
        tokens.len() <= len,
        "sequence length {} exceeds padded length {}",
        tokens.len(),
        len
    );
    let mut out = tokens.to_vec();
    let mut mask = vec![true; tokens.len()];
    out.resize(len, Token::eos());
    mask.resize(len, false);
    (out, mask)
}

/// One token per line as JSON, for debugging dumps.
pub fn to_jsonl(tokens: &[Token]) -> String {
    let mut s = String::new();
    for t in tokens {
        s.push_str(&serde_json::to_string(t).expect("token serializes"));
        s.push('\n');
    }
    s
}

/// Inverse of [`to_jsonl`]; blank lines are ignored.
pub fn from_jsonl(s: &str) -> Result<Vec<Token>, serde_json::Error> {
    s.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

//! Closed context-free grammar for scratchpad descriptions.
//!
//! Every description renders to a fixed token template and parses back
//! exactly. Coordinates are quantized to hundredths, matching the
//! observation tokenizer, so scratchpad memory works at the same precision
//! the policies see.

use crate::sim::{Observation, Pose};
use crate::vocab::Vocab;
use serde::{Deserialize, Serialize};

/// Coordinate in hundredths of a workspace unit (0..=100).
pub type Coord = u16;
/// Angle in hundredths of a radian (−314..=314).
pub type Angle = i16;

pub fn qcoord(x: f64) -> Coord {
    ((x * 100.0).round().clamp(0.0, 100.0)) as Coord
}

pub fn qangle(t: f64) -> Angle {
    ((t * 100.0).round().clamp(-314.0, 314.0)) as Angle
}

pub fn coord_f(c: Coord) -> f64 {
    c as f64 / 100.0
}

pub fn angle_f(a: Angle) -> f64 {
    a as f64 / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescriptionKind {
    GroundingEntry,
    PlanEntry,
    ActEntry,
}

/// One line of scratchpad text, in AST form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Description {
    /// `<name> ( x y level theta )` — initial pose record.
    Grounding { name: String, x: Coord, y: Coord, level: u8, theta: Angle },
    /// `touch <name>`
    Touch { name: String },
    /// `reset to home`
    Reset,
    /// `pick <name> at ( x , y )`
    Pick { name: String, x: Coord, y: Coord },
    /// `place <name> at ( x , y ) level <l>`
    Place { name: String, x: Coord, y: Coord, level: u8 },
    /// `place <name> next to <anchor>`
    PlaceNextTo { name: String, anchor: String },
    /// `restore <name> to ( x , y )`
    Restore { name: String, x: Coord, y: Coord },
    /// `topple <name>`
    Topple { name: String },
    /// `rotate <name> by <angle>`
    Rotate { name: String, by: Angle },
    /// `press <name>`
    Press { name: String },
    /// `move to ( x , y )`
    Move { x: Coord, y: Coord },
    /// `stack <name> on <anchor>`
    Stack { name: String, on: String },
}

impl Description {
    pub fn kind_class(&self) -> DescriptionKind {
        match self {
            Description::Grounding { .. } => DescriptionKind::GroundingEntry,
            _ => DescriptionKind::PlanEntry,
        }
    }

    pub fn is_grounding(&self) -> bool {
        matches!(self, Description::Grounding { .. })
    }

    /// Render to vocabulary token ids.
    pub fn to_tokens(&self, v: &Vocab) -> Vec<u32> {
        let name = |n: &str| v.name_token(n).expect("name not in vocab");
        match self {
            Description::Grounding { name: n, x, y, level, theta } => vec![
                name(n),
                v.word("("),
                v.coord_token(*x),
                v.coord_token(*y),
                v.level_token(*level),
                v.angle_token(*theta),
                v.word(")"),
            ],
            Description::Touch { name: n } => vec![v.word("touch"), name(n)],
            Description::Reset => vec![v.word("reset"), v.word("to"), v.word("home")],
            Description::Pick { name: n, x, y } => vec![
                v.word("pick"),
                name(n),
                v.word("at"),
                v.word("("),
                v.coord_token(*x),
                v.coord_token(*y),
                v.word(")"),
            ],
            Description::Place { name: n, x, y, level } => vec![
                v.word("place"),
                name(n),
                v.word("at"),
                v.word("("),
                v.coord_token(*x),
                v.coord_token(*y),
                v.word(")"),
                v.word("level"),
                v.level_token(*level),
            ],
            Description::PlaceNextTo { name: n, anchor } => vec![
                v.word("place"),
                name(n),
                v.word("next"),
                v.word("to"),
                name(anchor),
            ],
            Description::Restore { name: n, x, y } => vec![
                v.word("restore"),
                name(n),
                v.word("to"),
                v.word("("),
                v.coord_token(*x),
                v.coord_token(*y),
                v.word(")"),
            ],
            Description::Topple { name: n } => vec![v.word("topple"), name(n)],
            Description::Rotate { name: n, by } => {
                vec![v.word("rotate"), name(n), v.word("by"), v.angle_token(*by)]
            }
            Description::Press { name: n } => vec![v.word("press"), name(n)],
            Description::Move { x, y } => vec![
                v.word("move"),
                v.word("to"),
                v.word("("),
                v.coord_token(*x),
                v.coord_token(*y),
                v.word(")"),
            ],
            Description::Stack { name: n, on } => {
                vec![v.word("stack"), name(n), v.word("on"), name(on)]
            }
        }
    }

    pub fn render(&self, v: &Vocab) -> String {
        v.detokenize(&self.to_tokens(v))
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("unexpected token at position {0}")]
    Unexpected(usize),
    #[error("truncated description at position {0}")]
    Truncated(usize),
}

/// Streaming parser over token ids.
pub struct Reader<'a> {
    pub tokens: &'a [u32],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(tokens: &'a [u32]) -> Self {
        Reader { tokens, pos: 0 }
    }

    pub fn peek(&self) -> Option<u32> {
        self.tokens.get(self.pos).copied()
    }

    pub fn next(&mut self) -> Result<u32, GrammarError> {
        let t = self.tokens.get(self.pos).copied().ok_or(GrammarError::Truncated(self.pos))?;
        self.pos += 1;
        Ok(t)
    }

    pub fn expect_word(&mut self, v: &Vocab, w: &str) -> Result<(), GrammarError> {
        let at = self.pos;
        if v.is_word(self.next()?, w) {
            Ok(())
        } else {
            Err(GrammarError::Unexpected(at))
        }
    }

    fn name(&mut self, v: &Vocab) -> Result<String, GrammarError> {
        let at = self.pos;
        let t = self.next()?;
        v.name_of(t).map(|s| s.to_string()).ok_or(GrammarError::Unexpected(at))
    }

    fn coord(&mut self, v: &Vocab) -> Result<Coord, GrammarError> {
        let at = self.pos;
        let t = self.next()?;
        v.coord_of(t).ok_or(GrammarError::Unexpected(at))
    }

    fn angle(&mut self, v: &Vocab) -> Result<Angle, GrammarError> {
        let at = self.pos;
        let t = self.next()?;
        v.angle_of(t).ok_or(GrammarError::Unexpected(at))
    }

    fn level(&mut self, v: &Vocab) -> Result<u8, GrammarError> {
        let at = self.pos;
        let t = self.next()?;
        v.level_of(t).ok_or(GrammarError::Unexpected(at))
    }

    fn coord_pair(&mut self, v: &Vocab) -> Result<(Coord, Coord), GrammarError> {
        self.expect_word(v, "(")?;
        let x = self.coord(v)?;
        let y = self.coord(v)?;
        self.expect_word(v, ")")?;
        Ok((x, y))
    }

    /// Parse one description starting at the cursor.
    pub fn description(&mut self, v: &Vocab) -> Result<Description, GrammarError> {
        let at = self.pos;
        let head = self.next()?;
        if let Some(n) = v.name_of(head) {
            // Grounding entry.
            self.expect_word(v, "(")?;
            let x = self.coord(v)?;
            let y = self.coord(v)?;
            let level = self.level(v)?;
            let theta = self.angle(v)?;
            self.expect_word(v, ")")?;
            return Ok(Description::Grounding { name: n.to_string(), x, y, level, theta });
        }
        if v.is_word(head, "touch") {
            Ok(Description::Touch { name: self.name(v)? })
        } else if v.is_word(head, "reset") {
            self.expect_word(v, "to")?;
            self.expect_word(v, "home")?;
            Ok(Description::Reset)
        } else if v.is_word(head, "pick") {
            let name = self.name(v)?;
            self.expect_word(v, "at")?;
            let (x, y) = self.coord_pair(v)?;
            Ok(Description::Pick { name, x, y })
        } else if v.is_word(head, "place") {
            let name = self.name(v)?;
            let at2 = self.pos;
            let sel = self.next()?;
            if v.is_word(sel, "at") {
                let (x, y) = self.coord_pair(v)?;
                self.expect_word(v, "level")?;
                let level = self.level(v)?;
                Ok(Description::Place { name, x, y, level })
            } else if v.is_word(sel, "next") {
                self.expect_word(v, "to")?;
                Ok(Description::PlaceNextTo { name, anchor: self.name(v)? })
            } else {
                Err(GrammarError::Unexpected(at2))
            }
        } else if v.is_word(head, "restore") {
            let name = self.name(v)?;
            self.expect_word(v, "to")?;
            let (x, y) = self.coord_pair(v)?;
            Ok(Description::Restore { name, x, y })
        } else if v.is_word(head, "topple") {
            Ok(Description::Topple { name: self.name(v)? })
        } else if v.is_word(head, "rotate") {
            let name = self.name(v)?;
            self.expect_word(v, "by")?;
            Ok(Description::Rotate { name, by: self.angle(v)? })
        } else if v.is_word(head, "press") {
            Ok(Description::Press { name: self.name(v)? })
        } else if v.is_word(head, "move") {
            self.expect_word(v, "to")?;
            let (x, y) = self.coord_pair(v)?;
            Ok(Description::Move { x, y })
        } else if v.is_word(head, "stack") {
            let name = self.name(v)?;
            self.expect_word(v, "on")?;
            Ok(Description::Stack { name, on: self.name(v)? })
        } else {
            Err(GrammarError::Unexpected(at))
        }
    }
}

/// Parse a single complete description; trailing tokens are an error.
pub fn parse_description(tokens: &[u32], v: &Vocab) -> Result<Description, GrammarError> {
    let mut r = Reader::new(tokens);
    let d = r.description(v)?;
    if r.pos != tokens.len() {
        return Err(GrammarError::Unexpected(r.pos));
    }
    Ok(d)
}

fn grounding_of_pose(name: &str, p: &Pose) -> Description {
    Description::Grounding {
        name: name.to_string(),
        x: qcoord(p.x),
        y: qcoord(p.y),
        level: p.level().clamp(0, 9) as u8,
        theta: qangle(p.theta),
    }
}

/// Grounding entries for every object plus the end-effector, in id order.
pub fn grounding_entries(obs: &Observation) -> Vec<Description> {
    let mut out: Vec<Description> =
        obs.objects.iter().map(|o| grounding_of_pose(&o.name, &o.pose)).collect();
    out.push(grounding_of_pose("ee", &obs.ee));
    out
}

/// Observation token stream: OBS marker, pose entries, grip bit.
pub fn tokenize_observation(obs: &Observation, v: &Vocab) -> Vec<u32> {
    let mut out = vec![crate::vocab::OBS];
    for d in grounding_entries(obs) {
        out.extend(d.to_tokens(v));
    }
    out.push(v.grip_token(obs.grip_on));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v() -> &'static Vocab {
        Vocab::builtin()
    }

    #[test]
    fn touch_renders_as_template() {
        let d = Description::Touch { name: "blue ball".into() };
        assert_eq!(d.render(v()), "touch blue ball");
    }

    #[test]
    fn restore_renders_with_coords() {
        let d = Description::Restore { name: "red cube".into(), x: 10, y: 20 };
        assert_eq!(d.render(v()), "restore red cube to ( 0.10 0.20 )");
    }

    #[test]
    fn truncated_input_reports_position() {
        let d = Description::Pick { name: "red cube".into(), x: 32, y: 71 };
        let toks = d.to_tokens(v());
        let err = parse_description(&toks[..4], v()).unwrap_err();
        assert_eq!(err, GrammarError::Truncated(4));
    }

    fn arb_name() -> impl Strategy<Value = String> {
        prop::sample::select(
            v().object_names().iter().filter(|n| *n != "ee").cloned().collect::<Vec<_>>(),
        )
    }

    fn arb_description() -> impl Strategy<Value = Description> {
        let name = arb_name;
        prop_oneof![
            (name(), 0u16..=100, 0u16..=100, 0u8..=9, -314i16..=314).prop_map(
                |(name, x, y, level, theta)| Description::Grounding { name, x, y, level, theta }
            ),
            name().prop_map(|name| Description::Touch { name }),
            Just(Description::Reset),
            (name(), 0u16..=100, 0u16..=100).prop_map(|(name, x, y)| Description::Pick {
                name,
                x,
                y
            }),
            (name(), 0u16..=100, 0u16..=100, 0u8..=9).prop_map(|(name, x, y, level)| {
                Description::Place { name, x, y, level }
            }),
            (name(), name()).prop_map(|(name, anchor)| Description::PlaceNextTo { name, anchor }),
            (name(), 0u16..=100, 0u16..=100).prop_map(|(name, x, y)| Description::Restore {
                name,
                x,
                y
            }),
            name().prop_map(|name| Description::Topple { name }),
            (name(), -314i16..=314).prop_map(|(name, by)| Description::Rotate { name, by }),
            name().prop_map(|name| Description::Press { name }),
            (0u16..=100, 0u16..=100).prop_map(|(x, y)| Description::Move { x, y }),
            (name(), name()).prop_map(|(name, on)| Description::Stack { name, on }),
        ]
    }

    proptest! {
        #[test]
        fn parse_inverts_render(d in arb_description()) {
            let toks = d.to_tokens(v());
            let back = parse_description(&toks, v()).unwrap();
            prop_assert_eq!(back, d);
        }
    }

    #[test]
    fn quantization_bounds() {
        assert_eq!(qcoord(0.324), 32);
        assert_eq!(qcoord(1.2), 100);
        assert_eq!(qangle(-4.0), -314);
        assert!((coord_f(qcoord(0.55)) - 0.55).abs() < 1e-9);
    }
}

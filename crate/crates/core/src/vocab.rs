//! Closed, versioned token vocabulary.
//!
//! Special tokens occupy ids 0–15, the word/name/number vocabulary follows.
//! The table is frozen: every encoder draws from it and never invents ids.

use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::sync::OnceLock;

pub const VOCAB_VERSION: u32 = 1;

/// Number of discretization bins per action dimension. Odd so zero is a
/// bin center.
pub const ACTION_BINS: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum SpecialToken {
    PlanOpen = 0,
    PlanClose = 1,
    Think = 2,
    Act = 3,
    Done = 4,
    Obs = 5,
    Action = 6,
    Sep = 7,
}

pub const PLAN_OPEN: u32 = SpecialToken::PlanOpen as u32;
pub const PLAN_CLOSE: u32 = SpecialToken::PlanClose as u32;
pub const THINK: u32 = SpecialToken::Think as u32;
pub const ACT: u32 = SpecialToken::Act as u32;
pub const DONE: u32 = SpecialToken::Done as u32;
pub const OBS: u32 = SpecialToken::Obs as u32;
pub const ACTION: u32 = SpecialToken::Action as u32;
pub const SEP: u32 = SpecialToken::Sep as u32;

const RESERVED: usize = 16;

pub const COLORS: [&str; 6] = ["red", "green", "blue", "yellow", "purple", "orange"];
pub const SHAPES: [&str; 3] = ["cube", "ball", "cylinder"];

const WORDS: [&str; 27] = [
    "touch", "reset", "pick", "place", "restore", "topple", "rotate", "press", "move", "stack",
    "swap", "next", "to", "at", "on", "by", "and", "then", "home", "level", "middle", "back",
    "put", "(", ")", ",", "grip",
];

pub const MAX_LEVEL_TOKEN: u8 = 9;
/// Coordinate tokens cover 0.00..=1.00 in hundredths.
pub const COORD_STEPS: usize = 101;
/// Angle tokens cover −3.14..=3.14 in hundredths.
pub const ANGLE_MIN: i16 = -314;
pub const ANGLE_MAX: i16 = 314;

pub struct Vocab {
    tokens: Vec<String>,
    lookup: HashMap<String, u32>,
    word_base: u32,
    name_base: u32,
    level_base: u32,
    coord_base: u32,
    angle_base: u32,
    bin_base: u32,
    grip_base: u32,
    names: Vec<String>,
}

impl Vocab {
    fn build() -> Vocab {
        let mut tokens: Vec<String> = vec![
            "<plan>".into(),
            "</plan>".into(),
            "<think>".into(),
            "<act>".into(),
            "<done>".into(),
            "<obs>".into(),
            "<action>".into(),
            "<sep>".into(),
        ];
        for i in tokens.len()..RESERVED {
            tokens.push(format!("<reserved{}>", i));
        }
        let word_base = tokens.len() as u32;
        tokens.extend(WORDS.iter().map(|w| w.to_string()));

        let name_base = tokens.len() as u32;
        let mut names = Vec::new();
        for c in COLORS {
            for s in SHAPES {
                names.push(format!("{} {}", c, s));
            }
        }
        names.push("button".into());
        names.push("ee".into());
        tokens.extend(names.iter().cloned());

        let level_base = tokens.len() as u32;
        for l in 0..=MAX_LEVEL_TOKEN {
            tokens.push(format!("{}", l));
        }
        let coord_base = tokens.len() as u32;
        for c in 0..COORD_STEPS {
            tokens.push(format!("{:.2}", c as f64 / 100.0));
        }
        let angle_base = tokens.len() as u32;
        for a in ANGLE_MIN..=ANGLE_MAX {
            tokens.push(format!("{:.2}", a as f64 / 100.0));
        }
        let bin_base = tokens.len() as u32;
        for b in 0..ACTION_BINS {
            tokens.push(format!("<bin{}>", b));
        }
        let grip_base = tokens.len() as u32;
        tokens.push("grip0".into());
        tokens.push("grip1".into());

        let mut lookup = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            // Angle "0.00".."1.00" strings collide with coordinates; the
            // first (coordinate) id wins for string lookup, numeric
            // accessors are exact either way.
            lookup.entry(t.clone()).or_insert(i as u32);
        }
        Vocab {
            tokens,
            lookup,
            word_base,
            name_base,
            level_base,
            coord_base,
            angle_base,
            bin_base,
            grip_base,
            names,
        }
    }

    /// The process-wide builtin table.
    pub fn builtin() -> &'static Vocab {
        static V: OnceLock<Vocab> = OnceLock::new();
        V.get_or_init(Vocab::build)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token_str(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    /// SHA-256 over version + the full token table.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(VOCAB_VERSION.to_le_bytes());
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        let d = h.finalize();
        d.iter().map(|b| format!("{:02x}", b)).collect()
    }

    pub fn word(&self, w: &str) -> u32 {
        let idx = WORDS.iter().position(|x| *x == w).expect("unknown word");
        self.word_base + idx as u32
    }

    pub fn is_word(&self, id: u32, w: &str) -> bool {
        id == self.word(w)
    }

    pub fn name_token(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| self.name_base + i as u32)
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        if id >= self.name_base && id < self.name_base + self.names.len() as u32 {
            Some(&self.names[(id - self.name_base) as usize])
        } else {
            None
        }
    }

    pub fn object_names(&self) -> &[String] {
        &self.names
    }

    pub fn level_token(&self, level: u8) -> u32 {
        self.level_base + level.min(MAX_LEVEL_TOKEN) as u32
    }

    pub fn level_of(&self, id: u32) -> Option<u8> {
        if id >= self.level_base && id < self.level_base + (MAX_LEVEL_TOKEN as u32 + 1) {
            Some((id - self.level_base) as u8)
        } else {
            None
        }
    }

    pub fn coord_token(&self, hundredths: u16) -> u32 {
        self.coord_base + (hundredths as u32).min(COORD_STEPS as u32 - 1)
    }

    pub fn coord_of(&self, id: u32) -> Option<u16> {
        if id >= self.coord_base && id < self.coord_base + COORD_STEPS as u32 {
            Some((id - self.coord_base) as u16)
        } else {
            None
        }
    }

    pub fn angle_token(&self, hundredths: i16) -> u32 {
        let a = hundredths.clamp(ANGLE_MIN, ANGLE_MAX);
        self.angle_base + (a - ANGLE_MIN) as u32
    }

    pub fn angle_of(&self, id: u32) -> Option<i16> {
        let span = (ANGLE_MAX - ANGLE_MIN) as u32 + 1;
        if id >= self.angle_base && id < self.angle_base + span {
            Some((id - self.angle_base) as i16 + ANGLE_MIN)
        } else {
            None
        }
    }

    pub fn bin_token(&self, bin: usize) -> u32 {
        self.bin_base + (bin as u32).min(ACTION_BINS as u32 - 1)
    }

    pub fn bin_of(&self, id: u32) -> Option<usize> {
        if id >= self.bin_base && id < self.bin_base + ACTION_BINS as u32 {
            Some((id - self.bin_base) as usize)
        } else {
            None
        }
    }

    pub fn grip_token(&self, on: bool) -> u32 {
        self.grip_base + on as u32
    }

    pub fn grip_of(&self, id: u32) -> Option<bool> {
        if id == self.grip_base {
            Some(false)
        } else if id == self.grip_base + 1 {
            Some(true)
        } else {
            None
        }
    }

    pub fn lookup_str(&self, s: &str) -> Option<u32> {
        self.lookup.get(s).copied()
    }

    /// Render a token sequence as a human-readable string.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| self.token_str(id).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Write the table to a text file: header line, then one token per line.
    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        let mut out = format!("padbench-vocab v{} {}\n", VOCAB_VERSION, self.hash_hex());
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_ids_are_stable() {
        assert_eq!(PLAN_OPEN, 0);
        assert_eq!(SEP, 7);
        let v = Vocab::builtin();
        assert_eq!(v.token_str(DONE), Some("<done>"));
    }

    #[test]
    fn numeric_round_trips() {
        let v = Vocab::builtin();
        for c in [0u16, 50, 100] {
            assert_eq!(v.coord_of(v.coord_token(c)), Some(c));
        }
        for a in [ANGLE_MIN, 0, ANGLE_MAX] {
            assert_eq!(v.angle_of(v.angle_token(a)), Some(a));
        }
        for b in [0usize, 16, 32] {
            assert_eq!(v.bin_of(v.bin_token(b)), Some(b));
        }
        assert_eq!(v.grip_of(v.grip_token(true)), Some(true));
    }

    #[test]
    fn hash_is_stable_within_process() {
        let v = Vocab::builtin();
        assert_eq!(v.hash_hex(), v.hash_hex());
        assert_eq!(v.hash_hex().len(), 64);
    }

    #[test]
    fn names_cover_color_shape_grid() {
        let v = Vocab::builtin();
        assert!(v.name_token("red cube").is_some());
        assert!(v.name_token("button").is_some());
        assert!(v.name_token("ee").is_some());
        assert_eq!(v.name_of(v.name_token("blue ball").unwrap()), Some("blue ball"));
    }
}

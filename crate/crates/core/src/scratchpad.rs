//! Scratchpad data model, update semantics, and token serialization.
//!
//! The scratchpad has three sections: grounding (initial poses), plan
//! (sub-tasks to carry out), and act (completed sub-tasks). Grounding and
//! plan are immutable after init; the act section grows only through
//! [`Scratchpad::update`] when a description arrives with its done flag
//! set. The serialized layout is
//!
//! `<plan>` grounding `<sep>` plan `</plan>` (`<think>` entry `<done>`)*

use crate::grammar::{Description, GrammarError, Reader};
use crate::vocab::{self, Vocab};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PadError {
    #[error("malformed {section} entry at index {index}: {source}")]
    MalformedEntry { section: &'static str, index: usize, source: GrammarError },
    #[error("act section already covers the whole plan; policy claimed more completions than planned")]
    ActBeyondPlan,
    #[error("expected {expected} at token position {pos}")]
    Expected { expected: &'static str, pos: usize },
    #[error("unbalanced plan markers at token position {pos}")]
    Unbalanced { pos: usize },
    #[error("unknown or out-of-place token at position {pos}")]
    BadToken { pos: usize },
    #[error("truncated token sequence at position {pos}")]
    Truncated { pos: usize },
}

/// Immutable-value scratchpad. `update` returns a new value; callers can
/// keep every intermediate version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scratchpad {
    grounding: Vec<Description>,
    plan: Vec<Description>,
    act: Vec<Description>,
}

impl Scratchpad {
    /// Build a scratchpad with an empty act section.
    pub fn init(grounding: Vec<Description>, plan: Vec<Description>) -> Result<Self, PadError> {
        for (i, g) in grounding.iter().enumerate() {
            if !g.is_grounding() {
                return Err(PadError::MalformedEntry {
                    section: "grounding",
                    index: i,
                    source: GrammarError::Unexpected(0),
                });
            }
        }
        for (i, p) in plan.iter().enumerate() {
            if p.is_grounding() {
                return Err(PadError::MalformedEntry {
                    section: "plan",
                    index: i,
                    source: GrammarError::Unexpected(0),
                });
            }
        }
        Ok(Scratchpad { grounding, plan, act: Vec::new() })
    }

    pub fn grounding(&self) -> &[Description] {
        &self.grounding
    }

    pub fn plan(&self) -> &[Description] {
        &self.plan
    }

    pub fn act(&self) -> &[Description] {
        &self.act
    }

    /// How many sub-tasks have been completed.
    pub fn progress(&self) -> usize {
        self.act.len()
    }

    /// The sub-task the policy should be working on, if any remain.
    pub fn current_plan_entry(&self) -> Option<&Description> {
        self.plan.get(self.act.len())
    }

    /// Scratchpad update logic: append the description when its done flag
    /// is set, otherwise return the scratchpad unchanged.
    pub fn update(&self, d: &Description, is_done: bool) -> Result<Scratchpad, PadError> {
        if !is_done {
            return Ok(self.clone());
        }
        if self.act.len() >= self.plan.len() {
            return Err(PadError::ActBeyondPlan);
        }
        let mut next = self.clone();
        next.act.push(d.clone());
        Ok(next)
    }

    /// Linearize to token ids. Injective over valid scratchpads.
    pub fn serialize(&self, v: &Vocab) -> Vec<u32> {
        let mut out = vec![vocab::PLAN_OPEN];
        for g in &self.grounding {
            out.extend(g.to_tokens(v));
        }
        out.push(vocab::SEP);
        for p in &self.plan {
            out.extend(p.to_tokens(v));
        }
        out.push(vocab::PLAN_CLOSE);
        for a in &self.act {
            out.push(vocab::THINK);
            out.extend(a.to_tokens(v));
            out.push(vocab::DONE);
        }
        out
    }

    /// Exact inverse of [`Scratchpad::serialize`] on its image.
    pub fn parse(tokens: &[u32], v: &Vocab) -> Result<Scratchpad, PadError> {
        let mut r = Reader::new(tokens);
        match r.peek() {
            Some(vocab::PLAN_OPEN) => r.pos += 1,
            Some(_) => return Err(PadError::Expected { expected: "<plan>", pos: 0 }),
            None => return Err(PadError::Truncated { pos: 0 }),
        }
        let mut grounding = Vec::new();
        loop {
            match r.peek() {
                Some(vocab::SEP) => {
                    r.pos += 1;
                    break;
                }
                Some(vocab::PLAN_CLOSE) | Some(vocab::DONE) => {
                    return Err(PadError::Unbalanced { pos: r.pos })
                }
                None => return Err(PadError::Truncated { pos: r.pos }),
                Some(_) => grounding.push(entry(&mut r, v)?),
            }
        }
        let mut plan = Vec::new();
        loop {
            match r.peek() {
                Some(vocab::PLAN_CLOSE) => {
                    r.pos += 1;
                    break;
                }
                Some(vocab::PLAN_OPEN) | Some(vocab::DONE) | Some(vocab::SEP) => {
                    return Err(PadError::Unbalanced { pos: r.pos })
                }
                None => return Err(PadError::Truncated { pos: r.pos }),
                Some(_) => plan.push(entry(&mut r, v)?),
            }
        }
        let mut pad =
            Scratchpad::init(grounding, plan).map_err(|_| PadError::BadToken { pos: r.pos })?;
        while let Some(t) = r.peek() {
            if t != vocab::THINK {
                return Err(PadError::Expected { expected: "<think>", pos: r.pos });
            }
            r.pos += 1;
            let d = entry(&mut r, v)?;
            match r.peek() {
                Some(vocab::DONE) => r.pos += 1,
                Some(_) => return Err(PadError::Expected { expected: "<done>", pos: r.pos }),
                None => return Err(PadError::Truncated { pos: r.pos }),
            }
            pad = pad.update(&d, true)?;
        }
        Ok(pad)
    }
}

fn entry(r: &mut Reader, v: &Vocab) -> Result<Description, PadError> {
    let at = r.pos;
    r.description(v).map_err(|e| match e {
        GrammarError::Truncated(pos) => PadError::Truncated { pos },
        GrammarError::Unexpected(_) => PadError::BadToken { pos: at },
    })
}

//! Frozen artifacts. If one of these changes, every dataset and checkpoint
//! in the wild is invalidated, so the change has to be deliberate.

use padbench_core::oracle::solve;
use padbench_core::scratchpad::Scratchpad;
use padbench_core::sim::SimConfig;
use padbench_core::task::{sample_task, TaskKind, Tolerances};
use padbench_core::vocab::Vocab;

const VOCAB_HASH: &str = "3b0ec0ee41f03c253351a6f3b7d7559cf5a609f6b9a0dff413e1c6af6be1e8db";

const SWAP7_INSTRUCTION: &str = "swap green cylinder and blue cylinder";

const SWAP7_PAD0: &str = "<plan> yellow cylinder ( 0.73 0.47 0 -0.28 ) blue cylinder ( 0.73 0.14 0 -2.14 ) \
green cylinder ( 0.40 0.35 0 1.84 ) ee ( 0.50 0.05 2 0.00 ) <sep> \
pick green cylinder at ( 0.40 0.35 ) place green cylinder at ( 0.10 0.90 ) level 0 \
pick blue cylinder at ( 0.73 0.14 ) place blue cylinder at ( 0.40 0.35 ) level 0 \
pick green cylinder at ( 0.40 0.35 ) place green cylinder at ( 0.73 0.14 ) level 0 </plan>";

const SWAP7_PADN_ACT: &str = "<think> pick green cylinder at ( 0.40 0.35 ) <done> \
<think> place green cylinder at ( 0.10 0.90 ) level 0 <done> \
<think> pick blue cylinder at ( 0.73 0.14 ) <done> \
<think> place blue cylinder at ( 0.40 0.35 ) level 0 <done> \
<think> pick green cylinder at ( 0.10 0.90 ) <done> \
<think> place green cylinder at ( 0.73 0.14 ) level 0 <done>";

const SWAP7_PAD0_HEAD: [u32; 20] =
    [0, 54, 39, 146, 120, 63, 460, 40, 51, 39, 146, 87, 63, 274, 40, 48, 39, 113, 108, 63];

#[test]
fn vocab_hash_is_frozen() {
    assert_eq!(Vocab::builtin().hash_hex(), VOCAB_HASH);
}

#[test]
fn swap_scratchpad_serialization_is_frozen() {
    let v = Vocab::builtin();
    let cfg = SimConfig::default();
    let tol = Tolerances::default();
    let (task, initial) = sample_task(TaskKind::Swap, 7, &cfg).unwrap();
    assert_eq!(task.instruction, SWAP7_INSTRUCTION);

    let traj = solve(&task, &initial, 7, &cfg, &tol).unwrap();
    let mut pad = Scratchpad::init(traj.grounding.clone(), traj.plan.clone()).unwrap();
    let toks = pad.serialize(v);
    assert_eq!(v.detokenize(&toks), SWAP7_PAD0);
    assert_eq!(&toks[..20], SWAP7_PAD0_HEAD);

    for st in &traj.steps {
        if st.done {
            pad = pad.update(&st.desc, true).unwrap();
        }
    }
    // The fifth act entry quotes the buffer spot, not the plan's
    // original pick pose: descriptions use current coordinates.
    let full = v.detokenize(&pad.serialize(v));
    assert_eq!(full, format!("{SWAP7_PAD0} {SWAP7_PADN_ACT}"));
}

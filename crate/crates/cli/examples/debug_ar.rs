use padbench_core::dataset::{encode_slices, ActionCodec};
use padbench_core::grammar::tokenize_observation;
use padbench_core::eval::EVAL_SEED_BASE;
use padbench_core::oracle::solve;
use padbench_core::scratchpad::Scratchpad;
use padbench_core::sim::{observe, SimConfig};
use padbench_core::task::{sample_task, TaskKind, Tolerances};
use padbench_core::train::load_checkpoint;
use padbench_core::transformer::{Transformer, TransformerCfg};
use padbench_core::vocab::Vocab;

fn detok(v: &Vocab, toks: &[u32]) -> String {
    v.detokenize(toks)
}

fn main() {
    let v = Vocab::builtin();
    let cfg = SimConfig::default();
    let tol = Tolerances::default();
    let ck = load_checkpoint(std::path::Path::new("/tmp/pilot/ar-v5/model.ckpt")).unwrap();
    let mut model = Transformer::new(TransformerCfg::standard(v.len()), v, 0);
    model.ps.data = ck.params;

    let seed = EVAL_SEED_BASE;
    let (task, initial) = sample_task(TaskKind::TouchResetPick, seed, &cfg).unwrap();
    let traj = solve(&task, &initial, seed, &cfg, &tol).unwrap();
    let instr = task.instruction_tokens(v);

    // plan phase
    let mut st = model.begin();
    for &t in instr.iter().chain(tokenize_observation(&observe(&initial), v).iter()) {
        model.feed(&mut st, t);
    }
    let mut plan_toks = Vec::new();
    for _ in 0..400 {
        let t = {
            let l = model.logits(&st);
            let mut best = 0usize;
            for i in 0..l.len() {
                if l[i] > l[best] {
                    best = i;
                }
            }
            best as u32
        };
        model.feed(&mut st, t);
        plan_toks.push(t);
        if t == padbench_core::vocab::PLAN_CLOSE {
            break;
        }
    }
    println!("GEN PLAN: {}", detok(v, &plan_toks));
    let pad0 = Scratchpad::init(traj.grounding.clone(), traj.plan.clone()).unwrap();
    println!("ORA PLAN: {}", detok(v, &pad0.serialize(v)));
    match Scratchpad::parse(&plan_toks, v) {
        Ok(p) => println!("parse ok, plan len {}", p.plan().len()),
        Err(e) => println!("parse FAILED: {e}"),
    }

    // teacher-forced step decode vs oracle slices, first mismatches
    let slices = encode_slices(&traj, v, &cfg);
    let mut shown = 0;
    for (i, s) in slices.iter().enumerate() {
        let mut st = model.begin();
        for &t in &s.context {
            model.feed(&mut st, t);
        }
        let mut gen = Vec::new();
        let mut mism = false;
        for &want in &s.target {
            let got = {
                let l = model.logits(&st);
                let mut best = 0usize;
                for k in 0..l.len() {
                    if l[k] > l[best] {
                        best = k;
                    }
                }
                best as u32
            };
            gen.push(got);
            if got != want {
                mism = true;
            }
            model.feed(&mut st, want); // teacher forcing
        }
        if mism && shown < 6 {
            println!("slice {i} ({:?}):", s.kind);
            println!("  want {}", detok(v, &s.target));
            println!("  got  {}", detok(v, &gen));
            shown += 1;
        }
    }
    println!("total slices {}", slices.len());

    // Closed-loop trace of the first eval episode.
    use padbench_core::vocab::{PLAN_CLOSE, THINK, ACT, DONE, SEP};
    let instr2 = task.instruction_tokens(v);
    let mut st = model.begin();
    for &t in instr2.iter().chain(tokenize_observation(&observe(&initial), v).iter()) {
        model.feed(&mut st, t);
    }
    let mut plan_toks = Vec::new();
    for _ in 0..400 {
        let l = model.logits(&st);
        let mut best = 0usize;
        for i in 0..l.len() { if l[i] > l[best] { best = i; } }
        let t = best as u32;
        model.feed(&mut st, t);
        plan_toks.push(t);
        if t == PLAN_CLOSE { break; }
    }
    let mut pad = match Scratchpad::parse(&plan_toks, v) {
        Ok(p) => p,
        Err(e) => { println!("closed-loop plan parse failed: {e}"); return; }
    };
    let plan_len = pad.plan().len();
    println!("closed-loop plan ({plan_len} entries): {}", v.detokenize(&plan_toks));
    let mut state = initial.clone();
    for step in 0..120 {
        let mut st = model.begin();
        for &t in &instr2 { model.feed(&mut st, t); }
        for t in pad.serialize(v) { model.feed(&mut st, t); }
        for t in tokenize_observation(&observe(&state), v) { model.feed(&mut st, t); }
        let mut gen = Vec::new();
        for _ in 0..40 {
            let l = model.logits(&st);
            let mut best = 0usize;
            for i in 0..l.len() { if l[i] > l[best] { best = i; } }
            let t = best as u32;
            model.feed(&mut st, t);
            gen.push(t);
            if t == DONE || t == SEP { break; }
        }
        // extract bins after ACT
        let apos = gen.iter().position(|&t| t == ACT);
        let (action, done) = match apos {
            Some(i) if gen.len() >= i + 6 => {
                let bins: Vec<u8> = gen[i+1..i+6].iter().filter_map(|&t| v.bin_of(t)).map(|b| b as u8).collect();
                if bins.len() == 5 {
                    let arr = [bins[0], bins[1], bins[2], bins[3], bins[4]];
                    (ActionCodec::undiscretize(&arr), *gen.last().unwrap() == DONE)
                } else { (padbench_core::sim::Action::NOOP, false) }
            }
            _ => (padbench_core::sim::Action::NOOP, false),
        };
        if step < 25 || done {
            println!(
                "step {:3} ee ({:.2},{:.2},{}) grip {} | {} | done {}",
                step, state.ee.x, state.ee.y, state.ee.level(), state.grip_on,
                v.detokenize(&gen), done
            );
        }
        state = padbench_core::sim::step(&state, &action, &SimConfig::default());
        if done {
            if let Ok(d) = parse_desc_from(&gen, v) { let _ = d; }
            let i = gen.iter().position(|&t| t == THINK).map(|i| i + 1).unwrap_or(0);
            let j = apos.unwrap_or(gen.len());
            if let Ok(d) = padbench_core::grammar::parse_description(&gen[i..j], v) {
                if let Ok(next) = pad.update(&d, true) { pad = next; }
            }
        }
        if pad.progress() >= plan_len { println!("progress complete at step {step}"); break; }
    }
}

fn parse_desc_from(gen: &[u32], v: &Vocab) -> Result<padbench_core::grammar::Description, ()> {
    use padbench_core::vocab::{THINK, ACT};
    let i = gen.iter().position(|&t| t == THINK).map(|i| i + 1).unwrap_or(0);
    let j = gen.iter().position(|&t| t == ACT).unwrap_or(gen.len());
    padbench_core::grammar::parse_description(&gen[i..j], v).map_err(|_| ())
}

// closed-loop trace appended below main in a helper invoked via env var

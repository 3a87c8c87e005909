//! Flat key=value run configuration. Unknown keys are errors so typos
//! fail fast; the effective config is echoed into every output directory.

use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Oracle trajectories generated per task kind.
    pub n_trajs: usize,
    /// Jitter amplitude applied to demonstration motions (0 disables).
    pub noise: f64,
    /// Evaluation episodes per task kind.
    pub n_rollouts: usize,
    /// Per-episode step budget at evaluation time.
    pub max_steps: usize,
    pub sim_eval: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            n_trajs: 1000,
            noise: 0.02,
            n_rollouts: 50,
            max_steps: 400,
            sim_eval: true,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Malformed { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {value:?}")]
    BadValue { line: usize, key: String, value: String },
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(ConfigError::Malformed { line });
            };
            let key = key.trim();
            let value = value.trim();
            macro_rules! set {
                ($field:expr, $ty:ty) => {
                    $field = value.parse::<$ty>().map_err(|_| ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        value: value.to_string(),
                    })?
                };
            }
            match key {
                "lr" => set!(cfg.train.lr, f64),
                "batch" => set!(cfg.train.batch, usize),
                "max_steps" => set!(cfg.train.max_steps, usize),
                "beta1" => set!(cfg.train.beta1, f64),
                "beta2" => set!(cfg.train.beta2, f64),
                "eps" => set!(cfg.train.eps, f64),
                "clip" => set!(cfg.train.clip, f64),
                "eval_every" => set!(cfg.train.eval_every, usize),
                "window" => set!(cfg.train.window, usize),
                "heldout_frac" => set!(cfg.train.heldout_frac, f64),
                "target_acc" => set!(cfg.train.target_acc, f64),
                "patience" => set!(cfg.train.patience, usize),
                "seed" => set!(cfg.train.seed, u64),
                "n_trajs" => set!(cfg.n_trajs, usize),
                "noise" => set!(cfg.noise, f64),
                "n_rollouts" => set!(cfg.n_rollouts, usize),
                "eval_max_steps" => set!(cfg.max_steps, usize),
                "sim_eval" => set!(cfg.sim_eval, bool),
                other => {
                    return Err(ConfigError::UnknownKey { line, key: other.to_string() })
                }
            }
        }
        Ok(cfg)
    }

    /// Canonical echo; parsing it back reproduces the config.
    pub fn render(&self) -> String {
        let t = &self.train;
        format!(
            "lr = {}\nbatch = {}\nmax_steps = {}\nbeta1 = {}\nbeta2 = {}\neps = {}\nclip = {}\n\
             eval_every = {}\nwindow = {}\nheldout_frac = {}\ntarget_acc = {}\npatience = {}\n\
             seed = {}\nn_trajs = {}\nnoise = {}\nn_rollouts = {}\neval_max_steps = {}\nsim_eval = {}\n",
            t.lr,
            t.batch,
            t.max_steps,
            t.beta1,
            t.beta2,
            t.eps,
            t.clip,
            t.eval_every,
            t.window,
            t.heldout_frac,
            t.target_acc,
            t.patience,
            t.seed,
            self.n_trajs,
            self.noise,
            self.n_rollouts,
            self.max_steps,
            self.sim_eval,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!(c.train.lr, 3e-4);
        assert_eq!(c.train.batch, 16);
        assert_eq!(c.train.max_steps, 20_000);
        assert_eq!(c.train.window, 64);
        assert_eq!(c.n_rollouts, 50);
    }

    #[test]
    fn parse_overrides_and_ignores_comments() {
        let c = RunConfig::parse("# comment\nlr = 0.001\n\nn_trajs = 50 # inline\n").unwrap();
        assert_eq!(c.train.lr, 1e-3);
        assert_eq!(c.n_trajs, 50);
        assert_eq!(c.train.batch, 16);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = RunConfig::parse("lr = 0.1\nlearning_rate = 0.1\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey { line: 2, key: "learning_rate".into() }
        );
    }

    #[test]
    fn bad_value_is_rejected() {
        let err = RunConfig::parse("batch = many\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.train.lr = 5e-4;
        c.n_rollouts = 7;
        let back = RunConfig::parse(&c.render()).unwrap();
        assert_eq!(back, c);
    }
}

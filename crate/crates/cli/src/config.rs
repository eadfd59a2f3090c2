//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hydride_core::pcr::KPolicy;
use hydride_core::ScoreVariant;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("{key}: {msg}")]
    Value { key: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiKind {
    ChiSquare,
    FisherZ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub reference_db: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub alpha: f64,
    pub score_variant: ScoreVariant,
    pub ci_test: CiKind,
    pub bins: usize,
    pub causal_features: Vec<String>,
    pub causal_target: String,
    pub pcr_features: Vec<String>,
    pub pcr_k: KPolicy,
    pub split: (f64, f64, f64),
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta: f64,
    pub gamma: f64,
    pub clip_norm: Option<f64>,
    pub n_generate: usize,
    pub latent_steps: usize,
    pub latent_step_size: f64,
    pub latent_max_step: Option<f64>,
    pub max_attempts: usize,
    pub knn_k: usize,
    pub top_k: usize,
    pub strict_metal_cap: bool,
    pub require_element_count: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let words = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        RunConfig {
            dataset: None,
            reference_db: None,
            output_dir: PathBuf::from("hydride-out"),
            seed: 0,
            alpha: 0.05,
            score_variant: ScoreVariant::Modified,
            ci_test: CiKind::ChiSquare,
            bins: 3,
            causal_features: words(&[
                "score",
                "w_h2",
                "e_form",
                "e_factor",
                "band_gap",
                "density",
                "energy_above_hull",
            ]),
            causal_target: "score".into(),
            pcr_features: words(&["e_form", "density", "w_h2", "band_gap", "energy_above_hull"]),
            pcr_k: KPolicy::default(),
            split: (0.6, 0.2, 0.2),
            latent_dim: 8,
            hidden: vec![64],
            head_hidden: vec![16],
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            beta: 1.0,
            gamma: 1.0,
            clip_norm: Some(5.0),
            n_generate: 1000,
            latent_steps: 5000,
            latent_step_size: 1e-3,
            latent_max_step: Some(0.1),
            max_attempts: 16,
            knn_k: 5,
            top_k: 100,
            strict_metal_cap: false,
            require_element_count: false,
        }
    }
}

fn value_err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| value_err(key, format!("cannot parse {v:?}")))
}

fn parse_opt_f64(key: &str, v: &str) -> Result<Option<f64>, ConfigError> {
    if v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(value_err(key, format!("expected true or false, got {v:?}"))),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "dataset" => self.dataset = (!v.is_empty()).then(|| PathBuf::from(v)),
            "reference_db" => self.reference_db = (!v.is_empty()).then(|| PathBuf::from(v)),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "score_variant" => self.score_variant = v.parse().map_err(|e| value_err(key, format!("{e}")))?,
            "ci_test" => {
                self.ci_test = match v {
                    "chi-square" | "chi" => CiKind::ChiSquare,
                    "fisher-z" | "fisher" => CiKind::FisherZ,
                    _ => return Err(value_err(key, "expected chi-square or fisher-z")),
                }
            }
            "bins" => self.bins = parse(key, v)?,
            "causal_features" => self.causal_features = parse_list(key, v)?,
            "causal_target" => self.causal_target = v.to_string(),
            "pcr_features" => self.pcr_features = parse_list(key, v)?,
            "pcr_k" => {
                self.pcr_k = match v.strip_prefix("fixed:") {
                    Some(k) => KPolicy::Fixed(parse(key, k)?),
                    None => KPolicy::VarianceFraction(parse(key, v)?),
                }
            }
            "split" => {
                let p: Vec<f64> = parse_list(key, v)?;
                if p.len() != 3 {
                    return Err(value_err(key, "expected three comma-separated fractions"));
                }
                self.split = (p[0], p[1], p[2]);
            }
            "latent_dim" => self.latent_dim = parse(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "head_hidden" => self.head_hidden = parse_list(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse_opt_f64(key, v)?,
            "n_generate" => self.n_generate = parse(key, v)?,
            "latent_steps" => self.latent_steps = parse(key, v)?,
            "latent_step_size" => self.latent_step_size = parse(key, v)?,
            "latent_max_step" => self.latent_max_step = parse_opt_f64(key, v)?,
            "max_attempts" => self.max_attempts = parse(key, v)?,
            "knn_k" => self.knn_k = parse(key, v)?,
            "top_k" => self.top_k = parse(key, v)?,
            "strict_metal_cap" => self.strict_metal_cap = parse_bool(key, v)?,
            "require_element_count" => self.require_element_count = parse_bool(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Every key in a fixed order; `from_text(to_text())` gives back `self`.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let pcr_k = match self.pcr_k {
            KPolicy::Fixed(k) => format!("fixed:{k}"),
            KPolicy::VarianceFraction(f) => f.to_string(),
        };
        let ci = match self.ci_test {
            CiKind::ChiSquare => "chi-square",
            CiKind::FisherZ => "fisher-z",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("dataset", path(&self.dataset)),
            ("reference_db", path(&self.reference_db)),
            ("output_dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("alpha", self.alpha.to_string()),
            ("score_variant", self.score_variant.to_string()),
            ("ci_test", ci.to_string()),
            ("bins", self.bins.to_string()),
            ("causal_features", self.causal_features.join(",")),
            ("causal_target", self.causal_target.clone()),
            ("pcr_features", self.pcr_features.join(",")),
            ("pcr_k", pcr_k),
            ("split", format!("{},{},{}", self.split.0, self.split.1, self.split.2)),
            ("latent_dim", self.latent_dim.to_string()),
            ("hidden", join(&self.hidden)),
            ("head_hidden", join(&self.head_hidden)),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("momentum", self.momentum.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("clip_norm", opt_f64(self.clip_norm)),
            ("n_generate", self.n_generate.to_string()),
            ("latent_steps", self.latent_steps.to_string()),
            ("latent_step_size", self.latent_step_size.to_string()),
            ("latent_max_step", opt_f64(self.latent_max_step)),
            ("max_attempts", self.max_attempts.to_string()),
            ("knn_k", self.knn_k.to_string()),
            ("top_k", self.top_k.to_string()),
            ("strict_metal_cap", self.strict_metal_cap.to_string()),
            ("require_element_count", self.require_element_count.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(RunConfig::from_text(&text)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(value_err(key, msg)) };
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha", "must lie in (0, 1)")?;
        check(self.bins >= 2, "bins", "need at least two bins")?;
        check(!self.causal_features.is_empty(), "causal_features", "empty")?;
        check(
            self.causal_features.contains(&self.causal_target),
            "causal_target",
            "must be one of causal_features",
        )?;
        check(!self.pcr_features.is_empty(), "pcr_features", "empty")?;
        check(
            self.pcr_features.len() <= 12,
            "pcr_features",
            "at most 12 (all subsets are fitted)",
        )?;
        match self.pcr_k {
            KPolicy::Fixed(k) => check(k >= 1, "pcr_k", "k must be positive")?,
            KPolicy::VarianceFraction(f) => check(f > 0.0 && f <= 1.0, "pcr_k", "fraction must lie in (0, 1]")?,
        }
        let (a, b, c) = self.split;
        hydride_core::SplitSpec::new(a, b, c, self.seed).map_err(|e| value_err("split", e.to_string()))?;
        check(self.latent_dim >= 1, "latent_dim", "must be positive")?;
        check(self.hidden.iter().all(|h| *h > 0), "hidden", "zero-width layer")?;
        check(
            self.head_hidden.iter().all(|h| *h > 0),
            "head_hidden",
            "zero-width layer",
        )?;
        check(self.epochs >= 1, "epochs", "must be positive")?;
        check(self.batch_size >= 1, "batch_size", "must be positive")?;
        check(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning_rate",
            "must be >= 0",
        )?;
        check((0.0..1.0).contains(&self.momentum), "momentum", "must lie in [0, 1)")?;
        check(
            self.beta >= 0.0 && self.gamma >= 0.0,
            "beta",
            "loss weights must be >= 0",
        )?;
        check(self.clip_norm.is_none_or(|c| c > 0.0), "clip_norm", "must be positive")?;
        check(self.latent_step_size >= 0.0, "latent_step_size", "must be >= 0")?;
        check(
            self.latent_max_step.is_none_or(|c| c > 0.0),
            "latent_max_step",
            "must be positive",
        )?;
        check(self.max_attempts >= 1, "max_attempts", "must be positive")?;
        check(self.knn_k >= 1, "knn_k", "must be positive")?;
        Ok(())
    }

    pub fn split_spec(&self) -> hydride_core::SplitSpec {
        hydride_core::SplitSpec::new(self.split.0, self.split.1, self.split.2, self.seed).expect("validated")
    }
}

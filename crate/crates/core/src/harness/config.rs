//! Plain-text `key = value` configuration.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layer::FdConvConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Gradient step with heavy-ball momentum 0.9.
    Sgd,
    /// First/second-moment method, β = (0.9, 0.999), ε = 1e-8.
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sgd" | "momentum" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer {other:?} (expected sgd or adam)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    /// Number of samples.
    pub size: usize,
    /// Image side length.
    pub s: usize,
    /// White-noise deviation.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub layer: FdConvConfig,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    pub dataset: DatasetConfig,
}

impl Default for TrainConfig {
    /// The toy band-classification setup.
    fn default() -> Self {
        Self {
            layer: FdConvConfig {
                k: 3,
                c_in: 1,
                c_out: 8,
                n: 8,
                ..FdConvConfig::default()
            },
            optimizer: OptimizerKind::Adam,
            lr: 0.01,
            batch: 16,
            steps: 1000,
            seed: 0,
            dataset: DatasetConfig {
                size: 2000,
                s: 32,
                sigma: 0.1,
            },
        }
    }
}

const KEYS: [&str; 16] = [
    "k",
    "c_in",
    "c_out",
    "n",
    "tau",
    "bands",
    "enable_ksm",
    "enable_fbm",
    "optimizer",
    "lr",
    "batch",
    "steps",
    "seed",
    "dataset.size",
    "dataset.s",
    "dataset.sigma",
];

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::Config {
        line,
        msg: format!("{key}: cannot parse {value:?}: {e}"),
    })
}

impl TrainConfig {
    /// Parses config text; absent keys keep their defaults, unknown or
    /// repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key = value`, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key {key:?}"),
                });
            }
            if seen.contains(&key) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key {key:?}"),
                });
            }
            seen.push(key);
            match key {
                "k" => cfg.layer.k = parse(line, key, value)?,
                "c_in" => cfg.layer.c_in = parse(line, key, value)?,
                "c_out" => cfg.layer.c_out = parse(line, key, value)?,
                "n" => cfg.layer.n = parse(line, key, value)?,
                "tau" => cfg.layer.tau = parse(line, key, value)?,
                "bands" => {
                    cfg.layer.thresholds = value
                        .split(',')
                        .map(|v| parse_fraction(line, v.trim()))
                        .collect::<Result<_>>()?
                }
                "enable_ksm" => cfg.layer.enable_ksm = parse(line, key, value)?,
                "enable_fbm" => cfg.layer.enable_fbm = parse(line, key, value)?,
                "optimizer" => cfg.optimizer = parse(line, key, value)?,
                "lr" => cfg.lr = parse(line, key, value)?,
                "batch" => cfg.batch = parse(line, key, value)?,
                "steps" => cfg.steps = parse(line, key, value)?,
                "seed" => cfg.seed = parse(line, key, value)?,
                "dataset.size" => cfg.dataset.size = parse(line, key, value)?,
                "dataset.s" => cfg.dataset.s = parse(line, key, value)?,
                "dataset.sigma" => cfg.dataset.sigma = parse(line, key, value)?,
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.layer.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.layer.validate()?;
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a finite non-negative number, got {}", self.lr));
        }
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        if !(self.dataset.sigma >= 0.0 && self.dataset.sigma.is_finite()) {
            return bad(format!(
                "dataset.sigma must be non-negative, got {}",
                self.dataset.sigma
            ));
        }
        if self.dataset.size == 0 {
            return bad("dataset.size must be positive".into());
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields `self` again.
    pub fn to_text(&self) -> String {
        let l = &self.layer;
        let bands: Vec<String> = l.thresholds.iter().map(|v| v.to_string()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "k = {}", l.k);
        let _ = writeln!(s, "c_in = {}", l.c_in);
        let _ = writeln!(s, "c_out = {}", l.c_out);
        let _ = writeln!(s, "n = {}", l.n);
        let _ = writeln!(s, "tau = {}", l.tau);
        let _ = writeln!(s, "bands = {}", bands.join(", "));
        let _ = writeln!(s, "enable_ksm = {}", l.enable_ksm);
        let _ = writeln!(s, "enable_fbm = {}", l.enable_fbm);
        let _ = writeln!(s, "optimizer = {}", self.optimizer.as_str());
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "dataset.size = {}", self.dataset.size);
        let _ = writeln!(s, "dataset.s = {}", self.dataset.s);
        let _ = writeln!(s, "dataset.sigma = {}", self.dataset.sigma);
        s
    }
}

/// Accepts decimals and simple fractions such as `1/16`.
fn parse_fraction(line: usize, v: &str) -> Result<f64> {
    match v.split_once('/') {
        Some((num, den)) => {
            let num: f64 = parse(line, "bands", num.trim())?;
            let den: f64 = parse(line, "bands", den.trim())?;
            Ok(num / den)
        }
        None => parse(line, "bands", v),
    }
}

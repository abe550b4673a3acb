use serde::{Deserialize, Serialize};

use crate::error::{Result, SbartError};

/// Proposal probabilities for the three tree moves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveProbs {
    pub birth: f64,
    pub death: f64,
    pub change: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        MoveProbs {
            birth: 0.25,
            death: 0.25,
            change: 0.5,
        }
    }
}

/// Hyperparameters and run lengths for a fit. Defaults are the standard
/// default prior with 50 trees and 2500 + 2500 iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub num_trees: usize,
    pub warmup_iters: usize,
    pub sample_iters: usize,
    pub thin: usize,
    /// Branch probability base.
    pub gamma: f64,
    /// Depth penalty.
    pub beta: f64,
    /// Mean of the exponential bandwidth prior.
    pub bandwidth_rate: f64,
    /// Exponent on `p` in the Dirichlet concentration `a / p^xi`.
    pub xi: f64,
    pub sigma_mu_scale: f64,
    /// Likelihood temperature.
    pub eta: f64,
    pub seed: u64,
    /// Replaces the lasso estimate, on the original response scale.
    pub sigma_hat_override: Option<f64>,
    pub move_probs: MoveProbs,
    /// Step size of the log-scale random walk on bandwidths.
    pub bandwidth_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            num_trees: 50,
            warmup_iters: 2500,
            sample_iters: 2500,
            thin: 1,
            gamma: 0.95,
            beta: 2.0,
            bandwidth_rate: 0.1,
            xi: 1.0,
            sigma_mu_scale: 0.25,
            eta: 1.0,
            seed: 0,
            sigma_hat_override: None,
            move_probs: MoveProbs::default(),
            bandwidth_step: 0.2,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(SbartError::config(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SbartError::config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.beta > 0.0) {
            return Err(SbartError::config(format!("beta must be positive, got {}", self.beta)));
        }
        let m = self.move_probs;
        if [m.birth, m.death, m.change].iter().any(|&v| !(v >= 0.0))
            || (m.birth + m.death + m.change - 1.0).abs() > 1e-9
        {
            return Err(SbartError::config("move probabilities must be nonnegative and sum to 1"));
        }
        for (name, v) in [
            ("bandwidth_rate", self.bandwidth_rate),
            ("sigma_mu_scale", self.sigma_mu_scale),
            ("bandwidth_step", self.bandwidth_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SbartError::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.xi < 1.0 {
            return Err(SbartError::config(format!("xi must be at least 1, got {}", self.xi)));
        }
        if let Some(s) = self.sigma_hat_override {
            if !(s > 0.0 && s.is_finite()) {
                return Err(SbartError::config(format!("sigma_hat_override must be positive, got {s}")));
            }
        }
        if self.num_trees == 0 {
            return Err(SbartError::config("num_trees must be at least 1"));
        }
        if self.thin == 0 {
            return Err(SbartError::config("thin must be at least 1"));
        }
        Ok(())
    }

    /// Applies `key=value` lines (field names as in this struct) on top of
    /// `self`. Blank lines and `#` comments are ignored.
    pub fn apply_key_values(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SbartError::config(format!("line {}: expected key=value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| SbartError::config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse::<T>().map_err(|_| format!("cannot parse '{v}'"))
        }
        match key {
            "num_trees" => self.num_trees = num(value)?,
            "warmup_iters" => self.warmup_iters = num(value)?,
            "sample_iters" => self.sample_iters = num(value)?,
            "thin" => self.thin = num(value)?,
            "gamma" => self.gamma = num(value)?,
            "beta" => self.beta = num(value)?,
            "bandwidth_rate" => self.bandwidth_rate = num(value)?,
            "xi" => self.xi = num(value)?,
            "sigma_mu_scale" => self.sigma_mu_scale = num(value)?,
            "eta" => self.eta = num(value)?,
            "seed" => self.seed = num(value)?,
            "bandwidth_step" => self.bandwidth_step = num(value)?,
            "sigma_hat_override" => {
                self.sigma_hat_override = match value {
                    "" | "none" => None,
                    v => Some(num(v)?),
                }
            }
            "move_probs" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|v| num::<f64>(v.trim()))
                    .collect::<std::result::Result<_, _>>()?;
                if parts.len() != 3 {
                    return Err("move_probs needs three comma-separated values".into());
                }
                self.move_probs = MoveProbs {
                    birth: parts[0],
                    death: parts[1],
                    change: parts[2],
                };
            }
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> String {
        let m = self.move_probs;
        let mut out = String::new();
        out.push_str(&format!("num_trees={}\n", self.num_trees));
        out.push_str(&format!("warmup_iters={}\n", self.warmup_iters));
        out.push_str(&format!("sample_iters={}\n", self.sample_iters));
        out.push_str(&format!("thin={}\n", self.thin));
        out.push_str(&format!("gamma={}\n", self.gamma));
        out.push_str(&format!("beta={}\n", self.beta));
        out.push_str(&format!("bandwidth_rate={}\n", self.bandwidth_rate));
        out.push_str(&format!("xi={}\n", self.xi));
        out.push_str(&format!("sigma_mu_scale={}\n", self.sigma_mu_scale));
        out.push_str(&format!("eta={}\n", self.eta));
        out.push_str(&format!("seed={}\n", self.seed));
        match self.sigma_hat_override {
            Some(v) => out.push_str(&format!("sigma_hat_override={v}\n")),
            None => out.push_str("sigma_hat_override=none\n"),
        }
        out.push_str(&format!("move_probs={},{},{}\n", m.birth, m.death, m.change));
        out.push_str(&format!("bandwidth_step={}\n", self.bandwidth_step));
        out
    }
}

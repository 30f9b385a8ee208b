use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Threshold on the β spread that selects distillation over plain averaging.
/// Serialized as a number, or the string `"inf"` to disable distillation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Epsilon(pub f64);

impl Epsilon {
    pub const NEVER: Epsilon = Epsilon(f64::INFINITY);
    pub const ALWAYS: Epsilon = Epsilon(0.0);

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) if x >= 0.0 => Ok(Epsilon(x)),
            Raw::Num(x) => Err(serde::de::Error::custom(format!("epsilon must be >= 0, got {x}"))),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "infinity" | "+inf") => Ok(Epsilon::NEVER),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("epsilon must be a number or \"inf\", got {s:?}"))),
        }
    }
}

/// How the three joint-loss coefficients are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaSpec {
    /// Fix the hard-loss weight λ3; λ1 and λ2 follow from the schedule.
    HardWeight(f64),
    /// Fix the teacher weight λ1; λ2 and λ3 follow from the schedule.
    Lambda1(f64),
    /// Use `[λ1, λ2, λ3]` as given.
    Explicit([f64; 3]),
}

/// `(λ2, λ3)` for `R` regions: with the update term the previous global
/// model counts as one more teacher, `λ2 = λ1 / R` and
/// `λ3 = 1 - (R + 1) λ1 / R`; without it `λ2 = 0` and `λ3 = 1 - λ1`.
pub fn lambda_schedule(regions: usize, lambda1: f64, use_update: bool) -> Result<(f64, f64)> {
    if regions == 0 {
        return Err(Error::invalid("need at least one region"));
    }
    let r = regions as f64;
    let upper = if use_update { r / (r + 1.0) } else { 1.0 };
    // Accept values a rounding error past the upper bound, e.g. `upper * k / k`.
    if !(0.0..=upper + 1e-12).contains(&lambda1) {
        return Err(Error::invalid(format!("lambda1 = {lambda1} outside [0, {upper}]")));
    }
    let lambda1 = lambda1.min(upper);
    Ok(if use_update { (lambda1 / r, 1.0 - (r + 1.0) * lambda1 / r) } else { (0.0, 1.0 - lambda1) })
}

impl LambdaSpec {
    pub fn resolve(self, regions: usize, use_update: bool) -> Result<[f64; 3]> {
        match self {
            LambdaSpec::HardWeight(l3) => {
                if !(0.0..=1.0).contains(&l3) {
                    return Err(Error::invalid(format!("hard weight {l3} outside [0, 1]")));
                }
                let r = regions as f64;
                let l1 = if use_update { (1.0 - l3) * r / (r + 1.0) } else { 1.0 - l3 };
                let (l2, l3) = lambda_schedule(regions, l1, use_update)?;
                Ok([l1, l2, l3.max(0.0)])
            }
            LambdaSpec::Lambda1(l1) => {
                let (l2, l3) = lambda_schedule(regions, l1, use_update)?;
                Ok([l1, l2, l3])
            }
            LambdaSpec::Explicit(l) => {
                if l.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(Error::invalid("explicit lambdas must be finite and non-negative"));
                }
                Ok(l)
            }
        }
    }
}

/// Settings for the global distillation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    /// Soft-loss temperature.
    pub temperature: f64,
    /// Sharpness of the AUC softmax.
    pub t_omega: f64,
    pub lambdas: LambdaSpec,
    pub epsilon: Epsilon,
    pub server_epochs: usize,
    pub server_lr: f64,
    pub batch_size: usize,
    pub use_update_distillation: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            temperature: 3.0,
            t_omega: 10.0,
            lambdas: LambdaSpec::HardWeight(0.01),
            epsilon: Epsilon(0.05),
            server_epochs: 200,
            server_lr: 1.0,
            batch_size: 32,
            use_update_distillation: true,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid("temperature must be positive"));
        }
        if !(self.t_omega >= 0.0) || !self.t_omega.is_finite() {
            return Err(Error::invalid("t_omega must be finite and non-negative"));
        }
        if !(self.server_lr >= 0.0) {
            return Err(Error::invalid("server_lr must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }

    /// `[λ1, λ2, λ3]` for `regions` teachers.
    pub fn coefficients(&self, regions: usize) -> Result<[f64; 3]> {
        self.lambdas.resolve(regions, self.use_update_distillation)
    }
}

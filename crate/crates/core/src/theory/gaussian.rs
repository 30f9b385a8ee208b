use super::TeacherEnsemble;
use crate::{Error, Real, Result};

/// `KL(N(μ_p, σ²_p) || N(μ_q, σ²_q))`.
pub fn gaussian_kl<T: Real>(p: (T, T), q: (T, T)) -> Result<T> {
    let (mu_p, var_p) = p;
    let (mu_q, var_q) = q;
    if !(var_p > T::zero()) || !(var_q > T::zero()) {
        return Err(Error::invalid("variances must be positive"));
    }
    let ratio = var_p / var_q;
    let d = mu_p - mu_q;
    Ok(T::lit(0.5) * (d * d / var_q + ratio - T::one() - ratio.ln()))
}

/// Student moments `(μ*, σ*²)` minimizing the `weights`-weighted teacher
/// objective: the weighted means of the teacher means and variances.
pub fn weighted_optimal_student<T: Real>(means: &[T], variances: &[T], weights: &[T]) -> Result<(T, T)> {
    if means.is_empty() || means.len() != variances.len() || means.len() != weights.len() {
        return Err(Error::invalid("means, variances and weights must be non-empty and equal length"));
    }
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::invalid("weights must have a positive sum"));
    }
    let mu = means.iter().zip(weights).map(|(&m, &w)| w * m).sum::<T>() / total;
    let var = variances.iter().zip(weights).map(|(&v, &w)| w * v).sum::<T>() / total;
    Ok((mu, var))
}

fn class_column<T: Real>(ens: &TeacherEnsemble<T>, c: usize) -> Result<(Vec<T>, Vec<T>)> {
    if c >= ens.classes() {
        return Err(Error::invalid(format!("class {c} out of range")));
    }
    Ok((
        ens.teachers.iter().map(|t| t.means[c]).collect(),
        ens.teachers.iter().map(|t| t.variances[c]).collect(),
    ))
}

/// LKD optimum for class `c`: teachers weighted by `e^{τ[r][c]}`.
pub fn lkd_optimal_student<T: Real>(ens: &TeacherEnsemble<T>, c: usize) -> Result<(T, T)> {
    let (means, vars) = class_column(ens, c)?;
    // e^{τ - max τ}: same ratios, no overflow.
    let max_tau = ens.tau.iter().map(|row| row[c]).fold(T::neg_infinity(), T::max);
    let weights: Vec<T> = ens.tau.iter().map(|row| (row[c] - max_tau).exp()).collect();
    weighted_optimal_student(&means, &vars, &weights)
}

/// MTKD optimum for class `c`: uniform teacher weights.
pub fn mtkd_optimal_student<T: Real>(ens: &TeacherEnsemble<T>, c: usize) -> Result<(T, T)> {
    let (means, vars) = class_column(ens, c)?;
    let weights = vec![T::one(); means.len()];
    weighted_optimal_student(&means, &vars, &weights)
}

/// Lower bound on class accuracy for decision boundary `b_c` and per-class
/// spread `σ`: `1 - exp(-(b_c/σ)²/2) / √(2π)`.
pub fn accuracy_variance_bound<T: Real>(b_c: T, sigma: T) -> Result<T> {
    if !(sigma > T::zero()) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let z = b_c / sigma;
    let inv_sqrt_2pi = T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    Ok(T::one() - inv_sqrt_2pi * (T::lit(-0.5) * z * z).exp())
}

/// `Cov(π_i, π_j) = -ν_i ν_j / (ν̄² (ν̄ + 1))` for `π ~ Dirichlet(ν)`, `i ≠ j`.
pub fn dirichlet_covariance<T: Real>(nu: &[T], i: usize, j: usize) -> Result<T> {
    if i == j {
        return Err(Error::invalid("indices must differ"));
    }
    if i >= nu.len() || j >= nu.len() {
        return Err(Error::invalid("index out of range"));
    }
    if nu.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::invalid("concentrations must be positive"));
    }
    let total: T = nu.iter().copied().sum();
    Ok(-(nu[i] * nu[j]) / (total * total * (total + T::one())))
}

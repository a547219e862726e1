//! Central finite-difference verification of analytic gradients.
//!
//! Relative error for analytic `a` and numeric `n` is
//! `|a − n| / max(|a|, |n|, 1e-8)`, with `n = (f(x + h·e) − f(x − h·e)) / 2h`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
const ERROR_FLOOR: f64 = 1e-8;

/// A deterministic scalar function of a list of parameter tensors.
pub trait Objective {
    fn value(&mut self, params: &[Tensor<f64>]) -> Result<f64>;
    fn gradient(&mut self, params: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>>;
}

/// Objective defined by a closure that records its computation on a tape.
///
/// Parameters are bound as `requires_grad` leaves, in order, before the
/// closure runs; the closure returns the scalar output.
pub struct TapeObjective<F>(pub F);

impl<F> TapeObjective<F>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    fn run(&mut self, params: &[Tensor<f64>]) -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars = params.iter().map(|p| tape.param(p.clone())).collect::<Result<Vec<_>>>()?;
        let out = (self.0)(&mut tape, &vars)?;
        Ok((tape, vars, out))
    }
}

impl<F> Objective for TapeObjective<F>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    fn value(&mut self, params: &[Tensor<f64>]) -> Result<f64> {
        let (tape, _, out) = self.run(params)?;
        tape.value(out).item()
    }

    fn gradient(&mut self, params: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> {
        let (mut tape, vars, out) = self.run(params)?;
        tape.backward(out)?;
        Ok(vars
            .iter()
            .zip(params)
            .map(|(&v, p)| tape.take_grad(v).unwrap_or_else(|| p.zeros_like()))
            .collect())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Upper bound on checked coordinates per tensor; `None` checks all.
    pub max_per_tensor: Option<usize>,
    /// Seed for choosing the sampled coordinates.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: DEFAULT_STEP, tolerance: DEFAULT_TOLERANCE, max_per_tensor: None, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    /// Parameters ordered from worst to best.
    pub fn worst(&self, count: usize) -> Vec<&ParamCheck> {
        let mut v: Vec<&ParamCheck> = self.params.iter().collect();
        v.sort_by(|a, b| b.max_rel_error.total_cmp(&a.max_rel_error));
        v.truncate(count);
        v
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

/// Compares analytic gradients of `objective` against central differences.
pub fn finite_diff_gradcheck<O: Objective>(
    objective: &mut O,
    names: &[String],
    params: &[Tensor<f64>],
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if names.len() != params.len() {
        return Err(Error::invalid("one name per parameter tensor is required"));
    }
    if !(config.step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let base = objective.value(params)?;
    let again = objective.value(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic(format!("baseline evaluated to {base} and then {again}")));
    }
    let analytic = objective.gradient(params)?;
    if analytic.len() != params.len() {
        return Err(Error::invalid("objective returned the wrong number of gradients"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport { params: Vec::with_capacity(params.len()), tolerance: config.tolerance };
    for (t, (name, grad)) in names.iter().zip(&analytic).enumerate() {
        if grad.shape() != params[t].shape() {
            return Err(Error::shape(format!("gradient of `{name}` has shape {:?}", grad.shape())));
        }
        let len = grad.len();
        let coords: Vec<usize> = match config.max_per_tensor {
            Some(max) if max < len => {
                let mut c = index::sample(&mut rng, len, max).into_vec();
                // always include the largest analytic component
                let peak = (0..len).max_by(|&a, &b| grad.data()[a].abs().total_cmp(&grad.data()[b].abs())).unwrap_or(0);
                if !c.contains(&peak) {
                    c[0] = peak;
                }
                c.sort_unstable();
                c
            }
            _ => (0..len).collect(),
        };
        let mut check = ParamCheck {
            name: name.clone(),
            checked: coords.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &j in &coords {
            let orig = work[t].data()[j];
            work[t].data_mut()[j] = orig + config.step;
            let plus = objective.value(&work)?;
            work[t].data_mut()[j] = orig - config.step;
            let minus = objective.value(&work)?;
            work[t].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * config.step);
            let a = grad.data()[j];
            let err = relative_error(a, numeric);
            if j == coords[0] || err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_index = j;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

/// Checks a closure over a single tensor.
pub fn check_tensor<F>(f: F, x: &Tensor<f64>, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let config = GradCheckConfig { step, tolerance, ..GradCheckConfig::default() };
    finite_diff_gradcheck(&mut TapeObjective(f), &["x".to_string()], std::slice::from_ref(x), &config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let report = check_tensor(
            |tape, v| {
                let sq = tape.mul(v[0], v[0])?;
                tape.sum(sq)
            },
            &x,
            1e-5,
            1e-8,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    struct Doubled;

    impl Objective for Doubled {
        fn value(&mut self, p: &[Tensor<f64>]) -> Result<f64> {
            Ok(p[0].data().iter().map(|v| v * v).sum())
        }
        fn gradient(&mut self, p: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> {
            Ok(vec![p[0].map(|v| 4.0 * v)])
        }
    }

    #[test]
    fn scaled_gradient_bug_reports_half() {
        let x = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let report =
            finite_diff_gradcheck(&mut Doubled, &["x".into()], &[x], &GradCheckConfig::default()).unwrap();
        assert!(!report.passed());
        assert!((report.max_rel_error() - 0.5).abs() < 1e-6, "{}", report.max_rel_error());
    }

    struct Drifting(f64);

    impl Objective for Drifting {
        fn value(&mut self, _: &[Tensor<f64>]) -> Result<f64> {
            self.0 += 1.0;
            Ok(self.0)
        }
        fn gradient(&mut self, p: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> {
            Ok(vec![p[0].zeros_like()])
        }
    }

    #[test]
    fn non_deterministic_objective_is_rejected() {
        let x = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let err = finite_diff_gradcheck(&mut Drifting(0.0), &["x".into()], &[x], &GradCheckConfig::default());
        assert!(matches!(err, Err(Error::NonDeterministic(_))));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }
}

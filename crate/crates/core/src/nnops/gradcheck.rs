//! Central finite-difference validation of analytic backward passes.
//!
//! A kernel `f` is reduced to the scalar `L(x) = <f(x), R>` for a fixed
//! random projection `R`; its analytic gradient is `backward(x, R)` and each
//! partial is compared against `(L(x + ε) - L(x - ε)) / 2ε`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

/// Denominator floor of [`relative_error`].
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Probe at most this many elements of each input (all when `None`).
    pub max_probes: Option<usize>,
    /// Seeds the projection and probe sampling.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-4,
            max_probes: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<Probe>,
    pub probes: usize,
    pub passed: bool,
    /// Set when the kernel itself errored; the check then fails.
    pub failure: Option<String>,
}

impl GradCheckReport {
    pub fn failed(reason: impl Into<String>) -> Self {
        GradCheckReport {
            max_rel_error: f64::INFINITY,
            worst: None,
            probes: 0,
            passed: false,
            failure: Some(reason.into()),
        }
    }

    /// Fold several reports into one (worst case wins).
    pub fn merge(reports: impl IntoIterator<Item = GradCheckReport>) -> Self {
        let mut out = GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            probes: 0,
            passed: true,
            failure: None,
        };
        for r in reports {
            out.probes += r.probes;
            out.passed &= r.passed;
            if r.max_rel_error > out.max_rel_error || (r.failure.is_some() && out.failure.is_none()) {
                out.max_rel_error = out.max_rel_error.max(r.max_rel_error);
                out.worst = r.worst.or(out.worst);
            }
            out.failure = out.failure.or(r.failure);
        }
        out
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Compare `backward` against central differences of `forward`.
///
/// `backward(inputs, grad_out)` must return one gradient per input, each
/// shaped like that input.
pub fn grad_check<F, B>(inputs: &[Tensor], forward: F, backward: B, cfg: &GradCheckConfig) -> GradCheckReport
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
    B: Fn(&[Tensor], &Tensor) -> Result<Vec<Tensor>>,
{
    match run(inputs, &forward, &backward, cfg) {
        Ok(r) => r,
        Err(e) => GradCheckReport::failed(e.to_string()),
    }
}

fn run<F, B>(inputs: &[Tensor], forward: &F, backward: &B, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
    B: Fn(&[Tensor], &Tensor) -> Result<Vec<Tensor>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let out = forward(inputs)?;
    let projection = Tensor::uniform(out.shape(), -1.0, 1.0, &mut rng)?;
    let grads = backward(inputs, &projection)?;
    if grads.len() != inputs.len() {
        return Ok(GradCheckReport::failed(format!(
            "backward returned {} gradients for {} inputs",
            grads.len(),
            inputs.len()
        )));
    }
    let objective = |xs: &[Tensor]| -> Result<f64> { forward(xs)?.dot(&projection) };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        probes: 0,
        passed: true,
        failure: None,
    };
    let mut work = inputs.to_vec();
    for (which, (x, g)) in inputs.iter().zip(&grads).enumerate() {
        if g.shape() != x.shape() {
            return Ok(GradCheckReport::failed(format!(
                "gradient {which} has shape {:?}, input has {:?}",
                g.shape(),
                x.shape()
            )));
        }
        let indices: Vec<usize> = match cfg.max_probes {
            Some(k) if k < x.len() => sample(&mut rng, x.len(), k).into_vec(),
            _ => (0..x.len()).collect(),
        };
        for idx in indices {
            let orig = x.data()[idx];
            work[which].data_mut()[idx] = orig + cfg.epsilon;
            let plus = objective(&work)?;
            work[which].data_mut()[idx] = orig - cfg.epsilon;
            let minus = objective(&work)?;
            work[which].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            let analytic = g.data()[idx];
            let err = relative_error(analytic, numeric);
            report.probes += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(Probe {
                    input: which,
                    index: idx,
                    analytic,
                    numeric,
                });
            }
        }
    }
    report.passed = report.max_rel_error < cfg.tolerance;
    Ok(report)
}

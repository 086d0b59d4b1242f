use crate::encoder::EncoderParams;
use crate::error::Result;

/// Largest relative error found in one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss` on a flat vector.
pub fn grad_check_vec<F>(mut loss: F, theta: &mut [f64], analytic: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + eps;
        let plus = loss(theta)?;
        theta[i] = orig - eps;
        let minus = loss(theta)?;
        theta[i] = orig;
        worst = worst.max(relative_error(analytic[i], (plus - minus) / (2.0 * eps)));
    }
    Ok(worst)
}

/// Central-difference check of every parameter entry, or of at most
/// `max_per_tensor` evenly strided entries per tensor.
pub fn grad_check<F>(
    mut loss: F,
    params: &EncoderParams,
    analytic: &EncoderParams,
    eps: f64,
    tolerance: f64,
    max_per_tensor: Option<usize>,
) -> Result<GradCheckReport>
where
    F: FnMut(&EncoderParams) -> Result<f64>,
{
    let mut probe = params.clone();
    let analytic = analytic.tensors();
    let count = analytic.len();
    let mut tensors = Vec::with_capacity(count);
    for t in 0..count {
        let (name, grad) = (&analytic[t].0, analytic[t].1);
        let n = grad.len();
        let stride = match max_per_tensor {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut worst = 0.0f64;
        let mut checked = 0;
        for i in (0..n).step_by(stride) {
            let orig = nth(&mut probe, t)[i];
            nth(&mut probe, t)[i] = orig + eps;
            let plus = loss(&probe)?;
            nth(&mut probe, t)[i] = orig - eps;
            let minus = loss(&probe)?;
            nth(&mut probe, t)[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.as_slice()[i];
            worst = worst.max(relative_error(a, numeric));
            checked += 1;
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            max_rel_error: worst,
            checked,
            passed: worst < tolerance,
        });
    }
    Ok(GradCheckReport { tensors, tolerance })
}

fn nth(params: &mut EncoderParams, t: usize) -> &mut [f64] {
    params.tensors_mut().swap_remove(t).1.as_mut_slice()
}

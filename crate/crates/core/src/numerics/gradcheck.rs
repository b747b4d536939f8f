use super::{ParamSet, Result, Tape, Var};
use crate::rng::Rng;

/// Below this magnitude (of both the analytic and the numeric derivative)
/// entries are compared by absolute rather than relative error.
pub const ABS_FALLBACK_BELOW: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over entries at or above [`ABS_FALLBACK_BELOW`].
    pub max_rel_error: f64,
    /// Worst absolute error over entries below [`ABS_FALLBACK_BELOW`].
    pub max_abs_error: f64,
    pub entries_checked: usize,
    /// `(parameter name, flat index, analytic, numeric)` of the worst relative entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares tape gradients of `loss` against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε`. For each parameter, up to `per_param` flat
/// indices are sampled (all of them when the parameter is smaller).
///
/// `params` gradients are zeroed on entry and hold the analytic gradient on
/// return; values are restored exactly after every perturbation.
pub fn check_gradients<F>(
    loss: F,
    params: &mut ParamSet,
    eps: f64,
    per_param: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    params.zero_grad();
    let mut tape = Tape::new();
    let l = loss(&mut tape, params)?;
    tape.backward(l, params)?;

    let eval = |params: &ParamSet| -> Result<f64> {
        let mut tape = Tape::inference();
        let l = loss(&mut tape, params)?;
        Ok(tape.value(l).item())
    };

    let mut rng = Rng::new(seed);
    let mut report = GradCheckReport::default();
    let ids: Vec<_> = (0..params.len()).map(super::ParamId).collect();
    for id in ids {
        let n = params.get(id).value().numel();
        let mut indices: Vec<usize> = (0..n).collect();
        if n > per_param {
            rng.shuffle(&mut indices);
            indices.truncate(per_param);
        }
        for idx in indices {
            let analytic = params.get(id).grad.data()[idx];
            let original = params.get(id).value().data()[idx];
            params.get_mut(id).value_mut().data_mut()[idx] = original + eps;
            let plus = eval(params)?;
            params.get_mut(id).value_mut().data_mut()[idx] = original - eps;
            let minus = eval(params)?;
            params.get_mut(id).value_mut().data_mut()[idx] = original;
            let numeric = (plus - minus) / (2.0 * eps);

            let scale = analytic.abs().max(numeric.abs());
            let err = (analytic - numeric).abs();
            report.entries_checked += 1;
            if scale < ABS_FALLBACK_BELOW {
                report.max_abs_error = report.max_abs_error.max(err);
            } else if err / scale > report.max_rel_error {
                report.max_rel_error = err / scale;
                report.worst = Some((params.get(id).name.clone(), idx, analytic, numeric));
            }
        }
    }
    Ok(report)
}

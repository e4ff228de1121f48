//! Central finite-difference checks of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Bound on `|analytic - numeric| / max(|analytic|, |numeric|)`.
    pub rel_tol: f64,
    /// Absolute bound used instead when the analytic gradient is below `small`.
    pub abs_tol: f64,
    pub small: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-5, rel_tol: 1e-4, abs_tol: 1e-7, small: 1e-4 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    /// Largest relative error over entries judged relatively.
    pub max_rel_err: f64,
    /// Largest absolute error over entries judged absolutely.
    pub max_abs_err: f64,
    /// First failing entry, as `(tensor label, flat index, analytic, numeric)`.
    pub first_failure: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }

    fn record(&mut self, label: &str, idx: usize, analytic: f64, numeric: f64, opts: &GradCheckOptions) {
        self.checked += 1;
        let diff = (analytic - numeric).abs();
        let ok = if analytic.abs() < opts.small {
            self.max_abs_err = self.max_abs_err.max(diff);
            diff <= opts.abs_tol
        } else {
            let rel = diff / analytic.abs().max(numeric.abs());
            self.max_rel_err = self.max_rel_err.max(rel);
            rel <= opts.rel_tol
        };
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some((label.to_string(), idx, analytic, numeric));
            }
        }
    }
}

/// Reduces any tensor to a scalar via a fixed random projection, so every
/// output entry contributes to the checked gradient.
pub fn random_projection(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Tensor::from_fn(tape.shape(y), |_| rng.random_range(-1.0..1.0));
    let r = tape.constant(r);
    let prod = tape.mul(y, r)?;
    Ok(tape.sum(prod))
}

/// Checks gradients of `f` with respect to every entry of `inputs` and of
/// every parameter in `store`. `f` must return a scalar.
pub fn check<F>(store: &ParamStore, inputs: &[Tensor], f: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore, &[Var]) -> Result<Var>,
{
    let eval = |store: &ParamStore, inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let l = f(&mut tape, store, &vars)?;
        Ok(tape.value(l).data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let loss = f(&mut tape, store, &vars)?;
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    let grads = tape.backward_into(loss, &mut analytic_store)?;
    let h = opts.step;

    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let zero = Tensor::zeros(inputs[k].shape());
        let g = grads.get(*v).unwrap_or(&zero).clone();
        for i in 0..inputs[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let plus = eval(store, &work)?;
            work[k].data_mut()[i] = orig - h;
            let minus = eval(store, &work)?;
            work[k].data_mut()[i] = orig;
            report.record(&format!("input{k}"), i, g.data()[i], (plus - minus) / (2.0 * h), &opts);
        }
    }

    let mut perturbed = store.clone();
    for (id, p) in store.iter() {
        if !p.tensor.requires_grad {
            continue;
        }
        let g = analytic_store.grad(id).clone();
        for i in 0..p.tensor.value.len() {
            let orig = p.tensor.value.data()[i];
            perturbed.value_mut(id).data_mut()[i] = orig + h;
            let plus = eval(&perturbed, inputs)?;
            perturbed.value_mut(id).data_mut()[i] = orig - h;
            let minus = eval(&perturbed, inputs)?;
            perturbed.value_mut(id).data_mut()[i] = orig;
            report.record(&p.name, i, g.data()[i], (plus - minus) / (2.0 * h), &opts);
        }
    }
    if report.checked == 0 {
        return Err(Error::Usage("gradient check had nothing to check".into()));
    }
    Ok(report)
}

/// [`check`] for functions of plain inputs only.
pub fn check_inputs<F>(inputs: &[Tensor], f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check(&ParamStore::new(), inputs, |tape, _, vars| f(tape, vars), GradCheckOptions::default())
}

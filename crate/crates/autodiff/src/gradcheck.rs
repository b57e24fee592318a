// Central finite-difference verification of tape gradients (64-bit only).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    /// Finite-difference half step.
    pub step: f64,
    pub tolerance: f64,
    /// Elements checked per parameter; larger tensors are sampled.
    pub max_elements: usize,
    /// Each element's error is taken relative to `|analytic| + floor`, where
    /// `floor = 1e-8 + relative_floor * max |analytic|` over the parameter.
    /// Zero gives the plain `|a - n| / (|a| + 1e-8)` criterion.
    pub relative_floor: f64,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions { step: 1e-5, tolerance: 1e-4, max_elements: 24, relative_floor: 1e-2, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct ParamError {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub params: Vec<ParamError>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error < self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamError> {
        self.params.iter().filter(move |p| !(p.max_rel_error < self.tolerance))
    }
}

/// Compare analytic gradients of the scalar built by `loss_fn` against
/// central differences for every parameter in `store`.
pub fn gradcheck<M>(store: &mut ParamStore<f64>, mut loss_fn: M, opts: &GradcheckOptions) -> Result<GradcheckReport>
where
    M: FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    store.zero_grad();
    {
        let mut g = Graph::new();
        let loss = loss_fn(&mut g, store)?;
        let grads = g.backward(loss)?;
        g.accumulate_param_grads(&grads, store);
    }
    let mut eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let loss = loss_fn(&mut g, store)?;
        Ok(g.value(loss).item())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = Vec::with_capacity(store.len());
    for pi in 0..store.len() {
        let id = crate::params::ParamId(pi);
        let n = store.get(id).value.numel();
        let analytic = store.get(id).grad.clone();
        let scale = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let floor = 1e-8 + opts.relative_floor * scale;
        let picks: Vec<usize> =
            if n <= opts.max_elements { (0..n).collect() } else { sample(&mut rng, n, opts.max_elements).into_vec() };
        let mut worst = 0.0f64;
        for &i in &picks {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + opts.step;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - opts.step;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + floor);
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
        report.push(ParamError { name: store.get(id).name.clone(), max_rel_error: worst, checked: picks.len() });
    }
    Ok(GradcheckReport { params: report, tolerance: opts.tolerance })
}

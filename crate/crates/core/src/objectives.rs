//! SI-SDR, the auxiliary multi-task losses and their oracle targets.

use serde::{Deserialize, Serialize};
use tse_autodiff::{Graph, Real, Tensor, Var};

use crate::config::MultitaskMode;
use crate::corruption::{ClueCondition, MaskSpec, FULL_PERIMETER};
use crate::error::{CoreError, Result};
use crate::fusion::FusionVars;

/// Denominator floor of the SI-SDR loss.
pub const SDR_EPS: f64 = 1e-8;
/// Reported SI-SDR values are clamped to +/- this many dB.
pub const REPORT_CLAMP_DB: f64 = 60.0;

/// Scale-invariant SDR in dB, computed in f64.
///
/// Returns `+inf` when the estimate is an exact multiple of the reference and
/// `-inf` for an all-zero estimate.
pub fn si_sdr<T: Copy + Into<f64>>(estimate: &[T], reference: &[T]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(CoreError::Shape(format!("si_sdr lengths {} vs {}", estimate.len(), reference.len())));
    }
    let (mut dot, mut ss, mut ee) = (0.0f64, 0.0f64, 0.0f64);
    for (&e, &s) in estimate.iter().zip(reference) {
        let (e, s): (f64, f64) = (e.into(), s.into());
        dot += e * s;
        ss += s * s;
        ee += e * e;
    }
    if ss == 0.0 {
        return Err(CoreError::Silent("reference"));
    }
    if ee == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let alpha = dot / ss;
    let (mut target, mut err) = (0.0f64, 0.0f64);
    for (&e, &s) in estimate.iter().zip(reference) {
        let t = alpha * s.into();
        target += t * t;
        let d = t - e.into();
        err += d * d;
    }
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    if target == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (target / err).log10())
}

/// Clamp a dB value into the reporting range (infinities included).
pub fn clamp_report(db: f64) -> f64 {
    db.clamp(-REPORT_CLAMP_DB, REPORT_CLAMP_DB)
}

/// SI-SDR clamped for tables.
pub fn si_sdr_report<T: Copy + Into<f64>>(estimate: &[T], reference: &[T]) -> Result<f64> {
    si_sdr(estimate, reference).map(clamp_report)
}

fn sum_keep<F: Real>(g: &mut Graph<F>, x: Var) -> Result<Var> {
    let s = g.sum(x, None)?;
    Ok(g.reshape(s, &[1, 1])?)
}

/// Negative SI-SDR of a `[1, T]` estimate against a fixed reference.
pub fn si_sdr_loss<F: Real>(g: &mut Graph<F>, estimate: Var, reference: &[F]) -> Result<Var> {
    let shape = g.shape(estimate).to_vec();
    if shape.iter().product::<usize>() != reference.len() {
        return Err(CoreError::Shape(format!("estimate {shape:?} vs reference of {} samples", reference.len())));
    }
    let ss: f64 = reference.iter().map(|&x| x.as_f64() * x.as_f64()).sum();
    if ss == 0.0 {
        return Err(CoreError::Silent("reference"));
    }
    let s = g.constant(Tensor::new(shape, reference.to_vec())?);
    let prod = g.mul(estimate, s)?;
    let dot = sum_keep(g, prod)?;
    let alpha = g.scale(dot, 1.0 / (ss + SDR_EPS))?;
    let target = g.mul(s, alpha)?;
    let t2 = g.mul(target, target)?;
    let t2 = sum_keep(g, t2)?;
    let num = g.offset(t2, SDR_EPS)?;
    let den = g.squared_error(target, estimate)?;
    let den = g.reshape(den, &[1, 1])?;
    let den = g.offset(den, SDR_EPS)?;
    let ln_num = g.log(num)?;
    let ln_den = g.log(den)?;
    let diff = g.sub(ln_num, ln_den)?;
    let loss = g.scale(diff, -10.0 / std::f64::consts::LN_10)?;
    Ok(g.reshape(loss, &[])?)
}

/// Guided loss `sum_psi sum_t (a_psi,t - oracle_psi)^2 / T`, `None` when the
/// oracle is undefined.
pub fn attention_guided_loss<F: Real>(g: &mut Graph<F>, weights: Var, oracle: Option<[f64; 2]>) -> Result<Option<Var>> {
    let Some(o) = oracle else { return Ok(None) };
    let shape = g.shape(weights).to_vec();
    if shape.len() != 2 || shape[0] != 2 {
        return Err(CoreError::Shape(format!("attention weights must be [2, T], got {shape:?}")));
    }
    let t = shape[1];
    let mut target = vec![o[0]; t];
    target.extend(std::iter::repeat(o[1]).take(t));
    let target = g.constant(Tensor::from_f64(&shape, &target)?);
    let se = g.squared_error(weights, target)?;
    Ok(Some(g.scale(se, 1.0 / t as f64)?))
}

/// Reliability predictions bound in a graph.
#[derive(Clone, Copy, Debug, Default)]
pub struct Predictions {
    /// `[1, 1]`
    pub audio: Option<Var>,
    /// `[1, T]`
    pub visual: Option<Var>,
}

/// `(r_A - r_A*)^2 + sum_t (r_V,t - r_V,t*)^2 / T` over the predictions present.
pub fn clue_condition_loss<F: Real>(g: &mut Graph<F>, pred: &Predictions, targets: &OracleTargets) -> Result<Var> {
    let mut terms = Vec::new();
    if let Some(ra) = pred.audio {
        let target = g.constant(Tensor::from_f64(&[1, 1], &[targets.r_audio])?);
        terms.push(g.squared_error(ra, target)?);
    }
    if let Some(rv) = pred.visual {
        let t = g.shape(rv)[1];
        let r = repeat_to_frames(&targets.r_visual, t)?;
        let target = g.constant(Tensor::from_f64(&[1, t], &r)?);
        let se = g.squared_error(rv, target)?;
        terms.push(g.scale(se, 1.0 / t as f64)?);
    }
    let mut acc = match terms.first() {
        Some(&v) => v,
        None => return Ok(g.constant(Tensor::scalar(F::zero()))),
    };
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// Oracle attention pair for a clue condition; undefined for partial corruption.
pub fn oracle_attention_for_condition(condition: ClueCondition) -> Option<[f64; 2]> {
    match condition {
        ClueCondition::BothClean => Some([0.5, 0.5]),
        ClueCondition::VisualDead => Some([1.0, 0.0]),
        ClueCondition::AudioDead => Some([0.0, 1.0]),
        ClueCondition::Partial => None,
    }
}

/// Per-visual-frame `perimeter / 752` and audio `(snr + 20) / 40`; a clean
/// audio clue (`None`) scores 1.
pub fn oracle_reliability(mask: &MaskSpec, snr_db: Option<f64>, n_frames: usize) -> Result<(Vec<f64>, f64)> {
    let visual = mask.perimeters(n_frames)?.into_iter().map(|p| p as f64 / FULL_PERIMETER as f64).collect();
    let audio = match snr_db {
        None => 1.0,
        Some(s) if (-20.0..=20.0).contains(&s) => ((s + 20.0) / 40.0).clamp(0.0, 1.0),
        Some(s) => return Err(CoreError::OutOfRange(format!("snr {s} dB outside [-20, 20]"))),
    };
    Ok((visual, audio))
}

/// Stretch per-visual-frame values to `len` encoder frames by repeating each
/// frame `ceil(len / n)` times and padding with the last one.
pub fn repeat_to_frames(values: &[f64], len: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(CoreError::Shape("no frames to repeat".into()));
    }
    let factor = len.div_ceil(values.len()).max(1);
    Ok((0..len).map(|i| values[(i / factor).min(values.len() - 1)]).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleTargets {
    pub attention: Option<[f64; 2]>,
    pub r_audio: f64,
    /// One value per visual frame.
    pub r_visual: Vec<f64>,
}

impl OracleTargets {
    pub fn from_corruption(mask: &MaskSpec, snr_db: Option<f64>, n_frames: usize) -> Result<Self> {
        let (r_visual, r_audio) = oracle_reliability(mask, snr_db, n_frames)?;
        let attention = oracle_attention_for_condition(ClueCondition::classify(mask, snr_db));
        Ok(OracleTargets { attention, r_audio, r_visual })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 10.0, beta: 5.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(CoreError::OutOfRange(format!("loss weights must be nonnegative, got {self:?}")));
        }
        Ok(())
    }

    /// Describes a mode/weight combination that silently disables the
    /// auxiliary term.
    pub fn warning(&self, mode: MultitaskMode) -> Option<String> {
        match mode {
            MultitaskMode::Guided if self.alpha == 0.0 => Some("guided mode with alpha = 0: guided term disabled".into()),
            MultitaskMode::ClueAware if self.beta == 0.0 => {
                Some("clue-aware mode with beta = 0: reliability term disabled".into())
            }
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub sdr: Var,
    pub guided: Option<Var>,
    pub clue: Option<Var>,
}

/// Combined objective. Only the auxiliary term selected by `mode` is added,
/// and only when its weight is positive.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<F: Real>(
    g: &mut Graph<F>,
    estimate: Var,
    reference: &[F],
    fusion: &FusionVars,
    predictions: &Predictions,
    targets: &OracleTargets,
    weights: &LossWeights,
    mode: MultitaskMode,
) -> Result<LossTerms> {
    weights.validate()?;
    let sdr = si_sdr_loss(g, estimate, reference)?;
    let mut terms = LossTerms { total: sdr, sdr, guided: None, clue: None };
    match mode {
        MultitaskMode::None => {}
        MultitaskMode::Guided => {
            if weights.alpha > 0.0 {
                if let Some(aux) = attention_guided_loss(g, fusion.weights, targets.attention)? {
                    let aux = g.reshape(aux, &[])?;
                    let scaled = g.scale(aux, weights.alpha)?;
                    terms.total = g.add(sdr, scaled)?;
                    terms.guided = Some(aux);
                }
            }
        }
        MultitaskMode::ClueAware => {
            if weights.beta > 0.0 {
                if predictions.audio.is_none() && predictions.visual.is_none() {
                    return Err(CoreError::Shape("clue-aware loss needs reliability predictions".into()));
                }
                let aux = clue_condition_loss(g, predictions, targets)?;
                let aux = g.reshape(aux, &[])?;
                let scaled = g.scale(aux, weights.beta)?;
                terms.total = g.add(sdr, scaled)?;
                terms.clue = Some(aux);
            }
        }
    }
    Ok(terms)
}

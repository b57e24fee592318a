//! End-to-end gradient checks of the full model in 64-bit mode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tse_autodiff::{gradcheck, GradcheckOptions, GradcheckReport, Tensor};

use crate::config::{FusionMode, ModelConfig, MultitaskMode};
use crate::error::Result;
use crate::model::{ClueBundle, ExtractionModel, ForwardOptions};
use crate::objectives::{total_loss, LossWeights, OracleTargets};

/// Options for full-model checks: a 1e-5 step on a sample of each tensor.
pub fn model_check_options() -> GradcheckOptions {
    GradcheckOptions { step: 1e-5, tolerance: 1e-4, max_elements: 12, relative_floor: 1e-2, seed: 0 }
}

/// Gradient check of `total_loss` through the micro model for one
/// fusion/multitask combination.
pub fn model_gradcheck(
    fusion: FusionMode,
    multitask: MultitaskMode,
    seed: u64,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let config = ModelConfig::micro().with_modes(fusion, multitask);
    let model = ExtractionModel::<f64>::new(config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11);
    let mixture = Tensor::<f64>::randn(&[64], 0.5, &mut rng).into_data();
    let reference = Tensor::<f64>::randn(&[64], 0.5, &mut rng).into_data();
    let audio: Vec<f32> = Tensor::<f32>::randn(&[48], 0.5, &mut rng).into_data();
    let visual = Tensor::<f32>::randn(&[3, config.visual_dim], 1.0, &mut rng);
    let clues = ClueBundle::new(audio, visual);
    let targets = OracleTargets { attention: Some([0.8, 0.2]), r_audio: 0.7, r_visual: vec![0.1, 0.9, 0.4] };
    let weights = LossWeights::default();
    let fwd = ForwardOptions { fusion_override: None, predict: multitask == MultitaskMode::ClueAware };
    let mut store = model.params().clone();
    let report = gradcheck(
        &mut store,
        |g, s| {
            let m = ExtractionModel::from_params(config.clone(), s.clone()).map_err(to_ad)?;
            let out = m.forward(g, &mixture, &clues, &fwd).map_err(to_ad)?;
            let terms = total_loss(g, out.estimate, &reference, &out.fusion, &out.predictions, &targets, &weights, multitask)
                .map_err(to_ad)?;
            Ok(terms.total)
        },
        opts,
    )?;
    Ok(report)
}

fn to_ad(e: crate::error::CoreError) -> tse_autodiff::AutodiffError {
    match e {
        crate::error::CoreError::Autodiff(a) => a,
        other => tse_autodiff::AutodiffError::StateMismatch(other.to_string()),
    }
}

//! The full gradient-check suite behind `tse gradcheck`.

use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use tse_autodiff::suite::{dropped_gradient_fixture, run_primitive_suite};
use tse_core::checks::{model_check_options, model_gradcheck};
use tse_core::{FusionMode, MultitaskMode};

/// Random instances per primitive kind.
pub const PRIMITIVE_TRIALS: usize = 20;

#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub worst: f64,
    pub passed: bool,
    /// Parameter paths above tolerance.
    pub failing: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckSummary {
    pub primitives: Vec<CheckLine>,
    pub models: Vec<CheckLine>,
    /// The deliberately wrong backward rule was rejected.
    pub fixture_detected: bool,
    pub seconds: f64,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.fixture_detected && self.primitives.iter().chain(&self.models).all(|l| l.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in self.primitives.iter().chain(&self.models) {
            out += &format!("{:<6} {:<34} worst rel. error {:.2e}", if l.passed { "ok" } else { "FAIL" }, l.name, l.worst);
            if !l.failing.is_empty() {
                out += &format!("  [{}]", l.failing.join(", "));
            }
            out.push('\n');
        }
        out += &format!(
            "{:<6} {:<34}\n",
            if self.fixture_detected { "ok" } else { "FAIL" },
            "broken backward rule detected"
        );
        out += &format!("{:.1} s\n", self.seconds);
        out
    }
}

pub fn run_gradcheck_suite() -> Result<GradcheckSummary> {
    let started = Instant::now();
    let primitives = run_primitive_suite(PRIMITIVE_TRIALS)?
        .into_iter()
        .map(|r| CheckLine { name: format!("primitive {}", r.kind), worst: r.worst, passed: r.passed, failing: Vec::new() })
        .collect();
    let opts = model_check_options();
    let mut models = Vec::new();
    for fusion in FusionMode::ALL {
        for multitask in [MultitaskMode::None, MultitaskMode::Guided, MultitaskMode::ClueAware] {
            let report = model_gradcheck(fusion, multitask, 17, &opts)?;
            models.push(CheckLine {
                name: format!("model {}/{}", fusion.as_str(), multitask.as_str()),
                worst: report.worst(),
                passed: report.passed(),
                failing: report.failures().map(|p| p.name.clone()).collect(),
            });
        }
    }
    let fixture = dropped_gradient_fixture()?;
    Ok(GradcheckSummary {
        primitives,
        models,
        fixture_detected: !fixture.passed(),
        seconds: started.elapsed().as_secs_f64(),
    })
}

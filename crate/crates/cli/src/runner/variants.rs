//! Coverage runs under modified conditions: heavy-tailed or skewed noise,
//! no weight decay, a network simulator, and a sweep over the retrain
//! fraction. Each variant writes into its own subdirectory.

use bde::intervals::Method;
use bde::NoiseModel;
use serde::{Deserialize, Serialize};

use super::coverage::{run_coverage, CoverageSummary};
use crate::config::{Experiment, ExperimentConfig, SimulatorKind, Variant};
use crate::error::Result;
use crate::output::{write_json, SUMMARY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantEntry {
    pub variant: Variant,
    pub dir: String,
    pub summary: CoverageSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantsSummary {
    pub experiment: String,
    pub variants: Vec<VariantEntry>,
}

impl VariantsSummary {
    pub fn get(&self, v: Variant) -> Option<&CoverageSummary> {
        self.variants.iter().find(|e| e.variant == v).map(|e| &e.summary)
    }
}

/// The variants selected by the experiment tag, or `variants.which`.
fn selected(cfg: &ExperimentConfig) -> Vec<Variant> {
    match cfg.experiment {
        Experiment::NoiseVariant => vec![Variant::T3, Variant::Gamma],
        Experiment::NoReg => vec![Variant::NoReg],
        Experiment::RSweep => vec![Variant::RSweep],
        _ => cfg.variants.which.clone(),
    }
}

pub fn run_variants(cfg: &ExperimentConfig) -> Result<VariantsSummary> {
    cfg.validate()?;
    let mut variants = Vec::new();
    for v in selected(cfg) {
        let mut c = cfg.clone();
        c.out = cfg.out.join(v.dir_name());
        let mut fractions = vec![cfg.ensemble.retrain_fraction];
        let tag = match v {
            Variant::Baseline => "exp1",
            Variant::T3 | Variant::Gamma => {
                c.noise = if v == Variant::T3 {
                    NoiseModel::StudentT3
                } else {
                    NoiseModel::Gamma
                };
                c.experiment = Experiment::NoiseVariant;
                "noise_variant"
            }
            Variant::NoReg => {
                c.network.l2_coefficient = Some(0.0);
                c.experiment = Experiment::NoReg;
                "no_reg"
            }
            Variant::NnSimulator => {
                c.simulator = SimulatorKind::Nn;
                "nn_simulator"
            }
            Variant::RSweep => {
                c.methods = vec![Method::Bde];
                c.experiment = Experiment::RSweep;
                fractions = cfg.variants.r_grid.clone();
                "r_sweep"
            }
        };
        let summary = run_coverage(&c, tag, &fractions)?;
        variants.push(VariantEntry {
            variant: v,
            dir: v.dir_name().to_string(),
            summary,
        });
    }
    let summary = VariantsSummary {
        experiment: "variants".into(),
        variants,
    };
    write_json(&cfg.out.join(SUMMARY), &summary)?;
    Ok(summary)
}

//! Reference inference methods used to check the variational engine.

mod horseshoe;
mod rwmh;

pub use horseshoe::{
    gibbs_conditionals, gibbs_horseshoe, mfvb_elbo, mfvb_horseshoe, vgc_ln_deterministic, vgc_ln_elbo,
    vgc_ln_gradient, GibbsConditionals, MfvbHorseshoeState, VgcLnFit, VgcLnHorseshoeParams, VgcLnMode,
};
pub use rwmh::{
    laplace_proposal, log_acceptance_ratio, rwmh_sample, to_constrained, to_unconstrained, unconstrained_log_density,
    LaplaceFit, RwmhConfig, RwmhResult,
};

use std::path::Path;

use crate::error::Result;

/// One row per draw, header from `names`.
pub fn write_samples_csv(path: impl AsRef<Path>, names: &[String], samples: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for s in samples {
        w.write_record(s.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

use anyhow::Result;

use ecgnet::data::synth::{generate_synthetic_dataset, RhythmRegistry, SynthConfig};

use crate::config::RunConfig;

pub fn run(cfg: RunConfig) -> Result<()> {
    let out = super::prepare_out(&cfg)?;
    let sc = SynthConfig {
        n_records: cfg.synth.n_records,
        classes: cfg.synth.classes.clone(),
        n_leads: cfg.synth.n_leads,
        n_samples: cfg.data.nsteps,
        fs: cfg.data.fs,
        seed: cfg.seed,
    };
    let manifest = generate_synthetic_dataset(&sc, &RhythmRegistry::with_builtins(), &out)?;
    log::info!("wrote {} records", manifest.len());
    println!("{}", out.join("manifest.csv").display());
    Ok(())
}

use std::fmt::Write as _;

use anyhow::{Context, Result};
use rand::seq::index::sample;

use ecgnet::data::{records_to_tensor, DiagnosticClass, EcgRecord};
use ecgnet::explain::{
    expected_gradients, patient_explanation, population_report, render_explanation_svg,
    ContributionAccumulator, ContributionMode, ExplainConfig, PatientExplanation, Sampling,
    ShapMatrix,
};
use ecgnet::model::{load_checkpoint, Network};
use ecgnet::seed;
use ecgnet::tensor::Tensor;
use ecgnet::train::prepare_records;

use super::{checkpoint_leads, checkpoint_roles, require, select_records, UsageError};
use crate::config::RunConfig;

struct Explained {
    sv: ShapMatrix,
    expl: PatientExplanation,
    probability: f64,
    svg: String,
}

fn explain_one(
    net: &Network,
    rec: &EcgRecord,
    background: &Tensor,
    ecfg: &ExplainConfig,
    top_only: bool,
    top_leads: usize,
    window_seconds: f64,
) -> Result<Explained> {
    let x = records_to_tensor(&[rec])?;
    let probs = net.predict(&x)?.into_data();
    let top = probs
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if *p > probs[best] { i } else { best });
    let outputs = [top];
    let sv = expected_gradients(
        net,
        &rec.record_id,
        &x,
        background,
        ecfg,
        top_only.then_some(&outputs[..]),
    )?;
    let expl = patient_explanation(&sv, &probs)?;
    let window = window_seconds.min(rec.n_samples() as f64 / rec.fs);
    let svg = render_explanation_svg(rec, &expl, top_leads, window)?;
    Ok(Explained {
        sv,
        probability: probs[expl.class],
        expl,
        svg,
    })
}

pub fn run(mut cfg: RunConfig) -> Result<()> {
    let ckpt = require(&cfg.explain.checkpoint, "--checkpoint")?.clone();
    let (net, meta) = load_checkpoint(&ckpt)?;
    cfg.data.leads = meta.leads.clone();
    cfg.data.nsteps = net.cfg.nsteps;
    let out = super::prepare_out(&cfg)?;
    let leads = checkpoint_leads(&meta)?;
    net.ensure_input(leads.len(), net.cfg.nsteps)?;
    let e = &cfg.explain;
    let mode: ContributionMode = e.mode.parse()?;
    let sampling: Sampling = e.sampling.parse()?;
    let top_only = match e.classes.as_str() {
        "all" => false,
        "top" => true,
        other => anyhow::bail!(UsageError(format!(
            "--classes must be `all` or `top`, got `{other}`"
        ))),
    };
    let ecfg = ExplainConfig {
        n_samples: e.mc_samples,
        sampling,
        batch: e.batch,
        seed: cfg.seed,
    };

    let records = super::load_records(&cfg)?;
    let targets = prepare_records(
        &select_records(&records, &e.records, &meta)?,
        &leads,
        net.cfg.nsteps,
    )?;
    // Background: the checkpoint's training fold when known, else the whole dataset.
    let pool: Vec<&EcgRecord> = match checkpoint_roles(&meta, &records)? {
        Some(roles) => {
            let train: std::collections::HashSet<&str> =
                roles.train.iter().map(String::as_str).collect();
            records
                .iter()
                .filter(|r| train.contains(r.record_id.as_str()))
                .collect()
        }
        None => records.iter().collect(),
    };
    let n_bg = e.background.min(pool.len());
    if n_bg < e.background {
        log::warn!(
            "only {} records available for a background of {}",
            pool.len(),
            e.background
        );
    }
    let mut rng = seed::rng(cfg.seed, "explain/background");
    let mut picked = sample(&mut rng, pool.len(), n_bg).into_vec();
    picked.sort_unstable();
    let bg_records: Vec<EcgRecord> = picked.iter().map(|&i| pool[i].clone()).collect();
    let bg = prepare_records(&bg_records, &leads, net.cfg.nsteps)?;
    let background = records_to_tensor(&bg.iter().collect::<Vec<_>>())?;

    if let Some(r) = targets
        .iter()
        .find(|r| e.window_seconds > r.n_samples() as f64 / r.fs)
    {
        log::warn!(
            "{} s window is longer than the records ({} s for {}); plotting whole records instead",
            e.window_seconds,
            r.n_samples() as f64 / r.fs,
            r.record_id
        );
    }
    let patients = out.join("patients");
    std::fs::create_dir_all(&patients)
        .with_context(|| format!("creating {}", patients.display()))?;
    let mut acc = ContributionAccumulator::new(DiagnosticClass::ALL.len(), leads.len(), mode);
    let mut table = String::from("record_id,predicted,probability,lead_ranking\n");
    for wave in targets.chunks(cfg.jobs.max(1)) {
        let results: Vec<Result<Explained>> = std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|rec| {
                    let (net, background, ecfg) = (&net, &background, &ecfg);
                    s.spawn(move || {
                        explain_one(
                            net,
                            rec,
                            background,
                            ecfg,
                            top_only,
                            e.top_leads,
                            e.window_seconds,
                        )
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("explanation thread panicked"))
                .collect()
        });
        for (rec, res) in wave.iter().zip(results) {
            let r = res?;
            acc.add(&r.sv)?;
            let path = patients.join(format!("{}.svg", rec.record_id));
            std::fs::write(&path, &r.svg).with_context(|| format!("writing {}", path.display()))?;
            let ranking: Vec<&str> = r
                .expl
                .lead_ranking
                .iter()
                .map(|&k| leads[k].name())
                .collect();
            let class = DiagnosticClass::from_index(r.expl.class).map_or("?", |c| c.code());
            writeln!(
                table,
                "{},{class},{:.6},{}",
                rec.record_id,
                r.probability,
                ranking.join(";")
            )?;
        }
    }
    std::fs::write(out.join("patients.csv"), table).context("writing patients.csv")?;
    let report = population_report(&acc.finish(), &leads)?;
    std::fs::write(out.join("population.csv"), report.csv).context("writing population.csv")?;
    std::fs::write(out.join("population.svg"), report.svg).context("writing population.svg")?;
    println!(
        "explained {} records against {} background inputs",
        targets.len(),
        n_bg
    );
    Ok(())
}

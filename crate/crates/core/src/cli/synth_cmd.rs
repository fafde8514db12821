use super::tables::{diagnosis_row, DIAGNOSES, DIAGNOSES_HEADER};
use super::{digests, Completion, RunContext};
use crate::raster::pgm::save_pgm;
use crate::report::write_table;
use crate::rng;
use crate::synth::{corrupt, generate_with, NoiseModel, SynthSpec};
use anyhow::{Context, Result};
use rayon::prelude::*;
use std::path::Path;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn case_id(i: usize) -> String {
    format!("case{i:04}")
}

pub(super) fn run(ctx: &RunContext, spec_path: &Path, noise_path: Option<&Path>, count: usize) -> Result<Completion> {
    let mut spec: SynthSpec = read_json(spec_path)?;
    if let Some(seed) = ctx.settings.seed_override {
        spec.seed = seed;
    }
    spec.validate()?;
    let noise: Option<NoiseModel> = noise_path.map(read_json).transpose()?;
    if let Some(n) = &noise {
        n.validate()?;
    }
    let mut inputs = vec![spec_path];
    inputs.extend(noise_path);
    let params = serde_json::json!({
        "count": count,
        "profile": ctx.settings.profile_name,
        "spec": spec,
        "noise": noise,
    });
    ctx.manifest("synth", params, digests(&inputs, ctx.config_path.as_deref())?).write(&ctx.out)?;
    if count == 0 {
        return Ok(Completion::Ok);
    }

    let masks = ctx.out.join("masks");
    std::fs::create_dir_all(&masks).with_context(|| format!("creating {}", masks.display()))?;
    let noisy = ctx.out.join("noisy");
    if noise.is_some() {
        std::fs::create_dir_all(&noisy).with_context(|| format!("creating {}", noisy.display()))?;
    }
    let results: Vec<Result<Vec<String>>> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<Vec<String>> {
            let id = case_id(i);
            let case_spec = spec.with_seed(rng::derive_seed(spec.seed, rng::SYNTH_CASE, i as u64));
            let case = generate_with(&case_spec, &ctx.settings.profile).with_context(|| format!("generating {id}"))?;
            let file = format!("{id}.pgm");
            save_pgm(&case.mask, masks.join(&file)).with_context(|| format!("writing {file}"))?;
            if let Some(n) = &noise {
                let case_noise = NoiseModel { seed: rng::derive_seed(n.seed, rng::SYNTH_NOISE, i as u64), ..n.clone() };
                let out = corrupt(&case.mask, &case_noise)?;
                save_pgm(&out, noisy.join(&file)).with_context(|| format!("writing noisy {file}"))?;
            }
            Ok(diagnosis_row(&id, &case.truth))
        })
        .collect();
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    write_table(&ctx.out.join("ground_truth.csv"), DIAGNOSES, &DIAGNOSES_HEADER, rows)?;
    Ok(Completion::Ok)
}

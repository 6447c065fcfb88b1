use std::collections::BTreeMap;
use std::fs;

use anyhow::{anyhow, bail, Result};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uvc::codec::{collect_training_pairs, EncoderConfig, Tools};
use uvc::nnlf::{qp_band, train as fit, Architecture, ModelBank, ModelKind, ModelWeights, TrainConfig, TrainPair};

use crate::commands::{clip, gop, load_clip, qp_value};
use crate::config::Settings;

pub const DEFAULT_QPS: [i64; 5] = [22, 27, 32, 37, 42];

pub fn train(s: &Settings) -> Result<()> {
    let (input, width, height, frames) = clip(s)?;
    let out = s
        .output_path("out")?
        .ok_or_else(|| anyhow!("missing setting `out` (flag --out or config key out)"))?;
    let qps = s
        .list::<i64>("qps")?
        .unwrap_or(DEFAULT_QPS.to_vec())
        .into_iter()
        .map(|q| qp_value("qps", q))
        .collect::<Result<Vec<_>>>()?;
    if qps.is_empty() {
        bail!("`qps` is empty");
    }
    let d = TrainConfig::default();
    let tc = TrainConfig {
        steps: s.parse_or("steps", d.steps)?,
        step_size: s.parse_or("step-size", d.step_size)?,
        batch: s.parse_or("batch", d.batch)?,
        patch: s.parse_or("patch", d.patch)?,
        seed: s.parse_or("seed", d.seed)?,
    };
    if tc.steps == 0 || tc.batch == 0 || tc.patch == 0 || !(tc.step_size > 0.0 && tc.step_size.is_finite()) {
        bail!("`steps`, `batch`, `patch` and `step-size` must be positive");
    }
    let da = Architecture::default();
    let arch = Architecture {
        width: s.parse_or("net.width", da.width)?,
        blocks: s.parse_or("net.blocks", da.blocks)?,
    };
    if arch.width == 0 {
        bail!("`net.width` must be positive");
    }
    let gop = gop(s)?;
    let clip = load_clip(&input, width, height, frames)?;

    let mut groups: BTreeMap<(u8, u8), Vec<TrainPair>> = BTreeMap::new();
    for qp in qps {
        let cfg = EncoderConfig::new(qp, gop, Tools::NONE);
        for (kind, pic_qp, pair) in collect_training_pairs(&clip, &cfg)? {
            groups
                .entry((kind.code(), qp_band(pic_qp) as u8))
                .or_default()
                .push(pair);
        }
    }

    let mut bank = ModelBank::new();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    for ((code, band), pairs) in &groups {
        let kind = ModelKind::from_code(*code).expect("collected kinds are valid");
        let mut init = ModelWeights::standard(kind, arch);
        init.randomize(&mut rng, 1.0);
        let outcome = fit(&init, pairs, &tc)?;
        let first = outcome.losses.first().copied().unwrap_or(0.0);
        let last = outcome.losses.last().copied().unwrap_or(0.0);
        info!(
            "{} band {band}: {} pairs, loss {first:.3e} -> {last:.3e}",
            kind.name(),
            pairs.len()
        );
        println!(
            "{} band {band}: {} pictures, loss {first:.3e} -> {last:.3e}",
            kind.name(),
            pairs.len()
        );
        bank.insert(*band, outcome.model)?;
    }
    fs::create_dir_all(&out)?;
    bank.save_dir(&out)?;
    println!("wrote {} models to {}", groups.len(), out.display());
    Ok(())
}

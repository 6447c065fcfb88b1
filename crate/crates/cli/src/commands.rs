use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use uvc::bim::check_thresholds;
use uvc::codec::{decode_sequence, encode_sequence, frame_md5, EncoderConfig, GopType, PictureStats, Tools};
use uvc::metrics::{bd_reports, format_report, read_curves, write_report_csv};
use uvc::nnlf::ModelBank;
use uvc::transform::{Qp, QP_MAX};
use uvc::{load_yuv420, save_yuv420, FrameBuffer};

use crate::config::Settings;

pub fn qp_value(key: &str, v: i64) -> Result<Qp> {
    if !(0..=QP_MAX as i64).contains(&v) {
        bail!("`{key}` must be within [0, {QP_MAX}], got {v}");
    }
    Ok(Qp::new(v as i32)?)
}

pub fn gop(s: &Settings) -> Result<GopType> {
    GopType::parse(s.get("gop").unwrap_or("ra")).map_err(|e| anyhow!("`gop`: {e}"))
}

pub fn tools(s: &Settings) -> Result<Tools> {
    let mut t = Tools::parse(s.get("tools").unwrap_or("none")).map_err(|e| anyhow!("`tools`: {e}"))?;
    if let Some(on) = s.parse::<bool>("bim.enabled")? {
        t.bim = on;
    }
    Ok(t)
}

/// Coding options shared by encode and ablate, at `qp`.
pub fn encoder_config(s: &Settings, qp: Qp, tools: Tools) -> Result<EncoderConfig> {
    let mut cfg = EncoderConfig::new(qp, gop(s)?, tools);
    cfg.max_depth = s.parse_or("max-depth", cfg.max_depth)?;
    if cfg.max_depth > 8 {
        bail!("`max-depth` must be at most 8, got {}", cfg.max_depth);
    }
    cfg.search_range = s.parse_or("search-range", cfg.search_range)?;
    if !(1..=64).contains(&cfg.search_range) {
        bail!("`search-range` must be within [1, 64], got {}", cfg.search_range);
    }
    if let Some(sigma) = s.parse::<f64>("bim.sigma")? {
        if !(sigma.is_finite() && sigma > 0.0) {
            bail!("`bim.sigma` must be positive, got {sigma}");
        }
        cfg.bim.sigma = Some(sigma);
    }
    if let Some(t) = s.list::<f64>("bim.thresholds")? {
        cfg.bim.thresholds = t
            .try_into()
            .map_err(|t: Vec<f64>| anyhow!("`bim.thresholds` needs 4 values, got {}", t.len()))?;
        check_thresholds(&cfg.bim.thresholds).map_err(|e| anyhow!("`bim.thresholds`: {e}"))?;
    }
    Ok(cfg)
}

/// Filter models from `weights`, when that key is set.
pub fn bank(s: &Settings) -> Result<Option<ModelBank>> {
    match s.input_dir("weights")? {
        Some(dir) => {
            let bank = ModelBank::load_dir(&dir).with_context(|| format!("loading weights from {}", dir.display()))?;
            if bank.is_empty() {
                bail!("`weights`: no weight files in {}", dir.display());
            }
            Ok(Some(bank))
        }
        None => Ok(None),
    }
}

/// The input clip, checked and trimmed to `frames`.
pub fn clip(s: &Settings) -> Result<(PathBuf, usize, usize, Option<usize>)> {
    let input = s.input_file("input")?;
    let width: usize = s.required("width")?;
    let height: usize = s.required("height")?;
    for (key, v) in [("width", width), ("height", height)] {
        if v == 0 || v % 64 != 0 || v > u16::MAX as usize {
            bail!("`{key}` must be a positive multiple of 64 below 65536, got {v}");
        }
    }
    let frames = s.parse::<usize>("frames")?;
    if frames == Some(0) {
        bail!("`frames` must be positive");
    }
    Ok((input, width, height, frames))
}

pub fn load_clip(path: &Path, width: usize, height: usize, frames: Option<usize>) -> Result<Vec<FrameBuffer>> {
    let mut clip = load_yuv420(path, width, height).with_context(|| format!("reading {}", path.display()))?;
    if let Some(n) = frames {
        clip.truncate(n);
    }
    if clip.is_empty() {
        bail!("`input`: {} holds no complete frame", path.display());
    }
    Ok(clip)
}

pub fn write_stats(path: &Path, stats: &[PictureStats]) -> Result<()> {
    let mut rows: Vec<&PictureStats> = stats.iter().collect();
    rows.sort_by_key(|s| s.poc);
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "poc,layer,qp_effective_mean,bits,psnr_y,psnr_u,psnr_v")?;
    for s in rows {
        writeln!(
            w,
            "{},{},{:.4},{},{:.4},{:.4},{:.4}",
            s.poc, s.layer, s.qp_effective_mean, s.bits, s.psnr[0], s.psnr[1], s.psnr[2]
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One `<poc> <md5>` line per frame.
pub fn write_md5(path: &Path, frames: &[FrameBuffer]) -> Result<()> {
    let text: String = frames
        .iter()
        .enumerate()
        .map(|(i, f)| format!("{i} {}\n", frame_md5(f)))
        .collect();
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_md5(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| match l.split_whitespace().collect::<Vec<_>>()[..] {
            [poc, hash] if poc.parse::<usize>() == Ok(i) && hash.len() == 32 => Ok(hash.to_ascii_lowercase()),
            _ => Err(anyhow!("{}:{}: expected `{i} <md5>`", path.display(), i + 1)),
        })
        .collect()
}

pub fn encode(s: &Settings) -> Result<()> {
    let (input, width, height, frames) = clip(s)?;
    let out = s
        .output_path("out")?
        .ok_or_else(|| anyhow!("missing setting `out` (flag --out or config key out)"))?;
    let stats_path = s.output_path("stats")?.unwrap_or_else(|| out.with_extension("csv"));
    let md5_path = s.output_path("md5")?;
    let recon_path = s.output_path("recon")?;
    let qp = qp_value("qp", s.parse_or("qp", 32i64)?)?;
    let tools = tools(s)?;
    let cfg = encoder_config(s, qp, tools)?;
    let bank = bank(s)?;
    if tools.nnlf && bank.is_none() {
        bail!("the nnlf tool needs `weights`, a directory of weight files");
    }

    let clip = load_clip(&input, width, height, frames)?;
    info!(
        "encoding {} frames of {width}x{height} at qp {}",
        clip.len(),
        qp.value()
    );
    let enc = encode_sequence(&clip, &cfg, bank.as_ref())?;
    fs::write(&out, &enc.bytes).with_context(|| format!("writing {}", out.display()))?;
    write_stats(&stats_path, &enc.stats)?;
    if let Some(p) = md5_path {
        write_md5(&p, &enc.recon)?;
    }
    if let Some(p) = recon_path {
        save_yuv420(&enc.recon, &p)?;
    }
    let n = enc.stats.len() as f64;
    let mean = |c: usize| enc.stats.iter().map(|st| st.psnr[c]).sum::<f64>() / n;
    println!(
        "{} frames, {} bytes, psnr y {:.2} u {:.2} v {:.2} dB, tools {}",
        enc.stats.len(),
        enc.bytes.len(),
        mean(0),
        mean(1),
        mean(2),
        tools.name()
    );
    Ok(())
}

pub fn decode(s: &Settings) -> Result<()> {
    let input = s.input_file("input")?;
    let out = s.output_path("out")?;
    let md5_path = s.output_path("md5")?;
    let expect = s.get("expect-md5").map(|_| s.input_file("expect-md5")).transpose()?;
    let bank = bank(s)?;

    let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
    let dec = decode_sequence(&bytes, bank.as_ref()).with_context(|| format!("decoding {}", input.display()))?;
    if let Some(p) = &expect {
        let want = read_md5(p)?;
        if want.len() != dec.frames.len() {
            bail!(
                "{} lists {} frames, stream has {}",
                p.display(),
                want.len(),
                dec.frames.len()
            );
        }
        for (i, (f, w)) in dec.frames.iter().zip(&want).enumerate() {
            let got = frame_md5(f);
            if &got != w {
                bail!("frame {i}: md5 {got} does not match expected {w}");
            }
        }
    }
    if let Some(p) = &out {
        save_yuv420(&dec.frames, p)?;
    }
    if let Some(p) = &md5_path {
        write_md5(p, &dec.frames)?;
    }
    let h = &dec.header;
    println!(
        "{} frames of {}x{}, gop {}, tools {}{}",
        dec.frames.len(),
        h.width,
        h.height,
        h.gop.name(),
        h.tools.name(),
        if expect.is_some() { ", md5 match" } else { "" }
    );
    Ok(())
}

pub fn metrics(s: &Settings) -> Result<()> {
    let path = s.input_file("curves")?;
    let report = s.output_path("report")?;
    let anchor = s.get("anchor").unwrap_or("anchor");
    let table = read_curves(File::open(&path)?).with_context(|| format!("reading {}", path.display()))?;
    let reports = bd_reports(&table, anchor)?;
    print!("{}", format_report(&reports));
    if let Some(p) = report {
        write_report_csv(
            &reports,
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        )?;
    }
    Ok(())
}

use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};

use uvc::codec::{encode_sequence, Tools};
use uvc::metrics::{bd_reports, format_report, write_report_csv, Component, CurveTable, RdPoint};

use crate::commands::{bank, clip, encoder_config, load_clip, qp_value};
use crate::config::Settings;
use crate::train::DEFAULT_QPS;

pub const ANCHOR: &str = "anchor";

pub fn ablate(s: &Settings) -> Result<()> {
    let (input, width, height, frames) = clip(s)?;
    let curves_path = s.output_path("curves")?;
    let report_path = s.output_path("report")?;
    let fps: f64 = s.parse_or("fps", 30.0)?;
    if !(fps > 0.0 && fps.is_finite()) {
        bail!("`fps` must be positive, got {fps}");
    }
    let qps = s
        .list::<i64>("qps")?
        .unwrap_or(DEFAULT_QPS.to_vec())
        .into_iter()
        .map(|q| qp_value("qps", q))
        .collect::<Result<Vec<_>>>()?;
    if qps.len() < 4 {
        bail!("`qps` needs at least 4 values for BD-rate, got {}", qps.len());
    }
    let bank = bank(s)?;
    let toolsets: Vec<Tools> = match s.get("toolsets") {
        Some(v) => v
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| Tools::parse(t).map_err(|e| anyhow!("`toolsets`: {e}")))
            .collect::<Result<_>>()?,
        None => {
            let mut v = vec![Tools::parse("uqt")?, Tools::parse("uqt,bim")?];
            if bank.is_some() {
                v.push(Tools::parse("uqt,bim,nnlf")?);
            }
            v
        }
    };
    if toolsets.is_empty() {
        bail!("`toolsets` is empty");
    }
    if toolsets.iter().any(|t| t.nnlf) && bank.is_none() {
        bail!("a tool set uses nnlf but `weights` is not set");
    }
    let clip = load_clip(&input, width, height, frames)?;
    let seconds = clip.len() as f64 / fps;
    let mut runs: Vec<(String, Tools)> = vec![(ANCHOR.to_string(), Tools::NONE)];
    for t in toolsets {
        let label = t.name();
        if !runs.iter().any(|(l, _)| *l == label) {
            runs.push((label, t));
        }
    }

    let mut table = CurveTable::new();
    for (label, t) in &runs {
        let mut ok = 0;
        for &qp in &qps {
            let cfg = encoder_config(s, qp, *t)?;
            match encode_sequence(&clip, &cfg, bank.as_ref()) {
                Ok(out) => {
                    let kbps = out.bytes.len() as f64 * 8.0 / seconds / 1000.0;
                    let n = out.stats.len() as f64;
                    for (c, comp) in Component::ALL.into_iter().enumerate() {
                        let psnr = out.stats.iter().map(|st| st.psnr[c]).sum::<f64>() / n;
                        table
                            .entry(label.clone())
                            .or_default()
                            .entry(comp)
                            .or_default()
                            .push(RdPoint { kbps, psnr });
                    }
                    info!("{label} qp {}: {kbps:.2} kbps", qp.value());
                    ok += 1;
                }
                Err(e) => warn!("{label} qp {}: {e}", qp.value()),
            }
        }
        if ok < 4 {
            bail!(
                "{label}: only {ok} of {} QP points encoded; BD-rate needs at least 4",
                qps.len()
            );
        }
    }

    if let Some(p) = &curves_path {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        writeln!(w, "label,component,kbps,psnr")?;
        for (label, comps) in &table {
            for (comp, pts) in comps {
                for pt in pts {
                    writeln!(w, "{label},{},{:.6},{:.6}", comp.name(), pt.kbps, pt.psnr)?;
                }
            }
        }
        w.flush()?;
    }
    let reports = bd_reports(&table, ANCHOR)?;
    print!("{}", format_report(&reports));
    if let Some(p) = &report_path {
        write_report_csv(
            &reports,
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )?;
    }
    Ok(())
}

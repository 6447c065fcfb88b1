//! Bjøntegaard delta rate and curve bookkeeping.
//!
//! `log10(rate)` is interpolated as a function of PSNR with a monotone
//! piecewise cubic Hermite interpolant; the difference between the two
//! curves is integrated exactly over the common PSNR interval.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use log::warn;

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub kbps: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    /// Points must number at least four with positive, finite, strictly
    /// ascending bitrates. PSNR falling with bitrate only logs a warning.
    pub fn new(mut points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < MIN_POINTS {
            return Err(Error::invalid(format!(
                "rd curve needs {MIN_POINTS} points, got {}",
                points.len()
            )));
        }
        if points
            .iter()
            .any(|p| !(p.kbps > 0.0 && p.kbps.is_finite() && p.psnr.is_finite()))
        {
            return Err(Error::invalid("rd points need positive finite bitrate and finite psnr"));
        }
        points.sort_by(|a, b| a.kbps.total_cmp(&b.kbps));
        if points.windows(2).any(|w| w[0].kbps == w[1].kbps) {
            return Err(Error::invalid("duplicate bitrate in rd curve"));
        }
        if points.windows(2).any(|w| w[1].psnr < w[0].psnr) {
            warn!("psnr decreases with bitrate in rd curve");
        }
        Ok(RdCurve { points })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(kbps, psnr)| RdPoint { kbps, psnr }).collect())
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    /// (psnr, log10 rate) sorted by PSNR; PSNR values must be distinct.
    fn samples(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut s: Vec<(f64, f64)> = self.points.iter().map(|p| (p.psnr, p.kbps.log10())).collect();
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        if s.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("duplicate psnr in rd curve"));
        }
        Ok(s.into_iter().unzip())
    }

    fn psnr_range(&self) -> (f64, f64) {
        let lo = self.points.iter().map(|p| p.psnr).fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().map(|p| p.psnr).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson slopes with
/// the usual three-point end conditions).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("pchip needs at least two strictly ascending knots"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = del[0];
            d[1] = del[0];
            return Ok(Pchip { x, y, d });
        }
        for k in 1..n - 1 {
            if del[k - 1] * del[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
        }
        d[0] = end_slope(h[0], h[1], del[0], del[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        Ok(Pchip { x, y, d })
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.x.partition_point(|&v| v <= t);
        k.clamp(1, self.x.len() - 1) - 1
    }

    /// Power-basis coefficients of segment `k` in `s = t - x[k]`.
    fn coeffs(&self, k: usize) -> [f64; 4] {
        let h = self.x[k + 1] - self.x[k];
        let del = (self.y[k + 1] - self.y[k]) / h;
        let (d0, d1) = (self.d[k], self.d[k + 1]);
        [
            self.y[k],
            d0,
            (3.0 * del - 2.0 * d0 - d1) / h,
            (d0 + d1 - 2.0 * del) / (h * h),
        ]
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let c = self.coeffs(k);
        let s = t - self.x[k];
        c[0] + s * (c[1] + s * (c[2] + s * c[3]))
    }

    /// Exact integral over `[a, b]`, which must lie within the knot range.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.x.len() - 1 {
            let lo = a.max(self.x[k]);
            let hi = b.min(self.x[k + 1]);
            if hi <= lo {
                continue;
            }
            let c = self.coeffs(k);
            let prim = |s: f64| s * (c[0] + s * (c[1] / 2.0 + s * (c[2] / 3.0 + s * c[3] / 4.0)));
            total += prim(hi - self.x[k]) - prim(lo - self.x[k]);
        }
        total
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

fn overlap(anchor: &RdCurve, test: &RdCurve) -> Result<(f64, f64)> {
    let (a0, a1) = anchor.psnr_range();
    let (t0, t1) = test.psnr_range();
    let (lo, hi) = (a0.max(t0), a1.min(t1));
    if hi <= lo {
        return Err(Error::invalid("rd curves do not overlap in psnr"));
    }
    Ok((lo, hi))
}

/// BD-rate of `test` against `anchor` in percent; negative means savings.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (lo, hi) = overlap(anchor, test)?;
    let (ax, ay) = anchor.samples()?;
    let (tx, ty) = test.samples()?;
    let pa = Pchip::new(ax, ay)?;
    let pt = Pchip::new(tx, ty)?;
    let avg = (pt.integrate(lo, hi) - pa.integrate(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

/// The original formulation: a least-squares cubic polynomial per curve.
pub fn bd_rate_cubic(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (lo, hi) = overlap(anchor, test)?;
    let integral = |c: &RdCurve| -> Result<f64> {
        let (x, y) = c.samples()?;
        let p = polyfit3(&x, &y)?;
        let prim = |t: f64| p[0] * t + p[1] * t * t / 2.0 + p[2] * t.powi(3) / 3.0 + p[3] * t.powi(4) / 4.0;
        Ok(prim(hi) - prim(lo))
    };
    let avg = (integral(test)? - integral(anchor)?) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

/// Least-squares cubic `p0 + p1 x + p2 x^2 + p3 x^3`. Abscissae are centered
/// internally for conditioning.
fn polyfit3(x: &[f64], y: &[f64]) -> Result<[f64; 4]> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let mut a = [[0.0f64; 5]; 4];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi - m;
        let pw = [1.0, u, u * u, u * u * u];
        for r in 0..4 {
            for c in 0..4 {
                a[r][c] += pw[r] * pw[c];
            }
            a[r][4] += pw[r] * yi;
        }
    }
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::invalid("degenerate rd curve for cubic fit"));
        }
        a.swap(col, piv);
        for r in 0..4 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..5 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let q: Vec<f64> = (0..4).map(|i| a[i][4] / a[i][i]).collect();
    // Expand q(x - m) into powers of x.
    Ok([
        q[0] - q[1] * m + q[2] * m * m - q[3] * m * m * m,
        q[1] - 2.0 * q[2] * m + 3.0 * q[3] * m * m,
        q[2] - 3.0 * q[3] * m,
        q[3],
    ])
}

pub fn weighted_yuv(y: f64, u: f64, v: f64) -> f64 {
    (6.0 * y + u + v) / 8.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdReport {
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub yuv: f64,
}

impl BdReport {
    pub fn new(y: f64, u: f64, v: f64) -> Self {
        BdReport {
            y,
            u,
            v,
            yuv: weighted_yuv(y, u, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Y,
    U,
    V,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Y, Component::U, Component::V];

    pub fn parse(s: &str) -> Result<Component> {
        match s.trim().to_ascii_uppercase().as_str() {
            "Y" => Ok(Component::Y),
            "U" => Ok(Component::U),
            "V" => Ok(Component::V),
            other => Err(Error::MalformedInput(format!("unknown component {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Y => "Y",
            Component::U => "U",
            Component::V => "V",
        }
    }
}

/// Rows of `label, component, bitrate_kbps, psnr_db` keyed by label and
/// component. A header row is accepted when its third field is not a number.
pub type CurveTable = BTreeMap<String, BTreeMap<Component, Vec<RdPoint>>>;

pub fn read_curves(reader: impl Read) -> Result<CurveTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut table = CurveTable::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedInput(e.to_string()))?;
        if rec.len() != 4 {
            return Err(Error::MalformedInput(format!(
                "row {}: expected 4 fields, got {}",
                i + 1,
                rec.len()
            )));
        }
        let num = |k: usize| rec[k].parse::<f64>();
        let (kbps, psnr) = match (num(2), num(3)) {
            (Ok(r), Ok(p)) => (r, p),
            _ if i == 0 => continue,
            _ => return Err(Error::MalformedInput(format!("row {}: bad number", i + 1))),
        };
        let comp = Component::parse(&rec[1])?;
        table
            .entry(rec[0].to_string())
            .or_default()
            .entry(comp)
            .or_default()
            .push(RdPoint { kbps, psnr });
    }
    Ok(table)
}

/// BD reports of every label against `anchor`.
pub fn bd_reports(table: &CurveTable, anchor: &str) -> Result<Vec<(String, BdReport)>> {
    let base = table
        .get(anchor)
        .ok_or_else(|| Error::invalid(format!("anchor {anchor:?} not in table")))?;
    let curve = |m: &BTreeMap<Component, Vec<RdPoint>>, label: &str, c: Component| {
        let pts = m
            .get(&c)
            .ok_or_else(|| Error::invalid(format!("{label} has no {} points", c.name())))?;
        RdCurve::new(pts.clone())
    };
    let mut out = Vec::new();
    for (label, m) in table.iter().filter(|(l, _)| l.as_str() != anchor) {
        let mut v = [0.0; 3];
        for (slot, c) in v.iter_mut().zip(Component::ALL) {
            *slot = bd_rate(&curve(base, anchor, c)?, &curve(m, label, c)?)?;
        }
        out.push((label.clone(), BdReport::new(v[0], v[1], v[2])));
    }
    Ok(out)
}

pub fn write_report_csv(reports: &[(String, BdReport)], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["label", "y", "u", "v", "yuv"]).map_err(err)?;
    for (label, r) in reports {
        w.write_record([
            label.clone(),
            format!("{:.4}", r.y),
            format!("{:.4}", r.u),
            format!("{:.4}", r.v),
            format!("{:.4}", r.yuv),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn format_report(reports: &[(String, BdReport)]) -> String {
    let width = reports.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{:<width$} {:>8} {:>8} {:>8} {:>8}\n", "label", "Y", "U", "V", "YUV");
    for (label, r) in reports {
        let _ = writeln!(
            s,
            "{label:<width$} {:>7.2}% {:>7.2}% {:>7.2}% {:>7.2}%",
            r.y, r.u, r.v, r.yuv
        );
    }
    s
}

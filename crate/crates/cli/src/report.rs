//! Run reports.
//!
//! The text form has one `key value` pair per line. Per-frame lines carry
//! the raw measurements and are enough to rebuild the report; aggregate
//! lines are derived from them and shown as `mean(std)`.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameRow {
    pub frame: usize,
    pub points: usize,
    pub integrate_s: f64,
    pub publish_s: f64,
    pub publish_bytes: usize,
    pub query_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub resolution: f64,
    pub frames: Vec<FrameRow>,
    pub memory_bytes: usize,
    pub nodes: usize,
    pub full_bytes: usize,
    pub unknown: u64,
    pub free: u64,
    pub occupied: u64,
    /// Per-class IoU rows: (method, class name, IoU in percent).
    pub iou: Vec<(String, String, f64)>,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// `value(uncertainty)` with the uncertainty in units of the last digit,
/// e.g. `0.04(1)`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    if !(std > 0.0) || !std.is_finite() {
        return format!("{mean:.4}(0)");
    }
    let decimals = (-std.log10().floor()).max(0.0) as usize;
    let mut digits = (std * 10f64.powi(decimals as i32)).round();
    let mut decimals = decimals;
    if digits >= 10.0 && decimals > 0 {
        decimals -= 1;
        digits = (std * 10f64.powi(decimals as i32)).round();
    }
    format!("{mean:.decimals$}({digits})")
}

impl RunReport {
    pub fn new(command: &str, resolution: f64) -> Self {
        Self {
            command: command.to_string(),
            resolution,
            ..Default::default()
        }
    }

    fn column(&self, f: impl Fn(&FrameRow) -> Option<f64>) -> Vec<f64> {
        self.frames.iter().filter_map(f).collect()
    }

    pub fn integrate(&self) -> (f64, f64) {
        mean_std(&self.column(|r| Some(r.integrate_s)))
    }

    pub fn publish(&self) -> (f64, f64) {
        mean_std(&self.column(|r| Some(r.publish_s)))
    }

    pub fn query(&self) -> Option<(f64, f64)> {
        let q = self.column(|r| r.query_s);
        (!q.is_empty()).then(|| mean_std(&q))
    }

    /// Mean delta size over frames after the first `warmup`.
    pub fn mean_publish_bytes(&self, warmup: usize) -> f64 {
        let v = self.column(|r| (r.frame >= warmup).then_some(r.publish_bytes as f64));
        mean_std(&v).0
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "report {}", self.command).unwrap();
        writeln!(s, "resolution {}", self.resolution).unwrap();
        writeln!(s, "frames {}", self.frames.len()).unwrap();
        let (m, d) = self.integrate();
        writeln!(s, "integrate_ms {}", format_mean_std(m * 1e3, d * 1e3)).unwrap();
        let (m, d) = self.publish();
        writeln!(s, "publish_ms {}", format_mean_std(m * 1e3, d * 1e3)).unwrap();
        if let Some((m, d)) = self.query() {
            writeln!(s, "query_ms {}", format_mean_std(m * 1e3, d * 1e3)).unwrap();
        }
        writeln!(s, "memory_bytes {}", self.memory_bytes).unwrap();
        writeln!(s, "memory_mib {:.2}", self.memory_bytes as f64 / (1 << 20) as f64).unwrap();
        writeln!(s, "nodes {}", self.nodes).unwrap();
        writeln!(s, "full_bytes {}", self.full_bytes).unwrap();
        writeln!(s, "voxels unknown={} free={} occupied={}", self.unknown, self.free, self.occupied).unwrap();
        for r in &self.frames {
            write!(
                s,
                "frame {} points={} integrate_s={} publish_s={} publish_bytes={}",
                r.frame, r.points, r.integrate_s, r.publish_s, r.publish_bytes
            )
            .unwrap();
            if let Some(q) = r.query_s {
                write!(s, " query_s={q}").unwrap();
            }
            s.push('\n');
        }
        for (method, class, v) in &self.iou {
            writeln!(s, "iou {method} {class} {v}").unwrap();
        }
        s
    }

    /// Inverse of [`RunReport::to_text`]. Derived lines are checked for
    /// shape only.
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = RunReport::default();
        let mut declared_frames = None;
        for (n, line) in text.lines().enumerate() {
            let ctx = || format!("report line {}", n + 1);
            let (key, rest) = line.split_once(' ').with_context(ctx)?;
            match key {
                "report" => r.command = rest.to_string(),
                "resolution" => r.resolution = rest.parse().with_context(ctx)?,
                "frames" => declared_frames = Some(rest.parse::<usize>().with_context(ctx)?),
                "integrate_ms" | "publish_ms" | "query_ms" | "memory_mib" => {}
                "memory_bytes" => r.memory_bytes = rest.parse().with_context(ctx)?,
                "nodes" => r.nodes = rest.parse().with_context(ctx)?,
                "full_bytes" => r.full_bytes = rest.parse().with_context(ctx)?,
                "voxels" => {
                    for kv in rest.split(' ') {
                        let (k, v) = kv.split_once('=').with_context(ctx)?;
                        let v: u64 = v.parse().with_context(ctx)?;
                        match k {
                            "unknown" => r.unknown = v,
                            "free" => r.free = v,
                            "occupied" => r.occupied = v,
                            _ => bail!("{}: unknown state `{k}`", ctx()),
                        }
                    }
                }
                "frame" => {
                    let mut parts = rest.split(' ');
                    let mut row = FrameRow {
                        frame: parts.next().with_context(ctx)?.parse().with_context(ctx)?,
                        ..Default::default()
                    };
                    for kv in parts {
                        let (k, v) = kv.split_once('=').with_context(ctx)?;
                        match k {
                            "points" => row.points = v.parse().with_context(ctx)?,
                            "integrate_s" => row.integrate_s = v.parse().with_context(ctx)?,
                            "publish_s" => row.publish_s = v.parse().with_context(ctx)?,
                            "publish_bytes" => row.publish_bytes = v.parse().with_context(ctx)?,
                            "query_s" => row.query_s = Some(v.parse().with_context(ctx)?),
                            _ => bail!("{}: unknown field `{k}`", ctx()),
                        }
                    }
                    r.frames.push(row);
                }
                "iou" => {
                    // Class names may contain spaces.
                    let (method, rest) = rest.split_once(' ').with_context(ctx)?;
                    let (class, v) = rest.rsplit_once(' ').with_context(ctx)?;
                    r.iou.push((method.to_string(), class.to_string(), v.parse().with_context(ctx)?));
                }
                _ => bail!("{}: unknown key `{key}`", ctx()),
            }
        }
        if declared_frames.is_some_and(|d| d != r.frames.len()) {
            bail!("report declares {} frames but lists {}", declared_frames.unwrap(), r.frames.len());
        }
        Ok(r)
    }

    pub fn csv_header() -> &'static str {
        "resolution,frame,points,integrate_s,publish_s,publish_bytes,query_s"
    }

    /// Per-frame table, one row per frame.
    pub fn to_csv_rows(&self) -> String {
        let mut s = String::new();
        for r in &self.frames {
            let q = r.query_s.map(|q| q.to_string()).unwrap_or_default();
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.resolution, r.frame, r.points, r.integrate_s, r.publish_s, r.publish_bytes, q
            )
            .unwrap();
        }
        s
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::csv_header(), self.to_csv_rows())
    }
}

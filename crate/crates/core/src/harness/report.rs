use std::fmt::Write as _;

use crate::error::{config_err, Error, Result};

use super::config::Algorithm;
use super::train::{EvalRecord, METRICS_HEADER};

/// Reads metrics.csv text. An empty wall-time field reads as NaN.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<EvalRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => return Err(Error::Parse { line: 1, msg: "missing metrics header".into() }),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Parse { line: i + 1, msg: format!("bad {what} in `{line}`") };
        if f.len() != 7 {
            return Err(bad("field count"));
        }
        let real = |s: &str, what: &str| -> Result<f64> {
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| bad(what))
            }
        };
        out.push(EvalRecord {
            update_index: f[0].parse().map_err(|_| bad("update_index"))?,
            avg_reward: real(f[1], "avg_reward")?,
            eval_episodes: f[2].parse().map_err(|_| bad("eval_episodes"))?,
            fresh_samples: f[3].parse().map_err(|_| bad("fresh_samples"))?,
            wall_ms_per_update: real(f[4], "wall_ms_per_update")?,
            mean_target_q: real(f[5], "mean_target_q")?,
            loss: real(f[6], "loss")?,
        });
    }
    Ok(out)
}

/// Trailing moving average; `window == 1` returns the input.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// A named metrics log, optionally tagged with the algorithm that made it.
#[derive(Clone, Debug)]
pub struct LabeledLog {
    pub label: String,
    pub algo: Option<Algorithm>,
    pub records: Vec<EvalRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub update_index: Vec<u64>,
    pub labels: Vec<String>,
    /// One smoothed avg_reward curve per log, aligned with `update_index`.
    pub curves: Vec<Vec<f64>>,
    /// Mean per-update wall time of the DQN log over that of the UDQN log,
    /// when both are present and timed.
    pub dqn_udqn_time_ratio: Option<f64>,
}

/// Mean of the finite per-update wall times of a log.
pub fn mean_wall_ms(records: &[EvalRecord]) -> Option<f64> {
    let v: Vec<f64> = records.iter().map(|r| r.wall_ms_per_update).filter(|w| w.is_finite()).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn compare_report(logs: &[LabeledLog], window: usize) -> Result<Comparison> {
    let first = logs.first().ok_or_else(|| Error::Config("no logs to compare".into()))?;
    let grid: Vec<u64> = first.records.iter().map(|r| r.update_index).collect();
    for log in logs {
        if !log.records.iter().map(|r| r.update_index).eq(grid.iter().copied()) {
            return config_err(format!("log `{}` uses a different evaluation grid", log.label));
        }
    }
    let wall = |a: Algorithm| logs.iter().find(|l| l.algo == Some(a)).and_then(|l| mean_wall_ms(&l.records));
    let ratio = match (wall(Algorithm::Dqn), wall(Algorithm::Udqn)) {
        (Some(d), Some(u)) if u > 0.0 => Some(d / u),
        _ => None,
    };
    Ok(Comparison {
        update_index: grid,
        labels: logs.iter().map(|l| l.label.clone()).collect(),
        curves: logs
            .iter()
            .map(|l| moving_average(&l.records.iter().map(|r| r.avg_reward).collect::<Vec<_>>(), window))
            .collect(),
        dqn_udqn_time_ratio: ratio,
    })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("update_index");
        for l in &self.labels {
            write!(s, ",{l}").unwrap();
        }
        s.push('\n');
        for (i, u) in self.update_index.iter().enumerate() {
            write!(s, "{u}").unwrap();
            for c in &self.curves {
                write!(s, ",{}", c[i]).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// A plain line chart of the curves.
    pub fn to_svg(&self) -> String {
        const W: f64 = 720.0;
        const H: f64 = 420.0;
        const PAD: f64 = 50.0;
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let xmax = self.update_index.last().copied().unwrap_or(1).max(1) as f64;
        let finite = self.curves.iter().flatten().copied().filter(|v| v.is_finite());
        let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        let x = |u: u64| PAD + (W - 2.0 * PAD) * u as f64 / xmax;
        let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
        let mut s = String::new();
        writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
        writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
            H - PAD,
            W - PAD
        )
        .unwrap();
        writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">updates (max {xmax})</text>"#, W / 2.0, H - 15.0).unwrap();
        writeln!(s, r#"<text x="5" y="{}" font-size="12">{hi:.3}</text>"#, PAD).unwrap();
        writeln!(s, r#"<text x="5" y="{}" font-size="12">{lo:.3}</text>"#, H - PAD).unwrap();
        for (k, (label, curve)) in self.labels.iter().zip(&self.curves).enumerate() {
            let color = COLORS[k % COLORS.len()];
            let pts: Vec<String> = self
                .update_index
                .iter()
                .zip(curve)
                .filter(|(_, v)| v.is_finite())
                .map(|(&u, &v)| format!("{:.2},{:.2}", x(u), y(v)))
                .collect();
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
            let ly = PAD + 16.0 * k as f64;
            writeln!(s, r#"<text x="{}" y="{ly}" font-size="12" fill="{color}">{label}</text>"#, W - PAD - 100.0).unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

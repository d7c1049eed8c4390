use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{MeanStd, MetricsRecord};
use super::EvalError;

/// Header of the machine-readable table.
pub const TABLE_COLUMNS: [&str; 10] = [
    "policy",
    "success",
    "collision",
    "timeout",
    "time_mean",
    "time_std",
    "disc_freq",
    "disc_dist_mean",
    "disc_dist_std",
    "episodes",
];

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub policy: String,
    pub success: f64,
    pub collision: f64,
    pub timeout: f64,
    pub time: Option<MeanStd>,
    pub discomfort_frequency: f64,
    pub discomfort_distance: Option<MeanStd>,
    pub episodes: usize,
}

impl TableRow {
    pub fn new(policy: &str, m: &MetricsRecord) -> Self {
        Self {
            policy: policy.to_string(),
            success: m.success_rate,
            collision: m.collision_rate,
            timeout: m.timeout_rate,
            time: m.navigation_time,
            discomfort_frequency: m.discomfort_frequency,
            discomfort_distance: m.discomfort_distance,
            episodes: m.episodes,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

/// Flat CSV record; field names are the column names.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    policy: String,
    success: f64,
    collision: f64,
    timeout: f64,
    time_mean: Option<f64>,
    time_std: Option<f64>,
    disc_freq: f64,
    disc_dist_mean: Option<f64>,
    disc_dist_std: Option<f64>,
    episodes: usize,
}

fn pair(mean: Option<f64>, std: Option<f64>) -> Option<Option<MeanStd>> {
    match (mean, std) {
        (None, None) => Some(None),
        (Some(mean), Some(std)) => Some(Some(MeanStd { mean, std })),
        _ => None,
    }
}

impl ComparisonTable {
    /// CSV with shortest round-trip floats; empty fields mean "not
    /// applicable".
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(TABLE_COLUMNS).expect("writing to memory");
        }
        for r in &self.rows {
            w.serialize(CsvRow {
                policy: r.policy.clone(),
                success: r.success,
                collision: r.collision,
                timeout: r.timeout,
                time_mean: r.time.map(|t| t.mean),
                time_std: r.time.map(|t| t.std),
                disc_freq: r.discomfort_frequency,
                disc_dist_mean: r.discomfort_distance.map(|t| t.mean),
                disc_dist_std: r.discomfort_distance.map(|t| t.std),
                episodes: r.episodes,
            })
            .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is UTF-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header_ok = rd.headers().map(|h| h.iter().eq(TABLE_COLUMNS)).unwrap_or(false);
        if !header_ok {
            return Err(EvalError::Parse { line: 1, message: "missing or unexpected header".into() });
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.deserialize::<CsvRow>().enumerate() {
            let line = i + 2;
            let r = rec.map_err(|e| EvalError::Parse { line, message: e.to_string() })?;
            let both = |what| EvalError::Parse {
                line,
                message: format!("{what} mean and std must both be set or both empty"),
            };
            rows.push(TableRow {
                time: pair(r.time_mean, r.time_std).ok_or_else(|| both("time"))?,
                discomfort_distance: pair(r.disc_dist_mean, r.disc_dist_std)
                    .ok_or_else(|| both("discomfort distance"))?,
                policy: r.policy,
                success: r.success,
                collision: r.collision,
                timeout: r.timeout,
                discomfort_frequency: r.disc_freq,
                episodes: r.episodes,
            });
        }
        Ok(Self { rows })
    }

    /// Aligned text rendering; missing values print as "—".
    pub fn render(&self) -> String {
        let ms = |x: Option<MeanStd>| x.map(|v| format!("{:.2} ± {:.2}", v.mean, v.std)).unwrap_or_else(|| "—".into());
        let header = ["Policy", "Success", "Collision", "Timeout", "Time (s)", "Disc. Freq", "Disc. Dist (m)"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.policy.clone(),
                    format!("{:.2}", r.success),
                    format!("{:.2}", r.collision),
                    format!("{:.2}", r.timeout),
                    ms(r.time),
                    format!("{:.2}", r.discomfort_frequency),
                    ms(r.discomfort_distance),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: Vec<&str>| {
            let parts: Vec<String> = cells
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(k, (c, w))| {
                    let pad = " ".repeat(w - c.chars().count());
                    if k == 0 {
                        format!("{c}{pad}")
                    } else {
                        format!("{pad}{c}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(header.to_vec());
        for row in &body {
            line(row.iter().map(String::as_str).collect());
        }
        out
    }
}

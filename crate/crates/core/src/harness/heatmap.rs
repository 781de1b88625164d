//! Policy heatmaps: P(Allow) over failed attempts × time on task.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::approx::Checkpoint;
use crate::domain::{FeatureCaps, GateObservation, NUM_TASKS};
use crate::error::{Error, Result};
use crate::policy::NetworkPolicy;

pub const FAILED_ATTEMPT_AXIS: [u32; 6] = [0, 1, 2, 3, 4, 5];
pub const TIME_STEP_SECONDS: f64 = 5.0;
pub const TIME_CELLS: usize = 61;

pub fn time_axis() -> Vec<f64> {
    (0..TIME_CELLS).map(|i| i as f64 * TIME_STEP_SECONDS).collect()
}

/// Grid of P(Allow) for a fixed task context.
///
/// Context convention: question 0 of the task, gate closed, and
/// `s_cu = s_fa + 2·question`, i.e. the failures on this question plus two
/// per completed question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyHeatmap {
    pub task_index: usize,
    pub history: Vec<bool>,
    pub question_index: usize,
    pub failed_attempts: Vec<u32>,
    pub time_on_task: Vec<f64>,
    /// `cells[row][col]` for `failed_attempts[row]`, `time_on_task[col]`.
    pub cells: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapFormat {
    Csv,
    Svg,
    Both,
}

fn check_context(task: usize, history: &[bool]) -> Result<()> {
    if task >= NUM_TASKS {
        return Err(Error::validation("task", format!("task index must be < {NUM_TASKS}")));
    }
    if history.len() != task {
        return Err(Error::validation(
            "history",
            format!("history length {} must equal task index {task}", history.len()),
        ));
    }
    Ok(())
}

impl PolicyHeatmap {
    pub fn compute(policy: &NetworkPolicy, task: usize, history: &[bool]) -> Result<Self> {
        check_context(task, history)?;
        let question = 0;
        let times = time_axis();
        let mut cells = Vec::with_capacity(FAILED_ATTEMPT_AXIS.len());
        for &fa in &FAILED_ATTEMPT_AXIS {
            let row = times
                .iter()
                .map(|&t| {
                    let obs = GateObservation {
                        failed_attempts_question: fa,
                        time_on_task: t,
                        ai_used_history: history.to_vec(),
                        failed_attempts_task: fa + 2 * question as u32,
                        task_index: task,
                        question_index: question,
                        ai_currently_granted: false,
                    };
                    policy.allow_probability(&obs)
                })
                .collect::<Result<Vec<_>>>()?;
            cells.push(row);
        }
        Ok(Self {
            task_index: task,
            history: history.to_vec(),
            question_index: question,
            failed_attempts: FAILED_ATTEMPT_AXIS.to_vec(),
            time_on_task: times,
            cells,
        })
    }

    /// Mean cell value over cells satisfying `pred(s_fa, s_t)`.
    pub fn region_mean(&self, pred: impl Fn(u32, f64) -> bool) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (r, &fa) in self.failed_attempts.iter().enumerate() {
            for (c, &t) in self.time_on_task.iter().enumerate() {
                if pred(fa, t) {
                    sum += self.cells[r][c];
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// `P(Allow | s_fa ≥ 3, s_t > 60) − P(Allow | s_fa = 0, s_t < 60)`.
    pub fn struggle_contrast(&self) -> f64 {
        let late = self.region_mean(|fa, t| fa >= 3 && t > 60.0).unwrap_or(0.0);
        let early = self.region_mean(|fa, t| fa == 0 && t < 60.0).unwrap_or(0.0);
        late - early
    }

    /// Rows are failed attempts, columns time on task.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s_fa");
        for t in &self.time_on_task {
            write!(out, ",{t}").unwrap();
        }
        out.push('\n');
        for (fa, row) in self.failed_attempts.iter().zip(&self.cells) {
            write!(out, "{fa}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output; the task context is supplied
    /// by the caller since the CSV does not carry it.
    pub fn from_csv(text: &str, task: usize, history: &[bool]) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "heatmap csv".into(),
            detail,
        };
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        let times = header
            .iter()
            .skip(1)
            .map(|h| h.parse::<f64>().map_err(|e| bad(format!("column {h:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut failed_attempts = Vec::new();
        let mut cells = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let mut fields = record.iter();
            let fa = fields.next().unwrap_or_default();
            failed_attempts.push(fa.parse::<u32>().map_err(|e| bad(format!("row {fa:?}: {e}")))?);
            cells.push(
                fields
                    .map(|v| v.parse::<f64>().map_err(|e| bad(format!("cell {v:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        if cells.iter().any(|r| r.len() != times.len()) {
            return Err(bad("ragged rows".into()));
        }
        Ok(Self {
            task_index: task,
            history: history.to_vec(),
            question_index: 0,
            failed_attempts,
            time_on_task: times,
            cells,
        })
    }

    /// Self-contained SVG with axes, ticks and a color legend.
    pub fn to_svg(&self) -> String {
        let (cw, ch) = (8.0, 36.0);
        let (left, top) = (70.0, 50.0);
        let cols = self.time_on_task.len() as f64;
        let rows = self.failed_attempts.len() as f64;
        let (w, h) = (left + cols * cw + 120.0, top + rows * ch + 70.0);
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        let history: Vec<&str> = self.history.iter().map(|b| if *b { "AI" } else { "no AI" }).collect();
        writeln!(
            s,
            r#"<text x="{left}" y="20" font-size="14">P(allow), task index {} (history: [{}])</text>"#,
            self.task_index,
            history.join(", ")
        )
        .unwrap();
        for (r, row) in self.cells.iter().enumerate() {
            // Largest failure count at the top.
            let y = top + (rows - 1.0 - r as f64) * ch;
            for (c, v) in row.iter().enumerate() {
                let x = left + c as f64 * cw;
                writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{}"><title>s_fa={} s_t={} p={v:.3}</title></rect>"#,
                    color(*v),
                    self.failed_attempts[r],
                    self.time_on_task[c]
                )
                .unwrap();
            }
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                left - 6.0,
                y + ch / 2.0 + 4.0,
                self.failed_attempts[r]
            )
            .unwrap();
        }
        let axis_y = top + rows * ch;
        for (c, t) in self.time_on_task.iter().enumerate() {
            if c % 12 == 0 {
                let x = left + c as f64 * cw + cw / 2.0;
                writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{t}</text>"#, axis_y + 16.0).unwrap();
            }
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">time on task (s)</text>"#,
            left + cols * cw / 2.0,
            axis_y + 40.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">failed attempts on question</text>"#,
            top + rows * ch / 2.0,
            top + rows * ch / 2.0
        )
        .unwrap();
        let lx = left + cols * cw + 30.0;
        for i in 0..=10 {
            let v = 1.0 - i as f64 / 10.0;
            let y = top + i as f64 * (rows * ch / 11.0);
            writeln!(
                s,
                r#"<rect x="{lx}" y="{y}" width="16" height="{}" fill="{}"/>"#,
                rows * ch / 11.0,
                color(v)
            )
            .unwrap();
            if i % 5 == 0 {
                writeln!(s, r#"<text x="{}" y="{}">{v:.1}</text>"#, lx + 22.0, y + 12.0).unwrap();
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// White (deny) to dark blue (allow).
fn color(p: f64) -> String {
    let p = p.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * p).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

/// Computes the heatmap of `checkpoint` and writes it as `stem.csv` and/or
/// `stem.svg`. Returns the written paths.
pub fn export_heatmap(
    checkpoint: &Checkpoint,
    caps: FeatureCaps,
    task: usize,
    history: &[bool],
    format: HeatmapFormat,
    stem: &Path,
) -> Result<(PolicyHeatmap, Vec<PathBuf>)> {
    check_context(task, history)?;
    let policy = NetworkPolicy::new(checkpoint.net.clone(), caps)?;
    let map = PolicyHeatmap::compute(&policy, task, history)?;
    let mut written = Vec::new();
    if matches!(format, HeatmapFormat::Csv | HeatmapFormat::Both) {
        let path = stem.with_extension("csv");
        std::fs::write(&path, map.to_csv()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    if matches!(format, HeatmapFormat::Svg | HeatmapFormat::Both) {
        let path = stem.with_extension("svg");
        std::fs::write(&path, map.to_svg()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok((map, written))
}

/// Parses a history argument such as `"true,false"`, `"10"` or `""`.
pub fn parse_history(text: &str) -> Result<Vec<bool>> {
    let text = text.trim();
    if text.is_empty() || text == "[]" {
        return Ok(Vec::new());
    }
    if text.chars().all(|c| c == '0' || c == '1') {
        return Ok(text.chars().map(|c| c == '1').collect());
    }
    text.trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(|s| match s.trim() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            other => Err(Error::validation("history", format!("not a boolean: {other:?}"))),
        })
        .collect()
}

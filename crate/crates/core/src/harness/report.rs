//! Markdown rendering of comparison results.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::compare::{ComparisonReport, Metric};
use crate::agents::AgentKind;

/// Greedy mean return of one trained checkpoint on the comparison episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub agent: AgentKind,
    pub seed: u64,
    pub mean_return: f64,
}

/// "PPO mean ≥ other mean − 1 SE" over per-seed means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingCheck {
    pub other: AgentKind,
    pub ppo_mean: f64,
    pub other_mean: f64,
    pub other_se: f64,
    pub passed: bool,
}

/// Struggle contrast of one exported heatmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSummary {
    pub file: String,
    pub seed: u64,
    pub task_index: usize,
    pub contrast: f64,
}

pub fn render_report(
    report: &ComparisonReport,
    scores: &[SeedScore],
    ranking: &[RankingCheck],
    heatmaps: &[HeatmapSummary],
) -> String {
    let o = &report.options;
    let mut s = String::new();
    writeln!(s, "# Gate policy comparison\n").unwrap();
    writeln!(
        s,
        "{} episodes per policy on common seeds starting at {:#x}; {:.0}% percentile bootstrap intervals from {} resamples. \
         Trained agents play episode *i* with the checkpoint of training seed *i* mod (number of seeds).\n",
        o.episodes,
        o.seed_base,
        o.level * 100.0,
        o.resamples
    )
    .unwrap();

    writeln!(s, "## Shaped return and outcomes\n").unwrap();
    writeln!(
        s,
        "| policy | mean return | sd | 95% CI | success | time | mt | pf | clt | mastery | AI uses | seconds |"
    )
    .unwrap();
    writeln!(s, "|---|---:|---:|---|---:|---:|---:|---:|---:|---:|---:|---:|").unwrap();
    for p in &report.policies {
        let c = &p.components;
        writeln!(
            s,
            "| {} | {:.3} | {:.3} | [{:.3}, {:.3}] | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.4} | {:.3} | {:.1} |",
            p.name,
            p.mean_return,
            p.sd_return,
            p.return_ci.lo,
            p.return_ci.hi,
            c.success,
            c.time,
            c.mt,
            c.pf,
            c.clt,
            p.mean_overall_mastery,
            p.mean_ai_uses,
            p.mean_seconds
        )
        .unwrap();
    }

    if let Some(first) = report.policies.first() {
        for metric in [Metric::Return, Metric::Mastery] {
            let label = match metric {
                Metric::Return => "return",
                Metric::Mastery => "final mastery",
            };
            writeln!(s, "\n## Paired differences in {label}: {} minus other\n", first.name).unwrap();
            writeln!(s, "| other | delta | 95% CI | one-sided 95% lower bound |").unwrap();
            writeln!(s, "|---|---:|---|---:|").unwrap();
            for d in report.deltas.iter().filter(|d| d.a == first.name && d.metric == metric) {
                writeln!(
                    s,
                    "| {} | {:.4} | [{:.4}, {:.4}] | {:.4} |",
                    d.b, d.delta, d.ci.lo, d.ci.hi, d.lower_bound
                )
                .unwrap();
            }
        }
    }

    if !scores.is_empty() {
        writeln!(s, "\n## Per-seed greedy returns\n").unwrap();
        writeln!(s, "| agent | seed | mean return |").unwrap();
        writeln!(s, "|---|---:|---:|").unwrap();
        for sc in scores {
            writeln!(s, "| {} | {} | {:.3} |", sc.agent, sc.seed, sc.mean_return).unwrap();
        }
    }

    if !ranking.is_empty() {
        writeln!(s, "\n## Ranking (PPO mean ≥ other mean − 1 SE over seeds)\n").unwrap();
        for r in ranking {
            writeln!(
                s,
                "- ppo {:.3} vs {} {:.3} (SE {:.3}): {}",
                r.ppo_mean,
                r.other,
                r.other_mean,
                r.other_se,
                if r.passed { "holds" } else { "does not hold" }
            )
            .unwrap();
        }
    }

    if !heatmaps.is_empty() {
        writeln!(s, "\n## Heatmaps\n").unwrap();
        writeln!(
            s,
            "Contrast = mean P(allow) over {{s_fa ≥ 3, s_t > 60 s}} minus over {{s_fa = 0, s_t < 60 s}}.\n"
        )
        .unwrap();
        writeln!(s, "| file | seed | task index | contrast |").unwrap();
        writeln!(s, "|---|---:|---:|---:|").unwrap();
        for h in heatmaps {
            writeln!(s, "| {} | {} | {} | {:.3} |", h.file, h.seed, h.task_index, h.contrast).unwrap();
        }
    }
    s
}

//! Common-random-numbers evaluation of gate policies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_ci, bootstrap_lower_bound, mean, sd, standard_error, Interval, BOOTSTRAP_SEED};
use crate::domain::NUM_TASKS;
use crate::env::{EnvConfig, EpisodeMetrics, GateEnv};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::reward::RewardBreakdown;

/// Episode seeds used by comparisons unless told otherwise.
pub const COMPARE_SEED_BASE: u64 = 0x0C0F_FEE0_0000;

/// A named policy; with several members, episode `i` is played by member
/// `i mod len` (e.g. one checkpoint per training seed).
#[derive(Debug, Clone)]
pub struct PolicyEntry {
    pub name: String,
    pub members: Vec<Policy>,
    /// Training seeds of the members, if any.
    pub seeds: Vec<u64>,
}

impl PolicyEntry {
    pub fn fixed(policy: Policy) -> Self {
        Self {
            name: policy.name(),
            members: vec![policy],
            seeds: Vec::new(),
        }
    }

    pub fn ensemble(name: impl Into<String>, members: Vec<Policy>, seeds: Vec<u64>) -> Self {
        Self {
            name: name.into(),
            members,
            seeds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub episodes: usize,
    pub seed_base: u64,
    pub resamples: usize,
    pub level: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            episodes: 1000,
            seed_base: COMPARE_SEED_BASE,
            resamples: 10_000,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub name: String,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub mean_return: f64,
    pub sd_return: f64,
    pub se_return: f64,
    pub return_ci: Interval,
    pub components: RewardBreakdown,
    pub mean_mastery: [f64; NUM_TASKS],
    pub mean_overall_mastery: f64,
    pub mastery_ci: Interval,
    pub mean_ai_uses: f64,
    pub mean_seconds: f64,
    pub completion_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Return,
    Mastery,
}

/// Paired difference `a − b` over common episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDelta {
    pub a: String,
    pub b: String,
    pub metric: Metric,
    pub delta: f64,
    pub ci: Interval,
    /// One-sided 95% lower bound.
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub options: CompareOptions,
    pub policies: Vec<PolicySummary>,
    pub deltas: Vec<PairwiseDelta>,
    /// Per-policy episode metrics, in policy order.
    #[serde(skip)]
    pub episodes: Vec<Vec<EpisodeMetrics>>,
}

impl ComparisonReport {
    pub fn policy(&self, name: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.name == name)
    }

    pub fn delta(&self, a: &str, b: &str, metric: Metric) -> Option<&PairwiseDelta> {
        self.deltas.iter().find(|d| d.a == a && d.b == b && d.metric == metric)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            what: "comparison report".into(),
            detail: e.to_string(),
        })
    }
}

/// Plays `episodes` episodes of every entry on identical seeds.
pub fn evaluate_entry(env: &GateEnv, entry: &PolicyEntry, episodes: usize, seed_base: u64) -> Result<Vec<EpisodeMetrics>> {
    if entry.members.is_empty() {
        return Err(Error::validation("policies", format!("{} has no members", entry.name)));
    }
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let policy = &entry.members[i % entry.members.len()];
            env.run_episode(policy, seed_base.wrapping_add(i as u64), None)
        })
        .collect()
}

fn summarize(entry: &PolicyEntry, eps: &[EpisodeMetrics], opts: &CompareOptions) -> PolicySummary {
    let returns: Vec<f64> = eps.iter().map(|e| e.reward.total).collect();
    let mastery: Vec<f64> = eps.iter().map(EpisodeMetrics::mean_mastery).collect();
    let n = eps.len() as f64;
    let mut components = RewardBreakdown::default();
    let mut per_skill = [0.0; NUM_TASKS];
    for e in eps {
        components += e.reward;
        for (k, m) in e.final_mastery.iter().enumerate() {
            per_skill[k] += m / n;
        }
    }
    let c = components;
    PolicySummary {
        name: entry.name.clone(),
        n: eps.len(),
        seeds: entry.seeds.clone(),
        mean_return: mean(&returns),
        sd_return: sd(&returns),
        se_return: standard_error(&returns),
        return_ci: bootstrap_ci(&returns, opts.resamples, opts.level, BOOTSTRAP_SEED),
        components: RewardBreakdown {
            success: c.success / n,
            time: c.time / n,
            mt: c.mt / n,
            pf: c.pf / n,
            clt: c.clt / n,
            total: c.total / n,
        },
        mean_mastery: per_skill,
        mean_overall_mastery: mean(&mastery),
        mastery_ci: bootstrap_ci(&mastery, opts.resamples, opts.level, BOOTSTRAP_SEED),
        mean_ai_uses: eps.iter().map(|e| e.ai_uses as f64).sum::<f64>() / n,
        mean_seconds: eps.iter().map(|e| e.duration_seconds).sum::<f64>() / n,
        completion_rate: eps.iter().filter(|e| e.completed).count() as f64 / n,
    }
}

fn paired(a: &str, b: &str, metric: Metric, xa: &[f64], xb: &[f64], opts: &CompareOptions) -> PairwiseDelta {
    let d: Vec<f64> = xa.iter().zip(xb).map(|(x, y)| x - y).collect();
    PairwiseDelta {
        a: a.into(),
        b: b.into(),
        metric,
        // Difference of means, so it matches the reported means exactly.
        delta: mean(xa) - mean(xb),
        ci: {
            let ci = bootstrap_ci(&d, opts.resamples, opts.level, BOOTSTRAP_SEED);
            let m = mean(xa) - mean(xb);
            Interval { lo: ci.lo.min(m), hi: ci.hi.max(m) }
        },
        lower_bound: bootstrap_lower_bound(&d, opts.resamples, 0.05, BOOTSTRAP_SEED).min(mean(xa) - mean(xb)),
    }
}

/// Evaluates every entry on the same episode seeds and reports summaries
/// and all ordered pairwise deltas.
pub fn compare(env_cfg: &EnvConfig, entries: &[PolicyEntry], opts: &CompareOptions) -> Result<ComparisonReport> {
    if opts.episodes == 0 {
        return Err(Error::validation("episodes", "n_episodes ≥ 1"));
    }
    if opts.episodes < 30 {
        tracing::warn!(episodes = opts.episodes, "fewer than 30 episodes; intervals are unreliable");
    }
    let env = GateEnv::new(env_cfg.clone())?;
    let episodes = entries
        .iter()
        .map(|e| evaluate_entry(&env, e, opts.episodes, opts.seed_base))
        .collect::<Result<Vec<_>>>()?;
    let policies: Vec<PolicySummary> = entries.iter().zip(&episodes).map(|(e, m)| summarize(e, m, opts)).collect();

    let mut deltas = Vec::new();
    for (i, a) in entries.iter().enumerate() {
        for (j, b) in entries.iter().enumerate() {
            if i == j {
                continue;
            }
            let ret = |k: usize| episodes[k].iter().map(|e| e.reward.total).collect::<Vec<_>>();
            let mas = |k: usize| episodes[k].iter().map(EpisodeMetrics::mean_mastery).collect::<Vec<_>>();
            deltas.push(paired(&a.name, &b.name, Metric::Return, &ret(i), &ret(j), opts));
            deltas.push(paired(&a.name, &b.name, Metric::Mastery, &mas(i), &mas(j), opts));
        }
    }
    Ok(ComparisonReport {
        options: opts.clone(),
        policies,
        deltas,
        episodes,
    })
}

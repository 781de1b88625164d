//! End-to-end reproduction: train every agent on every seed, compare with
//! the fixed baselines, export heatmaps and write a report bundle.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compare::{compare, evaluate_entry, CompareOptions, ComparisonReport, PolicyEntry};
use super::heatmap::{export_heatmap, HeatmapFormat, PolicyHeatmap};
use super::report::{render_report, HeatmapSummary, RankingCheck, SeedScore};
use super::stats::{mean, standard_error};
use crate::agents::{train, write_curve, AgentKind, TrainOutcome};
use crate::config::Config;
use crate::domain::NUM_TASKS;
use crate::env::GateEnv;
use crate::error::{Error, Result};
use crate::policy::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceOptions {
    pub seeds: Vec<u64>,
    pub agents: Vec<AgentKind>,
    pub compare: CompareOptions,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            agents: AgentKind::ALL.to_vec(),
            compare: CompareOptions::default(),
        }
    }
}

/// Files written by [`reproduce`], relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub checkpoints: Vec<String>,
    pub curves: Vec<String>,
    pub heatmaps: Vec<String>,
    pub comparison: String,
    pub seed_scores: String,
    pub report: String,
}

pub struct Reproduction {
    pub manifest: Manifest,
    pub outcomes: Vec<TrainOutcome>,
    pub seeds: Vec<u64>,
    pub comparison: ComparisonReport,
    pub scores: Vec<SeedScore>,
    pub ranking: Vec<RankingCheck>,
    pub heatmaps: Vec<(HeatmapSummary, PolicyHeatmap)>,
}

impl Reproduction {
    /// Checkpoints of one agent, in seed order.
    pub fn outcomes_of(&self, kind: AgentKind) -> impl Iterator<Item = &TrainOutcome> {
        self.outcomes.iter().filter(move |o| o.kind == kind)
    }
}

fn rel(out: &Path, path: &Path) -> String {
    path.strip_prefix(out).unwrap_or(path).display().to_string()
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn reproduce(cfg: &Config, opts: &ReproduceOptions, out: &Path) -> Result<Reproduction> {
    cfg.validate()?;
    if opts.seeds.is_empty() || opts.agents.is_empty() {
        return Err(Error::validation("seeds", "at least one seed and one agent"));
    }
    for dir in ["checkpoints", "curves", "heatmaps"] {
        mkdir(&out.join(dir))?;
    }
    let env_cfg = cfg.sim();
    let hash = cfg.hash();

    let jobs: Vec<(AgentKind, u64)> = opts
        .agents
        .iter()
        .flat_map(|&k| opts.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(kind, seed)| {
            tracing::info!(agent = %kind, seed, "training");
            let mut o = train(kind, &env_cfg, &cfg.training, seed)?;
            o.checkpoint.config_hash = hash.clone();
            Ok(o)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut checkpoints = Vec::new();
    let mut curves = Vec::new();
    for (o, &(kind, seed)) in outcomes.iter().zip(&jobs) {
        let ck = out.join("checkpoints").join(format!("{kind}-seed{seed}.json"));
        o.checkpoint.save(&ck)?;
        checkpoints.push(rel(out, &ck));
        let curve = out.join("curves").join(format!("{kind}-seed{seed}.csv"));
        write_curve(&curve, &o.curve)?;
        curves.push(rel(out, &curve));
    }

    let caps = cfg.training.features;
    let env = GateEnv::new(env_cfg.clone())?;
    let mut entries = Vec::new();
    let mut scores = Vec::new();
    for &kind in &opts.agents {
        let mut members = Vec::new();
        for (o, &(k, seed)) in outcomes.iter().zip(&jobs) {
            if k != kind {
                continue;
            }
            let policy = o.policy(caps)?;
            let eps = evaluate_entry(&env, &PolicyEntry::fixed(policy.clone()), opts.compare.episodes, opts.compare.seed_base)?;
            scores.push(SeedScore {
                agent: kind,
                seed,
                mean_return: mean(&eps.iter().map(|e| e.reward.total).collect::<Vec<_>>()),
            });
            members.push(policy);
        }
        entries.push(PolicyEntry::ensemble(kind.name(), members, opts.seeds.clone()));
    }
    for baseline in [Policy::Always, Policy::Never, Policy::Random(0.5)] {
        entries.push(PolicyEntry::fixed(baseline));
    }
    let comparison = compare(&env_cfg, &entries, &opts.compare)?;

    let per_seed = |kind: AgentKind| -> Vec<f64> {
        scores.iter().filter(|s| s.agent == kind).map(|s| s.mean_return).collect()
    };
    let mut ranking = Vec::new();
    if opts.agents.contains(&AgentKind::Ppo) {
        let ppo_mean = mean(&per_seed(AgentKind::Ppo));
        for other in [AgentKind::Dqn, AgentKind::A2c] {
            if !opts.agents.contains(&other) {
                continue;
            }
            let xs = per_seed(other);
            let (other_mean, other_se) = (mean(&xs), standard_error(&xs));
            ranking.push(RankingCheck {
                other,
                ppo_mean,
                other_mean,
                other_se,
                passed: ppo_mean >= other_mean - other_se,
            });
        }
    }

    let mut heatmaps = Vec::new();
    let mut heatmap_files = Vec::new();
    let primary = opts.agents[0];
    for (o, &(kind, seed)) in outcomes.iter().zip(&jobs) {
        if kind != primary {
            continue;
        }
        for task in 0..NUM_TASKS {
            let history = vec![false; task];
            let stem = out.join("heatmaps").join(format!("{kind}-seed{seed}-task{task}"));
            let (map, files) = export_heatmap(&o.checkpoint, caps, task, &history, HeatmapFormat::Both, &stem)?;
            heatmap_files.extend(files.iter().map(|f| rel(out, f)));
            heatmaps.push((
                HeatmapSummary {
                    file: rel(out, &stem.with_extension("csv")),
                    seed,
                    task_index: task,
                    contrast: map.struggle_contrast(),
                },
                map,
            ));
        }
    }

    let comparison_path = out.join("comparison.json");
    write(&comparison_path, &comparison.to_json())?;
    let scores_path = out.join("seed_scores.csv");
    {
        let mut w = csv::Writer::from_path(&scores_path).map_err(|e| Error::Format {
            what: "seed scores".into(),
            detail: e.to_string(),
        })?;
        for s in &scores {
            w.serialize(s).map_err(|e| Error::Format {
                what: "seed scores".into(),
                detail: e.to_string(),
            })?;
        }
        w.flush().map_err(|e| Error::io(&scores_path, e))?;
    }
    let summaries: Vec<HeatmapSummary> = heatmaps.iter().map(|(s, _)| s.clone()).collect();
    let report_path = out.join("report.md");
    write(&report_path, &render_report(&comparison, &scores, &ranking, &summaries))?;

    let manifest = Manifest {
        config_hash: hash,
        seeds: opts.seeds.clone(),
        checkpoints,
        curves,
        heatmaps: heatmap_files,
        comparison: rel(out, &comparison_path),
        seed_scores: rel(out, &scores_path),
        report: rel(out, &report_path),
    };
    write(
        &out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(Reproduction {
        manifest,
        outcomes,
        seeds: opts.seeds.clone(),
        comparison,
        scores,
        ranking,
        heatmaps,
    })
}

/// Resolves paths listed in a manifest against its bundle directory.
pub fn bundle_paths(out: &Path, manifest: &Manifest) -> Vec<PathBuf> {
    manifest
        .checkpoints
        .iter()
        .chain(&manifest.curves)
        .chain(&manifest.heatmaps)
        .chain([&manifest.comparison, &manifest.seed_scores, &manifest.report])
        .map(|p| out.join(p))
        .collect()
}

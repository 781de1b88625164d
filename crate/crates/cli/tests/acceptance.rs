//! End-to-end acceptance checks. Each criterion prints exactly one
//! `PASS`/`FAIL` line with its measured value and pinned tolerance; the
//! process exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p aigate-cli --test acceptance`.

use std::path::Path;
use std::time::{Duration, Instant};

use aigate::agents::{a2c_sample_grad, ppo_sample_grad, A2cConfig, AgentKind, PpoConfig};
use aigate::approx::{gradients, Approximator, Checkpoint};
use aigate::domain::{FEATURE_DIM, NUM_TASKS};
use aigate::gate::{Condition, GateDecider};
use aigate::harness::stats::mean;
use aigate::harness::{Metric, PolicyHeatmap, ReproduceOptions, Reproduction};
use aigate::policy::{failure_threshold_network, NetworkPolicy};
use aigate::reward::{total_reward, RewardBreakdown};
use aigate::student::{forward_likelihood, sequence_likelihood, ItemParams, SkillParams};
use aigate::{Action, Config, GateEnv, GateObservation, Policy, RewardConfig};
use aigate_server::session::SessionExport;
use aigate_server::{replay, router, AppState};
use chrono::Utc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    o.detail = format!("{}; runtime {:.2?} (limit {:?})", o.detail, elapsed, limit);
    o.passed &= elapsed < limit;
    o
}

// ---------------------------------------------------------------- reward

fn obs(fa: u32, t: f64, history: &[bool]) -> GateObservation {
    GateObservation {
        failed_attempts_question: fa,
        time_on_task: t,
        ai_used_history: history.to_vec(),
        failed_attempts_task: fa,
        task_index: history.len(),
        question_index: 0,
        ai_currently_granted: false,
    }
}

struct RewardCase {
    obs: GateObservation,
    action: Action,
    completed: bool,
    cfg: RewardConfig,
    /// success, time, mt, pf, clt
    expected: [f64; 5],
}

fn reward_cases() -> Vec<RewardCase> {
    use Action::{Allow, Deny};
    let d = RewardConfig::default();
    let zeroed = RewardConfig { c_succ: 0.0, c_time: 0.0, ..d.clone() };
    let no_mt = RewardConfig { c_mt: 0.0, ..d.clone() };
    let short = RewardConfig {
        early_threshold_seconds: 30.0,
        delta: 0.1,
        ..d.clone()
    };
    let c = |o, action, completed, cfg: &RewardConfig, expected| RewardCase {
        obs: o,
        action,
        completed,
        cfg: cfg.clone(),
        expected,
    };
    vec![
        // Deny on the first task: only time and the empty-history MT term.
        c(obs(1, 30.0, &[]), Deny, false, &d, [0.0, -0.05, 0.5, 0.0, 0.0]),
        // Allow with no failures and early: PF penalty and CLT penalty.
        c(obs(0, 20.0, &[false]), Allow, false, &d, [0.0, -0.05, 0.5, -2.0, -0.8]),
        // Completion tick under Deny after an AI-assisted task (MT fires: no `false` in history).
        c(obs(0, 100.0, &[true]), Deny, true, &d, [10.0, -0.05, 0.5, 0.0, 0.0]),
        // α branch at s_fa = 2.
        c(obs(2, 100.0, &[false, false]), Allow, false, &d, [0.0, -0.05, 0.5, 2.0, 0.0]),
        c(obs(2, 100.0, &[true]), Allow, false, &d, [0.0, -0.05, 0.0, 2.0, 0.0]),
        // β branch.
        c(obs(5, 100.0, &[]), Allow, false, &d, [0.0, -0.05, 0.5, 5.0, 0.0]),
        c(obs(3, 100.0, &[]), Allow, false, &d, [0.0, -0.05, 0.5, 5.0, 0.0]),
        // Deny zeroes PF and CLT whatever the struggle or time.
        c(obs(5, 100.0, &[]), Deny, false, &d, [0.0, -0.05, 0.5, 0.0, 0.0]),
        c(obs(0, 20.0, &[]), Deny, false, &d, [0.0, -0.05, 0.5, 0.0, 0.0]),
        c(obs(3, 0.0, &[false]), Deny, false, &d, [0.0, -0.05, 0.0, 0.0, 0.0]),
        // CLT at the start of a task and just under / at / over the threshold.
        c(obs(1, 0.0, &[]), Allow, false, &d, [0.0, -0.05, 0.5, 0.0, -1.2]),
        c(obs(1, 59.0, &[true, false]), Allow, false, &d, [0.0, -0.05, 0.0, 1.18, -0.02]),
        c(obs(1, 60.0, &[false]), Allow, false, &d, [0.0, -0.05, 0.5, 1.2, 0.0]),
        c(obs(2, 61.0, &[false, true]), Allow, false, &d, [0.0, -0.05, 0.0, 1.22, 0.0]),
        c(obs(10, 59.5, &[false, false]), Allow, false, &d, [0.0, -0.05, 0.5, 2.975, -0.01]),
        // MT under Deny.
        c(obs(0, 20.0, &[true, false]), Deny, false, &d, [0.0, -0.05, 0.0, 0.0, 0.0]),
        c(obs(0, 20.0, &[true, true]), Deny, false, &d, [0.0, -0.05, 0.5, 0.0, 0.0]),
        c(obs(0, 20.0, &[true, true]), Allow, false, &d, [0.0, -0.05, 0.0, -2.0, -0.8]),
        // Completion ticks.
        c(obs(4, 300.0, &[false]), Deny, true, &d, [10.0, -0.05, 0.0, 0.0, 0.0]),
        c(obs(4, 300.0, &[false]), Allow, true, &d, [10.0, -0.05, 0.5, 15.0, 0.0]),
        c(obs(0, 0.0, &[false, false]), Deny, true, &d, [10.0, -0.05, 0.0, 0.0, 0.0]),
        c(obs(1, 30.0, &[]), Allow, true, &d, [10.0, -0.05, 0.5, 0.6, -0.6]),
        // Non-default constants.
        c(obs(0, 0.0, &[]), Deny, true, &zeroed, [0.0, 0.0, 0.5, 0.0, 0.0]),
        c(obs(0, 0.0, &[]), Allow, false, &no_mt, [0.0, -0.05, 0.0, -2.0, -1.2]),
        c(obs(0, 10.0, &[]), Allow, false, &short, [0.0, -0.05, 0.5, -2.0, -2.0]),
        c(obs(1, 45.0, &[]), Allow, false, &short, [0.0, -0.05, 0.5, 0.9, 0.0]),
    ]
}

fn reward_oracle() -> Outcome {
    let cases = reward_cases();
    let mut worst = 0.0f64;
    for case in &cases {
        let got = total_reward(&case.obs, case.action, case.completed, &case.cfg);
        let expected = RewardBreakdown::new(
            case.expected[0],
            case.expected[1],
            case.expected[2],
            case.expected[3],
            case.expected[4],
        );
        for (g, e) in got.components().iter().chain([&got.total]).zip(expected.components().iter().chain([&expected.total])) {
            worst = worst.max((g - e).abs());
        }
    }
    outcome(
        cases.len() >= 20 && worst <= 1e-9,
        format!("{} cases, max |error| {worst:.2e} (tol 1e-9)", cases.len()),
    )
}

// ---------------------------------------------------------------- BKT

fn bkt_oracle() -> Outcome {
    let p_inits = [0.1, 0.4, 0.8];
    let p_learns = [0.05, 0.2, 0.5];
    // Three KT-IDEM item sets, cycled over the sequence positions.
    let item_sets: [[ItemParams; 3]; 3] = [
        [ItemParams { guess: 0.2, slip: 0.1 }; 3],
        [
            ItemParams { guess: 0.1, slip: 0.05 },
            ItemParams { guess: 0.25, slip: 0.15 },
            ItemParams { guess: 0.33, slip: 0.2 },
        ],
        [
            ItemParams { guess: 0.45, slip: 0.3 },
            ItemParams { guess: 0.05, slip: 0.01 },
            ItemParams { guess: 0.3, slip: 0.25 },
        ],
    ];
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for &p_init in &p_inits {
        for &p_learn in &p_learns {
            for set in &item_sets {
                let skill = SkillParams { p_init, p_learn };
                for len in 0..=6usize {
                    let items: Vec<ItemParams> = (0..len).map(|j| set[j % 3]).collect();
                    let mut total = 0.0;
                    for mask in 0..(1u32 << len) {
                        let seq: Vec<bool> = (0..len).map(|j| mask >> j & 1 == 1).collect();
                        let enumerated = sequence_likelihood(skill, &items, &seq);
                        let recursive = forward_likelihood(skill, &items, &seq);
                        worst = worst.max((enumerated - recursive).abs());
                        total += enumerated;
                        checked += 1;
                    }
                    // Likelihoods over all sequences of a length form a distribution.
                    worst = worst.max((total - 1.0).abs());
                }
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{checked} sequences over 27 parameter sets, max |error| {worst:.2e} (tol 1e-12)"),
    )
}

// ---------------------------------------------------------------- gradients

/// Relative error `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)` between analytic and
/// central-difference gradients.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6ad);
    let ppo = PpoConfig::default();
    let a2c = A2cConfig::default();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let heads = [3, 2, 1][trial % 3];
        let hidden = rng.random_range(2..12);
        let net = Approximator::new(&[FEATURE_DIM, hidden, hidden, heads], &mut rng);
        let n = rng.random_range(1..16);
        let batch: Vec<Vec<f64>> = (0..n).map(|_| (0..FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let actions: Vec<Action> = (0..n).map(|_| Action::from_index(rng.random_range(0..2))).collect();
        let advs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rets: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let old: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5f64..-0.2)).collect();
        let targets: Vec<Vec<f64>> = (0..n).map(|_| (0..heads).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let use_ppo = trial % 2 == 0;
        // Per-sample loss and output derivative for the head layout under test.
        let sample = |i: usize, out: &[f64]| -> (f64, Vec<f64>) {
            match heads {
                3 if use_ppo => ppo_sample_grad(out, actions[i], old[i], advs[i], rets[i], &ppo),
                3 => a2c_sample_grad(out, actions[i], advs[i], rets[i], &a2c),
                2 => {
                    // Squared TD error on the taken action, as in Q-learning.
                    let a = actions[i].index();
                    let err = out[a] - targets[i][a];
                    let mut d = vec![0.0; 2];
                    d[a] = 2.0 * err;
                    (err * err, d)
                }
                _ => {
                    let err = out[0] - targets[i][0];
                    (err * err, vec![2.0 * err])
                }
            }
        };
        let (_, grads) = gradients(&net, &batch, sample).unwrap();
        let analytic = grads.flat();
        let params = net.params();
        let batch_loss = |p: &[f64]| {
            let mut probe = net.clone();
            probe.set_params(p).unwrap();
            batch
                .iter()
                .enumerate()
                .map(|(i, x)| sample(i, &probe.forward(x).unwrap()).0)
                .sum::<f64>()
                / n as f64
        };
        let mut numeric = vec![0.0; params.len()];
        let mut p = params.clone();
        for k in 0..params.len() {
            p[k] = params[k] + h;
            let up = batch_loss(&p);
            p[k] = params[k] - h;
            let down = batch_loss(&p);
            p[k] = params[k];
            numeric[k] = (up - down) / (2.0 * h);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    outcome(worst < 1e-4, format!("100 nets, max relative error {worst:.2e} (tol 1e-4)"))
}

// ---------------------------------------------------------------- env properties

fn env_properties() -> Outcome {
    let cfg = Config::default();
    let env = GateEnv::new(cfg.sim()).unwrap();
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |msg: String| {
        if failures.len() < 5 {
            failures.push(msg);
        }
    };
    let episodes = 10_000u64;
    let mut transitions = Vec::new();
    let mut again = Vec::new();
    let (mut decisions, mut completed) = (0usize, 0usize);
    for seed in 0..episodes {
        let p = (seed % 11) as f64 / 10.0;
        let policy = Policy::Random(p);
        transitions.clear();
        let metrics = env.run_episode(&policy, seed, Some(&mut transitions)).unwrap();
        decisions += transitions.len();
        completed += metrics.completed as usize;

        // Reward accounting.
        let mut sum = RewardBreakdown::default();
        for t in &transitions {
            let parts: f64 = t.reward.components().iter().sum();
            if (parts - t.reward.total).abs() > 1e-9 {
                fail(format!("seed {seed}: components {parts} ≠ total {}", t.reward.total));
            }
            sum += t.reward;
        }
        for (a, b) in sum.components().iter().chain([&sum.total]).zip(metrics.reward.components().iter().chain([&metrics.reward.total])) {
            if (a - b).abs() > 1e-9 {
                fail(format!("seed {seed}: summed reward {a} ≠ episode reward {b}"));
            }
        }

        let mut history_len = 0usize;
        for (k, t) in transitions.iter().enumerate() {
            let (b, a) = (&t.before, &t.after);
            // A decision is only ever requested while the gate is closed.
            if b.ai_currently_granted {
                fail(format!("seed {seed}: decision requested with the gate open"));
            }
            // Gate monotonicity: after Allow the gate stays open until the task ends.
            if t.action == Action::Allow && !(t.terminal || a.task_index > b.task_index) {
                fail(format!("seed {seed}: Allow at step {k} did not persist to the task boundary"));
            }
            // Strict linear progression.
            let advanced = a.task_index > b.task_index;
            if a.task_index < b.task_index || a.task_index > b.task_index + 1 {
                fail(format!("seed {seed}: task jumped {} → {}", b.task_index, a.task_index));
            }
            if !advanced && !t.terminal && a.question_index < b.question_index {
                fail(format!("seed {seed}: question went backwards"));
            }
            if advanced && !t.terminal {
                if a.question_index != 0 || a.failed_attempts_task != 0 || a.time_on_task != 0.0 {
                    fail(format!("seed {seed}: per-task counters not reset on advance"));
                }
                if a.ai_used_history.len() != b.ai_used_history.len() + 1 || a.ai_used_history[..b.ai_used_history.len()] != b.ai_used_history[..] {
                    fail(format!("seed {seed}: history not extended by one entry"));
                }
            }
            if b.ai_used_history.len() < history_len {
                fail(format!("seed {seed}: history shrank"));
            }
            history_len = b.ai_used_history.len();
            if t.action == Action::Deny && a.task_index == b.task_index && a.question_index > b.question_index + 1 {
                fail(format!("seed {seed}: skipped a question in one tick"));
            }
        }
        if !metrics.completed && metrics.duration_seconds + 1e-9 < cfg.tasks.episode_time_cap_seconds {
            fail(format!("seed {seed}: episode ended early without completing"));
        }
        if metrics.completed && transitions.last().map(|t| t.after.task_index) != Some(NUM_TASKS - 1) {
            // The final observation stays on the last task index.
            fail(format!("seed {seed}: completed without reaching the last task"));
        }

        // Seed determinism on every tenth episode.
        if seed % 10 == 0 {
            again.clear();
            let rerun = env.run_episode(&policy, seed, Some(&mut again)).unwrap();
            if rerun != metrics || again != transitions {
                fail(format!("seed {seed}: rerun differs"));
            }
        }
    }
    let n_fail = failures.len();
    outcome(
        n_fail == 0,
        if n_fail == 0 {
            format!("{episodes} episodes ({completed} completed, {decisions} decisions), accounting tol 1e-9, no violations")
        } else {
            format!("violations: {}", failures.join("; "))
        },
    )
}

// ---------------------------------------------------------------- learning

fn learning(r: &Reproduction) -> Outcome {
    let c = &r.comparison;
    let (Some(ppo), Some(always), Some(never), Some(random)) =
        (c.policy("ppo"), c.policy("always"), c.policy("never"), c.policy("random:0.5"))
    else {
        return outcome(false, "missing policies in the comparison");
    };
    let ratio_ok = ppo.mean_return >= 1.2 * random.mean_return;
    let beats = |b: &aigate::harness::PolicySummary| ppo.mean_return > b.mean_return && ppo.return_ci.lo > b.return_ci.hi;
    let passed = ratio_ok && beats(always) && beats(never) && ppo.n == 1000;
    outcome(
        passed,
        format!(
            "PPO {:.3} [{:.3}, {:.3}] vs Random {:.3} (need ≥ {:.3}), Always {:.3} [{:.3}, {:.3}], Never {:.3} [{:.3}, {:.3}]; n={} CRN episodes, 95% bootstrap",
            ppo.mean_return,
            ppo.return_ci.lo,
            ppo.return_ci.hi,
            random.mean_return,
            1.2 * random.mean_return,
            always.mean_return,
            always.return_ci.lo,
            always.return_ci.hi,
            never.mean_return,
            never.return_ci.lo,
            never.return_ci.hi,
            ppo.n
        ),
    )
}

fn ranking(r: &Reproduction) -> Outcome {
    let parts: Vec<String> = r
        .ranking
        .iter()
        .map(|c| format!("PPO {:.3} vs {} {:.3} − SE {:.3}", c.ppo_mean, c.other, c.other_mean, c.other_se))
        .collect();
    let passed = r.ranking.len() == 2 && r.ranking.iter().all(|c| c.passed);
    outcome(passed, format!("{} (5 seeds each, 1-SE margin)", parts.join("; ")))
}

fn heatmap(r: &Reproduction, out: &Path) -> Outcome {
    let Some((summary, _)) = r.heatmaps.iter().find(|(s, _)| s.seed == 0 && s.task_index == 1) else {
        return outcome(false, "no seed-0 heatmap for the second task");
    };
    // Judge the exported file, not the in-memory grid.
    let csv = std::fs::read_to_string(out.join(&summary.file)).unwrap();
    let map = PolicyHeatmap::from_csv(&csv, 1, &[false]).unwrap();
    let late = map.region_mean(|fa, t| fa >= 3 && t > 60.0).unwrap();
    let early = map.region_mean(|fa, t| fa == 0 && t < 60.0).unwrap();
    outcome(
        late - early >= 0.3,
        format!(
            "{}: P(Allow|s_fa≥3,s_t>60) {late:.3} − P(Allow|s_fa=0,s_t<60) {early:.3} = {:.3} (need ≥ 0.3)",
            summary.file,
            late - early
        ),
    )
}

fn mastery_direction(r: &Reproduction) -> Outcome {
    let Some(d) = r.comparison.delta("ppo", "always", Metric::Mastery) else {
        return outcome(false, "missing mastery delta");
    };
    let ppo = r.comparison.policy("ppo").unwrap();
    let always = r.comparison.policy("always").unwrap();
    // Cross-check the bootstrap from the per-episode vectors.
    let index = |name: &str| r.comparison.policies.iter().position(|p| p.name == name).unwrap();
    let a = &r.comparison.episodes[index("ppo")];
    let b = &r.comparison.episodes[index("always")];
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.mean_mastery() - y.mean_mastery()).collect();
    let consistent = (mean(&diffs) - d.delta).abs() < 1e-9;
    outcome(
        consistent && d.lower_bound >= 0.0,
        format!(
            "mean mastery PPO {:.4} vs Always {:.4}; Δ {:.4}, one-sided 95% lower bound {:.4} (need ≥ 0, α=0.05, n={})",
            ppo.mean_overall_mastery, always.mean_overall_mastery, d.delta, d.lower_bound, diffs.len()
        ),
    )
}

// ---------------------------------------------------------------- server replay

async fn post(client: &reqwest::Client, url: String, body: Value) -> (u16, Value) {
    let r = client.post(url).json(&body).send().await.unwrap();
    let status = r.status().as_u16();
    (status, r.json().await.unwrap_or(Value::Null))
}

async fn replay_equivalence(ppo: Checkpoint) -> Outcome {
    let cfg = Config::default();
    let caps = cfg.training.features;
    let threshold = Checkpoint::new(failure_threshold_network(3, &caps).unwrap());
    let state = AppState::new(&cfg)
        .unwrap()
        .with_checkpoint("ppo", &ppo, &cfg)
        .unwrap()
        .with_checkpoint("threshold", &threshold, &cfg)
        .unwrap()
        .start()
        .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    let client = reqwest::Client::new();
    let deciders = |export: &SessionExport| match export.condition {
        Condition::Always => GateDecider::Always,
        Condition::Never => GateDecider::Never,
        Condition::Rl => {
            let ckpt = if export.checkpoint.as_deref() == Some("threshold") { &threshold } else { &ppo };
            GateDecider::Network(NetworkPolicy::new(ckpt.net.clone(), caps).unwrap())
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5e55);
    let mut mismatches = Vec::new();
    let (mut events, mut decisions, mut rejected, mut chats) = (0usize, 0usize, 0usize, 0usize);
    for s in 0..100 {
        let (condition, checkpoint) = match rng.random_range(0..10) {
            0 => ("always", None),
            1 => ("never", None),
            2 | 3 => ("rl", Some("threshold")),
            _ => ("rl", Some("ppo")),
        };
        let (status, created) = post(&client, format!("{base}/sessions"), json!({ "condition": condition, "checkpoint": checkpoint })).await;
        assert_eq!(status, 201, "{created}");
        let id = created["session_id"].as_str().unwrap().to_string();
        let mut gate = created;
        let t0 = Utc::now();
        let mut clock_ms: i64 = 0;
        let mut last_accepted_ms: Option<i64> = None;
        let p_correct = rng.random_range(0.2..0.8);
        for _ in 0..rng.random_range(5..120) {
            if gate["finished"] == true {
                break;
            }
            clock_ms += match rng.random_range(0..10) {
                0 => 0,
                1 => 5_000,
                2 => rng.random_range(60_000..240_000),
                _ => rng.random_range(1..30_000),
            };
            let ts = (t0 + chrono::Duration::milliseconds(clock_ms)).to_rfc3339();
            let question = format!("t{}q{}", gate["task"].as_u64().unwrap() + 1, gate["question"].as_u64().unwrap() + 1);
            let roll = rng.random_range(0..100);
            let (status, body) = if let Some(last) = last_accepted_ms.filter(|_| roll < 3) {
                // Older than the last accepted event: must be rejected without effect.
                let stale = (t0 + chrono::Duration::milliseconds(last - 1)).to_rfc3339();
                let r = post(&client, format!("{base}/sessions/{id}/events"), json!({ "type": "heartbeat", "ts": stale })).await;
                assert_eq!(r.0, 409, "{}", r.1);
                r
            } else if roll < 18 {
                post(&client, format!("{base}/sessions/{id}/events"), json!({ "type": "heartbeat", "ts": ts })).await
            } else if roll < 33 && gate["ai_allowed"] == true {
                chats += 1;
                let r = post(&client, format!("{base}/sessions/{id}/chat"), json!({ "message": format!("hint {s}"), "ts": ts })).await;
                if r.0 == 200 {
                    (200, gate.clone())
                } else {
                    r
                }
            } else {
                let correct = rng.random::<f64>() < p_correct;
                post(&client, format!("{base}/sessions/{id}/events"), json!({ "type": "answer_submitted", "question_id": question, "correct": correct, "ts": ts })).await
            };
            if status == 200 {
                events += 1;
                last_accepted_ms = Some(clock_ms);
                if body.get("ai_allowed").is_some() {
                    gate = body;
                }
            } else {
                rejected += 1;
            }
        }
        let r = client.get(format!("{base}/sessions/{id}/export")).send().await.unwrap();
        let export: SessionExport = r.json().await.unwrap();
        decisions += export.decisions.len();
        let replayed = replay(&export, deciders(&export)).unwrap();
        if replayed != export.decisions {
            mismatches.push(id.clone());
        }
        // Every logged decision is what the policy says for its observation.
        let decider = deciders(&export);
        if export.decisions.iter().any(|d| decider.decide(&d.observation).unwrap() != d.action) {
            mismatches.push(format!("{id} (policy)"));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "100 fuzzed sessions, {events} accepted events ({chats} chats, {rejected} rejected), {decisions} decisions; mismatching sessions: {}",
            mismatches.len()
        ),
    )
}

// ---------------------------------------------------------------- main

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    report("reward oracle", timed(Duration::from_secs(1), reward_oracle));
    report("bkt enumeration vs recursion", timed(Duration::from_secs(10), bkt_oracle));
    report("gradient check", timed(Duration::from_secs(30), gradient_check));
    report("env property suite", timed(Duration::from_secs(60), env_properties));

    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let reproduction = aigate::harness::reproduce(&Config::default(), &ReproduceOptions::default(), dir.path()).unwrap();
    let train_time = start.elapsed();
    let learn_limit = Duration::from_secs(600);
    let mut learn = learning(&reproduction);
    learn.detail = format!("{}; full reproduce run {:.1?} (limit {:?})", learn.detail, train_time, learn_limit);
    learn.passed &= train_time < learn_limit;
    report("learning acceptance", learn);
    report("algorithm ranking", ranking(&reproduction));
    report("behavioral shaping heatmap", heatmap(&reproduction, dir.path()));
    report("mastery direction vs always", mastery_direction(&reproduction));

    let ppo0 = reproduction
        .outcomes_of(AgentKind::Ppo)
        .next()
        .expect("seed-0 PPO checkpoint")
        .checkpoint
        .clone();
    let runtime = tokio::runtime::Runtime::new().unwrap();
    report("server/env replay equivalence", runtime.block_on(replay_equivalence(ppo0)));

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.passed).map(|(n, _)| *n).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

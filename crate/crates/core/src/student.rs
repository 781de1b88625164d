//! Simulated learner.
//!
//! Each task trains one latent skill whose mastery probability follows
//! Bayesian Knowledge Tracing. Every question is its own item with a
//! private guess/slip pair, and repeated attempts at the same question get
//! a capped guess bonus (options can be eliminated on a multiple-choice
//! question). When the gate is open the learner may hand an attempt to the
//! assistant, which answers with a fixed accuracy, learns at a reduced rate
//! and answers faster.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::{NUM_ITEMS, NUM_TASKS};
use crate::error::{Error, Result, Violation};

/// Minimum acceptance rate before rejection sampling gives way to the
/// inverse-CDF method.
const MIN_ACCEPTANCE: f64 = 0.01;

/// `Normal(mean, std)` conditioned on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncNormal {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncNormal {
    pub const fn new(mean: f64, std: f64, lo: f64, hi: f64) -> Self {
        Self { mean, std, lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_truncated_normal(self.mean, self.std, self.lo, self.hi, rng)
    }

    fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.lo <= self.mean && self.mean <= self.hi) {
            out.push(Violation::new(path, "lower ≤ mean ≤ upper"));
        }
        if !(self.std >= 0.0) {
            out.push(Violation::new(path, "std ≥ 0"));
        }
        out
    }
}

pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    std: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::Parameter(format!(
            "truncation bounds out of order: lo={lo} > hi={hi}"
        )));
    }
    if !(std >= 0.0) || !mean.is_finite() {
        return Err(Error::Parameter(format!(
            "truncated normal needs finite mean and std ≥ 0 (mean={mean}, std={std})"
        )));
    }
    if std == 0.0 || lo == hi {
        return Ok(mean.clamp(lo, hi));
    }
    let unit = Normal::standard();
    let a = unit.cdf((lo - mean) / std);
    let b = unit.cdf((hi - mean) / std);
    if b - a >= MIN_ACCEPTANCE {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = mean + std * z;
            if (lo..=hi).contains(&x) {
                return Ok(x);
            }
        }
    }
    let u = a + (b - a) * rng.random::<f64>();
    Ok((mean + std * unit.inverse_cdf(u)).clamp(lo, hi))
}

/// Knowledge-tracing parameters of one simulated learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BktParams {
    pub p_init: [f64; NUM_TASKS],
    pub p_learn: [f64; NUM_TASKS],
    pub guess: [f64; NUM_ITEMS],
    pub slip: [f64; NUM_ITEMS],
    pub retake_guess_increment: f64,
    pub retake_guess_cap: f64,
}

impl BktParams {
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let probs = self
            .p_init
            .iter()
            .map(|p| ("p_init", *p))
            .chain(self.p_learn.iter().map(|p| ("p_learn", *p)))
            .chain(self.guess.iter().map(|p| ("guess", *p)))
            .chain(self.slip.iter().map(|p| ("slip", *p)))
            .chain([
                ("retake_guess_increment", self.retake_guess_increment),
                ("retake_guess_cap", self.retake_guess_cap),
            ]);
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                out.push(Violation::new(name, "probability in [0,1]"));
            }
        }
        let max_guess = self.guess.iter().copied().fold(0.0, f64::max);
        if self.retake_guess_cap < max_guess {
            out.push(Violation::new(
                "retake_guess_cap",
                "retake_guess_cap ≥ max item guess",
            ));
        }
        out
    }
}

/// How an open gate changes the simulated learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AiEffectParams {
    /// Chance an attempt is delegated to the assistant while the gate is open.
    pub p_use_when_available: f64,
    /// Accuracy of an assistant-mediated answer.
    pub p_ai_correct: f64,
    /// Multiplier on the learning rate for assistant-mediated attempts.
    pub learn_attenuation: f64,
    /// Multiplier on answer latency for assistant-mediated attempts.
    pub latency_factor: f64,
}

impl Default for AiEffectParams {
    fn default() -> Self {
        Self {
            p_use_when_available: 0.8,
            p_ai_correct: 0.9,
            learn_attenuation: 0.5,
            latency_factor: 0.6,
        }
    }
}

impl AiEffectParams {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, p) in [
            ("p_use_when_available", self.p_use_when_available),
            ("p_ai_correct", self.p_ai_correct),
            ("learn_attenuation", self.learn_attenuation),
        ] {
            if !(0.0..=1.0).contains(&p) {
                out.push(Violation::new(format!("{prefix}{name}"), "value in [0,1]"));
            }
        }
        if !(self.latency_factor > 0.0 && self.latency_factor <= 1.0) {
            out.push(Violation::new(
                format!("{prefix}latency_factor"),
                "latency_factor in (0,1]",
            ));
        }
        out
    }
}

/// Seconds a learner spends on one answer attempt, before AI scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyParams {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for LatencyParams {
    fn default() -> Self {
        Self {
            mean: 35.0,
            std: 15.0,
            min: 10.0,
            max: 120.0,
        }
    }
}

impl LatencyParams {
    fn dist(&self) -> TruncNormal {
        TruncNormal::new(self.mean, self.std, self.min, self.max)
    }
}

/// Population from which simulated learners are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub p_init: TruncNormal,
    pub p_learn: TruncNormal,
    pub guess: TruncNormal,
    pub slip: TruncNormal,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            p_init: TruncNormal::new(0.35, 0.15, 0.05, 0.9),
            p_learn: TruncNormal::new(0.25, 0.1, 0.05, 0.7),
            guess: TruncNormal::new(0.2, 0.08, 0.02, 0.45),
            slip: TruncNormal::new(0.1, 0.05, 0.01, 0.3),
        }
    }
}

impl PopulationSpec {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, d) in [
            ("p_init", &self.p_init),
            ("p_learn", &self.p_learn),
            ("guess", &self.guess),
            ("slip", &self.slip),
        ] {
            out.extend(d.violations(&format!("{prefix}{name}")));
            if d.lo < 0.0 || d.hi > 1.0 {
                out.push(Violation::new(
                    format!("{prefix}{name}"),
                    "probability bounds within [0,1]",
                ));
            }
        }
        out
    }
}

/// Everything under the `student` key of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentConfig {
    pub population: PopulationSpec,
    pub ai: AiEffectParams,
    pub latency: LatencyParams,
    pub retake_guess_increment: f64,
    pub retake_guess_cap: f64,
    /// Fraction of the previous skill's mastery carried into the next
    /// skill's prior (tasks repeat some material).
    pub cross_task_bonus: f64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            population: PopulationSpec::default(),
            ai: AiEffectParams::default(),
            latency: LatencyParams::default(),
            retake_guess_increment: 0.1,
            retake_guess_cap: 0.6,
            cross_task_bonus: 0.05,
        }
    }
}

impl StudentConfig {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = self.population.violations(&format!("{prefix}population."));
        out.extend(self.ai.violations(&format!("{prefix}ai.")));
        let lat = &self.latency;
        if !(lat.min > 0.0 && lat.min <= lat.mean && lat.mean <= lat.max && lat.std >= 0.0) {
            out.push(Violation::new(
                format!("{prefix}latency"),
                "0 < min ≤ mean ≤ max and std ≥ 0",
            ));
        }
        for (name, p) in [
            ("retake_guess_increment", self.retake_guess_increment),
            ("retake_guess_cap", self.retake_guess_cap),
            ("cross_task_bonus", self.cross_task_bonus),
        ] {
            if !(0.0..=1.0).contains(&p) {
                out.push(Violation::new(format!("{prefix}{name}"), "value in [0,1]"));
            }
        }
        if self.retake_guess_cap < self.population.guess.hi {
            out.push(Violation::new(
                format!("{prefix}retake_guess_cap"),
                "retake_guess_cap ≥ max item guess",
            ));
        }
        out
    }
}

/// One simulated learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentModel {
    pub params: BktParams,
    pub ai: AiEffectParams,
    pub latency: LatencyParams,
    pub cross_task_bonus: f64,
    /// Current mastery probability per skill (one skill per task).
    pub mastery: [f64; NUM_TASKS],
    pub seed: u64,
}

impl StudentModel {
    /// Draws a learner from the population.
    pub fn sample<R: Rng + ?Sized>(cfg: &StudentConfig, seed: u64, rng: &mut R) -> Result<Self> {
        let pop = &cfg.population;
        let mut p_init = [0.0; NUM_TASKS];
        let mut p_learn = [0.0; NUM_TASKS];
        let mut guess = [0.0; NUM_ITEMS];
        let mut slip = [0.0; NUM_ITEMS];
        for p in &mut p_init {
            *p = pop.p_init.sample(rng)?;
        }
        for p in &mut p_learn {
            *p = pop.p_learn.sample(rng)?;
        }
        for (g, s) in guess.iter_mut().zip(slip.iter_mut()) {
            *g = pop.guess.sample(rng)?;
            *s = pop.slip.sample(rng)?;
        }
        let params = BktParams {
            p_init,
            p_learn,
            guess,
            slip,
            retake_guess_increment: cfg.retake_guess_increment,
            retake_guess_cap: cfg.retake_guess_cap,
        };
        let v = params.violations();
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        Ok(Self {
            mastery: params.p_init,
            params,
            ai: cfg.ai.clone(),
            latency: cfg.latency.clone(),
            cross_task_bonus: cfg.cross_task_bonus,
            seed,
        })
    }

    /// Applies the carry-over from the previous skill when `task` begins.
    pub fn begin_task(&mut self, task: usize) {
        if task > 0 && task < NUM_TASKS {
            let carried = self.params.p_init[task] + self.cross_task_bonus * self.mastery[task - 1];
            self.mastery[task] = carried.min(1.0);
        }
    }

    fn item(&self, item: usize) -> Result<(f64, f64)> {
        if item >= NUM_ITEMS {
            return Err(Error::UnknownItem(item));
        }
        Ok((self.params.guess[item], self.params.slip[item]))
    }

    /// Guess probability after `retakes` failed attempts on the same item.
    pub fn retake_guess(&self, item: usize, retakes: u32) -> Result<f64> {
        let (guess, _) = self.item(item)?;
        let inflated = guess + retakes as f64 * self.params.retake_guess_increment;
        Ok(inflated.min(self.params.retake_guess_cap.max(guess)))
    }

    pub fn attempt_correct_prob(&self, item: usize, retakes: u32, ai_in_use: bool) -> Result<f64> {
        let (_, slip) = self.item(item)?;
        if ai_in_use {
            return Ok(self.ai.p_ai_correct);
        }
        let guess = self.retake_guess(item, retakes)?;
        let mastery = self.mastery[item / crate::domain::QUESTIONS_PER_TASK];
        Ok(mastery * (1.0 - slip) + (1.0 - mastery) * guess)
    }

    /// Updates the owning skill after an attempt on `item`.
    ///
    /// An assistant-mediated answer has the same likelihood whether or not
    /// the skill is mastered, so it carries no evidence: the update runs
    /// with the assistant's emission (guess = accuracy, slip = 1 − accuracy)
    /// and only the attenuated learning step moves the belief.
    pub fn observe(&mut self, item: usize, retakes: u32, correct: bool, ai_mediated: bool) -> Result<f64> {
        let skill = item / crate::domain::QUESTIONS_PER_TASK;
        let (guess, slip) = if ai_mediated {
            (self.ai.p_ai_correct, 1.0 - self.ai.p_ai_correct)
        } else {
            (self.retake_guess(item, retakes)?, self.item(item)?.1)
        };
        let updated = bkt_update(
            self.mastery[skill],
            correct,
            guess,
            slip,
            self.params.p_learn[skill],
            ai_mediated,
            self.ai.learn_attenuation,
        );
        self.mastery[skill] = updated;
        Ok(updated)
    }
}

/// Posterior-then-learn knowledge-tracing update.
pub fn bkt_update(
    mastery: f64,
    correct: bool,
    guess: f64,
    slip: f64,
    p_learn: f64,
    ai_mediated: bool,
    learn_attenuation: f64,
) -> f64 {
    let (num, den) = if correct {
        let num = mastery * (1.0 - slip);
        (num, num + (1.0 - mastery) * guess)
    } else {
        let num = mastery * slip;
        (num, num + (1.0 - mastery) * (1.0 - guess))
    };
    let posterior = if den > 0.0 {
        num / den
    } else if mastery >= 1.0 {
        1.0
    } else {
        0.0
    };
    let learn = if ai_mediated {
        p_learn * learn_attenuation
    } else {
        p_learn
    };
    (posterior + (1.0 - posterior) * learn).clamp(0.0, 1.0)
}

/// Seconds until the next answer, rounded up to the decision grid.
pub fn answer_latency<R: Rng + ?Sized>(
    latency: &LatencyParams,
    ai: &AiEffectParams,
    ai_in_use: bool,
    tick_seconds: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut seconds = latency.dist().sample(rng)?;
    if ai_in_use {
        seconds *= ai.latency_factor;
    }
    Ok(round_up_to_tick(seconds, tick_seconds))
}

pub fn round_up_to_tick(seconds: f64, tick_seconds: f64) -> f64 {
    let ticks = (seconds / tick_seconds - 1e-9).ceil().max(1.0);
    ticks * tick_seconds
}

/// Single-skill parameters for likelihood computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkillParams {
    pub p_init: f64,
    pub p_learn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemParams {
    pub guess: f64,
    pub slip: f64,
}

fn emission(item: &ItemParams, mastered: bool, correct: bool) -> f64 {
    let p_correct = if mastered { 1.0 - item.slip } else { item.guess };
    if correct {
        p_correct
    } else {
        1.0 - p_correct
    }
}

/// Probability of a response sequence, by enumerating every time at which
/// the latent skill could have become mastered.
///
/// Onset `k` means the skill is mastered from observation `k` onwards;
/// onset `n` covers "not mastered during the sequence".
pub fn sequence_likelihood(skill: SkillParams, items: &[ItemParams], correct: &[bool]) -> f64 {
    assert_eq!(items.len(), correct.len(), "item and response sequences differ in length");
    let n = items.len();
    if n == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for onset in 0..=n {
        let prior = if onset == 0 {
            skill.p_init
        } else if onset < n {
            (1.0 - skill.p_init) * (1.0 - skill.p_learn).powi(onset as i32 - 1) * skill.p_learn
        } else {
            (1.0 - skill.p_init) * (1.0 - skill.p_learn).powi(n as i32 - 1)
        };
        let emissions: f64 = items
            .iter()
            .zip(correct)
            .enumerate()
            .map(|(j, (item, &c))| emission(item, j >= onset, c))
            .product();
        total += prior * emissions;
    }
    total
}

/// Same probability as [`sequence_likelihood`], computed by chaining the
/// per-step predictive probabilities of the running belief.
pub fn forward_likelihood(skill: SkillParams, items: &[ItemParams], correct: &[bool]) -> f64 {
    assert_eq!(items.len(), correct.len(), "item and response sequences differ in length");
    let mut belief = skill.p_init;
    let mut likelihood = 1.0;
    for (item, &c) in items.iter().zip(correct) {
        let p_correct = belief * (1.0 - item.slip) + (1.0 - belief) * item.guess;
        likelihood *= if c { p_correct } else { 1.0 - p_correct };
        belief = bkt_update(belief, c, item.guess, item.slip, skill.p_learn, false, 1.0);
    }
    likelihood
}

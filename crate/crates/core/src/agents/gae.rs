/// Generalized advantage estimates and the matching value targets.
///
/// `bootstrap` is the value of the state following the last transition;
/// it is ignored when that transition is terminal.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    terminals: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "rewards and values must align");
    assert_eq!(rewards.len(), terminals.len(), "rewards and terminals must align");
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_advantage = 0.0;
    for t in (0..n).rev() {
        let live = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_advantage = delta + gamma * lambda * live * next_advantage;
        advantages[t] = next_advantage;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

//! Interval-driven power management: statistic-based and threshold-based
//! power-off, the power-on rules, and application of decisions to a cache.

use serde::{Deserialize, Serialize};

use crate::cache::{Cache, IntervalCounters, Writeback};
use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    None,
    Statistic,
    Threshold,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::None => "none",
            PolicyKind::Statistic => "statistic",
            PolicyKind::Threshold => "threshold",
        }
    }
}

fn default_interval() -> u64 {
    64_000_000
}
fn default_n_off_max() -> usize {
    16
}
fn default_c_th() -> f64 {
    0.005
}
fn default_th_ind() -> f64 {
    0.007
}
fn default_th_at() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_interval")]
    pub interval_cycles: u64,
    #[serde(default = "default_n_off_max")]
    pub n_off_max: usize,
    #[serde(default = "default_c_th")]
    pub c_th: f64,
    #[serde(default = "default_th_ind")]
    pub th_ind: f64,
    #[serde(default = "default_th_at")]
    pub th_at: f64,
    /// Apply the N_off cap to the within-interval branch as well.
    #[serde(default)]
    pub cap_branch_i: bool,
    /// Require both previous interval means to exceed twice the current
    /// mean, instead of only the one two intervals back.
    #[serde(default)]
    pub prose_branch_ii: bool,
    /// Emulate 12-bit saturating counters.
    #[serde(default)]
    pub saturating_counters: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            interval_cycles: default_interval(),
            n_off_max: default_n_off_max(),
            c_th: default_c_th(),
            th_ind: default_th_ind(),
            th_at: default_th_at(),
            cap_branch_i: false,
            prose_branch_ii: false,
            saturating_counters: false,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.interval_cycles == 0 {
            return Err(ConfigError::invalid("interval_cycles must be positive"));
        }
        for (name, v) in [("c_th", self.c_th), ("th_ind", self.th_ind), ("th_at", self.th_at)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ConfigError::invalid(format!("{name} = {v} is not in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Means of the two intervals before the current one.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanHistory {
    pub prev1: f64,
    pub prev2: f64,
}

impl MeanHistory {
    pub fn advance(&mut self, mu: f64) {
        self.prev2 = self.prev1;
        self.prev1 = mu;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalStats {
    /// Complete accesses per bank.
    pub c_x: Vec<u64>,
    pub mu: f64,
    /// Population standard deviation.
    pub sigma: f64,
    pub mu_prev1: f64,
    pub mu_prev2: f64,
}

pub fn compute_interval_stats(counters: &[IntervalCounters], history: &MeanHistory) -> IntervalStats {
    let c_x: Vec<u64> = counters.iter().map(|c| c.complete() as u64).collect();
    let (mu, sigma) = mean_and_std(&c_x);
    IntervalStats { c_x, mu, sigma, mu_prev1: history.prev1, mu_prev2: history.prev2 }
}

fn mean_and_std(xs: &[u64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mu = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = xs.iter().map(|&x| (x as f64 - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OffMode {
    /// Uncompressed lines are written back if dirty and dropped (M = 1).
    Discard,
    /// Uncompressed lines move to active banks (M = 0).
    Migrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerAction {
    StayOn,
    StayOff,
    TurnOff(OffMode),
    TurnOn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowerDecision {
    pub actions: Vec<PowerAction>,
}

impl PowerDecision {
    /// The no-change decision for the given power flags.
    pub fn hold(power: &[bool]) -> Self {
        PowerDecision {
            actions: power
                .iter()
                .map(|&on| if on { PowerAction::StayOn } else { PowerAction::StayOff })
                .collect(),
        }
    }

    pub fn turned_off(&self) -> Vec<usize> {
        self.indices(|a| matches!(a, PowerAction::TurnOff(_)))
    }

    pub fn turned_on(&self) -> Vec<usize> {
        self.indices(|a| a == PowerAction::TurnOn)
    }

    pub fn is_noop(&self) -> bool {
        self.actions.iter().all(|a| matches!(a, PowerAction::StayOn | PowerAction::StayOff))
    }

    fn indices(&self, pred: impl Fn(PowerAction) -> bool) -> Vec<usize> {
        self.actions.iter().enumerate().filter(|(_, a)| pred(**a)).map(|(i, _)| i).collect()
    }

    /// Takes every non-hold action from `other`. The two decisions must not
    /// both change the same bank.
    pub fn merge(mut self, other: &PowerDecision) -> Self {
        for (a, b) in self.actions.iter_mut().zip(&other.actions) {
            if matches!(b, PowerAction::TurnOff(_) | PowerAction::TurnOn) {
                debug_assert!(matches!(a, PowerAction::StayOn | PowerAction::StayOff));
                *a = *b;
            }
        }
        self
    }

    /// Banks on after the decision is applied.
    pub fn on_after(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| matches!(a, PowerAction::StayOn | PowerAction::TurnOn))
            .count()
    }
}

/// Banks sorted by ascending key, ties by lower index.
fn ascending(candidates: &[usize], key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut v = candidates.to_vec();
    v.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    v
}

/// Reverts turn-offs until at least one bank stays on, keeping the bank
/// with the largest `key` (ties: lower index).
fn keep_one_on(decision: &mut PowerDecision, key: impl Fn(usize) -> f64) {
    if decision.on_after() > 0 {
        return;
    }
    let off = decision.turned_off();
    let keep = off
        .iter()
        .copied()
        .max_by(|&a, &b| key(a).total_cmp(&key(b)).then(b.cmp(&a)));
    if let Some(k) = keep {
        decision.actions[k] = PowerAction::StayOn;
    }
}

fn off_count(power: &[bool]) -> usize {
    power.iter().filter(|&&on| !on).count()
}

/// Statistic-based power-off.
///
/// If the spread of complete accesses exceeds their mean, every active bank
/// below the mean is discarded. Otherwise, if the mean two intervals ago was
/// more than twice the current one and fewer than `n_off_max` banks are off,
/// up to `n_off_max - N` of the coldest active banks are migrated.
pub fn statistic_power_off(stats: &IntervalStats, power: &[bool], cfg: &PolicyConfig) -> PowerDecision {
    assert_eq!(stats.c_x.len(), power.len());
    let mut decision = PowerDecision::hold(power);
    let on: Vec<usize> = (0..power.len()).filter(|&i| power[i]).collect();
    let n_off = off_count(power);
    let cx = |i: usize| stats.c_x[i] as f64;

    if stats.sigma > stats.mu {
        let mut cold: Vec<usize> = on.iter().copied().filter(|&i| cx(i) < stats.mu).collect();
        if cfg.cap_branch_i {
            cold = ascending(&cold, cx);
            cold.truncate(cfg.n_off_max.saturating_sub(n_off));
        }
        for i in cold {
            decision.actions[i] = PowerAction::TurnOff(OffMode::Discard);
        }
    } else {
        let dropped = stats.mu_prev2 > 2.0 * stats.mu
            && (!cfg.prose_branch_ii || stats.mu_prev1 > 2.0 * stats.mu);
        if dropped && n_off < cfg.n_off_max {
            let mut order = ascending(&on, cx);
            order.truncate(cfg.n_off_max - n_off);
            for i in order {
                decision.actions[i] = PowerAction::TurnOff(OffMode::Migrate);
            }
        }
    }
    keep_one_on(&mut decision, cx);
    decision
}

/// Fraction of all interval accesses that were complete accesses to `bank`.
pub fn block_access_count(counters: &[IntervalCounters], bank: usize) -> Option<f64> {
    let total: u64 = counters.iter().map(|c| c.c_access as u64).sum();
    if total == 0 {
        return None;
    }
    Some(counters[bank].complete() as f64 / total as f64)
}

/// Threshold-based power-off: active banks whose block-access count is
/// below `c_th`, lowest first, keeping at most `n_off_max` banks off.
pub fn threshold_power_off(counters: &[IntervalCounters], power: &[bool], cfg: &PolicyConfig) -> PowerDecision {
    assert_eq!(counters.len(), power.len());
    let mut decision = PowerDecision::hold(power);
    let total: u64 = counters.iter().map(|c| c.c_access as u64).sum();
    if total == 0 {
        return decision;
    }
    let share = |i: usize| counters[i].complete() as f64 / total as f64;
    let candidates: Vec<usize> = (0..power.len()).filter(|&i| power[i] && share(i) < cfg.c_th).collect();
    let mut order = ascending(&candidates, share);
    order.truncate(cfg.n_off_max.saturating_sub(off_count(power)));
    for i in order {
        decision.actions[i] = PowerAction::TurnOff(OffMode::Discard);
    }
    keep_one_on(&mut decision, share);
    decision
}

/// Power-on rules for gated banks.
///
/// A bank comes back individually when its compressed and invalid accesses
/// are under `th_ind` of its accesses. Separately, if the misses of all
/// gated banks exceed `th_at` of `total_accesses`, half of the remaining
/// gated banks (rounded up, most misses first) come back.
pub fn power_on(counters: &[IntervalCounters], power: &[bool], total_accesses: u64, cfg: &PolicyConfig) -> PowerDecision {
    assert_eq!(counters.len(), power.len());
    let mut decision = PowerDecision::hold(power);
    let off: Vec<usize> = (0..power.len()).filter(|&i| !power[i]).collect();
    for &i in &off {
        let c = &counters[i];
        if c.c_access > 0 {
            let ratio = (c.c_compressed + c.c_invalid) as f64 / c.c_access as f64;
            if ratio < cfg.th_ind {
                decision.actions[i] = PowerAction::TurnOn;
            }
        }
    }
    if total_accesses == 0 {
        return decision;
    }
    let extra = |i: usize| (counters[i].c_access - counters[i].c_compressed) as u64;
    let extra_total: u64 = off.iter().map(|&i| extra(i)).sum();
    if extra_total as f64 / total_accesses as f64 > cfg.th_at {
        let remaining: Vec<usize> =
            off.iter().copied().filter(|&i| decision.actions[i] == PowerAction::StayOff).collect();
        let mut order = ascending(&remaining, |i| -(extra(i) as f64));
        order.truncate(remaining.len().div_ceil(2));
        for i in order {
            decision.actions[i] = PowerAction::TurnOn;
        }
    }
    decision
}

/// What applying a decision did to the cache.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GatingEvents {
    pub turned_on: Vec<usize>,
    pub turned_off: Vec<(usize, OffMode)>,
    pub writebacks: Vec<Writeback>,
    pub migrated_lines: usize,
}

/// Applies a decision: power-ons first, then every power-off flag, then
/// discards, then migrations, then eviction of lines made unreachable.
///
/// Panics if the decision would leave no bank on, or disagrees with the
/// cache's current power flags.
pub fn apply_decision(decision: &PowerDecision, cache: &mut Cache) -> GatingEvents {
    let power = cache.power_flags();
    assert_eq!(decision.actions.len(), power.len());
    assert!(decision.on_after() > 0, "a decision must leave at least one bank on");
    let mut ev = GatingEvents::default();
    for (i, a) in decision.actions.iter().enumerate() {
        match a {
            PowerAction::TurnOn => {
                assert!(!power[i], "bank {i} is already on");
                cache.power_on_bank(i);
                ev.turned_on.push(i);
            }
            PowerAction::TurnOff(mode) => {
                assert!(power[i], "bank {i} is already off");
                ev.turned_off.push((i, *mode));
            }
            PowerAction::StayOn | PowerAction::StayOff => {}
        }
    }
    for &(i, mode) in &ev.turned_off {
        cache.gate_bank(i, mode == OffMode::Migrate);
    }
    for &(i, mode) in &ev.turned_off {
        if mode == OffMode::Discard {
            ev.writebacks.extend(cache.discard_bank(i));
        }
    }
    for &(i, mode) in &ev.turned_off {
        if mode == OffMode::Migrate {
            let (moved, wbs) = cache.migrate_bank(i);
            ev.migrated_lines += moved;
            ev.writebacks.extend(wbs);
        }
    }
    ev.writebacks.extend(cache.rehome());
    ev
}

/// Per-simulation policy state.
#[derive(Debug, Clone)]
pub struct PolicyEngine {
    pub kind: PolicyKind,
    pub config: PolicyConfig,
    history: MeanHistory,
}

impl PolicyEngine {
    pub fn new(kind: PolicyKind, config: PolicyConfig) -> Self {
        PolicyEngine { kind, config, history: MeanHistory::default() }
    }

    pub fn history(&self) -> MeanHistory {
        self.history
    }

    /// Decides at an interval boundary from a counter snapshot. Power-on is
    /// evaluated on the gated banks and power-off on the active ones, so no
    /// bank changes twice.
    pub fn decide(&mut self, counters: &[IntervalCounters], power: &[bool]) -> (PowerDecision, IntervalStats) {
        let stats = compute_interval_stats(counters, &self.history);
        self.history.advance(stats.mu);
        let total: u64 = counters.iter().map(|c| c.c_access as u64).sum();
        let decision = match self.kind {
            PolicyKind::None => PowerDecision::hold(power),
            PolicyKind::Statistic => power_on(counters, power, total, &self.config)
                .merge(&statistic_power_off(&stats, power, &self.config)),
            PolicyKind::Threshold => power_on(counters, power, total, &self.config)
                .merge(&threshold_power_off(counters, power, &self.config)),
        };
        (decision, stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctr(a: u32, c: u32, i: u32) -> IntervalCounters {
        IntervalCounters { c_access: a, c_compressed: c, c_invalid: i, c_miss: 0 }
    }

    fn stats_for(cx: &[u64], prev2: f64) -> IntervalStats {
        let counters: Vec<_> = cx.iter().map(|&x| ctr(x as u32, 0, 0)).collect();
        compute_interval_stats(&counters, &MeanHistory { prev1: 0.0, prev2 })
    }

    #[test]
    fn stats_of_idle_interval() {
        let s = stats_for(&[0; 64], 0.0);
        assert_eq!((s.mu, s.sigma), (0.0, 0.0));
    }

    #[test]
    fn stats_single_hot_bank() {
        let mut cx = vec![0u64; 64];
        cx[0] = 1000;
        let s = stats_for(&cx, 0.0);
        assert_relative_eq!(s.mu, 15.625);
        // sqrt(1000^2/64 - 15.625^2)
        assert_relative_eq!(s.sigma, (15625.0f64 - 244.140625).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn complete_access_arithmetic() {
        let s = compute_interval_stats(&[ctr(100, 50, 30)], &MeanHistory::default());
        assert_eq!(s.c_x, vec![20]);
    }

    #[test]
    fn history_shifts() {
        let mut h = MeanHistory::default();
        h.advance(3.0);
        h.advance(5.0);
        assert_eq!(h, MeanHistory { prev1: 5.0, prev2: 3.0 });
    }

    #[test]
    fn branch_i_discards_cold_banks() {
        let mut cx = vec![10u64; 64];
        for b in cx.iter_mut().take(6) {
            *b = 1000;
        }
        let s = stats_for(&cx, 0.0);
        assert!((s.mu - 102.8125).abs() < 1e-9);
        assert!((s.sigma - 288.6).abs() < 0.1);
        let d = statistic_power_off(&s, &[true; 64], &PolicyConfig::default());
        assert_eq!(d.turned_off(), (6..64).collect::<Vec<_>>());
        assert!(d.actions[6..].iter().all(|a| *a == PowerAction::TurnOff(OffMode::Discard)));
    }

    #[test]
    fn uniform_steady_load_is_left_alone() {
        let s = stats_for(&[50; 64], 50.0);
        let d = statistic_power_off(&s, &[true; 64], &PolicyConfig::default());
        assert!(d.is_noop());
    }

    #[test]
    fn branch_ii_migrates_up_to_n_off() {
        let s = stats_for(&[10; 64], 25.0);
        let d = statistic_power_off(&s, &[true; 64], &PolicyConfig::default());
        assert_eq!(d.turned_off(), (0..16).collect::<Vec<_>>());
        assert!(d.actions[..16].iter().all(|a| *a == PowerAction::TurnOff(OffMode::Migrate)));
        // 10 already off: only 6 more
        let mut power = [true; 64];
        for p in power.iter_mut().skip(54) {
            *p = false;
        }
        let d = statistic_power_off(&s, &power, &PolicyConfig::default());
        assert_eq!(d.turned_off().len(), 6);
    }

    #[test]
    fn prose_branch_ii_needs_both_means() {
        let cfg = PolicyConfig { prose_branch_ii: true, ..Default::default() };
        let s = stats_for(&[10; 64], 25.0);
        assert!(statistic_power_off(&s, &[true; 64], &cfg).is_noop());
        let s = IntervalStats { mu_prev1: 21.0, ..s };
        assert_eq!(statistic_power_off(&s, &[true; 64], &cfg).turned_off().len(), 16);
    }

    #[test]
    fn cap_branch_i_limits_and_prefers_coldest() {
        let mut cx: Vec<u64> = (0..64).map(|i| 10 + i as u64).collect();
        cx[63] = 100_000;
        let s = stats_for(&cx, 0.0);
        let cfg = PolicyConfig { cap_branch_i: true, ..Default::default() };
        let d = statistic_power_off(&s, &[true; 64], &cfg);
        assert_eq!(d.turned_off(), (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn never_turns_everything_off() {
        // the only hot bank is already off
        let mut cx = vec![1u64; 8];
        cx[0] = 1000;
        let s = stats_for(&cx, 0.0);
        let mut power = [true; 8];
        power[0] = false;
        let d = statistic_power_off(&s, &power, &PolicyConfig::default());
        assert_eq!(d.on_after(), 1);
        assert_eq!(d.actions[1], PowerAction::StayOn);
    }

    #[test]
    fn threshold_spot_values() {
        let mut counters = vec![ctr(0, 0, 0); 64];
        counters[0] = ctr(100, 50, 30);
        counters[1] = ctr(1000, 0, 0);
        counters[2] = ctr(8900, 0, 0);
        assert_relative_eq!(block_access_count(&counters, 0).unwrap(), 0.002);
        assert_relative_eq!(block_access_count(&counters, 1).unwrap(), 0.1);
        // idle banks go first under the cap
        let d = threshold_power_off(&counters, &[true; 64], &PolicyConfig::default());
        assert_eq!(d.actions[0], PowerAction::StayOn);
        assert_eq!(d.turned_off(), (3..19).collect::<Vec<_>>());
        let wide = PolicyConfig { n_off_max: 63, ..PolicyConfig::default() };
        let d = threshold_power_off(&counters, &[true; 64], &wide);
        assert_eq!(d.actions[0], PowerAction::TurnOff(OffMode::Discard));
        assert_eq!(d.actions[1], PowerAction::StayOn);
        assert_eq!(d.actions[2], PowerAction::StayOn);
        assert_eq!(d.turned_off().len(), 62);
    }

    #[test]
    fn threshold_ignores_empty_interval() {
        let counters = vec![ctr(0, 0, 0); 64];
        assert!(threshold_power_off(&counters, &[true; 64], &PolicyConfig::default()).is_noop());
    }

    #[test]
    fn power_on_individual_rule() {
        let mut counters = vec![ctr(0, 0, 0); 4];
        counters[1] = ctr(1000, 3, 2);
        counters[2] = ctr(1000, 300, 0);
        let power = [true, false, false, false];
        let d = power_on(&counters, &power, 1_000_000, &PolicyConfig::default());
        assert_eq!(d.actions[1], PowerAction::TurnOn);
        assert_eq!(d.actions[2], PowerAction::StayOff);
        assert_eq!(d.actions[3], PowerAction::StayOff, "no evidence, no trigger");
    }

    #[test]
    fn power_on_aggregate_rule() {
        // four gated banks, 1500 extra misses over 100000 accesses
        let mut counters = vec![ctr(0, 0, 0); 5];
        counters[1] = ctr(600, 600, 0);
        counters[2] = ctr(1000, 500, 0);
        counters[3] = ctr(1000, 500, 0);
        counters[4] = ctr(800, 300, 0);
        let power = [true, false, false, false, false];
        let d = power_on(&counters, &power, 100_000, &PolicyConfig::default());
        // 1500 / 100000 = 1.5% > 1%: ceil(4/2) = 2 banks, most misses first
        assert_eq!(d.turned_on(), vec![2, 3]);
        let d = power_on(&counters, &power, 200_000, &PolicyConfig::default());
        assert!(d.is_noop());
    }

    #[test]
    fn engine_never_flips_a_bank_twice() {
        let mut e = PolicyEngine::new(PolicyKind::Statistic, PolicyConfig::default());
        let mut counters = vec![ctr(10, 0, 0); 8];
        counters[0] = ctr(10_000, 0, 0);
        let power = [true, true, true, true, false, false, false, false];
        let (d, _) = e.decide(&counters, &power);
        for (i, a) in d.actions.iter().enumerate() {
            match a {
                PowerAction::TurnOn => assert!(!power[i]),
                PowerAction::TurnOff(_) => assert!(power[i]),
                _ => {}
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(PolicyConfig::default().validate().is_ok());
        assert!(PolicyConfig { c_th: 0.0, ..Default::default() }.validate().is_err());
        assert!(PolicyConfig { interval_cycles: 0, ..Default::default() }.validate().is_err());
    }
}

//! Simulation driver: configuration, the interval loop, reports and
//! multi-configuration comparison.
//!
//! A run replays a trace through the gated cache and, in lockstep, through a
//! never-gated shadow cache of the same mode. A miss that the shadow would
//! have hit is an extra miss, charged as overhead.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cache::{AccessKind, Cache, CacheGeometry, CacheMode};
use crate::energy::{finalize_report, EnergyLedger, EnergyParams, EnergyReport};
use crate::error::{ConfigError, SimError};
use crate::fv::FvTable;
use crate::policy::{apply_decision, PolicyConfig, PolicyEngine, PolicyKind, PowerAction};
use crate::trace::{generate_synthetic, parse_trace, AccessOp, AccessRecord, WorkloadSpec};
use crate::tsv::{TsvBundle, TsvParams};

fn default_true() -> bool {
    true
}

/// Simulator configuration, read from TOML. See the README for an example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Label used in reports and comparison rows.
    #[serde(default)]
    pub name: Option<String>,
    pub mode: CacheMode,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default)]
    pub geometry: CacheGeometry,
    #[serde(default)]
    pub policy_config: PolicyConfig,
    #[serde(default)]
    pub energy: EnergyParams,
    #[serde(default)]
    pub tsv: TsvParams,
    /// Model interconnect energy on the TSV bundle.
    #[serde(default = "default_true")]
    pub interconnect: bool,
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub workload: Option<WorkloadSpec>,
    #[serde(default)]
    pub fv_table_path: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_policy() -> PolicyKind {
    PolicyKind::None
}

impl SimConfig {
    pub fn new(mode: CacheMode, policy: PolicyKind) -> Self {
        SimConfig {
            name: None,
            mode,
            policy,
            geometry: CacheGeometry::default(),
            policy_config: PolicyConfig::default(),
            energy: EnergyParams::default(),
            tsv: TsvParams::default(),
            interconnect: true,
            trace_path: None,
            workload: None,
            fv_table_path: None,
            output_dir: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|source| SimError::Io { path: path.into(), source })?;
        let mut cfg = SimConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [&mut cfg.trace_path, &mut cfg.fv_table_path, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("{}-{}", self.mode.name(), self.policy.name()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry.validate()?;
        self.policy_config.validate()?;
        self.energy.validate()?;
        self.tsv.validate()?;
        if self.trace_path.is_some() && self.workload.is_some() {
            return Err(ConfigError::invalid("set only one of trace_path and workload"));
        }
        if let Some(w) = &self.workload {
            w.validate()?;
        }
        Ok(())
    }

    /// Checks that a trace source exists and that NFV has a table, before
    /// any simulation starts.
    pub fn validate_for_run(&self, trace_override: bool) -> Result<(), ConfigError> {
        self.validate()?;
        if !trace_override && self.trace_path.is_none() && self.workload.is_none() {
            return Err(ConfigError::invalid("one of trace_path or workload is required"));
        }
        if self.mode == CacheMode::Nfv && self.fv_table_path.is_none() {
            return Err(ConfigError::invalid("nfv mode requires fv_table_path"));
        }
        Ok(())
    }

    pub fn load_trace(&self) -> Result<Vec<AccessRecord>, SimError> {
        match (&self.trace_path, &self.workload) {
            (Some(path), _) => read_trace_file(path),
            (None, Some(w)) => Ok(generate_synthetic(w)?),
            (None, None) => Err(ConfigError::invalid("no trace source configured").into()),
        }
    }

    pub fn load_fv_table(&self) -> Result<Option<Arc<FvTable>>, SimError> {
        match &self.fv_table_path {
            Some(path) if self.mode == CacheMode::Nfv => {
                let text = fs::read_to_string(path).map_err(|source| SimError::Io { path: path.clone(), source })?;
                let t = FvTable::from_text(&text).map_err(|source| SimError::FvTable { path: path.clone(), source })?;
                Ok(Some(Arc::new(t)))
            }
            _ => Ok(None),
        }
    }
}

pub fn read_trace_file(path: &Path) -> Result<Vec<AccessRecord>, SimError> {
    let f = fs::File::open(path).map_err(|source| SimError::Io { path: path.into(), source })?;
    parse_trace(std::io::BufReader::new(f)).map_err(|source| SimError::Trace { path: path.into(), source })
}

/// Per-interval results. Energy columns are the interval's increments.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub interval: u64,
    pub start_cycle: u64,
    pub end_cycle: u64,
    pub accesses: u64,
    pub misses: u64,
    pub miss_rate: f64,
    pub extra_misses: u64,
    pub active_banks: usize,
    pub active_ratio: f64,
    pub banks_turned_off: usize,
    pub banks_turned_on: usize,
    pub migrated_lines: usize,
    pub static_energy: f64,
    pub dynamic_energy: f64,
    pub overhead_energy: f64,
    pub interconnect_energy: f64,
}

pub const INTERVAL_CSV_HEADER: &str = "interval,start_cycle,end_cycle,accesses,misses,miss_rate,extra_misses,\
active_banks,active_ratio,banks_turned_off,banks_turned_on,migrated_lines,static_energy,dynamic_energy,\
overhead_energy,interconnect_energy";

impl IntervalRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:e},{:e},{:e},{:e}",
            self.interval,
            self.start_cycle,
            self.end_cycle,
            self.accesses,
            self.misses,
            self.miss_rate,
            self.extra_misses,
            self.active_banks,
            self.active_ratio,
            self.banks_turned_off,
            self.banks_turned_on,
            self.migrated_lines,
            self.static_energy,
            self.dynamic_energy,
            self.overhead_energy,
            self.interconnect_energy
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub records: u64,
    /// Read and write records; the miss-rate denominator.
    pub accesses: u64,
    pub misses: u64,
    pub extra_misses: u64,
    pub gating_writebacks: u64,
    pub migrated_lines: u64,
    pub intervals: u64,
    pub mean_active_ratio: f64,
}

impl RunSummary {
    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub label: String,
    pub mode: CacheMode,
    pub policy: PolicyKind,
    pub summary: RunSummary,
    pub energy: EnergyReport,
    pub rows: Vec<IntervalRow>,
    pub decision_log: String,
}

impl RunResult {
    pub fn report_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        writeln!(out, "config = {}", self.label).unwrap();
        writeln!(out, "mode = {}", self.mode.name()).unwrap();
        writeln!(out, "policy = {}", self.policy.name()).unwrap();
        writeln!(out, "records = {}", s.records).unwrap();
        writeln!(out, "accesses = {}", s.accesses).unwrap();
        writeln!(out, "misses = {}", s.misses).unwrap();
        writeln!(out, "miss_rate = {}", s.miss_rate()).unwrap();
        writeln!(out, "extra_misses = {}", s.extra_misses).unwrap();
        writeln!(out, "gating_writebacks = {}", s.gating_writebacks).unwrap();
        writeln!(out, "migrated_lines = {}", s.migrated_lines).unwrap();
        writeln!(out, "intervals = {}", s.intervals).unwrap();
        writeln!(out, "mean_active_ratio = {}", s.mean_active_ratio).unwrap();
        out.push_str(&self.energy.to_text());
        out
    }

    pub fn intervals_csv(&self) -> String {
        let mut out = String::from(INTERVAL_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct IntervalAccum {
    accesses: u64,
    misses: u64,
    extra_misses: u64,
}

/// One simulation instance.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    cache: Cache,
    shadow: Option<Cache>,
    engine: PolicyEngine,
    ledger: EnergyLedger,
    /// Ledger at the start of the open interval.
    interval_base: EnergyLedger,
    bundle: Option<TsvBundle>,
    interval: u64,
    interval_start: u64,
    last_cycle: Option<u64>,
    acc: IntervalAccum,
    summary: RunSummary,
    rows: Vec<IntervalRow>,
    log: String,
}

impl Simulator {
    pub fn new(config: SimConfig, fv: Option<Arc<FvTable>>) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut cache = Cache::new(config.geometry, config.mode, fv)?;
        cache.set_saturating_counters(config.policy_config.saturating_counters);
        let shadow = (config.policy != PolicyKind::None).then(|| cache.clone());
        let bundle = if config.interconnect { Some(TsvBundle::new(config.tsv.clone())?) } else { None };
        let engine = PolicyEngine::new(config.policy, config.policy_config.clone());
        Ok(Simulator {
            config,
            cache,
            shadow,
            engine,
            ledger: EnergyLedger::new(),
            interval_base: EnergyLedger::new(),
            bundle,
            interval: 0,
            interval_start: 0,
            last_cycle: None,
            acc: IntervalAccum::default(),
            summary: RunSummary::default(),
            rows: Vec::new(),
            log: String::new(),
        })
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut Cache {
        &mut self.cache
    }

    /// The never-gated reference cache, present when a policy is active.
    pub fn shadow(&self) -> Option<&Cache> {
        self.shadow.as_ref()
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn rows(&self) -> &[IntervalRow] {
        &self.rows
    }

    /// Replays one record, closing any interval boundaries it crosses.
    pub fn step(&mut self, rec: &AccessRecord) -> crate::cache::AccessOutcome {
        let period = self.config.policy_config.interval_cycles;
        if let Some(prev) = self.last_cycle {
            assert!(rec.cycle >= prev, "records must be in cycle order");
        }
        while rec.cycle / period > self.interval {
            self.close_interval((self.interval + 1) * period, true);
        }
        self.last_cycle = Some(rec.cycle);
        self.summary.records += 1;

        let outcome = self.cache.access(rec);
        let rw = rec.op != AccessOp::Invalidate;
        let missed = rw && !outcome.kind.is_hit();
        let extra = match self.shadow.as_mut() {
            Some(shadow) => {
                let s = shadow.access(rec);
                missed && s.kind.is_hit()
            }
            None => false,
        };
        if rw {
            self.acc.accesses += 1;
            self.acc.misses += missed as u64;
            self.acc.extra_misses += extra as u64;
        }
        self.ledger.charge_access(&outcome, extra, &self.config.energy);

        if rw {
            let value = match rec.op {
                AccessOp::Read => outcome.value.expect("reads return a value"),
                _ => rec.payload.expect("writes carry a payload"),
            };
            let codeword = self.cache.fv_table().and_then(|t| t.encode(&value));
            if let Some(bundle) = self.bundle.as_mut() {
                let e = bundle.transfer_line(&value, codeword);
                self.ledger.charge_interconnect(e.total());
            }
            if rec.op == AccessOp::Write && self.config.mode == CacheMode::Nfv {
                self.ledger.charge_write_penalty();
            }
        }
        outcome
    }

    fn close_interval(&mut self, end_cycle: u64, decide: bool) {
        let num_banks = self.config.geometry.num_banks as usize;
        let on = self.cache.active_banks().len();
        self.ledger.charge_interval(
            end_cycle - self.interval_start,
            on,
            num_banks,
            self.config.mode != CacheMode::Baseline,
            self.config.policy != PolicyKind::None,
            &self.config.energy,
        );

        let mut row = IntervalRow {
            interval: self.interval,
            start_cycle: self.interval_start,
            end_cycle,
            accesses: self.acc.accesses,
            misses: self.acc.misses,
            miss_rate: if self.acc.accesses == 0 { 0.0 } else { self.acc.misses as f64 / self.acc.accesses as f64 },
            extra_misses: self.acc.extra_misses,
            active_banks: on,
            active_ratio: on as f64 / num_banks as f64,
            banks_turned_off: 0,
            banks_turned_on: 0,
            migrated_lines: 0,
            static_energy: 0.0,
            dynamic_energy: 0.0,
            overhead_energy: 0.0,
            interconnect_energy: 0.0,
        };

        if decide && self.config.policy != PolicyKind::None {
            let counters = self.cache.counters();
            let power = self.cache.power_flags();
            let (decision, stats) = self.engine.decide(&counters, &power);
            writeln!(
                self.log,
                "interval={} mu={} sigma={} mu_prev1={} mu_prev2={}",
                self.interval, stats.mu, stats.sigma, stats.mu_prev1, stats.mu_prev2
            )
            .unwrap();
            for (bank, a) in decision.actions.iter().enumerate() {
                let what = match a {
                    PowerAction::TurnOff(crate::policy::OffMode::Discard) => "turn_off mode=discard",
                    PowerAction::TurnOff(crate::policy::OffMode::Migrate) => "turn_off mode=migrate",
                    PowerAction::TurnOn => "turn_on",
                    _ => continue,
                };
                writeln!(self.log, "interval={} bank={bank} action={what}", self.interval).unwrap();
            }
            let events = apply_decision(&decision, &mut self.cache);
            self.ledger.charge_gating(&events, &self.config.energy);
            row.banks_turned_off = events.turned_off.len();
            row.banks_turned_on = events.turned_on.len();
            row.migrated_lines = events.migrated_lines;
            self.summary.gating_writebacks += events.writebacks.len() as u64;
            self.summary.migrated_lines += events.migrated_lines as u64;
        }

        let base = std::mem::replace(&mut self.interval_base, self.ledger.clone());
        row.static_energy = self.ledger.static_energy - base.static_energy;
        row.dynamic_energy = self.ledger.dynamic_energy - base.dynamic_energy;
        row.overhead_energy = self.ledger.overhead_energy - base.overhead_energy;
        row.interconnect_energy = self.ledger.interconnect_energy - base.interconnect_energy;

        self.summary.accesses += self.acc.accesses;
        self.summary.misses += self.acc.misses;
        self.summary.extra_misses += self.acc.extra_misses;
        self.acc = IntervalAccum::default();
        self.rows.push(row);

        self.cache.reset_counters();
        if let Some(s) = self.shadow.as_mut() {
            s.reset_counters();
        }
        self.interval += 1;
        self.interval_start = end_cycle;
    }

    /// Closes the last (partial) interval and produces the result.
    pub fn finish(mut self) -> RunResult {
        if let Some(last) = self.last_cycle {
            self.close_interval(last + 1, false);
        }
        let cycles = self.ledger.cycles;
        self.summary.intervals = self.rows.len() as u64;
        self.summary.mean_active_ratio = if self.rows.is_empty() {
            1.0
        } else {
            self.rows.iter().map(|r| r.active_ratio).sum::<f64>() / self.rows.len() as f64
        };
        RunResult {
            label: self.config.label(),
            mode: self.config.mode,
            policy: self.config.policy,
            summary: self.summary,
            energy: finalize_report(&self.ledger, cycles),
            rows: self.rows,
            decision_log: self.log,
        }
    }

    /// Finishes the run, also returning the final cache state.
    pub fn finish_with_cache(self) -> (RunResult, Cache, Option<Cache>) {
        let cache = self.cache.clone();
        let shadow = self.shadow.clone();
        (self.finish(), cache, shadow)
    }
}

/// Runs one configuration over a trace.
pub fn run(config: &SimConfig, fv: Option<Arc<FvTable>>, trace: &[AccessRecord]) -> Result<RunResult, ConfigError> {
    let mut sim = Simulator::new(config.clone(), fv)?;
    for rec in trace {
        sim.step(rec);
    }
    Ok(sim.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub mode: CacheMode,
    pub policy: PolicyKind,
    pub total_energy: f64,
    pub normalized_energy: f64,
    pub miss_rate: f64,
    pub extra_misses: u64,
    pub mean_active_ratio: f64,
    pub edp: f64,
}

pub const COMPARE_CSV_HEADER: &str =
    "config,mode,policy,total_energy,normalized_energy,miss_rate,extra_misses,mean_active_ratio,edp";

impl CompareRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:e},{},{},{},{},{:e}",
            self.label,
            self.mode.name(),
            self.policy.name(),
            self.total_energy,
            self.normalized_energy,
            self.miss_rate,
            self.extra_misses,
            self.mean_active_ratio,
            self.edp
        )
    }
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from(COMPARE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Runs every configuration on the same trace, in parallel, and normalizes
/// energy to the first one. All configurations must share a geometry.
pub fn compare(
    configs: &[(SimConfig, Option<Arc<FvTable>>)],
    trace: &[AccessRecord],
) -> Result<Vec<CompareRow>, ConfigError> {
    let Some((first, _)) = configs.first() else {
        return Ok(Vec::new());
    };
    if let Some((bad, _)) = configs.iter().find(|(c, _)| c.geometry != first.geometry) {
        return Err(ConfigError::invalid(format!(
            "geometry of {} differs from {}",
            bad.label(),
            first.label()
        )));
    }
    let results: Vec<Result<RunResult, ConfigError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(cfg, fv)| s.spawn(move || run(cfg, fv.clone(), trace)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let base = results[0].energy.total_energy;
    Ok(results
        .into_iter()
        .map(|r| CompareRow {
            normalized_energy: if base > 0.0 { r.energy.total_energy / base } else { 1.0 },
            total_energy: r.energy.total_energy,
            miss_rate: r.summary.miss_rate(),
            extra_misses: r.summary.extra_misses,
            mean_active_ratio: r.summary.mean_active_ratio,
            edp: r.energy.edp,
            label: r.label,
            mode: r.mode,
            policy: r.policy,
        })
        .collect())
}

/// Human-readable profiling summary.
pub fn profile_summary(trace: &[AccessRecord], table: &FvTable) -> String {
    let mut s = String::new();
    let zero = trace.iter().filter(|r| r.payload.is_some_and(|p| p.is_zero())).count();
    let per_kilo = |n: usize| if trace.is_empty() { 0.0 } else { n as f64 * 1000.0 / trace.len() as f64 };
    writeln!(s, "records = {}", trace.len()).unwrap();
    writeln!(s, "fv_entries = {}", table.len()).unwrap();
    writeln!(s, "fv_accesses_per_kilo_record = {}", crate::fv::fv_accesses_per_kilo(trace, table)).unwrap();
    writeln!(s, "zero_accesses_per_kilo_record = {}", per_kilo(zero)).unwrap();
    s
}

/// Counts by access kind, for diagnostics.
pub fn kind_histogram(outcomes: &[AccessKind]) -> [u64; 6] {
    let mut h = [0u64; 6];
    for k in outcomes {
        let i = match k {
            AccessKind::HitUncompressed => 0,
            AccessKind::HitCompressed => 1,
            AccessKind::HitInvalidSlot => 2,
            AccessKind::Miss => 3,
            AccessKind::OffBankCompressedHit => 4,
            AccessKind::OffBankMiss => 5,
        };
        h[i] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::line::LineValue;

    fn small_cfg(mode: CacheMode, policy: PolicyKind) -> SimConfig {
        let mut c = SimConfig::new(mode, policy);
        c.geometry = CacheGeometry::new(8, 64 * 4 * 8, 4).unwrap();
        c.policy_config.interval_cycles = 100;
        c
    }

    #[test]
    fn toml_round_trip_of_defaults() {
        let text = "mode = \"niz\"\npolicy = \"statistic\"\n[policy_config]\ninterval_cycles = 1000\n";
        let cfg = SimConfig::from_toml(text).unwrap();
        assert_eq!(cfg.mode, CacheMode::Niz);
        assert_eq!(cfg.policy_config.interval_cycles, 1000);
        assert_eq!(cfg.policy_config.n_off_max, 16);
        assert_eq!(cfg.geometry, CacheGeometry::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SimConfig::from_toml("mode = \"niz\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn nfv_requires_table_before_running() {
        let cfg = SimConfig::new(CacheMode::Nfv, PolicyKind::None);
        assert!(cfg.validate_for_run(true).is_err());
    }

    #[test]
    fn baseline_active_ratio_is_full() {
        let mut spec = WorkloadSpec::new(1000, vec![(0, 0.9), (1, 0.1)]);
        spec.num_banks = 8;
        let trace = generate_synthetic(&spec).unwrap();
        let r = run(&small_cfg(CacheMode::Baseline, PolicyKind::None), None, &trace).unwrap();
        assert_eq!(r.rows.len(), 10);
        assert!(r.rows.iter().all(|row| row.active_ratio == 1.0));
        assert_eq!(r.energy.overhead_energy, 0.0);
    }

    #[test]
    fn intervals_follow_cycles() {
        let cfg = small_cfg(CacheMode::Baseline, PolicyKind::None);
        let trace = vec![
            AccessRecord::read(5, 0, LineValue::ZERO),
            AccessRecord::read(250, 64, LineValue::ZERO),
        ];
        let r = run(&cfg, None, &trace).unwrap();
        let spans: Vec<_> = r.rows.iter().map(|row| (row.start_cycle, row.end_cycle, row.accesses)).collect();
        assert_eq!(spans, vec![(0, 100, 1), (100, 200, 0), (200, 251, 1)]);
        assert_eq!(r.energy.cycles, 251);
    }

    #[test]
    fn interval_energy_adds_up_to_total() {
        let mut spec = WorkloadSpec::new(2000, vec![(0, 0.8), (5, 0.2)]);
        spec.num_banks = 8;
        spec.zero_fraction = 0.3;
        let trace = generate_synthetic(&spec).unwrap();
        let r = run(&small_cfg(CacheMode::Niz, PolicyKind::Threshold), None, &trace).unwrap();
        let sum = |f: fn(&IntervalRow) -> f64| r.rows.iter().map(f).sum::<f64>();
        let e = &r.energy;
        assert!((sum(|x| x.dynamic_energy) - e.dynamic_energy).abs() < 1e-6 * e.dynamic_energy);
        assert!((sum(|x| x.interconnect_energy) - e.interconnect_energy).abs() < 1e-6 * e.interconnect_energy);
        assert!((sum(|x| x.static_energy) - e.static_energy).abs() < 1e-6 * e.static_energy);
        assert!(r.rows.iter().all(|x| x.dynamic_energy > 0.0));
    }

    #[test]
    fn compare_rejects_mixed_geometry() {
        let a = small_cfg(CacheMode::Baseline, PolicyKind::None);
        let mut b = a.clone();
        b.geometry = CacheGeometry::default();
        assert!(compare(&[(a, None), (b, None)], &[]).is_err());
    }

    #[test]
    fn identical_configs_compare_equal() {
        let mut spec = WorkloadSpec::new(500, vec![(0, 0.5), (3, 0.5)]);
        spec.num_banks = 8;
        let trace = generate_synthetic(&spec).unwrap();
        let a = small_cfg(CacheMode::Niz, PolicyKind::Statistic);
        let rows = compare(&[(a.clone(), None), (a, None)], &trace).unwrap();
        assert_eq!(rows[0], rows[1]);
        assert_eq!(rows[0].normalized_energy, 1.0);
    }
}

//! Energy accounting: static (bank leakage), dynamic (array and memory
//! accesses), overhead (sidecar and counter leakage, extra misses, gating
//! writebacks, migration) and interconnect.
//!
//! Default parameters are dimensionless placeholders, not physical values.
//! Supply CACTI/McPAT-derived numbers for physical studies.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cache::AccessOutcome;
use crate::error::ConfigError;
use crate::policy::GatingEvents;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyParams {
    /// Leakage of one powered-on bank per cycle.
    pub leak_bank_per_cycle: f64,
    /// Leakage of one bank's always-on tag/flag/codeword arrays per cycle.
    pub leak_sidecar_per_cycle: f64,
    /// Leakage of the controller counters per cycle, whole cache.
    pub leak_counters_per_cycle: f64,
    pub e_read: f64,
    pub e_write: f64,
    /// Access that touches only flag/codeword storage.
    pub e_flag: f64,
    /// One backing-memory access (fill, write-around or writeback).
    pub e_mem: f64,
    pub e_migrate_line: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            leak_bank_per_cycle: 0.01,
            leak_sidecar_per_cycle: 0.0005,
            leak_counters_per_cycle: 0.001,
            e_read: 1.0,
            e_write: 1.0,
            e_flag: 0.1,
            e_mem: 10.0,
            e_migrate_line: 2.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [
            ("leak_bank_per_cycle", self.leak_bank_per_cycle),
            ("leak_sidecar_per_cycle", self.leak_sidecar_per_cycle),
            ("leak_counters_per_cycle", self.leak_counters_per_cycle),
            ("e_read", self.e_read),
            ("e_write", self.e_write),
            ("e_flag", self.e_flag),
            ("e_mem", self.e_mem),
            ("e_migrate_line", self.e_migrate_line),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub static_energy: f64,
    pub dynamic_energy: f64,
    pub overhead_energy: f64,
    pub interconnect_energy: f64,
    pub cycles: u64,
    /// Extra cycles from the one-cycle penalty on coded writes.
    pub write_penalty_cycles: u64,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Prices one access. `extra_miss` marks a miss that a never-gated cache
    /// would have hit; its memory traffic is overhead.
    pub fn charge_access(&mut self, outcome: &AccessOutcome, extra_miss: bool, p: &EnergyParams) {
        let c = &outcome.cost;
        self.dynamic_energy +=
            p.e_read * c.data_reads as f64 + p.e_write * c.data_writes as f64 + p.e_flag * c.flag_ops as f64;
        let mem = p.e_mem * (c.mem_reads + c.mem_writes) as f64;
        if extra_miss {
            self.overhead_energy += mem;
        } else {
            self.dynamic_energy += mem;
        }
        if outcome.evicted.is_some() {
            self.dynamic_energy += p.e_mem;
        }
    }

    /// Prices the writebacks and migrations caused by a power decision.
    pub fn charge_gating(&mut self, events: &GatingEvents, p: &EnergyParams) {
        self.overhead_energy +=
            p.e_mem * events.writebacks.len() as f64 + p.e_migrate_line * events.migrated_lines as f64;
    }

    /// Leakage over `cycles` cycles with `on_banks` banks powered.
    pub fn charge_interval(
        &mut self,
        cycles: u64,
        on_banks: usize,
        num_banks: usize,
        sidecar: bool,
        monitoring: bool,
        p: &EnergyParams,
    ) {
        let cyc = cycles as f64;
        self.static_energy += p.leak_bank_per_cycle * on_banks as f64 * cyc;
        if sidecar {
            self.overhead_energy += p.leak_sidecar_per_cycle * num_banks as f64 * cyc;
        }
        if monitoring {
            self.overhead_energy += p.leak_counters_per_cycle * cyc;
        }
        self.cycles += cycles;
    }

    pub fn charge_interconnect(&mut self, energy: f64) {
        debug_assert!(energy >= 0.0);
        self.interconnect_energy += energy;
    }

    pub fn charge_write_penalty(&mut self) {
        self.write_penalty_cycles += 1;
    }

    pub fn total(&self) -> f64 {
        self.static_energy + self.dynamic_energy + self.overhead_energy + self.interconnect_energy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub static_energy: f64,
    pub dynamic_energy: f64,
    pub overhead_energy: f64,
    pub interconnect_energy: f64,
    pub total_energy: f64,
    pub cycles: u64,
    pub write_penalty_cycles: u64,
    /// total_energy × cycles.
    pub edp: f64,
}

pub fn finalize_report(ledger: &EnergyLedger, cycles: u64) -> EnergyReport {
    let total = ledger.total();
    EnergyReport {
        static_energy: ledger.static_energy,
        dynamic_energy: ledger.dynamic_energy,
        overhead_energy: ledger.overhead_energy,
        interconnect_energy: ledger.interconnect_energy,
        total_energy: total,
        cycles,
        write_penalty_cycles: ledger.write_penalty_cycles,
        edp: total * cycles as f64,
    }
}

impl EnergyReport {
    /// Recomputes the component sum; equals `total_energy` bit for bit.
    pub fn component_sum(&self) -> f64 {
        self.static_energy + self.dynamic_energy + self.overhead_energy + self.interconnect_energy
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "static_energy = {:e}", self.static_energy).unwrap();
        writeln!(s, "dynamic_energy = {:e}", self.dynamic_energy).unwrap();
        writeln!(s, "overhead_energy = {:e}", self.overhead_energy).unwrap();
        writeln!(s, "interconnect_energy = {:e}", self.interconnect_energy).unwrap();
        writeln!(s, "total_energy = {:e}", self.total_energy).unwrap();
        writeln!(s, "cycles = {}", self.cycles).unwrap();
        writeln!(s, "write_penalty_cycles = {}", self.write_penalty_cycles).unwrap();
        writeln!(s, "edp = {:e}", self.edp).unwrap();
        writeln!(s, "# edp = total_energy * cycles; trace-driven, no IPC model").unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{AccessCost, AccessKind, Writeback};
    use crate::line::LineValue;

    fn outcome(kind: AccessKind, cost: AccessCost) -> AccessOutcome {
        AccessOutcome { kind, bank: 0, home_bank: 0, value: None, evicted: None, cost, compressed: false }
    }

    #[test]
    fn compressed_read_charges_flag_only() {
        let p = EnergyParams::default();
        let mut l = EnergyLedger::new();
        l.charge_access(&outcome(AccessKind::HitCompressed, AccessCost { flag_ops: 1, ..Default::default() }), false, &p);
        assert_eq!(l.dynamic_energy, p.e_flag);
        assert_eq!(l.total(), p.e_flag);
    }

    #[test]
    fn leakage_is_linear() {
        let p = EnergyParams::default();
        let mut l = EnergyLedger::new();
        l.charge_interval(10, 64, 64, false, false, &p);
        assert_eq!(l.static_energy, 640.0 * p.leak_bank_per_cycle);
        assert_eq!(l.overhead_energy, 0.0);
        assert_eq!(l.cycles, 10);
    }

    #[test]
    fn empty_ledger_is_zero() {
        let r = finalize_report(&EnergyLedger::new(), 0);
        assert_eq!((r.total_energy, r.edp), (0.0, 0.0));
    }

    #[test]
    fn report_arithmetic() {
        let l = EnergyLedger {
            static_energy: 3.0,
            dynamic_energy: 5.0,
            overhead_energy: 2.0,
            interconnect_energy: 0.0,
            ..Default::default()
        };
        let r = finalize_report(&l, 10);
        assert_eq!(r.total_energy, 10.0);
        assert_eq!(r.edp, 100.0);
        assert_eq!(r.component_sum(), r.total_energy);
    }

    #[test]
    fn extra_miss_memory_goes_to_overhead() {
        let p = EnergyParams::default();
        let cost = AccessCost { mem_reads: 1, ..Default::default() };
        let mut l = EnergyLedger::new();
        l.charge_access(&outcome(AccessKind::OffBankMiss, cost), true, &p);
        assert_eq!((l.dynamic_energy, l.overhead_energy), (0.0, p.e_mem));
        l.charge_access(&outcome(AccessKind::OffBankMiss, cost), false, &p);
        assert_eq!(l.dynamic_energy, p.e_mem);
    }

    #[test]
    fn gating_costs_are_overhead() {
        let p = EnergyParams::default();
        let ev = GatingEvents {
            writebacks: vec![Writeback { address: 0, tag: 0, value: LineValue::ZERO }],
            migrated_lines: 3,
            ..Default::default()
        };
        let mut l = EnergyLedger::new();
        l.charge_gating(&ev, &p);
        assert_eq!(l.overhead_energy, p.e_mem + 3.0 * p.e_migrate_line);
    }

    #[test]
    fn negative_params_rejected() {
        let p = EnergyParams { e_mem: -1.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}

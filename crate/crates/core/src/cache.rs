//! Banked NUCA last-level cache with per-line compression flags.
//!
//! Each bank has a data array, which loses its contents when the bank is
//! gated, and an always-on sidecar (tags, zero/FV flags, FV codewords). A
//! compressed line lives entirely in the sidecar, so it stays readable while
//! its bank is off.
//!
//! Lines of a gated bank that were migrated (M = 0) are placed in an active
//! bank picked by [`Cache::placement`]; they are found there by later
//! accesses to the gated bank's address range.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::fv::{Codeword, FvTable};
use crate::line::{LineValue, LINE_SIZE};
use crate::trace::{AccessOp, AccessRecord};

/// Hardware counters are 12 bits wide.
pub const COUNTER_MAX_12BIT: u32 = (1 << 12) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    Baseline,
    Niz,
    Nfv,
}

impl CacheMode {
    pub fn name(self) -> &'static str {
        match self {
            CacheMode::Baseline => "baseline",
            CacheMode::Niz => "niz",
            CacheMode::Nfv => "nfv",
        }
    }
}

fn default_num_banks() -> u32 {
    64
}
fn default_bank_capacity() -> u64 {
    128 * 1024
}
fn default_associativity() -> u32 {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheGeometry {
    #[serde(default = "default_num_banks")]
    pub num_banks: u32,
    /// Bytes per bank.
    #[serde(default = "default_bank_capacity")]
    pub bank_capacity: u64,
    #[serde(default = "default_associativity")]
    pub associativity: u32,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        CacheGeometry {
            num_banks: default_num_banks(),
            bank_capacity: default_bank_capacity(),
            associativity: default_associativity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineLocation {
    pub bank: usize,
    pub set: usize,
    pub tag: u64,
}

impl CacheGeometry {
    pub fn new(num_banks: u32, bank_capacity: u64, associativity: u32) -> Result<Self, ConfigError> {
        let g = CacheGeometry { num_banks, bank_capacity, associativity };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_banks == 0 || !self.num_banks.is_power_of_two() {
            return Err(ConfigError::invalid(format!(
                "num_banks must be a power of two, got {}",
                self.num_banks
            )));
        }
        if self.associativity == 0 {
            return Err(ConfigError::invalid("associativity must be positive"));
        }
        let way_bytes = LINE_SIZE as u64 * self.associativity as u64;
        if self.bank_capacity == 0 || !self.bank_capacity.is_multiple_of(way_bytes) {
            return Err(ConfigError::invalid(format!(
                "bank_capacity {} is not a multiple of line_size x associativity ({way_bytes})",
                self.bank_capacity
            )));
        }
        Ok(())
    }

    pub fn line_size(&self) -> usize {
        LINE_SIZE
    }

    pub fn sets_per_bank(&self) -> usize {
        (self.bank_capacity / (LINE_SIZE as u64 * self.associativity as u64)) as usize
    }

    pub fn total_capacity(&self) -> u64 {
        self.bank_capacity * self.num_banks as u64
    }

    /// bank = line mod banks; set = (line / banks) mod sets; tag = the rest.
    pub fn map_address(&self, address: u64) -> LineLocation {
        self.locate_line(address / LINE_SIZE as u64)
    }

    fn locate_line(&self, line: u64) -> LineLocation {
        let nb = self.num_banks as u64;
        let sets = self.sets_per_bank() as u64;
        LineLocation {
            bank: (line % nb) as usize,
            set: ((line / nb) % sets) as usize,
            tag: line / nb / sets,
        }
    }
}

/// Interval counters of one bank (C_A, C_C, C_I and the miss counter).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntervalCounters {
    pub c_access: u32,
    pub c_compressed: u32,
    pub c_invalid: u32,
    pub c_miss: u32,
}

impl IntervalCounters {
    /// Complete accesses: those that exercised the data array.
    pub fn complete(&self) -> u32 {
        debug_assert!(self.c_compressed + self.c_invalid <= self.c_access);
        self.c_access - self.c_compressed - self.c_invalid
    }

    fn record(&mut self, compressed: bool, invalid: bool, miss: bool, saturate: bool) {
        // Saturation freezes the whole group so C_C + C_I <= C_A still holds.
        if saturate && self.c_access >= COUNTER_MAX_12BIT {
            return;
        }
        self.c_access += 1;
        self.c_compressed += compressed as u32;
        self.c_invalid += invalid as u32;
        self.c_miss += miss as u32;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    HitUncompressed,
    HitCompressed,
    HitInvalidSlot,
    Miss,
    OffBankCompressedHit,
    OffBankMiss,
}

impl AccessKind {
    /// Served from the cache without going to backing memory.
    pub fn is_hit(self) -> bool {
        matches!(
            self,
            AccessKind::HitUncompressed | AccessKind::HitCompressed | AccessKind::OffBankCompressedHit
        )
    }

    pub fn is_off_bank(self) -> bool {
        matches!(self, AccessKind::OffBankCompressedHit | AccessKind::OffBankMiss)
    }
}

/// A dirty line leaving the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Writeback {
    pub address: u64,
    pub tag: u64,
    pub value: LineValue,
}

/// Structures touched by one access, priced by the energy ledger.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessCost {
    pub data_reads: u32,
    pub data_writes: u32,
    pub flag_ops: u32,
    pub mem_reads: u32,
    pub mem_writes: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessOutcome {
    pub kind: AccessKind,
    /// Bank that served the access; differs from the home bank only for
    /// migrated lines.
    pub bank: usize,
    pub home_bank: usize,
    /// Value returned to the requester (reads only).
    pub value: Option<LineValue>,
    pub evicted: Option<Writeback>,
    pub cost: AccessCost,
    /// The line left in the cache by this access is compressed.
    pub compressed: bool,
}

/// Observable state of one line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineState {
    pub tag: u64,
    pub valid: bool,
    pub dirty: bool,
    pub compressed_flag: bool,
    pub codeword: Option<Codeword>,
    pub lru_rank: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Content {
    Invalid,
    Plain(LineValue),
    Zero,
    Fv(Codeword),
}

impl Content {
    fn is_valid(&self) -> bool {
        !matches!(self, Content::Invalid)
    }

    fn is_compressed(&self) -> bool {
        matches!(self, Content::Zero | Content::Fv(_))
    }

    fn is_plain(&self) -> bool {
        matches!(self, Content::Plain(_))
    }
}

#[derive(Debug, Clone)]
struct Slot {
    line: u64,
    dirty: bool,
    lru: u64,
    content: Content,
}

#[derive(Debug, Clone, Default)]
struct CacheSet {
    slots: Vec<Slot>,
}

impl CacheSet {
    fn find(&self, line: u64) -> Option<usize> {
        self.slots.iter().position(|s| s.line == line)
    }
}

#[derive(Debug, Clone)]
pub struct BankState {
    /// The T flag.
    pub powered_on: bool,
    /// The M flag: true when the last power-off discarded its lines.
    pub migration_mode: bool,
    pub counters: IntervalCounters,
    sets: Vec<CacheSet>,
}

/// Per-bank occupancy summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BankOccupancy {
    pub uncompressed: usize,
    pub compressed: usize,
    pub invalid: usize,
    /// Lines whose home is another bank.
    pub foreign: usize,
}

/// Flat line-address → value store behind the cache.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BackingMemory {
    lines: HashMap<u64, LineValue>,
}

impl BackingMemory {
    pub fn get(&self, line_address: u64) -> Option<LineValue> {
        self.lines.get(&line_address).copied()
    }

    pub fn write(&mut self, line_address: u64, value: LineValue) {
        self.lines.insert(line_address, value);
    }

    /// The stored value, or `fallback` (recorded) if the line was never seen.
    fn fetch(&mut self, line_address: u64, fallback: LineValue) -> LineValue {
        *self.lines.entry(line_address).or_insert(fallback)
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, LineValue)> + '_ {
        self.lines.iter().map(|(a, v)| (*a, *v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lookup {
    Absent,
    /// (bank, slot index)
    Found(usize, usize),
}

#[derive(Debug, Clone)]
pub struct Cache {
    geometry: CacheGeometry,
    mode: CacheMode,
    fv: Option<Arc<FvTable>>,
    banks: Vec<BankState>,
    memory: BackingMemory,
    clock: u64,
    saturating_counters: bool,
    active: Vec<usize>,
}

impl Cache {
    /// NFV mode requires a table.
    pub fn new(geometry: CacheGeometry, mode: CacheMode, fv: Option<Arc<FvTable>>) -> Result<Self, ConfigError> {
        geometry.validate()?;
        if mode == CacheMode::Nfv && fv.is_none() {
            return Err(ConfigError::invalid("nfv mode requires a frequent-value table"));
        }
        let sets = geometry.sets_per_bank();
        let banks = (0..geometry.num_banks)
            .map(|_| BankState {
                powered_on: true,
                migration_mode: false,
                counters: IntervalCounters::default(),
                sets: vec![CacheSet::default(); sets],
            })
            .collect();
        Ok(Cache {
            geometry,
            mode,
            fv: if mode == CacheMode::Nfv { fv } else { None },
            banks,
            memory: BackingMemory::default(),
            clock: 0,
            saturating_counters: false,
            active: (0..geometry.num_banks as usize).collect(),
        })
    }

    pub fn set_saturating_counters(&mut self, on: bool) {
        self.saturating_counters = on;
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn fv_table(&self) -> Option<&FvTable> {
        self.fv.as_deref()
    }

    pub fn memory(&self) -> &BackingMemory {
        &self.memory
    }

    pub fn banks(&self) -> &[BankState] {
        &self.banks
    }

    pub fn bank(&self, bank: usize) -> &BankState {
        &self.banks[bank]
    }

    pub fn counters(&self) -> Vec<IntervalCounters> {
        self.banks.iter().map(|b| b.counters).collect()
    }

    pub fn power_flags(&self) -> Vec<bool> {
        self.banks.iter().map(|b| b.powered_on).collect()
    }

    pub fn active_banks(&self) -> &[usize] {
        &self.active
    }

    pub fn reset_counters(&mut self) {
        for b in &mut self.banks {
            b.counters = IntervalCounters::default();
        }
    }

    pub fn map_address(&self, address: u64) -> LineLocation {
        self.geometry.map_address(address)
    }

    fn compress(&self, value: &LineValue) -> Content {
        match self.mode {
            CacheMode::Baseline => Content::Plain(*value),
            CacheMode::Niz if value.is_zero() => Content::Zero,
            CacheMode::Niz => Content::Plain(*value),
            CacheMode::Nfv => match self.fv.as_ref().and_then(|t| t.encode(value)) {
                Some(cw) => Content::Fv(cw),
                None => Content::Plain(*value),
            },
        }
    }

    fn expand(&self, content: &Content) -> Option<LineValue> {
        match content {
            Content::Invalid => None,
            Content::Plain(v) => Some(*v),
            Content::Zero => Some(LineValue::ZERO),
            Content::Fv(cw) => Some(
                self.fv
                    .as_ref()
                    .expect("fv content implies a table")
                    .decode(cw.bits())
                    .expect("stored codewords come from the table"),
            ),
        }
    }

    /// Bank holding `line` when its home is gated: the home bank itself when
    /// on, otherwise an active bank chosen by the line's in-bank index.
    pub fn placement(&self, line_address: u64) -> usize {
        let line = line_address / LINE_SIZE as u64;
        let home = (line % self.geometry.num_banks as u64) as usize;
        if self.banks[home].powered_on || self.active.is_empty() {
            return home;
        }
        let idx = line / self.geometry.num_banks as u64;
        self.active[(idx % self.active.len() as u64) as usize]
    }

    fn lookup(&self, line: u64, loc: &LineLocation) -> Lookup {
        let home = &self.banks[loc.bank];
        if let Some(i) = home.sets[loc.set].find(line) {
            return Lookup::Found(loc.bank, i);
        }
        if !home.powered_on && !home.migration_mode {
            let target = self.placement(line * LINE_SIZE as u64);
            if target != loc.bank {
                if let Some(i) = self.banks[target].sets[loc.set].find(line) {
                    return Lookup::Found(target, i);
                }
            }
        }
        Lookup::Absent
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Replays one trace record.
    ///
    /// Panics if a Read or Write carries no payload.
    pub fn access(&mut self, rec: &AccessRecord) -> AccessOutcome {
        let loc = self.geometry.map_address(rec.address);
        let line = rec.address / LINE_SIZE as u64;
        let line_addr = line * LINE_SIZE as u64;
        let payload = match rec.op {
            AccessOp::Read | AccessOp::Write => {
                Some(rec.payload.expect("read/write records must carry a payload"))
            }
            AccessOp::Invalidate => None,
        };
        let home_on = self.banks[loc.bank].powered_on;
        let found = self.lookup(line, &loc);
        let found_content = match found {
            Lookup::Found(b, i) => self.banks[b].sets[loc.set].slots[i].content,
            Lookup::Absent => Content::Invalid,
        };
        let found_valid = found_content.is_valid();
        let found_invalid_slot = matches!(found, Lookup::Found(..)) && !found_valid;
        debug_assert!(home_on || !matches!(found, Lookup::Found(b, _) if b == loc.bank && found_content.is_plain()));

        let mut cost = AccessCost::default();
        let mut evicted = None;
        let mut value = None;
        let mut serving = loc.bank;
        let stamp = self.tick();

        let kind = match (rec.op, found) {
            // Hits on valid lines, wherever they live.
            (op, Lookup::Found(b, i)) if found_valid => {
                serving = b;
                let off_home_sidecar = !home_on && b == loc.bank;
                let kind = if off_home_sidecar {
                    AccessKind::OffBankCompressedHit
                } else if found_content.is_compressed() {
                    AccessKind::HitCompressed
                } else {
                    AccessKind::HitUncompressed
                };
                match op {
                    AccessOp::Read => {
                        value = self.expand(&found_content);
                        if found_content.is_compressed() {
                            cost.flag_ops += 1;
                        } else {
                            cost.data_reads += 1;
                        }
                        self.banks[b].sets[loc.set].slots[i].lru = stamp;
                        kind
                    }
                    AccessOp::Write => {
                        let v = payload.unwrap();
                        let new = self.compress(&v);
                        if off_home_sidecar && new.is_plain() {
                            // The data array is gated: drop the sidecar copy and
                            // write around to memory.
                            self.banks[b].sets[loc.set].slots.swap_remove(i);
                            self.memory.write(line_addr, v);
                            cost.flag_ops += 1;
                            cost.mem_writes += 1;
                            AccessKind::OffBankMiss
                        } else {
                            let slot = &mut self.banks[b].sets[loc.set].slots[i];
                            slot.content = new;
                            slot.dirty = true;
                            slot.lru = stamp;
                            if new.is_compressed() {
                                cost.flag_ops += 1;
                            } else {
                                cost.data_writes += 1;
                            }
                            kind
                        }
                    }
                    AccessOp::Invalidate => {
                        let slot = &mut self.banks[b].sets[loc.set].slots[i];
                        if slot.dirty {
                            let wb = Writeback {
                                address: line_addr,
                                tag: loc.tag,
                                value: self.expand(&found_content).unwrap(),
                            };
                            self.memory.write(line_addr, wb.value);
                            evicted = Some(wb);
                        }
                        let slot = &mut self.banks[b].sets[loc.set].slots[i];
                        slot.content = Content::Invalid;
                        slot.dirty = false;
                        cost.flag_ops += 1;
                        kind
                    }
                }
            }
            (AccessOp::Invalidate, _) => {
                if home_on {
                    if found_invalid_slot {
                        AccessKind::HitInvalidSlot
                    } else {
                        AccessKind::Miss
                    }
                } else {
                    AccessKind::OffBankMiss
                }
            }
            // Gated home bank without a usable copy: served by memory.
            (op, _) if !home_on => {
                let v = payload.unwrap();
                match op {
                    AccessOp::Read => {
                        value = Some(self.memory.fetch(line_addr, v));
                        cost.mem_reads += 1;
                    }
                    _ => {
                        self.memory.write(line_addr, v);
                        cost.mem_writes += 1;
                    }
                }
                AccessKind::OffBankMiss
            }
            (op, found) => {
                let v = payload.unwrap();
                let data = match op {
                    AccessOp::Read => {
                        cost.mem_reads += 1;
                        let fetched = self.memory.fetch(line_addr, v);
                        value = Some(fetched);
                        fetched
                    }
                    _ => v,
                };
                let content = self.compress(&data);
                if content.is_compressed() {
                    cost.flag_ops += 1;
                } else {
                    cost.data_writes += 1;
                }
                let slot = Slot { line, dirty: op == AccessOp::Write, lru: stamp, content };
                match found {
                    Lookup::Found(b, i) => {
                        self.banks[b].sets[loc.set].slots[i] = slot;
                        AccessKind::HitInvalidSlot
                    }
                    Lookup::Absent => {
                        evicted = self.insert(loc.bank, loc.set, slot);
                        AccessKind::Miss
                    }
                }
            }
        };

        let counts_miss = rec.op != AccessOp::Invalidate && !kind.is_hit();
        let saturate = self.saturating_counters;
        self.banks[loc.bank].counters.record(
            found_valid && found_content.is_compressed(),
            found_invalid_slot,
            counts_miss,
            saturate,
        );

        let compressed = match self.lookup(line, &loc) {
            Lookup::Found(b, i) => self.banks[b].sets[loc.set].slots[i].content.is_compressed(),
            Lookup::Absent => false,
        };
        AccessOutcome { kind, bank: serving, home_bank: loc.bank, value, evicted, cost, compressed }
    }

    /// Places `slot` into `bank`/`set`, evicting the LRU line when full.
    /// A dirty victim is written back to memory and returned.
    fn insert(&mut self, bank: usize, set: usize, slot: Slot) -> Option<Writeback> {
        let assoc = self.geometry.associativity as usize;
        let victim_idx = {
            let s = &self.banks[bank].sets[set];
            if s.slots.len() < assoc {
                None
            } else {
                let invalid = s
                    .slots
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| !x.content.is_valid())
                    .min_by_key(|(_, x)| x.lru)
                    .map(|(i, _)| i);
                Some(invalid.unwrap_or_else(|| {
                    s.slots.iter().enumerate().min_by_key(|(_, x)| x.lru).map(|(i, _)| i).unwrap()
                }))
            }
        };
        match victim_idx {
            None => {
                self.banks[bank].sets[set].slots.push(slot);
                None
            }
            Some(i) => {
                let victim = std::mem::replace(&mut self.banks[bank].sets[set].slots[i], slot);
                self.writeback_slot(&victim)
            }
        }
    }

    fn writeback_slot(&mut self, slot: &Slot) -> Option<Writeback> {
        if !slot.dirty || !slot.content.is_valid() {
            return None;
        }
        let address = slot.line * LINE_SIZE as u64;
        let value = self.expand(&slot.content).unwrap();
        self.memory.write(address, value);
        Some(Writeback { address, tag: self.geometry.locate_line(slot.line).tag, value })
    }

    /// Writes every dirty line back to memory and marks it clean.
    pub fn flush(&mut self) -> Vec<Writeback> {
        let mut out = Vec::new();
        for b in 0..self.banks.len() {
            for s in 0..self.banks[b].sets.len() {
                for i in 0..self.banks[b].sets[s].slots.len() {
                    let slot = self.banks[b].sets[s].slots[i].clone();
                    if let Some(wb) = self.writeback_slot(&slot) {
                        self.banks[b].sets[s].slots[i].dirty = false;
                        out.push(wb);
                    }
                }
            }
        }
        out
    }

    /// Reads a line's current value without touching counters or LRU.
    pub fn peek(&self, address: u64) -> Option<LineValue> {
        let loc = self.geometry.map_address(address);
        let line = address / LINE_SIZE as u64;
        match self.lookup(line, &loc) {
            Lookup::Found(b, i) => self.expand(&self.banks[b].sets[loc.set].slots[i].content),
            Lookup::Absent => None,
        }
    }

    /// Value visible at `address`: the cached copy, else backing memory.
    pub fn coherent_value(&self, address: u64) -> Option<LineValue> {
        self.peek(address).or_else(|| self.memory.get(address & !(LINE_SIZE as u64 - 1)))
    }

    fn refresh_active(&mut self) {
        self.active = (0..self.banks.len()).filter(|&b| self.banks[b].powered_on).collect();
    }

    /// Powers a bank on. Its sidecar contents become normally accessible and
    /// its data array starts empty.
    pub fn power_on_bank(&mut self, bank: usize) {
        let b = &mut self.banks[bank];
        b.powered_on = true;
        b.migration_mode = false;
        self.refresh_active();
    }

    /// Clears the T flag without touching contents. Callers follow up with
    /// [`Cache::discard_bank`] or [`Cache::migrate_bank`].
    pub fn gate_bank(&mut self, bank: usize, migrate: bool) {
        let b = &mut self.banks[bank];
        b.powered_on = false;
        b.migration_mode = !migrate;
        self.refresh_active();
    }

    fn take_uncompressed(&mut self, bank: usize) -> Vec<Slot> {
        let mut taken = Vec::new();
        for set in &mut self.banks[bank].sets {
            let mut i = 0;
            while i < set.slots.len() {
                if set.slots[i].content.is_plain() {
                    taken.push(set.slots.swap_remove(i));
                } else {
                    i += 1;
                }
            }
        }
        taken.sort_by_key(|s| s.line);
        taken
    }

    /// Drops the uncompressed contents of a gated bank, writing dirty lines
    /// back first. Compressed lines stay in the sidecar.
    pub fn discard_bank(&mut self, bank: usize) -> Vec<Writeback> {
        debug_assert!(!self.banks[bank].powered_on);
        let taken = self.take_uncompressed(bank);
        taken.iter().filter_map(|s| self.writeback_slot(s)).collect()
    }

    /// Moves the uncompressed lines of a gated bank into active banks,
    /// evicting LRU lines there. Returns (lines migrated, writebacks).
    ///
    /// Panics if no bank is active.
    pub fn migrate_bank(&mut self, bank: usize) -> (usize, Vec<Writeback>) {
        assert!(!self.active.is_empty(), "migration needs at least one active bank");
        debug_assert!(!self.banks[bank].powered_on);
        let taken = self.take_uncompressed(bank);
        let mut moved = 0;
        let mut writebacks = Vec::new();
        let fence = self.clock;
        for mut slot in taken {
            let addr = slot.line * LINE_SIZE as u64;
            let set = self.geometry.locate_line(slot.line).set;
            let target = self.placement(addr);
            // Lines migrated in this step never displace each other.
            let s = &self.banks[target].sets[set];
            let full = s.slots.len() >= self.geometry.associativity as usize;
            if full && s.slots.iter().all(|x| x.lru > fence) {
                if let Some(wb) = self.writeback_slot(&slot) {
                    writebacks.push(wb);
                }
                continue;
            }
            slot.lru = self.tick();
            if let Some(wb) = self.insert(target, set, slot) {
                writebacks.push(wb);
            }
            moved += 1;
        }
        (moved, writebacks)
    }

    /// Evicts lines that are no longer reachable after power flags changed:
    /// anything outside its home bank whose current placement differs, or
    /// any foreign line in a gated bank, or any line in a discard-mode
    /// bank's placement.
    pub fn rehome(&mut self) -> Vec<Writeback> {
        let nb = self.geometry.num_banks as u64;
        let mut stale = Vec::new();
        for b in 0..self.banks.len() {
            for s in 0..self.banks[b].sets.len() {
                let mut i = 0;
                while i < self.banks[b].sets[s].slots.len() {
                    let slot = &self.banks[b].sets[s].slots[i];
                    let home = (slot.line % nb) as usize;
                    let reachable = home == b
                        || (self.banks[b].powered_on
                            && !self.banks[home].powered_on
                            && !self.banks[home].migration_mode
                            && self.placement(slot.line * LINE_SIZE as u64) == b);
                    if reachable {
                        i += 1;
                    } else {
                        stale.push(self.banks[b].sets[s].slots.swap_remove(i));
                    }
                }
            }
        }
        stale.iter().filter_map(|s| self.writeback_slot(s)).collect()
    }

    pub fn occupancy(&self, bank: usize) -> BankOccupancy {
        let mut occ = BankOccupancy::default();
        let nb = self.geometry.num_banks as u64;
        for set in &self.banks[bank].sets {
            for s in &set.slots {
                match s.content {
                    Content::Invalid => occ.invalid += 1,
                    Content::Plain(_) => occ.uncompressed += 1,
                    Content::Zero | Content::Fv(_) => occ.compressed += 1,
                }
                if s.content.is_valid() && (s.line % nb) as usize != bank {
                    occ.foreign += 1;
                }
            }
        }
        occ
    }

    pub fn line_states(&self, bank: usize, set: usize) -> Vec<LineState> {
        let nb = self.geometry.num_banks as u64;
        let sets = self.geometry.sets_per_bank() as u64;
        self.banks[bank].sets[set]
            .slots
            .iter()
            .map(|s| LineState {
                tag: s.line / nb / sets,
                valid: s.content.is_valid(),
                dirty: s.dirty,
                compressed_flag: s.content.is_compressed(),
                codeword: match s.content {
                    Content::Fv(cw) => Some(cw),
                    _ => None,
                },
                lru_rank: s.lru,
            })
            .collect()
    }

    /// Checks structural invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let assoc = self.geometry.associativity as usize;
        for (b, bank) in self.banks.iter().enumerate() {
            let c = bank.counters;
            if c.c_compressed + c.c_invalid > c.c_access {
                return Err(format!("bank {b}: C_C + C_I > C_A ({c:?})"));
            }
            for (si, set) in bank.sets.iter().enumerate() {
                if set.slots.len() > assoc {
                    return Err(format!("bank {b} set {si}: {} slots", set.slots.len()));
                }
                for st in self.line_states(b, si) {
                    if st.dirty && !st.valid {
                        return Err(format!("bank {b} set {si}: dirty invalid line"));
                    }
                    if st.codeword.is_some() && !st.compressed_flag {
                        return Err(format!("bank {b} set {si}: codeword without flag"));
                    }
                    if let Some(cw) = st.codeword {
                        if cw.bits().count_ones() != 1 {
                            return Err(format!("bank {b} set {si}: codeword weight"));
                        }
                    }
                }
                if !bank.powered_on && set.slots.iter().any(|s| s.content.is_plain()) {
                    return Err(format!("bank {b} set {si}: gated bank holds uncompressed data"));
                }
            }
        }
        if self.active.is_empty() {
            return Err("no active banks".into());
        }
        Ok(())
    }

    /// Text dump of per-bank power flags, counters and occupancy.
    pub fn snapshot_report(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# bank power migrate c_access c_compressed c_invalid c_miss uncompressed compressed invalid foreign").unwrap();
        for (i, b) in self.banks.iter().enumerate() {
            let o = self.occupancy(i);
            let c = b.counters;
            writeln!(
                s,
                "{i} {} {} {} {} {} {} {} {} {} {}",
                b.powered_on as u8,
                b.migration_mode as u8,
                c.c_access,
                c.c_compressed,
                c.c_invalid,
                c.c_miss,
                o.uncompressed,
                o.compressed,
                o.invalid,
                o.foreign
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CacheGeometry {
        CacheGeometry::new(4, 64 * 2 * 2, 2).unwrap()
    }

    fn v(b: u8) -> LineValue {
        LineValue::splat(b)
    }

    #[test]
    fn geometry_defaults() {
        let g = CacheGeometry::default();
        assert_eq!(g.sets_per_bank(), 256);
        assert_eq!(g.total_capacity(), 8 * 1024 * 1024);
    }

    #[test]
    fn geometry_validation() {
        assert!(CacheGeometry::new(3, 1024, 2).is_err());
        assert!(CacheGeometry::new(4, 1000, 2).is_err());
        assert!(CacheGeometry::new(4, 1024, 0).is_err());
    }

    #[test]
    fn address_mapping() {
        let g = CacheGeometry::default();
        assert_eq!(g.map_address(0x0), LineLocation { bank: 0, set: 0, tag: 0 });
        assert_eq!(g.map_address(0x40).bank, 1);
        assert_eq!(g.map_address(0x1000), LineLocation { bank: 0, set: 1, tag: 0 });
        // low six bits ignored
        assert_eq!(g.map_address(0x7f), g.map_address(0x40));
        let wrap = 64 * 64 * 256;
        assert_eq!(g.map_address(wrap), LineLocation { bank: 0, set: 0, tag: 1 });
    }

    #[test]
    fn baseline_cold_read_misses_then_hits() {
        let mut c = Cache::new(small(), CacheMode::Baseline, None).unwrap();
        let o = c.access(&AccessRecord::read(0, 0x40, v(9)));
        assert_eq!(o.kind, AccessKind::Miss);
        assert_eq!(o.value, Some(v(9)));
        let o = c.access(&AccessRecord::read(1, 0x40, v(9)));
        assert_eq!(o.kind, AccessKind::HitUncompressed);
        let cnt = c.bank(1).counters;
        assert_eq!((cnt.c_access, cnt.c_miss), (2, 1));
    }

    #[test]
    fn niz_zero_write_sets_flag_only() {
        let mut c = Cache::new(small(), CacheMode::Niz, None).unwrap();
        let o = c.access(&AccessRecord::write(0, 0x0, LineValue::ZERO));
        assert_eq!(o.kind, AccessKind::Miss);
        assert!(o.compressed);
        assert_eq!(o.cost, AccessCost { flag_ops: 1, ..Default::default() });
        let st = c.line_states(0, 0);
        assert_eq!(st.len(), 1);
        assert!(st[0].valid && st[0].compressed_flag && st[0].dirty);
        assert_eq!(c.occupancy(0).uncompressed, 0);
    }

    #[test]
    fn niz_compressed_line_readable_while_gated() {
        let mut c = Cache::new(small(), CacheMode::Niz, None).unwrap();
        c.access(&AccessRecord::write(0, 0x0, LineValue::ZERO));
        c.access(&AccessRecord::write(0, 0x100, v(3)));
        c.gate_bank(0, false);
        let wbs = c.discard_bank(0);
        assert_eq!(wbs.len(), 1);
        let o = c.access(&AccessRecord::read(1, 0x0, v(0xee)));
        assert_eq!(o.kind, AccessKind::OffBankCompressedHit);
        assert_eq!(o.value, Some(LineValue::ZERO));
        assert_eq!(c.bank(0).counters.c_compressed, 1);
        let o = c.access(&AccessRecord::read(1, 0x100, v(3)));
        assert_eq!(o.kind, AccessKind::OffBankMiss);
        assert_eq!(o.value, Some(v(3)));
    }

    #[test]
    fn nfv_gated_read_decodes_codeword() {
        let table: Vec<LineValue> = (10..20).map(v).collect();
        let t = Arc::new(FvTable::new(table).unwrap());
        let mut c = Cache::new(small(), CacheMode::Nfv, Some(t)).unwrap();
        let fv3 = v(13);
        c.access(&AccessRecord::write(0, 0x80, fv3));
        let st = c.line_states(2, 0);
        assert_eq!(st[0].codeword.map(|cw| cw.bits()), Some(1 << 3));
        c.gate_bank(2, false);
        c.discard_bank(2);
        let o = c.access(&AccessRecord::read(1, 0x80, v(0)));
        assert_eq!(o.kind, AccessKind::OffBankCompressedHit);
        assert_eq!(o.value, Some(fv3));
    }

    #[test]
    fn nfv_without_table_is_rejected() {
        assert!(Cache::new(small(), CacheMode::Nfv, None).is_err());
    }

    #[test]
    fn gated_bank_never_allocates() {
        let mut c = Cache::new(small(), CacheMode::Niz, None).unwrap();
        c.gate_bank(1, false);
        let o = c.access(&AccessRecord::write(0, 0x40, v(5)));
        assert_eq!(o.kind, AccessKind::OffBankMiss);
        let o = c.access(&AccessRecord::write(0, 0x140, LineValue::ZERO));
        assert_eq!(o.kind, AccessKind::OffBankMiss);
        assert_eq!(c.occupancy(1), BankOccupancy::default());
        assert_eq!(c.memory().get(0x40), Some(v(5)));
    }

    #[test]
    fn gated_sidecar_write_of_plain_value_writes_around() {
        let mut c = Cache::new(small(), CacheMode::Niz, None).unwrap();
        c.access(&AccessRecord::write(0, 0x40, LineValue::ZERO));
        c.gate_bank(1, false);
        c.discard_bank(1);
        let o = c.access(&AccessRecord::write(1, 0x40, v(8)));
        assert_eq!(o.kind, AccessKind::OffBankMiss);
        assert_eq!(c.peek(0x40), None);
        assert_eq!(c.coherent_value(0x40), Some(v(8)));
    }

    #[test]
    fn lru_eviction_writes_back_dirty_victim() {
        let mut c = Cache::new(small(), CacheMode::Baseline, None).unwrap();
        // bank 0, set 0: lines 0, 8, 16 (stride = banks * sets = 8 lines)
        let stride = 8 * 64;
        c.access(&AccessRecord::write(0, 0, v(1)));
        c.access(&AccessRecord::read(1, stride, v(2)));
        c.access(&AccessRecord::read(2, 0, v(1)));
        let o = c.access(&AccessRecord::read(3, 2 * stride, v(3)));
        assert_eq!(o.kind, AccessKind::Miss);
        assert_eq!(o.evicted, None, "clean line {stride:#x} is the LRU victim");
        let o = c.access(&AccessRecord::read(4, stride, v(2)));
        let wb = o.evicted.expect("dirty line 0 evicted");
        assert_eq!((wb.address, wb.value), (0, v(1)));
    }

    #[test]
    fn invalidate_then_access_hits_invalid_slot() {
        let mut c = Cache::new(small(), CacheMode::Baseline, None).unwrap();
        c.access(&AccessRecord::write(0, 0x40, v(4)));
        let o = c.access(&AccessRecord::invalidate(1, 0x40));
        assert_eq!(o.kind, AccessKind::HitUncompressed);
        assert_eq!(o.evicted.map(|w| w.value), Some(v(4)));
        let o = c.access(&AccessRecord::read(2, 0x40, v(4)));
        assert_eq!(o.kind, AccessKind::HitInvalidSlot);
        assert_eq!(o.value, Some(v(4)));
        let cnt = c.bank(1).counters;
        // the fill after the invalidate counts as a miss
        assert_eq!((cnt.c_access, cnt.c_invalid, cnt.c_miss), (3, 1, 2));
    }

    #[test]
    fn counters_saturate_at_12_bits() {
        let mut c = Cache::new(small(), CacheMode::Niz, None).unwrap();
        c.set_saturating_counters(true);
        for i in 0..5000u64 {
            c.access(&AccessRecord::write(i, 0, LineValue::ZERO));
        }
        let cnt = c.bank(0).counters;
        assert_eq!(cnt.c_access, COUNTER_MAX_12BIT);
        assert!(cnt.c_compressed + cnt.c_invalid <= cnt.c_access);
    }

    #[test]
    fn migration_moves_lines_to_active_banks() {
        let mut c = Cache::new(small(), CacheMode::Baseline, None).unwrap();
        for (i, addr) in [0x0u64, 0x100, 0x200].iter().enumerate() {
            c.access(&AccessRecord::write(i as u64, *addr, v(i as u8 + 1)));
        }
        c.gate_bank(0, true);
        let (moved, wbs) = c.migrate_bank(0);
        assert_eq!((moved, wbs.len()), (3, 0));
        assert!(c.rehome().is_empty());
        for (i, addr) in [0x0u64, 0x100, 0x200].iter().enumerate() {
            let o = c.access(&AccessRecord::read(9, *addr, v(0xff)));
            assert_eq!(o.kind, AccessKind::HitUncompressed);
            assert_ne!(o.bank, 0);
            assert_eq!(o.value, Some(v(i as u8 + 1)));
        }
        c.check_invariants().unwrap();
    }

    #[test]
    fn power_on_makes_bank_allocate_again() {
        let mut c = Cache::new(small(), CacheMode::Baseline, None).unwrap();
        c.gate_bank(3, false);
        assert_eq!(c.access(&AccessRecord::read(0, 0xc0, v(1))).kind, AccessKind::OffBankMiss);
        c.power_on_bank(3);
        assert_eq!(c.access(&AccessRecord::read(1, 0xc0, v(1))).kind, AccessKind::Miss);
        assert_eq!(c.access(&AccessRecord::read(2, 0xc0, v(1))).kind, AccessKind::HitUncompressed);
    }

    #[test]
    fn snapshot_has_one_row_per_bank() {
        let c = Cache::new(small(), CacheMode::Baseline, None).unwrap();
        assert_eq!(c.snapshot_report().lines().count(), 5);
    }
}

//! Access traces: the text format, its parser and writer, and a synthetic
//! workload generator.
//!
//! One record per line, space separated:
//!
//! ```text
//! <cycle> <R|W|I> <0x-address> [<128 hex chars>]
//! ```
//!
//! The payload is required for `R` and `W` and forbidden for `I`. A Read
//! payload is the value backing memory holds for the line, used on fill.
//! `#` starts a comment that runs to the end of the line.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, TraceError};
use crate::line::{LineValue, LINE_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessOp {
    Read,
    Write,
    Invalidate,
}

impl AccessOp {
    pub fn symbol(self) -> char {
        match self {
            AccessOp::Read => 'R',
            AccessOp::Write => 'W',
            AccessOp::Invalidate => 'I',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessRecord {
    pub cycle: u64,
    pub op: AccessOp,
    pub address: u64,
    pub payload: Option<LineValue>,
}

impl AccessRecord {
    pub fn read(cycle: u64, address: u64, value: LineValue) -> Self {
        AccessRecord { cycle, op: AccessOp::Read, address, payload: Some(value) }
    }

    pub fn write(cycle: u64, address: u64, value: LineValue) -> Self {
        AccessRecord { cycle, op: AccessOp::Write, address, payload: Some(value) }
    }

    pub fn invalidate(cycle: u64, address: u64) -> Self {
        AccessRecord { cycle, op: AccessOp::Invalidate, address, payload: None }
    }

    /// Line-aligned address.
    pub fn line_address(&self) -> u64 {
        self.address & !(LINE_SIZE as u64 - 1)
    }
}

fn malformed(line: usize, msg: impl Into<String>) -> TraceError {
    TraceError::Malformed { line, msg: msg.into() }
}

/// Parses one non-comment line. `line_no` is 1-based and only used in errors.
pub fn parse_record(text: &str, line_no: usize) -> Result<AccessRecord, TraceError> {
    let mut fields = text.split_ascii_whitespace();
    let cycle = fields
        .next()
        .ok_or_else(|| malformed(line_no, "missing cycle"))?
        .parse::<u64>()
        .map_err(|e| malformed(line_no, format!("bad cycle: {e}")))?;
    let op = match fields.next() {
        Some("R") => AccessOp::Read,
        Some("W") => AccessOp::Write,
        Some("I") => AccessOp::Invalidate,
        Some(other) => return Err(malformed(line_no, format!("unknown op {other:?}"))),
        None => return Err(malformed(line_no, "missing op")),
    };
    let addr_text = fields.next().ok_or_else(|| malformed(line_no, "missing address"))?;
    let hex = addr_text
        .strip_prefix("0x")
        .or_else(|| addr_text.strip_prefix("0X"))
        .ok_or_else(|| malformed(line_no, format!("address {addr_text:?} lacks 0x prefix")))?;
    let address = u64::from_str_radix(hex, 16)
        .map_err(|e| malformed(line_no, format!("bad address {addr_text:?}: {e}")))?;
    let payload = match fields.next() {
        Some(p) => Some(
            LineValue::from_hex(p).map_err(|e| malformed(line_no, format!("bad payload: {e}")))?,
        ),
        None => None,
    };
    if let Some(extra) = fields.next() {
        return Err(malformed(line_no, format!("unexpected trailing field {extra:?}")));
    }
    match (op, payload.is_some()) {
        (AccessOp::Invalidate, true) => Err(malformed(line_no, "invalidate must not carry a payload")),
        (AccessOp::Read | AccessOp::Write, false) => Err(malformed(line_no, "read/write requires a payload")),
        _ => Ok(AccessRecord { cycle, op, address, payload }),
    }
}

/// Parses a whole trace, checking that cycles never decrease.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<AccessRecord>, TraceError> {
    let mut out = Vec::new();
    let mut prev = 0u64;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let body = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        if body.trim().is_empty() {
            continue;
        }
        let rec = parse_record(body, line_no)?;
        if rec.cycle < prev {
            return Err(TraceError::Ordering { line: line_no, cycle: rec.cycle, prev });
        }
        prev = rec.cycle;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_trace_str(text: &str) -> Result<Vec<AccessRecord>, TraceError> {
    parse_trace(text.as_bytes())
}

pub fn format_record(rec: &AccessRecord) -> String {
    match rec.payload {
        Some(p) => format!("{} {} 0x{:x} {}", rec.cycle, rec.op.symbol(), rec.address, p),
        None => format!("{} {} 0x{:x}", rec.cycle, rec.op.symbol(), rec.address),
    }
}

pub fn write_trace<W: Write>(mut w: W, records: &[AccessRecord]) -> std::io::Result<()> {
    for rec in records {
        writeln!(w, "{}", format_record(rec))?;
    }
    Ok(())
}

pub fn trace_to_string(records: &[AccessRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace text is ASCII")
}

fn default_num_banks() -> u32 {
    64
}
fn default_lines_per_bank() -> u64 {
    1024
}
fn default_write_fraction() -> f64 {
    0.3
}
fn default_cycle_step() -> u64 {
    1
}

/// Parameters for [`generate_synthetic`]. Deserializes from TOML:
///
/// ```toml
/// total_accesses = 100000
/// bank_skew = [[0, 0.5], [1, 0.5]]          # (bank, probability)
/// zero_fraction = 0.2
/// fv_pool = [["<128 hex chars>", 0.1]]      # (value, probability)
/// invalidate_fraction = 0.01
/// rng_seed = 42
/// # optional
/// num_banks = 64
/// lines_per_bank = 1024
/// write_fraction = 0.3
/// cycle_step = 1
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub total_accesses: u64,
    pub bank_skew: Vec<(u32, f64)>,
    #[serde(default)]
    pub zero_fraction: f64,
    #[serde(default)]
    pub fv_pool: Vec<(LineValue, f64)>,
    #[serde(default)]
    pub invalidate_fraction: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_num_banks")]
    pub num_banks: u32,
    /// Distinct lines touched per bank.
    #[serde(default = "default_lines_per_bank")]
    pub lines_per_bank: u64,
    /// Fraction of non-invalidate accesses that are writes.
    #[serde(default = "default_write_fraction")]
    pub write_fraction: f64,
    /// Cycles between consecutive records.
    #[serde(default = "default_cycle_step")]
    pub cycle_step: u64,
}

impl WorkloadSpec {
    pub fn new(total_accesses: u64, bank_skew: Vec<(u32, f64)>) -> Self {
        WorkloadSpec {
            total_accesses,
            bank_skew,
            zero_fraction: 0.0,
            fv_pool: Vec::new(),
            invalidate_fraction: 0.0,
            rng_seed: 0,
            num_banks: default_num_banks(),
            lines_per_bank: default_lines_per_bank(),
            write_fraction: default_write_fraction(),
            cycle_step: default_cycle_step(),
        }
    }

    /// `hot` banks share `hot_mass` of the probability evenly; the remaining
    /// banks share the rest evenly.
    pub fn skewed(total_accesses: u64, num_banks: u32, hot: &[u32], hot_mass: f64) -> Self {
        let cold = num_banks as usize - hot.len();
        let mut skew = Vec::with_capacity(num_banks as usize);
        for b in 0..num_banks {
            let p = if hot.contains(&b) {
                hot_mass / hot.len() as f64
            } else {
                (1.0 - hot_mass) / cold as f64
            };
            skew.push((b, p));
        }
        let mut spec = WorkloadSpec::new(total_accesses, skew);
        spec.num_banks = num_banks;
        spec
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let spec: WorkloadSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bank_skew.is_empty() {
            return Err(ConfigError::invalid("bank_skew is empty"));
        }
        if self.num_banks == 0 || self.lines_per_bank == 0 {
            return Err(ConfigError::invalid("num_banks and lines_per_bank must be positive"));
        }
        let unit = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(ConfigError::invalid(format!("{name} = {p} is not in [0, 1]")))
            }
        };
        let mut sum = 0.0;
        for &(bank, p) in &self.bank_skew {
            unit("bank_skew probability", p)?;
            if bank >= self.num_banks {
                return Err(ConfigError::invalid(format!(
                    "bank_skew names bank {bank} but num_banks = {}",
                    self.num_banks
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::invalid(format!("bank_skew sums to {sum}, expected 1")));
        }
        unit("zero_fraction", self.zero_fraction)?;
        unit("invalidate_fraction", self.invalidate_fraction)?;
        unit("write_fraction", self.write_fraction)?;
        let mut value_mass = self.zero_fraction;
        for &(_, p) in &self.fv_pool {
            unit("fv_pool probability", p)?;
            value_mass += p;
        }
        if value_mass > 1.0 + 1e-9 {
            return Err(ConfigError::invalid(format!(
                "zero_fraction plus fv_pool probabilities is {value_mass}, exceeding 1"
            )));
        }
        Ok(())
    }

    /// Size of the byte address space the generator draws from.
    pub fn address_space(&self) -> u64 {
        self.lines_per_bank * self.num_banks as u64 * LINE_SIZE as u64
    }
}

/// Generates a self-consistent trace: every Read carries the value last
/// written to its line, or a freshly drawn value on first touch.
pub fn generate_synthetic(spec: &WorkloadSpec) -> Result<Vec<AccessRecord>, ConfigError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let bank_dist = WeightedIndex::new(spec.bank_skew.iter().map(|&(_, p)| p))
        .map_err(|e| ConfigError::invalid(format!("bank_skew: {e}")))?;
    let mut current: HashMap<u64, LineValue> = HashMap::new();
    let mut out = Vec::with_capacity(spec.total_accesses as usize);

    for i in 0..spec.total_accesses {
        let cycle = i * spec.cycle_step;
        let bank = spec.bank_skew[bank_dist.sample(&mut rng)].0 as u64;
        let line_idx = rng.random_range(0..spec.lines_per_bank);
        let address = (line_idx * spec.num_banks as u64 + bank) * LINE_SIZE as u64;

        if rng.random::<f64>() < spec.invalidate_fraction {
            out.push(AccessRecord::invalidate(cycle, address));
        } else if rng.random::<f64>() < spec.write_fraction {
            let v = draw_value(spec, &mut rng);
            current.insert(address, v);
            out.push(AccessRecord::write(cycle, address, v));
        } else {
            let v = match current.get(&address) {
                Some(v) => *v,
                None => {
                    let v = draw_value(spec, &mut rng);
                    current.insert(address, v);
                    v
                }
            };
            out.push(AccessRecord::read(cycle, address, v));
        }
    }
    Ok(out)
}

fn draw_value(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> LineValue {
    let u: f64 = rng.random();
    if u < spec.zero_fraction {
        return LineValue::ZERO;
    }
    let mut acc = spec.zero_fraction;
    for (v, p) in &spec.fv_pool {
        acc += p;
        if u < acc {
            return *v;
        }
    }
    let mut bytes = [0u8; LINE_SIZE];
    rng.fill(&mut bytes[..]);
    // keep the random class disjoint from the zero class
    bytes[0] |= 1;
    LineValue::new(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_zero_write() {
        let line = format!("100 W 0x1000 {}", "0".repeat(128));
        let recs = parse_trace_str(&line).unwrap();
        assert_eq!(recs, vec![AccessRecord::write(100, 0x1000, LineValue::ZERO)]);
    }

    #[test]
    fn parses_invalidate_without_payload() {
        let recs = parse_trace_str("100 I 0x1000\n").unwrap();
        assert_eq!(recs, vec![AccessRecord::invalidate(100, 0x1000)]);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = format!("# header\n\n5 R 0x40 {}  # trailing\n", "ab".repeat(64));
        let recs = parse_trace_str(&text).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].address, 0x40);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("1 R 0x0 {}\n2 X 0x0\n", "0".repeat(128));
        match parse_trace_str(&text) {
            Err(TraceError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn payload_rules_enforced() {
        let p = "0".repeat(128);
        assert!(parse_trace_str("1 R 0x0").is_err());
        assert!(parse_trace_str(&format!("1 I 0x0 {p}")).is_err());
        assert!(parse_trace_str(&format!("1 W 0x0 {p} extra")).is_err());
        assert!(parse_trace_str(&format!("1 W 1000 {p}")).is_err());
    }

    #[test]
    fn decreasing_cycle_is_an_ordering_error() {
        let text = "10 I 0x0\n9 I 0x40\n";
        match parse_trace_str(text) {
            Err(TraceError::Ordering { line, cycle, prev }) => {
                assert_eq!((line, cycle, prev), (2, 9, 10));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn three_record_round_trip() {
        let recs = vec![
            AccessRecord::write(1, 0x40, LineValue::splat(7)),
            AccessRecord::read(2, 0x80, LineValue::ZERO),
            AccessRecord::invalidate(2, 0x40),
        ];
        let text = trace_to_string(&recs);
        let back = parse_trace_str(&text).unwrap();
        assert_eq!(back, recs);
        assert_eq!(trace_to_string(&back).as_bytes(), text.as_bytes());
    }

    #[test]
    fn empty_skew_is_rejected() {
        let spec = WorkloadSpec::new(10, vec![]);
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn skew_must_sum_to_one() {
        let spec = WorkloadSpec::new(10, vec![(0, 0.5), (1, 0.4)]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn degenerate_skew_hits_one_bank() {
        let spec = WorkloadSpec::new(1000, vec![(0, 1.0)]);
        let recs = generate_synthetic(&spec).unwrap();
        assert_eq!(recs.len(), 1000);
        assert!(recs.iter().all(|r| (r.address / 64) % 64 == 0));
    }

    #[test]
    fn full_zero_fraction_gives_zero_payloads() {
        let mut spec = WorkloadSpec::new(2000, vec![(3, 0.5), (9, 0.5)]);
        spec.zero_fraction = 1.0;
        spec.invalidate_fraction = 0.1;
        let recs = generate_synthetic(&spec).unwrap();
        assert!(recs.iter().filter_map(|r| r.payload).all(|p| p.is_zero()));
    }

    #[test]
    fn toml_spec_parses() {
        let text = format!(
            "total_accesses = 10\nbank_skew = [[0, 0.25], [1, 0.75]]\nfv_pool = [[\"{}\", 0.5]]\nrng_seed = 7\n",
            "11".repeat(64)
        );
        let spec = WorkloadSpec::from_toml(&text).unwrap();
        assert_eq!(spec.bank_skew, vec![(0, 0.25), (1, 0.75)]);
        assert_eq!(spec.fv_pool[0].0, LineValue::splat(0x11));
        assert_eq!(spec.num_banks, 64);
    }
}

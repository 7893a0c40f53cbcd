//! Frequent-value table and the one-hot (1-LWC) codec.
//!
//! Entry `i` of the table is encoded as the 32-bit word with only bit `i`
//! set. Values not in the table have no codeword and travel uncoded.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use crate::error::FvError;
use crate::line::LineValue;
use crate::trace::{AccessOp, AccessRecord};

/// Maximum table size; one entry per codeword bit.
pub const FV_TABLE_CAPACITY: usize = 32;

/// A 32-bit one-hot codeword.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Codeword(u32);

impl Codeword {
    pub fn for_index(index: usize) -> Codeword {
        assert!(index < FV_TABLE_CAPACITY);
        Codeword(1u32 << index)
    }

    /// Accepts only words of Hamming weight one.
    pub fn from_bits(bits: u32) -> Result<Codeword, FvError> {
        if bits.count_ones() == 1 {
            Ok(Codeword(bits))
        } else {
            Err(FvError::InvalidCodeword(bits))
        }
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0.trailing_zeros() as usize
    }
}

impl fmt::Debug for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Codeword({:#010x})", self.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FvTable {
    entries: Vec<LineValue>,
    lookup: HashMap<LineValue, usize>,
}

impl FvTable {
    pub fn new(entries: Vec<LineValue>) -> Result<Self, FvError> {
        if entries.len() > FV_TABLE_CAPACITY {
            return Err(FvError::TooManyEntries { max: FV_TABLE_CAPACITY, got: entries.len() });
        }
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, v) in entries.iter().enumerate() {
            if let Some(&first) = lookup.get(v) {
                return Err(FvError::Duplicate { index: i, first });
            }
            lookup.insert(*v, i);
        }
        Ok(FvTable { entries, lookup })
    }

    pub fn empty() -> Self {
        FvTable::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LineValue] {
        &self.entries
    }

    pub fn contains(&self, value: &LineValue) -> bool {
        self.lookup.contains_key(value)
    }

    pub fn encode(&self, value: &LineValue) -> Option<Codeword> {
        self.lookup.get(value).map(|&i| Codeword::for_index(i))
    }

    pub fn decode(&self, bits: u32) -> Result<LineValue, FvError> {
        let cw = Codeword::from_bits(bits)?;
        self.entries.get(cw.index()).copied().ok_or(FvError::InvalidCodeword(bits))
    }

    /// One value per line, line number = entry index.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.entries.len() * 129);
        for v in &self.entries {
            s.push_str(&v.to_hex());
            s.push('\n');
        }
        s
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_text().as_bytes())
    }

    pub fn from_text(text: &str) -> Result<Self, FvError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v = LineValue::from_hex(line).map_err(|source| FvError::Parse { line: i + 1, source })?;
            entries.push(v);
        }
        FvTable::new(entries)
    }
}

/// Static profiling: the `k` most frequent payloads across all Read and
/// Write records. Ties go to the value seen first.
pub fn profile_frequent_values(trace: &[AccessRecord], k: usize) -> FvTable {
    let k = k.min(FV_TABLE_CAPACITY);
    // value -> (count, first position)
    let mut counts: HashMap<LineValue, (u64, usize)> = HashMap::new();
    for (pos, rec) in trace.iter().enumerate() {
        if rec.op == AccessOp::Invalidate {
            continue;
        }
        if let Some(v) = rec.payload {
            counts.entry(v).or_insert((0, pos)).0 += 1;
        }
    }
    let mut ranked: Vec<(LineValue, u64, usize)> =
        counts.into_iter().map(|(v, (c, first))| (v, c, first)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(k);
    FvTable::new(ranked.into_iter().map(|(v, _, _)| v).collect())
        .expect("profiled values are distinct and bounded")
}

/// Accesses per thousand records whose payload is in the table.
pub fn fv_accesses_per_kilo(trace: &[AccessRecord], table: &FvTable) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let hits = trace
        .iter()
        .filter(|r| r.payload.is_some_and(|p| table.contains(&p)))
        .count();
    hits as f64 * 1000.0 / trace.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn val(b: u8) -> LineValue {
        LineValue::splat(b)
    }

    #[test]
    fn codeword_bit_mapping() {
        let t = FvTable::new((1..=6).map(val).collect()).unwrap();
        assert_eq!(t.encode(&val(1)).unwrap().bits(), 0x0000_0001);
        assert_eq!(t.encode(&val(6)).unwrap().bits(), 0x0000_0020);
        assert_eq!(t.encode(&val(99)), None);
    }

    #[test]
    fn decode_rejects_bad_words() {
        let t = FvTable::new(vec![val(1), val(2)]).unwrap();
        assert_eq!(t.decode(0x1).unwrap(), val(1));
        assert_eq!(t.decode(0x3), Err(FvError::InvalidCodeword(0x3)));
        assert_eq!(t.decode(0x0), Err(FvError::InvalidCodeword(0x0)));
        // weight one but beyond the table
        assert_eq!(t.decode(0x4), Err(FvError::InvalidCodeword(0x4)));
    }

    #[test]
    fn table_rejects_duplicates_and_overflow() {
        assert_eq!(
            FvTable::new(vec![val(1), val(2), val(1)]),
            Err(FvError::Duplicate { index: 2, first: 0 })
        );
        let many: Vec<_> = (0..33).map(val).collect();
        assert!(matches!(FvTable::new(many), Err(FvError::TooManyEntries { .. })));
    }

    fn writes(values: &[LineValue]) -> Vec<AccessRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| AccessRecord::write(i as u64, i as u64 * 64, *v))
            .collect()
    }

    #[test]
    fn profile_single_value() {
        let v = val(0x5a);
        let t = profile_frequent_values(&writes(&[v; 20]), 32);
        assert_eq!(t.entries(), &[v]);
    }

    #[test]
    fn profile_top_k() {
        let (a, b, c) = (val(0xa), val(0xb), val(0xc));
        let mut seq = vec![c];
        seq.extend(std::iter::repeat_n(b, 5));
        seq.extend(std::iter::repeat_n(a, 10));
        let t = profile_frequent_values(&writes(&seq), 2);
        assert_eq!(t.entries(), &[a, b]);
    }

    #[test]
    fn profile_tie_breaks_on_first_occurrence() {
        let (a, b) = (val(0xa), val(0xb));
        let seq = [b, a, a, b, a, b, a, b, a, b];
        let t = profile_frequent_values(&writes(&seq), 32);
        assert_eq!(t.entries(), &[b, a]);
        let seq = [a, b, b, a, b, a, b, a, b, a];
        let t = profile_frequent_values(&writes(&seq), 32);
        assert_eq!(t.entries(), &[a, b]);
    }

    #[test]
    fn profile_ignores_invalidates_and_handles_empty() {
        assert!(profile_frequent_values(&[], 32).is_empty());
        let t = profile_frequent_values(&[AccessRecord::invalidate(0, 0)], 32);
        assert!(t.is_empty());
    }

    #[test]
    fn text_round_trip() {
        let t = FvTable::new(vec![val(1), LineValue::ZERO, val(3)]).unwrap();
        assert_eq!(FvTable::from_text(&t.to_text()).unwrap(), t);
        assert_eq!(t.to_text().lines().count(), 3);
    }

    proptest! {
        #[test]
        fn codec_identity(seeds in proptest::collection::hash_set(any::<[u8; 8]>(), 1..=32)) {
            let entries: Vec<LineValue> = seeds
                .iter()
                .map(|s| {
                    let mut b = [0u8; 64];
                    b[..8].copy_from_slice(s);
                    LineValue::new(b)
                })
                .collect();
            let t = FvTable::new(entries.clone()).unwrap();
            let mut seen = 0u32;
            for v in &entries {
                let cw = t.encode(v).unwrap();
                prop_assert_eq!(cw.bits().count_ones(), 1);
                prop_assert_eq!(seen & cw.bits(), 0);
                seen |= cw.bits();
                prop_assert_eq!(t.decode(cw.bits()).unwrap(), *v);
            }
        }
    }
}

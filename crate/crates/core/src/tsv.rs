//! TSV bundle crosstalk model.
//!
//! Wires sit row-major on a grid `width` wires wide. Wire `i` couples to its
//! horizontal/vertical neighbours (`i±1`, `i±width`) through `c1` and to its
//! diagonal neighbours (`i±(width-1)`, `i±(width+1)`) through `c2`;
//! neighbours that fall off the grid contribute nothing.
//!
//! Words are `u128` bit vectors, bit `i` driving wire `i`, so a bundle has at
//! most 128 wires.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::fv::Codeword;
use crate::line::LineValue;

pub const MAX_WIRES: usize = 128;

/// Wires carrying a one-hot codeword; the rest are gated and hold.
pub const FV_WIRES: usize = 32;

/// Coupling factor between two wires' transitions: `|ΔV_i − ΔV_j| / vdd`.
///
/// Inputs are voltages at logic levels (0 or `vdd`).
pub fn delta(vi_before: f64, vi_after: f64, vj_before: f64, vj_after: f64, vdd: f64) -> u8 {
    let dvi = vi_after - vi_before;
    let dvj = vj_after - vj_before;
    ((dvi - dvj).abs() / vdd).round() as u8
}

/// [`delta`] on logic levels.
pub fn delta_logic(i: (bool, bool), j: (bool, bool)) -> u8 {
    let d = |(b, a): (bool, bool)| a as i8 - b as i8;
    (d(i) - d(j)).unsigned_abs()
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_width() -> usize {
    3
}
fn default_num_wires() -> usize {
    MAX_WIRES
}
fn default_cc_ratio() -> f64 {
    5.54
}
fn default_cd_ratio() -> f64 {
    1.385
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsvParams {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_num_wires")]
    pub num_wires: usize,
    /// Capacitance to substrate.
    #[serde(default = "one")]
    pub c_base: f64,
    /// Horizontal/vertical coupling capacitance.
    #[serde(default = "one")]
    pub c1: f64,
    /// Diagonal coupling capacitance.
    #[serde(default = "half")]
    pub c2: f64,
    /// Driver resistance.
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "one")]
    pub vdd: f64,
    /// Wire load capacitance C_L.
    #[serde(default = "one")]
    pub c_load: f64,
    /// North-neighbour coupling capacitance as a multiple of C_L.
    #[serde(default = "default_cc_ratio")]
    pub c_c_ratio: f64,
    /// Northwest-neighbour coupling capacitance as a multiple of C_L.
    #[serde(default = "default_cd_ratio")]
    pub c_d_ratio: f64,
    /// Enforce c2 / c1 = 0.5.
    #[serde(default)]
    pub fixed_diagonal_ratio: bool,
}

impl Default for TsvParams {
    fn default() -> Self {
        TsvParams {
            width: default_width(),
            num_wires: default_num_wires(),
            c_base: 1.0,
            c1: 1.0,
            c2: 0.5,
            r: 1.0,
            vdd: 1.0,
            c_load: 1.0,
            c_c_ratio: default_cc_ratio(),
            c_d_ratio: default_cd_ratio(),
            fixed_diagonal_ratio: false,
        }
    }
}

impl TsvParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.width < 2 {
            return Err(ConfigError::invalid("tsv width must be at least 2"));
        }
        if self.num_wires == 0 || self.num_wires > MAX_WIRES {
            return Err(ConfigError::invalid(format!("tsv num_wires must be in 1..={MAX_WIRES}")));
        }
        let caps = [self.c_base, self.c1, self.c2, self.r, self.vdd, self.c_load, self.c_c_ratio, self.c_d_ratio];
        if caps.iter().any(|&x| x < 0.0 || !x.is_finite()) || self.vdd == 0.0 {
            return Err(ConfigError::invalid("tsv parameters must be finite and non-negative, vdd positive"));
        }
        if self.fixed_diagonal_ratio && (self.c2 - 0.5 * self.c1).abs() > 1e-12 * self.c1.max(1.0) {
            return Err(ConfigError::invalid("fixed_diagonal_ratio requires c2 = 0.5 * c1"));
        }
        Ok(())
    }
}

/// Energy of one word transfer, split into self and coupling parts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WordEnergy {
    pub transition: f64,
    pub coupling: f64,
    pub wire_transitions: u32,
}

impl WordEnergy {
    pub fn total(&self) -> f64 {
        self.transition + self.coupling
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsvBundle {
    params: TsvParams,
    mask: u128,
    prev_word: u128,
}

impl TsvBundle {
    pub fn new(params: TsvParams) -> Result<Self, ConfigError> {
        params.validate()?;
        let mask = if params.num_wires == MAX_WIRES { u128::MAX } else { (1u128 << params.num_wires) - 1 };
        Ok(TsvBundle { params, mask, prev_word: 0 })
    }

    pub fn params(&self) -> &TsvParams {
        &self.params
    }

    pub fn prev_word(&self) -> u128 {
        self.prev_word
    }

    pub fn set_prev_word(&mut self, word: u128) {
        self.check_word(word);
        self.prev_word = word;
    }

    fn check_word(&self, word: u128) {
        assert!(
            word & !self.mask == 0,
            "word drives wires beyond the {}-wire bundle",
            self.params.num_wires
        );
    }

    fn c_c(&self) -> f64 {
        self.params.c_c_ratio * self.params.c_load
    }

    fn c_d(&self) -> f64 {
        self.params.c_d_ratio * self.params.c_load
    }

    /// Grid neighbours of `wire`: (horizontal/vertical, diagonal).
    pub fn neighbors(&self, wire: usize) -> (Vec<usize>, Vec<usize>) {
        let w = self.params.width as isize;
        let n = self.params.num_wires as isize;
        let (row, col) = (wire as isize / w, wire as isize % w);
        let at = |dr: isize, dc: isize| -> Option<usize> {
            let (r, c) = (row + dr, col + dc);
            if r < 0 || c < 0 || c >= w {
                return None;
            }
            let idx = r * w + c;
            (idx < n).then_some(idx as usize)
        };
        let vh = [(0, -1), (0, 1), (-1, 0), (1, 0)].iter().filter_map(|&(r, c)| at(r, c)).collect();
        let diag = [(-1, -1), (-1, 1), (1, -1), (1, 1)].iter().filter_map(|&(r, c)| at(r, c)).collect();
        (vh, diag)
    }

    fn level(word: u128, wire: usize) -> bool {
        (word >> wire) & 1 == 1
    }

    fn pair_delta(before: u128, after: u128, i: usize, j: usize) -> u8 {
        delta_logic(
            (Self::level(before, i), Self::level(after, i)),
            (Self::level(before, j), Self::level(after, j)),
        )
    }

    /// C_eff of `wire` for the transition `before -> after`.
    pub fn effective_capacitance(&self, wire: usize, before: u128, after: u128) -> f64 {
        assert!(wire < self.params.num_wires);
        let (vh, diag) = self.neighbors(wire);
        let sum = |ns: &[usize]| ns.iter().map(|&j| Self::pair_delta(before, after, wire, j) as f64).sum::<f64>();
        self.params.c_base + self.params.c1 * sum(&vh) + self.params.c2 * sum(&diag)
    }

    /// Crosstalk delay R·C_eff; zero when `wire` does not switch.
    pub fn crosstalk_delay(&self, wire: usize, before: u128, after: u128) -> f64 {
        if Self::level(before, wire) == Self::level(after, wire) {
            return 0.0;
        }
        self.params.r * self.effective_capacitance(wire, before, after)
    }

    /// Energy of the transition `before -> after`. Coupling counts only the
    /// pairs `(i, i+1)` and `(i, i+2)`: a pair whose final levels differ is
    /// charged once per wire of the pair that switched.
    pub fn transition_energy(&self, before: u128, after: u128) -> WordEnergy {
        let n = self.params.num_wires;
        let v2 = self.params.vdd * self.params.vdd;
        let t = (before ^ after) & self.mask;
        let wire_transitions = t.count_ones();
        let pair_events = |offset: usize| -> u32 {
            if n <= offset {
                return 0;
            }
            let pair_mask = low_mask(n - offset);
            let differ = (after ^ (after >> offset)) & pair_mask;
            (differ & t).count_ones() + (differ & (t >> offset)).count_ones()
        };
        WordEnergy {
            transition: self.params.c_load * v2 * wire_transitions as f64,
            coupling: self.c_c() * v2 * pair_events(1) as f64 + self.c_d() * v2 * pair_events(2) as f64,
            wire_transitions,
        }
    }

    /// Drives `word` onto the bundle and returns the energy of the change.
    pub fn transmit(&mut self, word: u128) -> WordEnergy {
        self.check_word(word);
        let e = self.transition_energy(self.prev_word, word);
        self.prev_word = word;
        e
    }

    /// Drives a one-hot codeword on the low [`FV_WIRES`] wires; the gated
    /// wires keep their previous levels.
    pub fn transmit_codeword(&mut self, cw: Codeword) -> WordEnergy {
        let fv_mask = low_mask(FV_WIRES.min(self.params.num_wires));
        let word = (self.prev_word & !fv_mask) | cw.bits() as u128;
        self.transmit(word)
    }

    /// Sends a 64-byte line: one codeword transfer when `codeword` is given,
    /// otherwise the raw bytes in bundle-width words.
    pub fn transfer_line(&mut self, value: &LineValue, codeword: Option<Codeword>) -> WordEnergy {
        if let Some(cw) = codeword {
            return self.transmit_codeword(cw);
        }
        let mut total = WordEnergy::default();
        for word in line_words(value, self.params.num_wires) {
            let e = self.transmit(word);
            total.transition += e.transition;
            total.coupling += e.coupling;
            total.wire_transitions += e.wire_transitions;
        }
        total
    }
}

fn low_mask(bits: usize) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// Splits a line into `num_wires`-bit words, least significant bits first.
pub fn line_words(value: &LineValue, num_wires: usize) -> Vec<u128> {
    let bytes = value.as_bytes();
    let total_bits = bytes.len() * 8;
    let mut out = Vec::with_capacity(total_bits.div_ceil(num_wires));
    let mut bit = 0;
    while bit < total_bits {
        let mut w = 0u128;
        for k in 0..num_wires.min(total_bits - bit) {
            let b = bit + k;
            if (bytes[b / 8] >> (b % 8)) & 1 == 1 {
                w |= 1 << k;
            }
        }
        out.push(w);
        bit += num_wires;
    }
    out
}

/// Sum of transfer energies over consecutive word pairs of `words`.
pub fn stream_energy(words: &[u128], bundle: &TsvBundle) -> f64 {
    let mut b = bundle.clone();
    let Some((&first, rest)) = words.split_first() else {
        return 0.0;
    };
    b.set_prev_word(first);
    rest.iter().map(|&w| b.transmit(w).total()).sum()
}

/// Transition statistics driving the analytic energy model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStats {
    pub p_trans: f64,
    pub p_fv: f64,
    /// Expected transitions on a coupled pair.
    pub e_t: f64,
}

/// `2(1-p)p + 2p^2`.
pub fn expected_pair_transitions(p_trans: f64) -> f64 {
    2.0 * (1.0 - p_trans) * p_trans + 2.0 * p_trans * p_trans
}

impl TransitionStats {
    pub fn from_p_trans(p_trans: f64) -> Self {
        assert!((0.0..=1.0).contains(&p_trans));
        TransitionStats { p_trans, p_fv: 0.0, e_t: expected_pair_transitions(p_trans) }
    }

    /// Mixes coded and uncoded transfers by the frequent-value probability.
    pub fn mixed(p_fv: f64, p_trans_fv: f64, p_trans_uncoded: f64) -> Self {
        assert!((0.0..=1.0).contains(&p_fv));
        let p = p_fv * p_trans_fv + (1.0 - p_fv) * p_trans_uncoded;
        TransitionStats { p_fv, ..Self::from_p_trans(p) }
    }
}

/// Expected per-TSV energy from transition statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticEnergy {
    pub transition: f64,
    /// Coupling to the north neighbour.
    pub north: f64,
    /// Coupling to the northwest neighbour.
    pub northwest: f64,
}

impl AnalyticEnergy {
    pub fn total(&self) -> f64 {
        self.transition + self.north + self.northwest
    }
}

/// Probability that two neighbouring wires sit at different levels.
pub const P_LEVELS_DIFFER: f64 = 0.5;

pub fn analytic_energy(stats: &TransitionStats, bundle: &TsvBundle) -> AnalyticEnergy {
    let p = bundle.params();
    let v2 = p.vdd * p.vdd;
    AnalyticEnergy {
        transition: p.c_load * v2 * stats.p_trans,
        north: bundle.c_c() * v2 * P_LEVELS_DIFFER * stats.e_t,
        northwest: bundle.c_d() * v2 * P_LEVELS_DIFFER * stats.e_t,
    }
}

/// Expected [`stream_energy`] of `n_words` words over the whole bundle.
pub fn expected_stream_energy(stats: &TransitionStats, bundle: &TsvBundle, n_words: usize) -> f64 {
    if n_words < 2 {
        return 0.0;
    }
    let n = bundle.params().num_wires as f64;
    let e = analytic_energy(stats, bundle);
    let per_word = n * e.transition + (n - 1.0).max(0.0) * e.north + (n - 2.0).max(0.0) * e.northwest;
    per_word * (n_words - 1) as f64
}

//! Crossbar PUF pipeline: entropy initialization, challenge mapping, CSA
//! sensing and bulk CRP collection.
//!
//! Enrollment calibrates one sense threshold per column as the median column
//! current over a batch of random challenges, which centers every response
//! bit near 50/50. Evaluation challenges are drawn from the same distribution
//! as calibration; the default sampler uses balanced (half-weight) challenges
//! so the comparator margin is carried by per-device variation rather than by
//! the common-mode input activity.

use crate::crossbar::{BitMatrix, Crossbar, DriveVector, ReadResult, RowDrive};
use crate::device::{DeviceState, PulseLibrary};
use crate::error::{Error, Result};
use crate::numeric::median;
use crate::trng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// An n-bit row challenge. Bit i selects the drive of row i.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Challenge {
    bits: Vec<u8>,
}

impl Challenge {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || bits.iter().any(|&b| b > 1) {
            return Err(Error::Domain("challenge bits must be 0/1 and nonempty".into()));
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, i: usize) -> u8 {
        self.bits[i]
    }

    pub fn flip_bit(&self, i: usize) -> Self {
        let mut bits = self.bits.clone();
        bits[i] ^= 1;
        Self { bits }
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Hex encoding, bit 0 (row 0) as the most significant bit, zero-padded
    /// to whole nibbles.
    pub fn to_hex(&self) -> String {
        bits_to_hex(&self.bits)
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        Self::new(bits_from_hex(hex, len)?)
    }
}

/// An m-bit sensed response.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Response {
    bits: Vec<u8>,
}

impl Response {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || bits.iter().any(|&b| b > 1) {
            return Err(Error::Domain("response bits must be 0/1 and nonempty".into()));
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, i: usize) -> u8 {
        self.bits[i]
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| b ^ 1).collect(),
        }
    }

    pub fn to_hex(&self) -> String {
        bits_to_hex(&self.bits)
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        Self::new(bits_from_hex(hex, len)?)
    }
}

fn bits_to_hex(bits: &[u8]) -> String {
    let nibbles = bits.len().div_ceil(4);
    let padded = nibbles * 4;
    let mut out = String::with_capacity(nibbles);
    for k in 0..nibbles {
        let mut v = 0u8;
        for t in 0..4 {
            let pos = k * 4 + t;
            // Leading pad bits are zero.
            let bit = if pos < padded - bits.len() {
                0
            } else {
                bits[pos - (padded - bits.len())]
            };
            v = (v << 1) | bit;
        }
        out.push(char::from_digit(v as u32, 16).unwrap());
    }
    out
}

fn bits_from_hex(hex: &str, len: usize) -> Result<Vec<u8>> {
    let mut raw = Vec::with_capacity(hex.len() * 4);
    for ch in hex.trim().chars() {
        let v = ch
            .to_digit(16)
            .ok_or_else(|| Error::Domain(format!("invalid hex digit '{ch}'")))? as u8;
        for t in (0..4).rev() {
            raw.push((v >> t) & 1);
        }
    }
    if raw.len() < len {
        return Err(Error::Domain(format!(
            "hex string '{hex}' holds {} bits, need {len}",
            raw.len()
        )));
    }
    let (pad, bits) = raw.split_at(raw.len() - len);
    if pad.iter().any(|&b| b != 0) {
        return Err(Error::Domain(format!(
            "hex string '{hex}' has nonzero pad bits for width {len}"
        )));
    }
    Ok(bits.to_vec())
}

/// Challenge sampling distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChallengeKind {
    /// Uniform over patterns of weight floor(n/2); keeps the total input
    /// activity constant so the CSA margin is pure device variation.
    Balanced,
    /// Independent fair bits.
    Uniform,
}

pub fn sample_challenge<R: Rng + ?Sized>(n: usize, kind: ChallengeKind, rng: &mut R) -> Challenge {
    let bits = match kind {
        ChallengeKind::Balanced => {
            let mut v = vec![0u8; n];
            for b in v.iter_mut().take(n / 2) {
                *b = 1;
            }
            v.shuffle(rng);
            v
        }
        ChallengeKind::Uniform => (0..n).map(|_| rng.random::<bool>() as u8).collect(),
    };
    Challenge::new(bits).expect("sampled challenge is valid")
}

/// Entropy source used to initialize the PUF array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropySource {
    WriteBack,
    HalfPulse,
}

/// Initialize the crossbar state to a TRNG-generated bitmap. The cells keep
/// their device-to-device parameter draws.
pub fn initialize_entropy(
    xbar: &mut Crossbar,
    source: EntropySource,
    pulses: &PulseLibrary,
) -> Result<BitMatrix> {
    match source {
        EntropySource::WriteBack => trng::writeback_generate(xbar, pulses),
        EntropySource::HalfPulse => {
            xbar.program_all(DeviceState::Hrs, pulses)?;
            trng::pulse_generate(xbar, &pulses.half_set)
        }
    }
}

/// Map a challenge to a drive: 1 -> read voltage, 0 -> 0 V, all columns at
/// virtual ground.
pub fn map_challenge(challenge: &Challenge, read_v: f64, cols: usize) -> DriveVector {
    DriveVector {
        rows: challenge
            .bits()
            .iter()
            .map(|&b| RowDrive::Voltage(if b == 1 { read_v } else { 0.0 }))
            .collect(),
        cols: vec![crate::crossbar::ColDrive::VirtualGround; cols],
    }
}

/// Column currents for one challenge via a full nodal solve.
pub fn read_currents(xbar: &Crossbar, challenge: &Challenge, read_v: f64) -> Result<Vec<f64>> {
    if challenge.len() != xbar.rows() {
        return Err(Error::Domain(format!(
            "challenge has {} bits, crossbar has {} rows",
            challenge.len(),
            xbar.rows()
        )));
    }
    let result = xbar.solve(&map_challenge(challenge, read_v, xbar.cols()))?;
    Ok(result.column_currents)
}

/// Precomputed linear read map for the all-rows-driven pattern.
///
/// With every row driven and every column at virtual ground the Dirichlet
/// set is fixed, so column currents are linear in the row voltages. One
/// solve per row with a unit drive yields the full map; each challenge read
/// is then a matrix-vector product identical (to solver precision) to a
/// fresh nodal solve.
#[derive(Debug, Clone)]
pub struct ReadOperator {
    rows: usize,
    cols: usize,
    read_v: f64,
    /// unit_currents[i][j]: column j current for 1 V on row i, 0 V elsewhere.
    unit_currents: Vec<Vec<f64>>,
}

impl ReadOperator {
    pub fn build(xbar: &Crossbar, read_v: f64) -> Result<Self> {
        let (n, m) = (xbar.rows(), xbar.cols());
        let mut unit_currents = Vec::with_capacity(n);
        for i in 0..n {
            let mut volts = vec![0.0; n];
            volts[i] = 1.0;
            let res = xbar.solve(&DriveVector::full_read(&volts, m))?;
            unit_currents.push(res.column_currents);
        }
        Ok(Self {
            rows: n,
            cols: m,
            read_v,
            unit_currents,
        })
    }

    pub fn currents(&self, challenge: &Challenge) -> Result<Vec<f64>> {
        if challenge.len() != self.rows {
            return Err(Error::Domain(format!(
                "challenge has {} bits, operator expects {}",
                challenge.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0f64; self.cols];
        for (i, &bit) in challenge.bits().iter().enumerate() {
            if bit == 1 {
                for (j, acc) in out.iter_mut().enumerate() {
                    *acc += self.read_v * self.unit_currents[i][j];
                }
            }
        }
        Ok(out)
    }
}

/// Median-calibrate one sense threshold per column over `n_cal` random
/// challenges. Needs at least 100 calibration reads.
pub fn calibrate_thresholds<R: Rng + ?Sized>(
    xbar: &Crossbar,
    n_cal: usize,
    kind: ChallengeKind,
    read_v: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_cal < 100 {
        return Err(Error::Domain(format!(
            "threshold calibration needs at least 100 challenges, got {n_cal}"
        )));
    }
    let op = ReadOperator::build(xbar, read_v)?;
    let mut per_col: Vec<Vec<f64>> = vec![Vec::with_capacity(n_cal); xbar.cols()];
    for _ in 0..n_cal {
        let c = sample_challenge(xbar.rows(), kind, rng);
        let currents = op.currents(&c)?;
        for (j, i_j) in currents.into_iter().enumerate() {
            per_col[j].push(i_j);
        }
    }
    Ok(per_col.iter().map(|v| median(v)).collect())
}

/// CSA decision: bit j = 1 iff current j strictly exceeds its threshold.
pub fn sense(currents: &[f64], thresholds: &[f64]) -> Result<Response> {
    if currents.len() != thresholds.len() {
        return Err(Error::Domain(format!(
            "{} currents vs {} thresholds",
            currents.len(),
            thresholds.len()
        )));
    }
    Response::new(
        currents
            .iter()
            .zip(thresholds)
            .map(|(&i, &t)| (i > t) as u8)
            .collect(),
    )
}

/// Sense a solved read result.
pub fn sense_result(result: &ReadResult, thresholds: &[f64]) -> Result<Response> {
    sense(&result.column_currents, thresholds)
}

/// Ordered challenge/response pairs for one crossbar instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpSet {
    pub device_tag: String,
    pub challenges: Vec<Challenge>,
    pub responses: Vec<Response>,
    pub thresholds: Vec<f64>,
}

impl CrpSet {
    pub fn len(&self) -> usize {
        self.challenges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.challenges.is_empty()
    }
}

/// Collect responses for an explicit challenge list. Reads are
/// non-destructive; the crossbar is untouched. `noise_sigma_fraction`
/// scales optional Gaussian read noise relative to each column threshold
/// (0 disables it and consumes no randomness).
pub fn collect_crps<R: Rng + ?Sized>(
    xbar: &Crossbar,
    device_tag: &str,
    challenges: &[Challenge],
    thresholds: &[f64],
    read_v: f64,
    noise_sigma_fraction: f64,
    rng: &mut R,
) -> Result<CrpSet> {
    if thresholds.len() != xbar.cols() {
        return Err(Error::Domain(format!(
            "{} thresholds for {} columns",
            thresholds.len(),
            xbar.cols()
        )));
    }
    let op = ReadOperator::build(xbar, read_v)?;
    let mut responses = Vec::with_capacity(challenges.len());
    for c in challenges {
        let mut currents = op.currents(c)?;
        if noise_sigma_fraction > 0.0 {
            for (j, i_j) in currents.iter_mut().enumerate() {
                let sigma = noise_sigma_fraction * thresholds[j].abs();
                if sigma > 0.0 {
                    *i_j += Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
                }
            }
        }
        responses.push(sense(&currents, thresholds)?);
    }
    Ok(CrpSet {
        device_tag: device_tag.to_string(),
        challenges: challenges.to_vec(),
        responses,
        thresholds: thresholds.to_vec(),
    })
}

/// CRP file: '#' provenance comments, a header, then hex pairs.
pub fn crps_to_csv(set: &CrpSet, challenge_bits: usize, response_bits: usize) -> String {
    let mut out = String::new();
    writeln!(out, "# device: {}", set.device_tag).unwrap();
    writeln!(out, "# challenge_bits: {challenge_bits}").unwrap();
    writeln!(out, "# response_bits: {response_bits}").unwrap();
    out.push_str("challenge_hex,response_hex\n");
    for (c, r) in set.challenges.iter().zip(&set.responses) {
        writeln!(out, "{},{}", c.to_hex(), r.to_hex()).unwrap();
    }
    out
}

pub fn save_crps(set: &CrpSet, path: &Path) -> Result<()> {
    let cb = set.challenges.first().map_or(0, Challenge::len);
    let rb = set.responses.first().map_or(0, Response::len);
    std::fs::write(path, crps_to_csv(set, cb, rb))?;
    Ok(())
}

pub fn load_crps(path: &Path) -> Result<CrpSet> {
    let text = std::fs::read_to_string(path)?;
    crps_from_csv(&text)
}

pub fn crps_from_csv(text: &str) -> Result<CrpSet> {
    let mut device_tag = String::from("unknown");
    let mut challenge_bits = 0usize;
    let mut response_bits = 0usize;
    let mut challenges = Vec::new();
    let mut responses = Vec::new();
    let mut seen_header = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("device:") {
                device_tag = v.trim().to_string();
            } else if let Some(v) = rest.strip_prefix("challenge_bits:") {
                challenge_bits = v.trim().parse().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad challenge_bits: {e}"),
                })?;
            } else if let Some(v) = rest.strip_prefix("response_bits:") {
                response_bits = v.trim().parse().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad response_bits: {e}"),
                })?;
            }
            continue;
        }
        if !seen_header {
            if line.trim() != "challenge_hex,response_hex" {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected header 'challenge_hex,response_hex'".into(),
                });
            }
            seen_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (ch, rh) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: lineno,
            message: "expected 'challenge_hex,response_hex'".into(),
        })?;
        challenges.push(Challenge::from_hex(ch, challenge_bits).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?);
        responses.push(Response::from_hex(rh, response_bits).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?);
    }
    Ok(CrpSet {
        device_tag,
        challenges,
        responses,
        thresholds: Vec::new(),
    })
}

/// Threshold sidecar: column index and threshold in amperes at 12
/// significant digits.
pub fn thresholds_to_csv(thresholds: &[f64]) -> String {
    let mut out = String::from("col,threshold_a\n");
    for (j, t) in thresholds.iter().enumerate() {
        writeln!(out, "{j},{t:.11e}").unwrap();
    }
    out
}

pub fn save_thresholds(thresholds: &[f64], path: &Path) -> Result<()> {
    std::fs::write(path, thresholds_to_csv(thresholds))?;
    Ok(())
}

pub fn load_thresholds(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if idx == 0 {
            if line.trim() != "col,threshold_a" {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected header 'col,threshold_a'".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (_, t) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: lineno,
            message: "expected 'col,threshold_a'".into(),
        })?;
        out.push(t.trim().parse::<f64>().map_err(|e| Error::Parse {
            line: lineno,
            message: format!("bad threshold: {e}"),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceModel;
    use crate::variation::VariationSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn setup(seed: u64) -> Crossbar {
        Crossbar::sample(
            16,
            16,
            DeviceModel::default(),
            VariationSpec::default(),
            2.5,
            seed,
        )
        .unwrap()
    }

    fn enrolled(seed: u64) -> (Crossbar, Vec<f64>) {
        let mut xb = setup(seed);
        initialize_entropy(&mut xb, EntropySource::HalfPulse, &PulseLibrary::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xabcd);
        let thr = calibrate_thresholds(&xb, 400, ChallengeKind::Balanced, 0.2, &mut rng).unwrap();
        (xb, thr)
    }

    #[test]
    fn hex_roundtrip_and_padding() {
        let c = Challenge::new(vec![1, 0, 1, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1]).unwrap();
        assert_eq!(c.to_hex(), "acf1");
        assert_eq!(Challenge::from_hex("acf1", 16).unwrap(), c);
        // Widths that are not nibble multiples pad at the top.
        let c5 = Challenge::new(vec![1, 0, 1, 1, 0]).unwrap();
        assert_eq!(c5.to_hex(), "16");
        assert_eq!(Challenge::from_hex("16", 5).unwrap(), c5);
        assert!(Challenge::from_hex("96", 5).is_err());
    }

    #[test]
    fn map_challenge_alternating_pattern() {
        let c = Challenge::new(vec![1, 0, 1, 0]).unwrap();
        let d = map_challenge(&c, 0.2, 4);
        assert_eq!(d.rows[0], RowDrive::Voltage(0.2));
        assert_eq!(d.rows[1], RowDrive::Voltage(0.0));
        assert_eq!(d.rows[2], RowDrive::Voltage(0.2));
        assert_eq!(d.rows[3], RowDrive::Voltage(0.0));
    }

    #[test]
    fn all_zero_challenge_reads_zero_current() {
        let xb = setup(1);
        let c = Challenge::new(vec![0; 16]).unwrap();
        let currents = read_currents(&xb, &c, 0.2).unwrap();
        assert!(currents.iter().all(|&i| i.abs() < 1e-15));
    }

    #[test]
    fn challenge_length_mismatch_is_domain_error() {
        let xb = setup(2);
        let c = Challenge::new(vec![1; 8]).unwrap();
        assert!(matches!(read_currents(&xb, &c, 0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn operator_matches_full_solve() {
        let mut xb = setup(3);
        initialize_entropy(&mut xb, EntropySource::HalfPulse, &PulseLibrary::default()).unwrap();
        let op = ReadOperator::build(&xb, 0.2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..20 {
            let c = sample_challenge(16, ChallengeKind::Uniform, &mut rng);
            let via_op = op.currents(&c).unwrap();
            let via_solve = read_currents(&xb, &c, 0.2).unwrap();
            for (a, b) in via_op.iter().zip(&via_solve) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn writeback_entropy_balances_rows() {
        let mut xb = setup(4);
        let map = initialize_entropy(&mut xb, EntropySource::WriteBack, &PulseLibrary::default())
            .unwrap();
        for r in 0..16 {
            assert_eq!(map.ones_in_row(r), 8);
        }
    }

    #[test]
    fn halfpulse_entropy_is_near_half_dense() {
        let mut xb = setup(5);
        let map = initialize_entropy(&mut xb, EntropySource::HalfPulse, &PulseLibrary::default())
            .unwrap();
        let frac = map.ones() as f64 / 256.0;
        assert!((frac - 0.5).abs() <= 0.1, "LRS fraction {frac}");
    }

    #[test]
    fn distinct_seeds_give_distinct_entropy() {
        for k in 0..10 {
            let mut a = setup(100 + k);
            let mut b = setup(200 + k);
            let pl = PulseLibrary::default();
            let ma = initialize_entropy(&mut a, EntropySource::HalfPulse, &pl).unwrap();
            let mb = initialize_entropy(&mut b, EntropySource::HalfPulse, &pl).unwrap();
            assert_ne!(ma, mb);
        }
    }

    #[test]
    fn calibration_needs_at_least_100_reads() {
        let xb = setup(6);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            calibrate_thresholds(&xb, 99, ChallengeKind::Balanced, 0.2, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn calibration_is_deterministic_per_seed() {
        let (xb, _) = enrolled(7);
        let mut r1 = ChaCha12Rng::seed_from_u64(55);
        let mut r2 = ChaCha12Rng::seed_from_u64(55);
        let t1 = calibrate_thresholds(&xb, 200, ChallengeKind::Balanced, 0.2, &mut r1).unwrap();
        let t2 = calibrate_thresholds(&xb, 200, ChallengeKind::Balanced, 0.2, &mut r2).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn threshold_separates_pure_columns() {
        // Column 0 all-LRS, column 1 all-HRS: the median threshold of each
        // column must sit strictly between the two pure-state current levels.
        let mut xb = Crossbar::sample(
            4,
            2,
            DeviceModel::default(),
            VariationSpec::default(),
            0.0,
            8,
        )
        .unwrap();
        for r in 0..4 {
            xb.set_state(r, 0, DeviceState::Lrs);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let thr = calibrate_thresholds(&xb, 200, ChallengeKind::Balanced, 0.2, &mut rng).unwrap();
        // Full-weight and zero-weight currents of each pure column.
        let full = read_currents(&xb, &Challenge::new(vec![1; 4]).unwrap(), 0.2).unwrap();
        assert!(thr[0] > 0.0 && thr[0] < full[0]);
        assert!(thr[1] > 0.0 && thr[1] < full[1]);
    }

    #[test]
    fn sense_edge_cases() {
        let thr = vec![1e-6, 2e-6];
        let r = sense(&[0.0, 0.0], &thr).unwrap();
        assert_eq!(r.bits(), &[0, 0]);
        let r = sense(&[1e-6 + 1e-12, 2e-6 + 1e-12], &thr).unwrap();
        assert_eq!(r.bits(), &[1, 1]);
        // Exact equality senses 0.
        let r = sense(&[1e-6, 2e-6], &thr).unwrap();
        assert_eq!(r.bits(), &[0, 0]);
        assert!(sense(&[0.0], &thr).is_err());
    }

    #[test]
    fn collection_is_read_only_and_deterministic() {
        let (xb, thr) = enrolled(10);
        let before = xb.read_states();
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let challenges: Vec<Challenge> = (0..500)
            .map(|_| sample_challenge(16, ChallengeKind::Balanced, &mut rng))
            .collect();
        let mut noise_rng = ChaCha12Rng::seed_from_u64(0);
        let a = collect_crps(&xb, "dev", &challenges, &thr, 0.2, 0.0, &mut noise_rng).unwrap();
        let mut noise_rng = ChaCha12Rng::seed_from_u64(0);
        let b = collect_crps(&xb, "dev", &challenges, &thr, 0.2, 0.0, &mut noise_rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(xb.read_states(), before);
        // Same challenge twice -> identical response.
        let c0 = challenges[0].clone();
        let dup = vec![c0.clone(), c0];
        let mut noise_rng = ChaCha12Rng::seed_from_u64(1);
        let d = collect_crps(&xb, "dev", &dup, &thr, 0.2, 0.0, &mut noise_rng).unwrap();
        assert_eq!(d.responses[0], d.responses[1]);
    }

    #[test]
    fn single_bit_challenge_flips_usually_change_the_response() {
        let (xb, thr) = enrolled(11);
        let op = ReadOperator::build(&xb, 0.2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let mut changed = 0usize;
        let trials = 1000;
        for _ in 0..trials {
            let c = sample_challenge(16, ChallengeKind::Balanced, &mut rng);
            let flip = c.flip_bit(rng.random_range(0..16));
            let r0 = sense(&op.currents(&c).unwrap(), &thr).unwrap();
            let r1 = sense(&op.currents(&flip).unwrap(), &thr).unwrap();
            if r0 != r1 {
                changed += 1;
            }
        }
        assert!(changed >= 950, "changed {changed}/{trials}");
    }

    #[test]
    fn crp_csv_roundtrip() {
        let (xb, thr) = enrolled(12);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let challenges: Vec<Challenge> = (0..50)
            .map(|_| sample_challenge(16, ChallengeKind::Balanced, &mut rng))
            .collect();
        let mut noise_rng = ChaCha12Rng::seed_from_u64(0);
        let set = collect_crps(&xb, "dev3", &challenges, &thr, 0.2, 0.0, &mut noise_rng).unwrap();
        let text = crps_to_csv(&set, 16, 16);
        let back = crps_from_csv(&text).unwrap();
        assert_eq!(back.device_tag, "dev3");
        assert_eq!(back.challenges, set.challenges);
        assert_eq!(back.responses, set.responses);
    }

    #[test]
    fn thresholds_sidecar_roundtrip_preserves_12_digits() {
        let thr = vec![1.234567890123e-5, 9.876543210987e-6];
        let text = thresholds_to_csv(&thr);
        assert!(text.starts_with("col,threshold_a\n0,1.23456789012e-5"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("thr.csv");
        std::fs::write(&path, &text).unwrap();
        let back = load_thresholds(&path).unwrap();
        for (a, b) in thr.iter().zip(&back) {
            assert!((a - b).abs() / a < 1e-11);
        }
    }

    #[test]
    fn read_noise_knob_perturbs_responses() {
        let (xb, thr) = enrolled(13);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let challenges: Vec<Challenge> = (0..200)
            .map(|_| sample_challenge(16, ChallengeKind::Balanced, &mut rng))
            .collect();
        let mut noise_rng = ChaCha12Rng::seed_from_u64(6);
        let clean = collect_crps(&xb, "dev", &challenges, &thr, 0.2, 0.0, &mut noise_rng).unwrap();
        let mut noise_rng = ChaCha12Rng::seed_from_u64(6);
        let noisy = collect_crps(&xb, "dev", &challenges, &thr, 0.2, 0.05, &mut noise_rng).unwrap();
        assert_ne!(clean.responses, noisy.responses);
    }
}

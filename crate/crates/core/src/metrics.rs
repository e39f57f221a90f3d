//! PUF quality metrics: intra-HD, uniformity, uniqueness, bit-aliasing and
//! reliability, plus the histogram/per-bit data behind their figures.
//!
//! Intra-HD averages the normalized Hamming distance of consecutive response
//! pairs. Uniqueness averages the normalized pairwise distance between
//! devices answering the same challenges. Both normalize by the response
//! width so values are percentages; the unnormalized variants exceed the
//! percent scale and are rejected by unit tests.

use crate::error::{Error, Result};
use crate::puf::Response;
use serde::Serialize;
use std::fmt::Write as _;

/// Histogram over percent values (left-closed bins).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_left: Vec<f64>,
    pub bin_right: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// One bin per integer Hamming distance 0..=m, scaled to percent.
    fn from_hd_counts(counts: &[u64], m: usize) -> Self {
        let scale = 100.0 / m as f64;
        Self {
            bin_left: (0..counts.len()).map(|k| k as f64 * scale).collect(),
            bin_right: (0..counts.len()).map(|k| (k + 1) as f64 * scale).collect(),
            counts: counts.to_vec(),
        }
    }

    /// CSV: bin_left,bin_right,count.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for i in 0..self.counts.len() {
            writeln!(out, "{},{},{}", self.bin_left[i], self.bin_right[i], self.counts[i])
                .unwrap();
        }
        out
    }
}

/// One evaluated metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub applicable: bool,
    pub value_percent: Option<f64>,
    pub n_challenges: usize,
    pub k_devices: usize,
    pub response_bits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_bit_percent: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
}

impl MetricReport {
    fn not_applicable(metric: &str, reason_bits: usize, k: usize) -> Self {
        Self {
            metric: metric.into(),
            applicable: false,
            value_percent: None,
            n_challenges: 0,
            k_devices: k,
            response_bits: reason_bits,
            per_bit_percent: None,
            histogram: None,
        }
    }
}

/// Hamming distance between two equal-width responses.
pub fn hamming(a: &Response, b: &Response) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "response widths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.bits()
        .iter()
        .zip(b.bits())
        .filter(|(x, y)| x != y)
        .count())
}

fn uniform_width(responses: &[Response]) -> Result<usize> {
    let m = responses[0].len();
    if responses.iter().any(|r| r.len() != m) {
        return Err(Error::Domain("responses have mixed widths".into()));
    }
    Ok(m)
}

/// Mean normalized Hamming distance over consecutive response pairs, in
/// percent, with the distance histogram.
pub fn intra_hd(responses: &[Response]) -> Result<MetricReport> {
    if responses.len() < 2 {
        return Err(Error::Domain(
            "intra-HD needs at least two responses".into(),
        ));
    }
    let m = uniform_width(responses)?;
    let mut counts = vec![0u64; m + 1];
    let mut total = 0u64;
    for pair in responses.windows(2) {
        let hd = hamming(&pair[0], &pair[1])?;
        counts[hd] += 1;
        total += hd as u64;
    }
    let pairs = (responses.len() - 1) as f64;
    let value = total as f64 / (pairs * m as f64) * 100.0;
    Ok(MetricReport {
        metric: "intra_hd".into(),
        applicable: true,
        value_percent: Some(value),
        n_challenges: responses.len(),
        k_devices: 1,
        response_bits: m,
        per_bit_percent: None,
        histogram: Some(Histogram::from_hd_counts(&counts, m)),
    })
}

/// Overall ones-fraction in percent plus the per-bit-position distribution.
pub fn uniformity(responses: &[Response]) -> Result<MetricReport> {
    if responses.is_empty() {
        return Err(Error::Domain("uniformity needs at least one response".into()));
    }
    let m = uniform_width(responses)?;
    let mut per_bit = vec![0u64; m];
    for r in responses {
        for (p, &b) in r.bits().iter().enumerate() {
            per_bit[p] += b as u64;
        }
    }
    let n = responses.len() as f64;
    let per_bit_percent: Vec<f64> = per_bit.iter().map(|&c| c as f64 / n * 100.0).collect();
    let value = per_bit.iter().sum::<u64>() as f64 / (n * m as f64) * 100.0;
    Ok(MetricReport {
        metric: "uniformity".into(),
        applicable: true,
        value_percent: Some(value),
        n_challenges: responses.len(),
        k_devices: 1,
        response_bits: m,
        per_bit_percent: Some(per_bit_percent),
        histogram: None,
    })
}

fn check_aligned(per_device: &[Vec<Response>]) -> Result<(usize, usize)> {
    let n = per_device[0].len();
    if n == 0 {
        return Err(Error::Domain("devices have no responses".into()));
    }
    if per_device.iter().any(|d| d.len() != n) {
        return Err(Error::Domain(
            "devices answered different challenge counts; lists are misaligned".into(),
        ));
    }
    let m = per_device[0][0].len();
    for d in per_device {
        if d.iter().any(|r| r.len() != m) {
            return Err(Error::Domain("responses have mixed widths".into()));
        }
    }
    Ok((n, m))
}

/// Average pairwise normalized Hamming distance between devices answering
/// the same challenge list, in percent, with the pairwise-distance histogram.
/// Not applicable below two devices.
pub fn uniqueness(per_device: &[Vec<Response>]) -> Result<MetricReport> {
    if per_device.len() < 2 {
        return Ok(MetricReport::not_applicable("uniqueness", 0, per_device.len()));
    }
    let (n, m) = check_aligned(per_device)?;
    let k = per_device.len();
    let mut counts = vec![0u64; m + 1];
    let mut total = 0u64;
    for i in 0..k - 1 {
        for j in i + 1..k {
            for c in 0..n {
                let hd = hamming(&per_device[i][c], &per_device[j][c])?;
                counts[hd] += 1;
                total += hd as u64;
            }
        }
    }
    let pairs = (k * (k - 1) / 2) as f64;
    let value = total as f64 / (pairs * n as f64 * m as f64) * 100.0;
    Ok(MetricReport {
        metric: "uniqueness".into(),
        applicable: true,
        value_percent: Some(value),
        n_challenges: n,
        k_devices: k,
        response_bits: m,
        per_bit_percent: None,
        histogram: Some(Histogram::from_hd_counts(&counts, m)),
    })
}

/// Per-bit-position ones-fraction across all devices and challenges, in
/// percent, plus its mean. Not applicable below two devices.
pub fn bit_aliasing(per_device: &[Vec<Response>]) -> Result<MetricReport> {
    if per_device.len() < 2 {
        return Ok(MetricReport::not_applicable("bit_aliasing", 0, per_device.len()));
    }
    let (n, m) = check_aligned(per_device)?;
    let k = per_device.len();
    let mut per_bit = vec![0u64; m];
    for device in per_device {
        for r in device {
            for (p, &b) in r.bits().iter().enumerate() {
                per_bit[p] += b as u64;
            }
        }
    }
    let samples = (k * n) as f64;
    let per_bit_percent: Vec<f64> = per_bit.iter().map(|&c| c as f64 / samples * 100.0).collect();
    let value = per_bit_percent.iter().sum::<f64>() / m as f64;
    Ok(MetricReport {
        metric: "bit_aliasing".into(),
        applicable: true,
        value_percent: Some(value),
        n_challenges: n,
        k_devices: k,
        response_bits: m,
        per_bit_percent: Some(per_bit_percent),
        histogram: None,
    })
}

/// 100 minus the intra-HD of repeated responses to one fixed challenge.
pub fn reliability(repeated: &[Response]) -> Result<MetricReport> {
    let mut report = intra_hd(repeated)?;
    report.metric = "reliability".into();
    report.value_percent = report.value_percent.map(|v| 100.0 - v);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(bits: &[u8]) -> Response {
        Response::new(bits.to_vec()).unwrap()
    }

    #[test]
    fn intra_hd_extremes_and_hand_case() {
        let zeros = vec![resp(&[0, 0, 0, 0]); 3];
        assert_eq!(intra_hd(&zeros).unwrap().value_percent, Some(0.0));
        let flip = vec![resp(&[0, 0, 0, 0]), resp(&[1, 1, 1, 1]), resp(&[0, 0, 0, 0])];
        assert_eq!(intra_hd(&flip).unwrap().value_percent, Some(100.0));
        // HD(0101, 0110) = 2 of 4.
        let pair = vec![resp(&[0, 1, 0, 1]), resp(&[0, 1, 1, 0])];
        assert_eq!(intra_hd(&pair).unwrap().value_percent, Some(50.0));
    }

    #[test]
    fn intra_hd_histogram_counts_pairs() {
        let rs = vec![
            resp(&[0, 0]),
            resp(&[0, 1]),
            resp(&[0, 1]),
            resp(&[1, 0]),
        ];
        let report = intra_hd(&rs).unwrap();
        let hist = report.histogram.unwrap();
        assert_eq!(hist.counts, vec![1, 1, 1]);
    }

    #[test]
    fn uniformity_extremes() {
        assert_eq!(
            uniformity(&[resp(&[0, 0, 0])]).unwrap().value_percent,
            Some(0.0)
        );
        let half = vec![resp(&[0, 1]), resp(&[1, 0])];
        assert_eq!(uniformity(&half).unwrap().value_percent, Some(50.0));
    }

    #[test]
    fn uniqueness_extremes() {
        let a = vec![resp(&[0, 1, 1, 0]), resp(&[1, 1, 0, 0])];
        let same = vec![a.clone(), a.clone()];
        assert_eq!(uniqueness(&same).unwrap().value_percent, Some(0.0));
        let comp: Vec<Response> = a.iter().map(Response::complement).collect();
        let opposite = vec![a.clone(), comp];
        assert_eq!(uniqueness(&opposite).unwrap().value_percent, Some(100.0));
    }

    #[test]
    fn uniqueness_below_two_devices_is_not_applicable() {
        let a = vec![vec![resp(&[0, 1])]];
        let r = uniqueness(&a).unwrap();
        assert!(!r.applicable);
        assert_eq!(r.value_percent, None);
    }

    #[test]
    fn misaligned_device_lists_error() {
        let a = vec![vec![resp(&[0, 1]), resp(&[1, 1])], vec![resp(&[0, 1])]];
        assert!(matches!(uniqueness(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn bit_aliasing_extremes() {
        let dev1 = vec![resp(&[1, 0]), resp(&[1, 0])];
        let dev2 = vec![resp(&[1, 1]), resp(&[1, 1])];
        let r = bit_aliasing(&[dev1.clone(), dev2]).unwrap();
        assert_eq!(r.per_bit_percent.as_ref().unwrap()[0], 100.0);
        assert_eq!(r.per_bit_percent.as_ref().unwrap()[1], 50.0);
        let comp: Vec<Response> = dev1.iter().map(Response::complement).collect();
        let r = bit_aliasing(&[dev1, comp]).unwrap();
        assert_eq!(r.per_bit_percent.as_ref().unwrap(), &vec![50.0, 50.0]);
    }

    #[test]
    fn reliability_extremes() {
        let same = vec![resp(&[1, 0, 1, 1]); 100];
        assert_eq!(reliability(&same).unwrap().value_percent, Some(100.0));
        let alt = vec![resp(&[0, 0]), resp(&[1, 1]), resp(&[0, 0])];
        assert_eq!(reliability(&alt).unwrap().value_percent, Some(0.0));
    }

    #[test]
    fn width_mismatch_is_domain_error() {
        let rs = vec![resp(&[0, 1]), resp(&[0, 1, 1])];
        assert!(matches!(intra_hd(&rs), Err(Error::Domain(_))));
    }

    #[test]
    fn complement_invariance() {
        let rs = vec![
            resp(&[0, 1, 1, 0]),
            resp(&[1, 1, 0, 0]),
            resp(&[0, 0, 0, 1]),
        ];
        let comp: Vec<Response> = rs.iter().map(Response::complement).collect();
        assert_eq!(
            intra_hd(&rs).unwrap().value_percent,
            intra_hd(&comp).unwrap().value_percent
        );
        // Uniformity maps v -> 100 - v under complement.
        let u = uniformity(&rs).unwrap().value_percent.unwrap();
        let uc = uniformity(&comp).unwrap().value_percent.unwrap();
        assert!((u + uc - 100.0).abs() < 1e-12);
    }

    #[test]
    fn reversal_symmetry() {
        let rs = vec![
            resp(&[0, 1, 1, 0]),
            resp(&[1, 1, 0, 0]),
            resp(&[0, 0, 0, 1]),
            resp(&[1, 0, 1, 1]),
        ];
        let mut rev = rs.clone();
        rev.reverse();
        assert_eq!(
            intra_hd(&rs).unwrap().value_percent,
            intra_hd(&rev).unwrap().value_percent
        );
        let a = vec![rs.clone(), rev.clone()];
        let b = vec![rev, rs];
        assert_eq!(
            uniqueness(&a).unwrap().value_percent,
            uniqueness(&b).unwrap().value_percent
        );
    }

    #[test]
    fn unnormalized_mean_hd_exceeds_the_percent_scale() {
        // Rejected variant: averaging raw (per-bit-count) distances without
        // dividing by the response width produces values above 100 for wide
        // responses, so it cannot be the intended percentage.
        let rs = vec![resp(&[1; 16]), resp(&[0; 16]), resp(&[1; 16])];
        let raw_mean = 100.0 * (16 + 16) as f64 / 2.0;
        assert!(raw_mean > 100.0);
        assert_eq!(intra_hd(&rs).unwrap().value_percent, Some(100.0));
    }

    #[test]
    fn histogram_csv_shape() {
        let rs = vec![resp(&[0, 1]), resp(&[1, 1])];
        let hist = intra_hd(&rs).unwrap().histogram.unwrap();
        let csv = hist.to_csv_string();
        assert!(csv.starts_with("bin_left,bin_right,count\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}

//! Evaluation metrics: DET threshold sweep, EER, accuracy and the minimum
//! normalized tandem detection cost function.
//!
//! The acceptance convention everywhere is `score >= threshold` means the
//! trial is decided bonafide; ties therefore count as accepted.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::protocol::{Label, ScoreSet, Trial};

/// Scores joined with their ground-truth labels.
#[derive(Debug, Clone)]
pub struct LabeledScores {
    entries: Vec<(String, f64, Label)>,
}

impl LabeledScores {
    pub fn new(entries: Vec<(String, f64, Label)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (id, score, _) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateTrialId(id.clone()));
            }
            if !score.is_finite() {
                return Err(Error::DimensionMismatch(format!(
                    "non-finite score for trial {id}"
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Join a score set against protocol trials. The two id sets must be
    /// identical; anything else is a hard error.
    pub fn join(scores: &ScoreSet, trials: &[Trial]) -> Result<Self> {
        let mut by_id: std::collections::HashMap<&str, Label> = std::collections::HashMap::new();
        for t in trials {
            by_id.insert(t.utterance_id.as_str(), t.label);
        }
        if by_id.len() != trials.len() {
            return Err(Error::TrialSetMismatch(
                "protocol contains duplicate utterance ids".into(),
            ));
        }
        if scores.len() != by_id.len() {
            return Err(Error::TrialSetMismatch(format!(
                "score file has {} trials, protocol has {}",
                scores.len(),
                by_id.len()
            )));
        }
        let mut entries = Vec::with_capacity(scores.len());
        for (id, score) in scores.entries() {
            match by_id.get(id.as_str()) {
                Some(&label) => entries.push((id.clone(), *score, label)),
                None => {
                    return Err(Error::TrialSetMismatch(format!(
                        "trial {id} scored but absent from the protocol"
                    )))
                }
            }
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(String, f64, Label)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn split(&self) -> (Vec<f64>, Vec<f64>) {
        let mut bona = Vec::new();
        let mut spoof = Vec::new();
        for (_, score, label) in &self.entries {
            match label {
                Label::Bonafide => bona.push(*score),
                Label::Spoof => spoof.push(*score),
            }
        }
        (bona, spoof)
    }
}

/// One DET operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Sweep all decision thresholds: the sorted unique scores plus -inf/+inf
/// sentinels. `P_miss` is the bonafide fraction below the threshold,
/// `P_fa` the spoof fraction at or above it; the former is non-decreasing
/// and the latter non-increasing along the sweep.
pub fn det_curve(scores: &LabeledScores) -> Result<Vec<DetPoint>> {
    let (mut bona, mut spoof) = scores.split();
    if bona.is_empty() || spoof.is_empty() {
        return Err(Error::SingleClassScores);
    }
    bona.sort_by(|a, b| a.partial_cmp(b).unwrap());
    spoof.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut thresholds: Vec<f64> = bona.iter().chain(spoof.iter()).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let n_bona = bona.len() as f64;
    let n_spoof = spoof.len() as f64;
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(DetPoint {
        threshold: f64::NEG_INFINITY,
        p_miss: 0.0,
        p_fa: 1.0,
    });
    // Counts below the threshold, advanced with two pointers.
    let (mut bi, mut si) = (0usize, 0usize);
    for &theta in &thresholds {
        while bi < bona.len() && bona[bi] < theta {
            bi += 1;
        }
        while si < spoof.len() && spoof[si] < theta {
            si += 1;
        }
        points.push(DetPoint {
            threshold: theta,
            p_miss: bi as f64 / n_bona,
            p_fa: (spoof.len() - si) as f64 / n_spoof,
        });
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        p_miss: 1.0,
        p_fa: 0.0,
    });
    Ok(points)
}

/// Equal error rate in [0, 1], linearly interpolated at the miss /
/// false-alarm crossing of the DET sweep.
pub fn eer(scores: &LabeledScores) -> Result<f64> {
    let points = det_curve(scores)?;
    eer_from_points(&points)
}

fn eer_from_points(points: &[DetPoint]) -> Result<f64> {
    // d = p_miss - p_fa is non-decreasing from -1 to +1.
    let mut prev = &points[0];
    for p in &points[1..] {
        let d_prev = prev.p_miss - prev.p_fa;
        let d = p.p_miss - p.p_fa;
        if d >= 0.0 {
            let denom = d - d_prev;
            let t = if denom > 0.0 { -d_prev / denom } else { 1.0 };
            return Ok(prev.p_miss + t * (p.p_miss - prev.p_miss));
        }
        prev = p;
    }
    unreachable!("the +inf sentinel has p_miss - p_fa = 1");
}

/// Percentage of trials classified correctly by `score >= threshold`.
pub fn accuracy(scores: &LabeledScores, threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let correct = scores
        .entries
        .iter()
        .filter(|(_, score, label)| (*score >= threshold) == (*label == Label::Bonafide))
        .count();
    100.0 * correct as f64 / scores.len() as f64
}

/// Priors, costs and the fixed ASV operating point entering the tandem
/// detection cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TDcfParams {
    pub p_target: f64,
    pub p_nontarget: f64,
    pub p_spoof: f64,
    pub c_miss_asv: f64,
    pub c_fa_asv: f64,
    pub c_miss_cm: f64,
    pub c_fa_cm: f64,
    /// ASV miss rate on target trials at its fixed threshold.
    pub asv_p_miss: f64,
    /// ASV false-accept rate on non-target trials.
    pub asv_p_fa: f64,
    /// ASV miss rate on spoof trials (fraction of spoofs the ASV rejects).
    pub asv_p_miss_spoof: f64,
}

impl TDcfParams {
    /// Challenge-style constants with a mid-grade synthetic ASV operating
    /// point; every field can be overridden from configuration.
    pub fn default_operating_point() -> Self {
        Self {
            p_target: 0.9405,
            p_nontarget: 0.0095,
            p_spoof: 0.05,
            c_miss_asv: 1.0,
            c_fa_asv: 10.0,
            c_miss_cm: 1.0,
            c_fa_cm: 10.0,
            asv_p_miss: 0.05,
            asv_p_fa: 0.05,
            asv_p_miss_spoof: 0.05,
        }
    }

    fn validate(&self) -> Result<()> {
        let prior_sum = self.p_target + self.p_nontarget + self.p_spoof;
        if (prior_sum - 1.0).abs() > 1e-9
            || self.p_target < 0.0
            || self.p_nontarget < 0.0
            || self.p_spoof < 0.0
        {
            return Err(Error::DegenerateOperatingPoint(format!(
                "priors must be non-negative and sum to 1, got {prior_sum}"
            )));
        }
        for (name, c) in [
            ("c_miss_asv", self.c_miss_asv),
            ("c_fa_asv", self.c_fa_asv),
            ("c_miss_cm", self.c_miss_cm),
            ("c_fa_cm", self.c_fa_cm),
        ] {
            if c <= 0.0 {
                return Err(Error::DegenerateOperatingPoint(format!(
                    "cost {name} must be positive, got {c}"
                )));
            }
        }
        for (name, p) in [
            ("asv_p_miss", self.asv_p_miss),
            ("asv_p_fa", self.asv_p_fa),
            ("asv_p_miss_spoof", self.asv_p_miss_spoof),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::DegenerateOperatingPoint(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// The two constants weighting CM miss and false-alarm rates in the
/// constrained-ASV tandem cost:
/// `C1 = p_target*(c_miss_cm - c_miss_asv*asv_p_miss) - p_nontarget*c_fa_asv*asv_p_fa`,
/// `C2 = c_fa_cm * p_spoof * (1 - asv_p_miss_spoof)`.
pub fn tdcf_coefficients(params: &TDcfParams) -> Result<(f64, f64)> {
    params.validate()?;
    let c1 = params.p_target * (params.c_miss_cm - params.c_miss_asv * params.asv_p_miss)
        - params.p_nontarget * params.c_fa_asv * params.asv_p_fa;
    let c2 = params.c_fa_cm * params.p_spoof * (1.0 - params.asv_p_miss_spoof);
    if c1 <= 0.0 || c2 <= 0.0 {
        return Err(Error::DegenerateOperatingPoint(format!(
            "C1 = {c1}, C2 = {c2}; both must be positive"
        )));
    }
    Ok((c1, c2))
}

/// Minimum over CM thresholds of the normalized tandem cost
/// `(C1 * P_miss + C2 * P_fa) / min(C1, C2)`.
///
/// The sentinels put both trivial systems in the sweep, so the result is
/// always in [0, 1] and an uninformative score set yields exactly 1.
pub fn min_tdcf(scores: &LabeledScores, params: &TDcfParams) -> Result<f64> {
    let (c1, c2) = tdcf_coefficients(params)?;
    let points = det_curve(scores)?;
    let norm = c1.min(c2);
    let mut best = f64::INFINITY;
    for p in &points {
        let cost = (c1 * p.p_miss + c2 * p.p_fa) / norm;
        if cost < best {
            best = cost;
        }
    }
    Ok(best)
}

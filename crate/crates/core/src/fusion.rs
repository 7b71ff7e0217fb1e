//! Decision-level feature switching: per trial, adopt the score of the
//! constituent system with the largest margin from the decision boundary.
//!
//! Scores from different systems live on different scales (GMM
//! log-likelihood ratios vs network log-odds), so each system is
//! mean/variance calibrated on a development score set before the margins
//! are compared. The emitted score is the chosen system's *original* score,
//! never an average, so fusing a system with itself is exactly the identity.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::protocol::{ScoreSet, TrialScore};

/// Per-system shift/scale estimated on development scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    shift: f64,
    scale: f64,
}

impl Calibration {
    /// Identity transform (used when calibration is disabled).
    pub fn identity() -> Self {
        Self { shift: 0.0, scale: 1.0 }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply(&self, score: f64) -> f64 {
        (score - self.shift) / self.scale
    }
}

/// Estimate zero-mean/unit-variance calibration from development scores.
///
/// `shift` is the mean and `scale` the population standard deviation; all
/// scores equal is an error because the margin comparison would degenerate.
pub fn calibrate(dev_scores: &ScoreSet) -> Result<Calibration> {
    if dev_scores.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "need at least 2 development scores, got {}",
            dev_scores.len()
        )));
    }
    let first = dev_scores.entries()[0].1;
    if dev_scores.entries().iter().all(|(_, s)| *s == first) {
        return Err(Error::DegenerateScores);
    }
    let n = dev_scores.len() as f64;
    let mean = dev_scores.entries().iter().map(|(_, s)| s).sum::<f64>() / n;
    let var = dev_scores
        .entries()
        .iter()
        .map(|(_, s)| (s - mean).powi(2))
        .sum::<f64>()
        / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateScores);
    }
    Ok(Calibration { shift: mean, scale: sd })
}

/// Pick the score with maximum |score| from one trial's per-system scores.
///
/// All entries must carry the same trial id; ties are broken by list order,
/// which is the fixed constituent order of the fusion.
pub fn dlfs_select(per_system: &[TrialScore]) -> Result<TrialScore> {
    let first = per_system
        .first()
        .ok_or_else(|| Error::EmptyInput("no systems to select from".into()))?;
    let mut best = first;
    for s in &per_system[1..] {
        if s.trial_id != first.trial_id {
            return Err(Error::TrialIdMismatch(format!(
                "{} vs {}",
                first.trial_id, s.trial_id
            )));
        }
        if s.score.abs() > best.score.abs() {
            best = s;
        }
    }
    Ok(best.clone())
}

/// One constituent system: a tag (e.g. `G-CQCC`) and its score set.
#[derive(Debug, Clone)]
pub struct SystemScores {
    pub tag: String,
    pub scores: ScoreSet,
}

/// Result of fusing constituent systems over a shared trial list.
#[derive(Debug, Clone)]
pub struct FusedScoreSet {
    systems: Vec<String>,
    /// (trial id, chosen original score, chosen system tag), in the trial
    /// order of the first constituent.
    entries: Vec<(String, f64, String)>,
    selection_counts: Vec<usize>,
}

impl FusedScoreSet {
    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    pub fn entries(&self) -> &[(String, f64, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// How many trials each constituent won, in constituent order.
    pub fn selection_counts(&self) -> &[usize] {
        &self.selection_counts
    }

    /// Drop the tags, keeping (id, score) pairs for evaluation.
    pub fn to_score_set(&self) -> ScoreSet {
        ScoreSet::new(
            self.entries
                .iter()
                .map(|(id, s, _)| (id.clone(), *s))
                .collect(),
        )
        .expect("ids unique by construction")
    }

    /// Write as `trial_id<TAB>score<TAB>chosen_system` lines.
    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (id, score, tag) in &self.entries {
            writeln!(f, "{id}\t{score}\t{tag}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Fuse constituent systems trial by trial.
///
/// Every system must cover exactly the same trial ids. `calibrations`
/// either supplies one calibration per system (in order) or `None` to
/// compare raw scores. Selection compares calibrated margins; the fused
/// output carries the winner's original score.
pub fn fuse_all(
    systems: &[SystemScores],
    calibrations: Option<&[Calibration]>,
) -> Result<FusedScoreSet> {
    if systems.is_empty() {
        return Err(Error::EmptyInput("no systems to fuse".into()));
    }
    if let Some(cals) = calibrations {
        if cals.len() != systems.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} calibrations for {} systems",
                cals.len(),
                systems.len()
            )));
        }
    }

    // All trial-id sets must coincide.
    let reference: Vec<&str> = systems[0].scores.ids().collect();
    let ref_set: std::collections::HashSet<&str> = reference.iter().copied().collect();
    for sys in &systems[1..] {
        if sys.scores.len() != reference.len() {
            return Err(Error::TrialSetMismatch(format!(
                "system {} has {} trials, {} has {}",
                sys.tag,
                sys.scores.len(),
                systems[0].tag,
                reference.len()
            )));
        }
        for id in sys.scores.ids() {
            if !ref_set.contains(id) {
                return Err(Error::TrialSetMismatch(format!(
                    "trial {id} present in {} but not in {}",
                    sys.tag, systems[0].tag
                )));
            }
        }
    }

    let lookups: Vec<HashMap<&str, f64>> = systems
        .iter()
        .map(|sys| sys.scores.entries().iter().map(|(id, s)| (id.as_str(), *s)).collect())
        .collect();

    let mut entries = Vec::with_capacity(reference.len());
    let mut selection_counts = vec![0usize; systems.len()];
    for id in &reference {
        let mut best_idx = 0;
        let mut best_margin = f64::NEG_INFINITY;
        for (i, lookup) in lookups.iter().enumerate() {
            let raw = lookup[id];
            let margin = match calibrations {
                Some(cals) => cals[i].apply(raw).abs(),
                None => raw.abs(),
            };
            if margin > best_margin {
                best_margin = margin;
                best_idx = i;
            }
        }
        selection_counts[best_idx] += 1;
        entries.push((id.to_string(), lookups[best_idx][id], systems[best_idx].tag.clone()));
    }

    Ok(FusedScoreSet {
        systems: systems.iter().map(|s| s.tag.clone()).collect(),
        entries,
        selection_counts,
    })
}

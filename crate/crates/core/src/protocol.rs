//! Trial protocols and score files.
//!
//! Protocol files are text, one trial per line:
//! `speaker_id utterance_id attack_id label` (space separated), where the
//! attack id is `-` exactly for bonafide trials. Score files are
//! tab-separated `trial_id<TAB>score` lines; fused score files append the
//! chosen system tag as a third column, which plain readers ignore.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Ground-truth class of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Data partition a trial belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subset {
    Train,
    Dev,
    Eval,
}

impl Subset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Dev => "dev",
            Subset::Eval => "eval",
        }
    }

    pub fn all() -> [Subset; 3] {
        [Subset::Train, Subset::Dev, Subset::Eval]
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Subset::Train),
            "dev" => Ok(Subset::Dev),
            "eval" => Ok(Subset::Eval),
            other => Err(format!("unknown subset {other:?}")),
        }
    }
}

/// One protocol entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub speaker_id: String,
    pub utterance_id: String,
    pub attack_id: String,
    pub label: Label,
    pub subset: Subset,
}

/// Parse a protocol file; the subset is supplied by the caller (by
/// convention it is the file stem, e.g. `protocols/train.txt`).
pub fn parse_protocol(path: impl AsRef<Path>, subset: Subset) -> Result<Vec<Trial>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?;

    let mut trials = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                detail: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let label = match fields[3] {
            "bonafide" => Label::Bonafide,
            "spoof" => Label::Spoof,
            other => {
                return Err(Error::MalformedLine {
                    path: path.to_path_buf(),
                    line: line_no,
                    detail: format!("unknown label {other:?}"),
                })
            }
        };
        let attack_id = fields[2].to_string();
        let is_bonafide_attack = attack_id == "-";
        if (label == Label::Bonafide) != is_bonafide_attack {
            return Err(Error::LabelAttackMismatch {
                line: line_no,
                detail: format!("label {} with attack id {attack_id:?}", label),
            });
        }
        let utterance_id = fields[1].to_string();
        if !seen.insert(utterance_id.clone()) {
            return Err(Error::DuplicateUtteranceId(utterance_id));
        }
        trials.push(Trial {
            speaker_id: fields[0].to_string(),
            utterance_id,
            attack_id,
            label,
            subset,
        });
    }
    Ok(trials)
}

/// Write trials in the protocol text format.
pub fn write_protocol(path: impl AsRef<Path>, trials: &[Trial]) -> Result<()> {
    let mut out = String::new();
    for t in trials {
        out.push_str(&format!(
            "{} {} {} {}\n",
            t.speaker_id, t.utterance_id, t.attack_id, t.label
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// A detection score for one trial, tagged with the system that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub trial_id: String,
    pub score: f64,
    pub system: String,
}

impl TrialScore {
    pub fn new(trial_id: impl Into<String>, score: f64, system: impl Into<String>) -> Self {
        Self {
            trial_id: trial_id.into(),
            score,
            system: system.into(),
        }
    }
}

/// Ordered set of per-trial scores with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    entries: Vec<(String, f64)>,
}

impl ScoreSet {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (id, _) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateTrialId(id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }
}

/// Read a tab-separated score file; a third (tag) column is allowed and
/// ignored so fused score files can be evaluated like plain ones.
pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?;

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                detail: format!("expected 2 or 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let score: f64 = fields[1].parse().map_err(|_| Error::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            detail: format!("non-numeric score {:?}", fields[1]),
        })?;
        if !score.is_finite() {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                detail: format!("non-finite score {score}"),
            });
        }
        let id = fields[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateTrialId(id));
        }
        entries.push((id, score));
    }
    Ok(ScoreSet { entries })
}

/// Write scores as `trial_id<TAB>score`; `{}` formatting of f64 round-trips
/// exactly through `parse`.
pub fn write_scores(path: impl AsRef<Path>, scores: &ScoreSet) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for (id, score) in &scores.entries {
        writeln!(f, "{id}\t{score}")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("file.txt");
        fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn parses_bonafide_and_spoof_lines() {
        let (_d, path) = write_tmp("S01 U0001 - bonafide\nS01 U0002 A03 spoof\n");
        let trials = parse_protocol(&path, Subset::Train).unwrap();
        assert_eq!(trials.len(), 2);
        assert_eq!(trials[0].label, Label::Bonafide);
        assert_eq!(trials[0].attack_id, "-");
        assert_eq!(trials[1].label, Label::Spoof);
        assert_eq!(trials[1].attack_id, "A03");
        assert_eq!(trials[1].subset, Subset::Train);
    }

    #[test]
    fn label_attack_mismatch_is_rejected() {
        let (_d, path) = write_tmp("S01 U0003 A03 bonafide\n");
        assert!(matches!(
            parse_protocol(&path, Subset::Dev),
            Err(Error::LabelAttackMismatch { line: 1, .. })
        ));
        let (_d, path) = write_tmp("S01 U0004 - spoof\n");
        assert!(matches!(
            parse_protocol(&path, Subset::Dev),
            Err(Error::LabelAttackMismatch { .. })
        ));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let (_d, path) = write_tmp("S01 U0001 - bonafide\nS01 U0002 spoof\n");
        match parse_protocol(&path, Subset::Train) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_utterance_id_is_rejected() {
        let (_d, path) = write_tmp("S01 U0001 - bonafide\nS02 U0001 A01 spoof\n");
        assert!(matches!(
            parse_protocol(&path, Subset::Train),
            Err(Error::DuplicateUtteranceId(_))
        ));
    }

    #[test]
    fn protocol_round_trip() {
        let trials = vec![
            Trial {
                speaker_id: "S01".into(),
                utterance_id: "U1".into(),
                attack_id: "-".into(),
                label: Label::Bonafide,
                subset: Subset::Eval,
            },
            Trial {
                speaker_id: "S02".into(),
                utterance_id: "U2".into(),
                attack_id: "A01".into(),
                label: Label::Spoof,
                subset: Subset::Eval,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.txt");
        write_protocol(&path, &trials).unwrap();
        let back = parse_protocol(&path, Subset::Eval).unwrap();
        assert_eq!(back, trials);
    }

    #[test]
    fn non_numeric_score_is_malformed() {
        let (_d, path) = write_tmp("U1\tnot_a_number\n");
        match read_scores(&path) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_trial_id_is_rejected() {
        let (_d, path) = write_tmp("U1\t0.5\nU1\t0.7\n");
        assert!(matches!(read_scores(&path), Err(Error::DuplicateTrialId(_))));
    }

    #[test]
    fn three_column_scores_are_accepted() {
        let (_d, path) = write_tmp("U1\t0.5\tG-MFCC\nU2\t-1.25\tx-LFCC\n");
        let scores = read_scores(&path).unwrap();
        assert_eq!(scores.len(), 2);
        assert_eq!(scores.entries()[1].1, -1.25);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn score_file_round_trip_is_exact(
            raw in proptest::collection::vec(
                (0u32..1_000_000, -1e6f64..1e6),
                1..1000,
            )
        ) {
            let mut ids = HashSet::new();
            let entries: Vec<(String, f64)> = raw
                .into_iter()
                .filter(|(n, _)| ids.insert(*n))
                .map(|(n, s)| (format!("T{n:07}"), s))
                .collect();
            prop_assume!(!entries.is_empty());
            let set = ScoreSet::new(entries.clone()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("scores.txt");
            write_scores(&path, &set).unwrap();
            let back = read_scores(&path).unwrap();
            prop_assert_eq!(back.entries(), entries.as_slice());
        }
    }
}

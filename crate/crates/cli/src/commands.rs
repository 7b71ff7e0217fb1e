//! Subcommand implementations. Each resolves its parameters as
//! flag > config file > built-in default, using the config key named in the
//! flag's help text.

use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use spoofdet_core::audio::read_wav;
use spoofdet_core::corpus::{generate_corpus, SubsetCounts, SynthConfig};
use spoofdet_core::error::Error;
use spoofdet_core::features::archive::{read_archive, write_archive};
use spoofdet_core::features::cqcc::{extract_cqcc_with, CqccConfig, CqtSpec, CqtTransform};
use spoofdet_core::features::spectral::{extract_spectral_feature, SpectralConfig};
use spoofdet_core::features::{FeatureKind, FeatureMatrix};
use spoofdet_core::fusion::{calibrate, fuse_all, Calibration, SystemScores};
use spoofdet_core::gmm::{em_fit, gmm_score, pool_frames, read_gmm, write_gmm, EmOptions};
use spoofdet_core::metrics::{accuracy, eer, min_tdcf, LabeledScores, TDcfParams};
use spoofdet_core::protocol::{parse_protocol, read_scores, write_scores, Label, ScoreSet, Subset, Trial};
use spoofdet_core::xvector::{
    read_xvector, train, write_xvector, xvector_score, FocalLossParams, TrainConfig,
};

use crate::config::{resolve, CliError, CliResult, FileConfig};

#[derive(Args)]
pub struct SynthArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed (config: seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Bonafide trials in train (config: corpus.train_bonafide).
    #[arg(long)]
    train_bonafide: Option<usize>,
    /// Spoof trials in train (config: corpus.train_spoof).
    #[arg(long)]
    train_spoof: Option<usize>,
    /// Bonafide trials in dev (config: corpus.dev_bonafide).
    #[arg(long)]
    dev_bonafide: Option<usize>,
    /// Spoof trials in dev (config: corpus.dev_spoof).
    #[arg(long)]
    dev_spoof: Option<usize>,
    /// Bonafide trials in eval (config: corpus.eval_bonafide).
    #[arg(long)]
    eval_bonafide: Option<usize>,
    /// Spoof trials in eval (config: corpus.eval_spoof).
    #[arg(long)]
    eval_spoof: Option<usize>,
    /// Sample rate in Hz (config: corpus.sample_rate_hz).
    #[arg(long)]
    sample_rate_hz: Option<u32>,
    /// Utterance length in seconds (config: corpus.utterance_seconds).
    #[arg(long)]
    utterance_seconds: Option<f64>,
}

pub fn synth_corpus(args: SynthArgs, cfg: &FileConfig) -> CliResult<()> {
    let defaults = SynthConfig::default();
    let synth = SynthConfig {
        train: SubsetCounts {
            bonafide: resolve(args.train_bonafide, cfg.get("corpus.train_bonafide")?, defaults.train.bonafide),
            spoof: resolve(args.train_spoof, cfg.get("corpus.train_spoof")?, defaults.train.spoof),
        },
        dev: SubsetCounts {
            bonafide: resolve(args.dev_bonafide, cfg.get("corpus.dev_bonafide")?, defaults.dev.bonafide),
            spoof: resolve(args.dev_spoof, cfg.get("corpus.dev_spoof")?, defaults.dev.spoof),
        },
        eval: SubsetCounts {
            bonafide: resolve(args.eval_bonafide, cfg.get("corpus.eval_bonafide")?, defaults.eval.bonafide),
            spoof: resolve(args.eval_spoof, cfg.get("corpus.eval_spoof")?, defaults.eval.spoof),
        },
        sample_rate_hz: resolve(args.sample_rate_hz, cfg.get("corpus.sample_rate_hz")?, defaults.sample_rate_hz),
        utterance_seconds: resolve(
            args.utterance_seconds,
            cfg.get("corpus.utterance_seconds")?,
            defaults.utterance_seconds,
        ),
        seed: resolve(args.seed, cfg.get("seed")?, defaults.seed),
        ..defaults
    };
    let summary = generate_corpus(&synth, &args.out)?;
    println!(
        "corpus: {} utterances under {} (distortion-band separation {:.2} dB)",
        summary.utterances,
        summary.out_dir.display(),
        summary.band_ratio_db
    );
    for subset in Subset::all() {
        let c = synth.counts(subset);
        println!("  {subset}: {} bonafide / {} spoof", c.bonafide, c.spoof);
    }
    Ok(())
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Corpus directory (as written by synth-corpus).
    #[arg(long)]
    data: PathBuf,
    /// Subset to extract: train, dev or eval.
    #[arg(long)]
    subset: String,
    /// Feature kind: MFCC, IMFCC, LFCC, LFBE, MFBE, IMFBE or CQCC.
    #[arg(long)]
    feature: String,
    /// Output archive path.
    #[arg(long)]
    out: PathBuf,
    /// Frame length in ms (config: features.frame_ms).
    #[arg(long)]
    frame_ms: Option<f64>,
    /// Hop in ms (config: features.hop_ms).
    #[arg(long)]
    hop_ms: Option<f64>,
    /// Analysis window: hamming, hann or rect (config: features.window).
    #[arg(long)]
    window: Option<String>,
    /// Pre-emphasis coefficient (config: features.pre_emphasis).
    #[arg(long)]
    pre_emphasis: Option<f64>,
    /// FFT size (config: features.nfft).
    #[arg(long)]
    nfft: Option<usize>,
    /// Filters for cepstral kinds (config: features.num_filters_cepstral).
    #[arg(long)]
    num_filters_cepstral: Option<usize>,
    /// Filters for filterbank-energy kinds (config: features.num_filters_energy).
    #[arg(long)]
    num_filters_energy: Option<usize>,
    /// Cepstral coefficients to keep (config: features.num_ceps).
    #[arg(long)]
    num_ceps: Option<usize>,
    /// Lower band edge in Hz (config: features.f_min_hz).
    #[arg(long)]
    f_min_hz: Option<f64>,
    /// Upper band edge in Hz, Nyquist if absent (config: features.f_max_hz).
    #[arg(long)]
    f_max_hz: Option<f64>,
    /// Keep c0 in cepstra (config: features.keep_c0).
    #[arg(long)]
    keep_c0: Option<bool>,
    /// Delta regression window, 0 disables deltas (config: features.delta_window).
    #[arg(long)]
    delta_window: Option<usize>,
    /// Per-utterance cepstral mean/variance normalization (config: features.cmvn).
    #[arg(long)]
    cmvn: Option<bool>,
    /// CQCC lowest frequency in Hz (config: cqcc.f_min_hz).
    #[arg(long)]
    cqcc_f_min_hz: Option<f64>,
    /// CQCC highest frequency in Hz, Nyquist if absent (config: cqcc.f_max_hz).
    #[arg(long)]
    cqcc_f_max_hz: Option<f64>,
    /// CQCC bins per octave (config: cqcc.bins_per_octave).
    #[arg(long)]
    cqcc_bins_per_octave: Option<usize>,
    /// CQCC hop in ms (config: cqcc.hop_ms).
    #[arg(long)]
    cqcc_hop_ms: Option<f64>,
    /// CQCC uniform resampling points (config: cqcc.num_linear_bins).
    #[arg(long)]
    cqcc_num_linear_bins: Option<usize>,
    /// CQCC cepstral coefficients (config: cqcc.num_ceps).
    #[arg(long)]
    cqcc_num_ceps: Option<usize>,
    /// CQCC delta window, 0 disables (config: cqcc.delta_window).
    #[arg(long)]
    cqcc_delta_window: Option<usize>,
}

fn parse_subset(s: &str) -> CliResult<Subset> {
    s.parse().map_err(CliError::Config)
}

fn parse_kind(s: &str) -> CliResult<FeatureKind> {
    s.parse().map_err(CliError::Config)
}

fn delta_option(flag: Option<usize>, cfg_value: Option<usize>, default: Option<usize>) -> Option<usize> {
    match flag.or(cfg_value) {
        Some(0) => None,
        Some(w) => Some(w),
        None => default,
    }
}

fn spectral_config(kind: FeatureKind, args: &ExtractArgs, cfg: &FileConfig) -> CliResult<SpectralConfig> {
    let mut c = SpectralConfig::for_kind(kind);
    c.frame_ms = resolve(args.frame_ms, cfg.get("features.frame_ms")?, c.frame_ms);
    c.hop_ms = resolve(args.hop_ms, cfg.get("features.hop_ms")?, c.hop_ms);
    let window = args.window.clone().or(cfg.get::<String>("features.window")?);
    if let Some(w) = window {
        c.window = w.parse().map_err(CliError::Config)?;
    }
    c.pre_emphasis = resolve(args.pre_emphasis, cfg.get("features.pre_emphasis")?, c.pre_emphasis);
    c.nfft = resolve(args.nfft, cfg.get("features.nfft")?, c.nfft);
    c.num_filters = if kind.is_cepstral() {
        resolve(args.num_filters_cepstral, cfg.get("features.num_filters_cepstral")?, c.num_filters)
    } else {
        resolve(args.num_filters_energy, cfg.get("features.num_filters_energy")?, c.num_filters)
    };
    c.num_ceps = resolve(args.num_ceps, cfg.get("features.num_ceps")?, c.num_ceps);
    c.f_min_hz = resolve(args.f_min_hz, cfg.get("features.f_min_hz")?, c.f_min_hz);
    c.f_max_hz = args.f_max_hz.or(cfg.get("features.f_max_hz")?).or(c.f_max_hz);
    c.keep_c0 = resolve(args.keep_c0, cfg.get("features.keep_c0")?, c.keep_c0);
    c.delta_window = delta_option(args.delta_window, cfg.get("features.delta_window")?, c.delta_window);
    c.cmvn = resolve(args.cmvn, cfg.get("features.cmvn")?, c.cmvn);
    Ok(c)
}

fn cqcc_config(args: &ExtractArgs, cfg: &FileConfig) -> CliResult<CqccConfig> {
    let mut c = CqccConfig::default();
    c.f_min_hz = resolve(args.cqcc_f_min_hz, cfg.get("cqcc.f_min_hz")?, c.f_min_hz);
    c.f_max_hz = args.cqcc_f_max_hz.or(cfg.get("cqcc.f_max_hz")?).or(c.f_max_hz);
    c.bins_per_octave = resolve(args.cqcc_bins_per_octave, cfg.get("cqcc.bins_per_octave")?, c.bins_per_octave);
    c.hop_ms = resolve(args.cqcc_hop_ms, cfg.get("cqcc.hop_ms")?, c.hop_ms);
    c.num_linear_bins = resolve(args.cqcc_num_linear_bins, cfg.get("cqcc.num_linear_bins")?, c.num_linear_bins);
    c.num_ceps = resolve(args.cqcc_num_ceps, cfg.get("cqcc.num_ceps")?, c.num_ceps);
    c.delta_window = delta_option(args.cqcc_delta_window, cfg.get("cqcc.delta_window")?, c.delta_window);
    Ok(c)
}

pub fn extract(args: ExtractArgs, cfg: &FileConfig) -> CliResult<()> {
    let subset = parse_subset(&args.subset)?;
    let kind = parse_kind(&args.feature)?;
    let trials = parse_protocol(
        args.data.join("protocols").join(format!("{subset}.txt")),
        subset,
    )?;

    let wav_path = |t: &Trial| {
        args.data
            .join(subset.as_str())
            .join(format!("{}.wav", t.utterance_id))
    };

    let entries: Vec<(String, FeatureMatrix)> = if kind == FeatureKind::Cqcc {
        let ccfg = cqcc_config(&args, cfg)?;
        // One transform shared across utterances; the sample rate comes from
        // the first file and every other file must match it.
        let first = read_wav(wav_path(&trials[0]))?;
        let f_max = ccfg.f_max_hz.unwrap_or(first.sample_rate_hz() as f64 / 2.0);
        let spec = CqtSpec::new(ccfg.f_min_hz, f_max, ccfg.bins_per_octave, first.sample_rate_hz())?;
        let transform = CqtTransform::new(spec);
        trials
            .par_iter()
            .map(|t| {
                let w = read_wav(wav_path(t))?;
                let feat = extract_cqcc_with(&transform, &w, &ccfg)?;
                Ok((t.utterance_id.clone(), feat))
            })
            .collect::<Result<_, Error>>()?
    } else {
        let scfg = spectral_config(kind, &args, cfg)?;
        trials
            .par_iter()
            .map(|t| {
                let w = read_wav(wav_path(t))?;
                let feat = extract_spectral_feature(&w, &scfg)?;
                Ok((t.utterance_id.clone(), feat))
            })
            .collect::<Result<_, Error>>()?
    };

    if let Some(parent) = args.out.parent() {
        std::fs::create_dir_all(parent).map_err(Error::Io)?;
    }
    write_archive(&args.out, &entries)?;
    let (t, d) = (entries[0].1.num_frames(), entries[0].1.dim());
    println!(
        "extracted {} {} utterances ({} x {} each) -> {}",
        entries.len(),
        kind,
        t,
        d,
        args.out.display()
    );
    Ok(())
}

/// Load an archive and its protocol, returning label-joined features in
/// protocol order. The id sets must match exactly.
fn load_labeled_features(
    features: &Path,
    protocol: &Path,
) -> CliResult<Vec<(String, FeatureMatrix, Label)>> {
    // Subset tag is irrelevant for training; `train` is a placeholder.
    let trials = parse_protocol(protocol, Subset::Train)?;
    let archive = read_archive(features)?;
    let mut by_id: std::collections::HashMap<String, FeatureMatrix> =
        archive.into_iter().collect();
    let mut out = Vec::with_capacity(trials.len());
    for t in &trials {
        let fm = by_id.remove(&t.utterance_id).ok_or_else(|| {
            Error::TrialSetMismatch(format!(
                "utterance {} in protocol but not in the archive",
                t.utterance_id
            ))
        })?;
        out.push((t.utterance_id.clone(), fm, t.label));
    }
    if !by_id.is_empty() {
        let extra: Vec<String> = by_id.keys().take(3).cloned().collect();
        return Err(Error::TrialSetMismatch(format!(
            "{} archive utterances missing from the protocol (e.g. {:?})",
            by_id.len(),
            extra
        ))
        .into());
    }
    Ok(out)
}

#[derive(Args)]
pub struct TrainGmmArgs {
    /// Feature archive of the training subset.
    #[arg(long)]
    features: PathBuf,
    /// Protocol file with the labels.
    #[arg(long)]
    protocol: PathBuf,
    /// Output prefix; writes `<prefix>.bonafide.spgm` and `<prefix>.spoof.spgm`.
    #[arg(long)]
    out_prefix: String,
    /// Mixture components per class (config: gmm.components).
    #[arg(long)]
    components: Option<usize>,
    /// Maximum EM iterations (config: gmm.max_iters).
    #[arg(long)]
    max_iters: Option<usize>,
    /// EM stopping tolerance on average log-likelihood gain (config: gmm.tol).
    #[arg(long)]
    tol: Option<f64>,
    /// Absolute variance floor (config: gmm.var_floor).
    #[arg(long)]
    var_floor: Option<f64>,
    /// RNG seed (config: seed).
    #[arg(long)]
    seed: Option<u64>,
}

pub fn train_gmm(args: TrainGmmArgs, cfg: &FileConfig) -> CliResult<()> {
    let defaults = EmOptions::default();
    let opts = EmOptions {
        num_components: resolve(args.components, cfg.get("gmm.components")?, defaults.num_components),
        max_iters: resolve(args.max_iters, cfg.get("gmm.max_iters")?, defaults.max_iters),
        tol: resolve(args.tol, cfg.get("gmm.tol")?, defaults.tol),
        var_floor: resolve(args.var_floor, cfg.get("gmm.var_floor")?, defaults.var_floor),
        seed: resolve(args.seed, cfg.get("seed")?, defaults.seed),
    };

    let labeled = load_labeled_features(&args.features, &args.protocol)?;
    let kind = labeled[0].1.kind();
    for class in [Label::Bonafide, Label::Spoof] {
        let frames: Vec<&FeatureMatrix> = labeled
            .iter()
            .filter(|(_, _, l)| *l == class)
            .map(|(_, f, _)| f)
            .collect();
        let pooled = pool_frames(&frames)?;
        let total = pooled.nrows();
        let (model, trace) = em_fit(pooled.view(), kind, &opts)?;
        let path = format!("{}.{}.spgm", args.out_prefix, class.as_str());
        if let Some(parent) = Path::new(&path).parent() {
            std::fs::create_dir_all(parent).map_err(Error::Io)?;
        }
        write_gmm(&path, &model)?;
        println!(
            "trained {} {} GMM: K={} on {} frames, {} EM iterations, final avg LL {:.4} -> {}",
            class.as_str(),
            kind,
            opts.num_components,
            total,
            trace.len(),
            trace.last().unwrap(),
            path
        );
    }
    Ok(())
}

#[derive(Args)]
pub struct TrainXvectorArgs {
    /// Feature archive of the training subset.
    #[arg(long)]
    features: PathBuf,
    /// Protocol file with the labels.
    #[arg(long)]
    protocol: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// First TDNN width (config: xvector.h1).
    #[arg(long)]
    h1: Option<usize>,
    /// Second TDNN width (config: xvector.h2).
    #[arg(long)]
    h2: Option<usize>,
    /// Embedding dimension (config: xvector.embed_dim).
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Learning rate (config: xvector.lr).
    #[arg(long)]
    lr: Option<f64>,
    /// SGD momentum (config: xvector.momentum).
    #[arg(long)]
    momentum: Option<f64>,
    /// Training epochs (config: xvector.epochs).
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size (config: xvector.batch_size).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Frames per training crop (config: xvector.crop_frames).
    #[arg(long)]
    crop_frames: Option<usize>,
    /// Focal loss alpha (config: xvector.alpha).
    #[arg(long)]
    alpha: Option<f64>,
    /// Focal loss gamma (config: xvector.gamma).
    #[arg(long)]
    gamma: Option<f64>,
    /// Epochs without improvement before halving the lr (config: xvector.patience).
    #[arg(long)]
    patience: Option<usize>,
    /// RNG seed (config: seed).
    #[arg(long)]
    seed: Option<u64>,
}

pub fn train_xvector(args: TrainXvectorArgs, cfg: &FileConfig) -> CliResult<()> {
    let d = TrainConfig::default();
    let tcfg = TrainConfig {
        h1: resolve(args.h1, cfg.get("xvector.h1")?, d.h1),
        h2: resolve(args.h2, cfg.get("xvector.h2")?, d.h2),
        embed_dim: resolve(args.embed_dim, cfg.get("xvector.embed_dim")?, d.embed_dim),
        lr: resolve(args.lr, cfg.get("xvector.lr")?, d.lr),
        momentum: resolve(args.momentum, cfg.get("xvector.momentum")?, d.momentum),
        epochs: resolve(args.epochs, cfg.get("xvector.epochs")?, d.epochs),
        batch_size: resolve(args.batch_size, cfg.get("xvector.batch_size")?, d.batch_size),
        crop_frames: resolve(args.crop_frames, cfg.get("xvector.crop_frames")?, d.crop_frames),
        loss: FocalLossParams {
            alpha: resolve(args.alpha, cfg.get("xvector.alpha")?, d.loss.alpha),
            gamma: resolve(args.gamma, cfg.get("xvector.gamma")?, d.loss.gamma),
        },
        seed: resolve(args.seed, cfg.get("seed")?, d.seed),
        plateau_patience: resolve(args.patience, cfg.get("xvector.patience")?, d.plateau_patience),
    };

    let labeled = load_labeled_features(&args.features, &args.protocol)?;
    let dataset: Vec<(FeatureMatrix, Label)> =
        labeled.into_iter().map(|(_, f, l)| (f, l)).collect();
    let state = train(&dataset, &tcfg)?;
    for (epoch, (tr, va)) in state.train_loss.iter().zip(&state.val_loss).enumerate() {
        println!("epoch {epoch:3}: train loss {tr:.6}, val loss {va:.6}");
    }
    println!("best validation at epoch {}", state.best_epoch);

    if let Some(parent) = args.out.parent() {
        std::fs::create_dir_all(parent).map_err(Error::Io)?;
    }
    write_xvector(&args.out, &state.model)?;
    println!("wrote checkpoint {}", args.out.display());
    Ok(())
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("backend").required(true).args(["gmm_prefix", "xvector"]))]
pub struct ScoreArgs {
    /// Feature archive to score.
    #[arg(long)]
    features: PathBuf,
    /// Output score file (`trial_id<TAB>score`).
    #[arg(long)]
    out: PathBuf,
    /// GMM model prefix (expects `<prefix>.bonafide.spgm` / `<prefix>.spoof.spgm`).
    #[arg(long)]
    gmm_prefix: Option<String>,
    /// x-vector checkpoint path.
    #[arg(long)]
    xvector: Option<PathBuf>,
    /// System tag override (defaults to G-<KIND> or x-<KIND>).
    #[arg(long)]
    system: Option<String>,
}

pub fn score(args: ScoreArgs, _cfg: &FileConfig) -> CliResult<()> {
    let archive = read_archive(&args.features)?;

    let (scored, derived_tag): (Vec<(String, f64)>, String) = if let Some(prefix) = &args.gmm_prefix {
        let bona = read_gmm(format!("{prefix}.bonafide.spgm"))?;
        let spoof = read_gmm(format!("{prefix}.spoof.spgm"))?;
        let tag = format!("G-{}", bona.kind());
        let scored = archive
            .par_iter()
            .map(|(id, f)| gmm_score(&bona, &spoof, f, id).map(|s| (s.trial_id, s.score)))
            .collect::<Result<_, Error>>()?;
        (scored, tag)
    } else {
        let model = read_xvector(args.xvector.as_ref().expect("clap group"))?;
        let tag = format!("x-{}", model.kind());
        let scored = archive
            .par_iter()
            .map(|(id, f)| xvector_score(&model, f, id).map(|s| (s.trial_id, s.score)))
            .collect::<Result<_, Error>>()?;
        (scored, tag)
    };

    if let Some(parent) = args.out.parent() {
        std::fs::create_dir_all(parent).map_err(Error::Io)?;
    }
    let set = ScoreSet::new(scored)?;
    write_scores(&args.out, &set)?;
    let tag = args.system.unwrap_or(derived_tag);
    println!("scored {} trials as {} -> {}", set.len(), tag, args.out.display());
    Ok(())
}

fn parse_tagged(raw: &str) -> (Option<String>, PathBuf) {
    match raw.split_once('=') {
        Some((tag, path)) => (Some(tag.to_string()), PathBuf::from(path)),
        None => (None, PathBuf::from(raw)),
    }
}

fn tag_or_stem(tag: Option<String>, path: &Path) -> String {
    tag.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string())
    })
}

#[derive(Args)]
pub struct FuseArgs {
    /// Constituent system as TAG=SCOREFILE; repeat per system. The flag
    /// order fixes the tie-break order.
    #[arg(long = "system", required = true)]
    systems: Vec<String>,
    /// Output fused score file (adds the chosen tag as a third column).
    #[arg(long)]
    out: PathBuf,
    /// Calibrate a system on a development score file, TAG=SCOREFILE;
    /// systems without one calibrate on their own input.
    #[arg(long = "calibration")]
    calibrations: Vec<String>,
    /// Mean/variance calibration before switching (config: fusion.calibrate).
    #[arg(long)]
    calibrate: Option<bool>,
}

pub fn fuse(args: FuseArgs, cfg: &FileConfig) -> CliResult<()> {
    let use_calibration = resolve(args.calibrate, cfg.get("fusion.calibrate")?, true);

    let mut systems = Vec::new();
    for raw in &args.systems {
        let (tag, path) = parse_tagged(raw);
        let tag = tag_or_stem(tag, &path);
        if systems.iter().any(|s: &SystemScores| s.tag == tag) {
            return Err(CliError::Config(format!("duplicate system tag {tag:?}")));
        }
        systems.push(SystemScores {
            tag,
            scores: read_scores(&path)?,
        });
    }

    let mut dev_paths: std::collections::HashMap<String, PathBuf> = Default::default();
    for raw in &args.calibrations {
        let (tag, path) = parse_tagged(raw);
        let tag = tag.ok_or_else(|| {
            CliError::Config(format!("--calibration needs TAG=SCOREFILE, got {raw:?}"))
        })?;
        dev_paths.insert(tag, path);
    }

    let calibrations: Option<Vec<Calibration>> = if use_calibration {
        let mut cals = Vec::with_capacity(systems.len());
        for sys in &systems {
            let cal = match dev_paths.get(&sys.tag) {
                Some(path) => calibrate(&read_scores(path)?)?,
                None => calibrate(&sys.scores)?,
            };
            cals.push(cal);
        }
        Some(cals)
    } else {
        None
    };

    let fused = fuse_all(&systems, calibrations.as_deref())?;
    if let Some(parent) = args.out.parent() {
        std::fs::create_dir_all(parent).map_err(Error::Io)?;
    }
    fused.write(&args.out)?;

    let total = fused.len();
    println!("fused {} systems over {} trials -> {}", systems.len(), total, args.out.display());
    for (tag, count) in fused.systems().iter().zip(fused.selection_counts()) {
        println!("  selected {tag}: {count} trials ({:.1}%)", 100.0 * *count as f64 / total as f64);
    }
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Score file(s) to evaluate, optionally tagged as TAG=SCOREFILE.
    #[arg(long = "scores", required = true)]
    scores: Vec<String>,
    /// Protocol file with the labels.
    #[arg(long)]
    protocol: PathBuf,
    /// Decision threshold for accuracy (config: evaluate.threshold).
    #[arg(long)]
    threshold: Option<f64>,
    /// Target-speaker prior (config: tdcf.p_target).
    #[arg(long)]
    tdcf_p_target: Option<f64>,
    /// Non-target prior (config: tdcf.p_nontarget).
    #[arg(long)]
    tdcf_p_nontarget: Option<f64>,
    /// Spoof prior (config: tdcf.p_spoof).
    #[arg(long)]
    tdcf_p_spoof: Option<f64>,
    /// ASV miss cost (config: tdcf.c_miss_asv).
    #[arg(long)]
    tdcf_c_miss_asv: Option<f64>,
    /// ASV false-accept cost (config: tdcf.c_fa_asv).
    #[arg(long)]
    tdcf_c_fa_asv: Option<f64>,
    /// Countermeasure miss cost (config: tdcf.c_miss_cm).
    #[arg(long)]
    tdcf_c_miss_cm: Option<f64>,
    /// Countermeasure false-accept cost (config: tdcf.c_fa_cm).
    #[arg(long)]
    tdcf_c_fa_cm: Option<f64>,
    /// ASV miss rate at its operating point (config: tdcf.asv_p_miss).
    #[arg(long)]
    tdcf_asv_p_miss: Option<f64>,
    /// ASV false-accept rate at its operating point (config: tdcf.asv_p_fa).
    #[arg(long)]
    tdcf_asv_p_fa: Option<f64>,
    /// ASV miss rate on spoof trials (config: tdcf.asv_p_miss_spoof).
    #[arg(long)]
    tdcf_asv_p_miss_spoof: Option<f64>,
}

fn tdcf_params(args: &EvaluateArgs, cfg: &FileConfig) -> CliResult<TDcfParams> {
    let d = TDcfParams::default_operating_point();
    Ok(TDcfParams {
        p_target: resolve(args.tdcf_p_target, cfg.get("tdcf.p_target")?, d.p_target),
        p_nontarget: resolve(args.tdcf_p_nontarget, cfg.get("tdcf.p_nontarget")?, d.p_nontarget),
        p_spoof: resolve(args.tdcf_p_spoof, cfg.get("tdcf.p_spoof")?, d.p_spoof),
        c_miss_asv: resolve(args.tdcf_c_miss_asv, cfg.get("tdcf.c_miss_asv")?, d.c_miss_asv),
        c_fa_asv: resolve(args.tdcf_c_fa_asv, cfg.get("tdcf.c_fa_asv")?, d.c_fa_asv),
        c_miss_cm: resolve(args.tdcf_c_miss_cm, cfg.get("tdcf.c_miss_cm")?, d.c_miss_cm),
        c_fa_cm: resolve(args.tdcf_c_fa_cm, cfg.get("tdcf.c_fa_cm")?, d.c_fa_cm),
        asv_p_miss: resolve(args.tdcf_asv_p_miss, cfg.get("tdcf.asv_p_miss")?, d.asv_p_miss),
        asv_p_fa: resolve(args.tdcf_asv_p_fa, cfg.get("tdcf.asv_p_fa")?, d.asv_p_fa),
        asv_p_miss_spoof: resolve(
            args.tdcf_asv_p_miss_spoof,
            cfg.get("tdcf.asv_p_miss_spoof")?,
            d.asv_p_miss_spoof,
        ),
    })
}

pub fn evaluate(args: EvaluateArgs, cfg: &FileConfig) -> CliResult<()> {
    let threshold = resolve(args.threshold, cfg.get("evaluate.threshold")?, 0.0);
    let params = tdcf_params(&args, cfg)?;

    // Subset tag only matters for bookkeeping here.
    let trials = parse_protocol(&args.protocol, Subset::Dev)?;

    println!("{:<16} {:>8} {:>10} {:>8}", "system", "eer_pct", "min_tdcf", "acc_pct");
    for raw in &args.scores {
        let (tag, path) = parse_tagged(raw);
        let tag = tag_or_stem(tag, &path);
        let scores = read_scores(&path)?;
        let labeled = LabeledScores::join(&scores, &trials)?;
        let eer_pct = 100.0 * eer(&labeled)?;
        let tdcf = min_tdcf(&labeled, &params)?;
        let acc = accuracy(&labeled, threshold);
        println!("{tag:<16} {eer_pct:>8.3} {tdcf:>10.4} {acc:>8.2}");
        println!("RESULT\tsystem={tag}\teer_pct={eer_pct}\tmin_tdcf={tdcf}\tacc_pct={acc}");
    }
    Ok(())
}

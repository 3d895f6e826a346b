//! `vadkit` subcommands. Results go to stdout or files; diagnostics to stderr.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{debug, info};
use rayon::prelude::*;

use vadkit_core::audio::{canonicalize, AudioBuffer, SegmentLabelSet, SpeechSegment, TranscriptSet};
use vadkit_core::encoders::encoder_param_count;
use vadkit_core::metrics::{self, SetMetrics};
use vadkit_core::model::VadModel;
use vadkit_core::segment::{extract_segments, latency_report, StreamingVad, VadDecisionConfig};
use vadkit_core::synth;
use vadkit_core::train::{self, Objective};

use crate::config::{read_config, FileConfig};
use crate::error::{Error, Result};
use crate::labels::{self, ManifestEntry};
use crate::report;
use crate::wav::{read_wav, write_wav};
use crate::weights::{self, ModelBundle, NamedTensor};
use crate::fsutil;

#[derive(Debug, Parser)]
#[command(name = "vadkit", version, about = "Streaming multi-task voice activity detection")]
pub struct Cli {
    /// Worker threads for per-file work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a tones-vs-silence corpus with labels and noise-only clips.
    Synth(SynthArgs),
    /// Dump log-mel features into a VADW container, one tensor per utterance.
    Features(FeaturesArgs),
    /// Train a model and write a weight file.
    Train(TrainArgs),
    /// Write speech segments for a wav file or manifest.
    Segment(SegmentArgs),
    /// Greedy CTC transcripts for a wav file or manifest.
    Transcribe(TranscribeArgs),
    /// Score segments or transcripts.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Encoder parameter footprint.
    Size(ModelSource),
    /// Decision latency budget of a configuration.
    Latency(ModelSource),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub clips: usize,
    #[arg(long, default_value_t = 4)]
    pub noise: usize,
    #[arg(long, default_value_t = 3000)]
    pub noise_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// A `.wav` file or a manifest.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `[train] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on the VAD loss alone.
    #[arg(long)]
    pub vad_only: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// A `.wav` file or a manifest.
    #[arg(long)]
    pub input: PathBuf,
    /// Segment file; `-` or absent streams lines to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Feed audio through the session API chunk by chunk.
    #[arg(long)]
    pub streaming: bool,
    #[arg(long, default_value_t = 1600)]
    pub chunk_samples: usize,
    /// Replaces the `[vad]` settings stored with the weights.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranscribeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Frame-level detection cost against reference segments.
    Dcf(DcfArgs),
    /// Share of noise-only files with no detected speech.
    Nrr(NrrArgs),
    /// Pooled character error rate.
    Cer(CerArgs),
    /// Multi-set report with AVG row and optional relative changes.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DcfArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub hyp: PathBuf,
    /// Supplies utterance durations and ids; without it the last segment end is used.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NrrArgs {
    /// Noise-only utterances.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Existing segment file for the manifest.
    #[arg(long, conflicts_with = "weights", required_unless_present = "weights")]
    pub hyp: Option<PathBuf>,
    /// Segment the manifest with this model instead.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CerArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub hyp: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Set directories. Each may hold `wav.tsv`, `ref.seg`, `hyp.seg`,
    /// `ref.txt` and `hyp.txt`; a set with `hyp.seg` but no `ref.seg` is
    /// scored as noise-only (NRR).
    #[arg(long = "set", required = true)]
    pub sets: Vec<PathBuf>,
    #[arg(long)]
    pub baseline_report: Option<PathBuf>,
    /// Print a TAB-separated table instead of the sectioned report.
    #[arg(long)]
    pub tsv: bool,
    /// Also write the sectioned report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelSource {
    #[arg(long, conflicts_with = "config")]
    pub weights: Option<PathBuf>,
    /// Without either flag the built-in defaults are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Features(a) => cmd_features(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Segment(a) => cmd_segment(&a),
        Command::Transcribe(a) => cmd_transcribe(&a),
        Command::Eval(EvalCommand::Dcf(a)) => cmd_dcf(&a),
        Command::Eval(EvalCommand::Nrr(a)) => cmd_nrr(&a),
        Command::Eval(EvalCommand::Cer(a)) => cmd_cer(&a),
        Command::Eval(EvalCommand::Report(a)) => cmd_report(&a),
        Command::Size(a) => cmd_size(&a),
        Command::Latency(a) => cmd_latency(&a),
    })
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    path.map_or_else(|| Ok(FileConfig::default()), read_config)
}

/// A single `.wav` becomes a one-entry list named after its file stem.
fn inputs(path: &Path) -> Result<Vec<ManifestEntry>> {
    let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    if !is_wav {
        return labels::read_manifest(path);
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Usage(format!("{}: no file name", path.display())))?;
    Ok(vec![ManifestEntry { id, wav: path.into() }])
}

fn print_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) if p != Path::new("-") => fsutil::write_atomic(p, text.as_bytes()),
        _ => print_stdout(text),
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let wav_dir = a.out.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let clips = synth::tone_corpus(a.clips, a.seed)?;
    let noise = (0..a.noise)
        .map(|i| synth::noise_clip(format!("noise{i:04}"), a.noise_ms, a.seed ^ 0x5eed_0000 ^ i as u64))
        .collect::<vadkit_core::Result<Vec<_>>>()?;
    let write_all = |clips: &[synth::SynthClip]| -> Result<Vec<(String, String)>> {
        clips
            .par_iter()
            .map(|c| {
                let rel = format!("wav/{}.wav", c.id);
                write_wav(a.out.join(&rel), &c.audio)?;
                Ok((c.id.clone(), rel))
            })
            .collect()
    };
    let manifest = write_all(&clips)?;
    let noise_manifest = write_all(&noise)?;
    let segs: Vec<SegmentLabelSet> = clips
        .iter()
        .map(|c| SegmentLabelSet::new(c.id.clone(), c.segments.clone()))
        .collect();
    let texts: Vec<TranscriptSet> = clips
        .iter()
        .map(|c| TranscriptSet {
            utterance_id: c.id.clone(),
            text: c.text.clone(),
        })
        .collect();
    fsutil::write_atomic(&a.out.join("train.tsv"), labels::format_manifest(&manifest).as_bytes())?;
    labels::write_segments(&segs, a.out.join("train.seg"))?;
    fsutil::write_atomic(&a.out.join("train.txt"), labels::format_transcripts(&texts).as_bytes())?;
    fsutil::write_atomic(&a.out.join("noise.tsv"), labels::format_manifest(&noise_manifest).as_bytes())?;
    info!("wrote {} clips and {} noise files under {}", clips.len(), noise.len(), a.out.display());
    Ok(())
}

fn cmd_features(a: &FeaturesArgs) -> Result<()> {
    // Only validates the file; the front end itself is not configurable.
    let _ = load_config(a.config.as_deref())?;
    let entries = inputs(&a.input)?;
    let tensors = entries
        .par_iter()
        .map(|e| {
            let audio = read_wav(&e.wav)?;
            let fb = vadkit_core::features::fbank(&audio)?;
            Ok(NamedTensor {
                name: e.id.clone(),
                dims: fb.frames.dims().to_vec(),
                data: fb.frames.data().iter().map(|&v| v as f32).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    weights::save(&tensors, &a.out)
}

/// Sorted distinct non-whitespace characters of the transcripts.
fn build_vocab(texts: &[TranscriptSet]) -> Vec<char> {
    let set: BTreeSet<char> = texts
        .iter()
        .flat_map(|t| t.text.chars())
        .filter(|c| !c.is_whitespace())
        .collect();
    set.into_iter().collect()
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    let entries = labels::read_manifest(&a.manifest)?;
    let segs = labels::read_segments(&a.segments)?;
    let texts = a.transcripts.as_deref().map(labels::read_transcripts).transpose()?;
    let vocab = texts.as_deref().map(build_vocab).unwrap_or_default();
    if !vocab.is_empty() {
        cfg.model.heads.vocab_size = vocab.len();
    }
    let mut model = VadModel::new(cfg.model.clone(), cfg.train.seed)?;
    let mut examples = entries
        .par_iter()
        .map(|e| {
            let audio = read_wav(&e.wav)?;
            let tokens = texts.as_ref().map(|ts| {
                let text = ts.iter().find(|t| t.utterance_id == e.id).map_or("", |t| t.text.as_str());
                synth::tokenize(text, &vocab)
            });
            Ok(train::prepare_example(&model, &audio, labels::segments_for(&segs, &e.id), tokens)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.features.cmvn {
        train::fit_cmvn(&mut model, &mut examples);
    }
    let objective = if a.vad_only { Objective::VadOnly } else { Objective::MultiTask };
    let rep = train::train(&mut model, &examples, &cfg.train, objective)?;
    for (i, l) in rep.epoch_loss.iter().enumerate() {
        debug!("epoch {} loss {l:.6}", i + 1);
    }
    let acc = train::frame_accuracy(&model, &examples)?;
    let bundle = ModelBundle {
        config: cfg,
        model,
        vocab,
    };
    weights::save_bundle(&bundle, &a.out)?;
    let last = rep.epoch_loss.last().copied().unwrap_or(f64::NAN);
    print_stdout(&format!("final_loss = {last:.6}\nframe_accuracy = {:.4}\n", acc))
}

fn segment_offline(model: &VadModel, vad: &VadDecisionConfig, audio: &AudioBuffer) -> Result<Vec<SpeechSegment>> {
    let post = model.posteriors(audio)?;
    Ok(extract_segments(&post, vad, Some(audio.duration_ms()))?)
}

/// Runs the session API over fixed-size chunks, handing each batch of
/// finalized segments to `sink` as soon as it is released.
fn segment_streaming(
    model: &VadModel,
    vad: &VadDecisionConfig,
    audio: &AudioBuffer,
    chunk: usize,
    mut sink: impl FnMut(&[SpeechSegment]) -> Result<()>,
) -> Result<Vec<SpeechSegment>> {
    let mut s = StreamingVad::new(model, vad.clone())?;
    let mut all = Vec::new();
    for c in audio.samples().chunks(chunk.max(1)) {
        let done = s.push(c)?;
        sink(&done)?;
        all.extend(done);
    }
    let done = s.finish()?;
    sink(&done)?;
    all.extend(done);
    Ok(canonicalize(all))
}

fn bundle_with_vad(weights_path: &Path, config: Option<&Path>) -> Result<(ModelBundle, VadDecisionConfig)> {
    let bundle = weights::load_bundle(weights_path)?;
    let vad = match config {
        Some(p) => read_config(p)?.vad,
        None => bundle.config.vad.clone(),
    };
    Ok((bundle, vad))
}

fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    let (bundle, vad) = bundle_with_vad(&a.weights, a.config.as_deref())?;
    let model = &bundle.model;
    if a.streaming && !model.config().encoder.is_streaming() {
        return Err(Error::Usage(format!(
            "encoder `{}` with this configuration cannot stream",
            model.config().encoder.kind()
        )));
    }
    let entries = inputs(&a.input)?;
    let to_stdout = a.out.as_deref().is_none_or(|p| p == Path::new("-"));
    if a.streaming && to_stdout {
        // Line-by-line as segments finalize.
        for e in &entries {
            let audio = read_wav(&e.wav)?;
            segment_streaming(model, &vad, &audio, a.chunk_samples, |segs| {
                let set = SegmentLabelSet {
                    utterance_id: e.id.clone(),
                    segments: segs.to_vec(),
                };
                print_stdout(&labels::format_segments(std::slice::from_ref(&set)))
            })?;
        }
        return Ok(());
    }
    let sets = entries
        .par_iter()
        .map(|e| {
            let audio = read_wav(&e.wav)?;
            let segs = if a.streaming {
                segment_streaming(model, &vad, &audio, a.chunk_samples, |_| Ok(()))?
            } else {
                segment_offline(model, &vad, &audio)?
            };
            debug!("{}: {} segments", e.id, segs.len());
            Ok(SegmentLabelSet {
                utterance_id: e.id.clone(),
                segments: segs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(a.out.as_deref(), &labels::format_segments(&sets))
}

fn cmd_transcribe(a: &TranscribeArgs) -> Result<()> {
    let bundle = weights::load_bundle(&a.weights)?;
    let model = &bundle.model;
    let texts = inputs(&a.input)?
        .par_iter()
        .map(|e| {
            let audio = read_wav(&e.wav)?;
            let text = if vadkit_core::features::frame_count(audio.samples().len()).is_none() {
                String::new()
            } else {
                let fb = vadkit_core::features::fbank(&audio)?;
                let tokens = model.transcribe(&model.encoder_input(&fb)?)?;
                synth::detokenize(&tokens, &bundle.vocab)
            };
            Ok(TranscriptSet {
                utterance_id: e.id.clone(),
                text,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(a.out.as_deref(), &labels::format_transcripts(&texts))
}

/// Per-utterance (id, duration) for scoring. Manifest order wins; otherwise
/// reference order followed by hypothesis-only ids.
fn scoring_utterances(
    manifest: Option<&[ManifestEntry]>,
    reference: &[SegmentLabelSet],
    hyp: &[SegmentLabelSet],
) -> Result<Vec<(String, u64)>> {
    if let Some(m) = manifest {
        return m
            .par_iter()
            .map(|e| Ok((e.id.clone(), read_wav(&e.wav)?.duration_ms())))
            .collect();
    }
    let mut ids: Vec<&str> = Vec::new();
    for s in reference.iter().chain(hyp) {
        if !ids.contains(&s.utterance_id.as_str()) {
            ids.push(&s.utterance_id);
        }
    }
    Ok(ids
        .into_iter()
        .map(|id| {
            let end = labels::segments_for(reference, id)
                .iter()
                .chain(labels::segments_for(hyp, id))
                .map(|s| s.end_ms)
                .max()
                .unwrap_or(0);
            (id.to_string(), end)
        })
        .collect())
}

fn dcf_of(reference: &[SegmentLabelSet], hyp: &[SegmentLabelSet], utts: &[(String, u64)], grid: u64) -> Result<metrics::DcfBreakdown> {
    let aligned = utts
        .iter()
        .map(|(id, dur)| {
            metrics::align_frames(labels::segments_for(reference, id), labels::segments_for(hyp, id), *dur, grid)
                .map_err(|e| Error::Usage(format!("utterance `{id}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(metrics::dcf(&aligned)?)
}

fn cmd_dcf(a: &DcfArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let reference = labels::read_segments(&a.reference)?;
    let hyp = labels::read_segments(&a.hyp)?;
    let manifest = a.manifest.as_deref().map(labels::read_manifest).transpose()?;
    let utts = scoring_utterances(manifest.as_deref(), &reference, &hyp)?;
    let d = dcf_of(&reference, &hyp, &utts, cfg.eval.grid_ms)?;
    print_stdout(&format!(
        "DCF = {:.2}\nP_miss = {:.2}\nP_fa = {:.2}\n",
        d.dcf_pct, d.p_miss_pct, d.p_fa_pct
    ))
}

fn nrr_of(entries: &[ManifestEntry], hyp: &[SegmentLabelSet]) -> Result<f64> {
    let per_file: Vec<&[SpeechSegment]> = entries.iter().map(|e| labels::segments_for(hyp, &e.id)).collect();
    Ok(metrics::nrr(&per_file)?)
}

fn cmd_nrr(a: &NrrArgs) -> Result<()> {
    let entries = labels::read_manifest(&a.manifest)?;
    let hyp = match (&a.hyp, &a.weights) {
        (Some(h), _) => labels::read_segments(h)?,
        (None, Some(w)) => {
            let (bundle, vad) = bundle_with_vad(w, None)?;
            entries
                .par_iter()
                .map(|e| {
                    let audio = read_wav(&e.wav)?;
                    Ok(SegmentLabelSet::new(e.id.clone(), segment_offline(&bundle.model, &vad, &audio)?))
                })
                .collect::<Result<Vec<_>>>()?
        }
        (None, None) => return Err(Error::Usage("eval nrr needs --hyp or --weights".into())),
    };
    print_stdout(&format!("NRR = {:.2}\n", nrr_of(&entries, &hyp)?))
}

/// Reference/hypothesis text pairs in reference order; a missing hypothesis
/// counts as empty.
fn cer_pairs(reference: &[TranscriptSet], hyp: &[TranscriptSet]) -> Vec<(String, String)> {
    reference
        .iter()
        .map(|r| {
            let h = hyp.iter().find(|h| h.utterance_id == r.utterance_id).map_or("", |h| h.text.as_str());
            (r.text.clone(), h.to_string())
        })
        .collect()
}

fn corpus_cer_pct(reference: &[TranscriptSet], hyp: &[TranscriptSet]) -> Result<f64> {
    let pairs = cer_pairs(reference, hyp);
    Ok(metrics::corpus_cer(pairs.iter().map(|(r, h)| (r.as_str(), h.as_str())))?)
}

fn cmd_cer(a: &CerArgs) -> Result<()> {
    let reference = labels::read_transcripts(&a.reference)?;
    let hyp = labels::read_transcripts(&a.hyp)?;
    print_stdout(&format!("CER = {:.2}\n", corpus_cer_pct(&reference, &hyp)?))
}

fn set_metrics(dir: &Path, grid: u64) -> Result<SetMetrics> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Usage(format!("{}: set directory has no name", dir.display())))?;
    let file = |n: &str| Some(dir.join(n)).filter(|p| p.exists());
    let manifest = file("wav.tsv").map(labels::read_manifest).transpose()?;
    let mut row = SetMetrics::named(name);
    match (file("ref.seg"), file("hyp.seg")) {
        (Some(r), Some(h)) => {
            let (reference, hyp) = (labels::read_segments(r)?, labels::read_segments(h)?);
            let utts = scoring_utterances(manifest.as_deref(), &reference, &hyp)?;
            row = row.with_dcf(dcf_of(&reference, &hyp, &utts, grid)?);
        }
        (None, Some(h)) => {
            let entries = manifest
                .as_deref()
                .ok_or_else(|| Error::Usage(format!("{}: a noise-only set needs wav.tsv", dir.display())))?;
            row.nrr_pct = Some(nrr_of(entries, &labels::read_segments(h)?)?);
        }
        _ => {}
    }
    if let (Some(r), Some(h)) = (file("ref.txt"), file("hyp.txt")) {
        row.cer_pct = Some(corpus_cer_pct(&labels::read_transcripts(r)?, &labels::read_transcripts(h)?)?);
    }
    Ok(row)
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let sets = a
        .sets
        .iter()
        .map(|d| set_metrics(d, cfg.eval.grid_ms))
        .collect::<Result<Vec<_>>>()?;
    let baseline = a.baseline_report.as_deref().map(report::read_report).transpose()?;
    let rep = metrics::build_report(sets, baseline.as_ref())?;
    let text = report::format_report(&rep);
    if let Some(p) = &a.out {
        fsutil::write_atomic(p, text.as_bytes())?;
    }
    print_stdout(&if a.tsv { report::format_tsv(&rep) } else { text })
}

fn source_config(s: &ModelSource) -> Result<FileConfig> {
    match (&s.weights, &s.config) {
        (Some(w), _) => Ok(weights::load_bundle(w)?.config),
        (None, c) => load_config(c.as_deref()),
    }
}

fn cmd_size(a: &ModelSource) -> Result<()> {
    let rep = match &a.weights {
        Some(w) => weights::param_size_report(&weights::load(w)?),
        None => {
            let cfg = load_config(a.config.as_deref())?;
            let n = encoder_param_count(&cfg.model.encoder)?;
            weights::SizeReport {
                encoder_params: n,
                bytes: n * 4,
            }
        }
    };
    print_stdout(&format!(
        "encoder_params = {}\nbytes = {}\nMB = {:.2}\nMiB = {:.2}\n",
        rep.encoder_params,
        rep.bytes,
        rep.mb(),
        rep.mib()
    ))
}

fn cmd_latency(a: &ModelSource) -> Result<()> {
    let cfg = source_config(a)?;
    print_stdout(&format!("{}\n", latency_report(&cfg.model.encoder, &cfg.vad)))
}

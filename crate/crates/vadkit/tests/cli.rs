use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vadkit::labels::{format_manifest, format_segments};
use vadkit::wav::write_wav;
use vadkit_core::audio::{SegmentLabelSet, SpeechSegment};
use vadkit_core::synth::noise_clip;

fn vadkit(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vadkit"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("spawn vadkit")
}

fn ok(args: &[&dyn AsRef<std::ffi::OsStr>]) -> String {
    let out = vadkit(args);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

const TINY_DFSMN: &str = "\
[encoder]
type = dfsmn
linear_dim = 16
proj_dim = 32
blocks = 2
lorder = 4

[train]
epochs = 30
learning_rate = 0.05
batch_size = 4
";

const TINY_RWKV: &str = "\
[encoder]
type = rwkv
conv_channels = 4
dim = 12
ffn_dim = 24
blocks = 2

[train]
epochs = 1
";

/// Synthesizes a small corpus and trains `config` on it.
fn trained(dir: &Path, config: &str) -> PathBuf {
    let data = dir.join("data");
    ok(&[&"synth", &"--out", &data, &"--clips", &"24", &"--noise", &"4", &"--seed", &"5"]);
    let cfg = write(&dir.join("model.cfg"), config);
    let weights = dir.join("model.vadw");
    let out = ok(&[
        &"train",
        &"--manifest",
        &data.join("train.tsv"),
        &"--segments",
        &data.join("train.seg"),
        &"--transcripts",
        &data.join("train.txt"),
        &"--config",
        &cfg,
        &"--out",
        &weights,
        &"--jobs",
        &"2",
    ]);
    assert!(out.contains("frame_accuracy = "), "{out}");
    weights
}

#[test]
fn nrr_over_four_noise_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = Vec::new();
    for i in 0..4 {
        let c = noise_clip(format!("n{i}"), 1000, i).unwrap();
        let rel = format!("n{i}.wav");
        write_wav(dir.path().join(&rel), &c.audio).unwrap();
        manifest.push((c.id, rel));
    }
    let m = write(&dir.path().join("noise.tsv"), &format_manifest(&manifest));
    let hyp = write(
        &dir.path().join("hyp.seg"),
        &format_segments(&[SegmentLabelSet::new("n2", vec![SpeechSegment::new(100, 400)])]),
    );
    assert_eq!(ok(&[&"eval", &"nrr", &"--manifest", &m, &"--hyp", &hyp]), "NRR = 75.00\n");
}

#[test]
fn segment_then_score_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let weights = trained(dir.path(), TINY_DFSMN);
    let data = dir.path().join("data");
    let hyp = dir.path().join("hyp.seg");
    ok(&[&"segment", &"--weights", &weights, &"--input", &data.join("train.tsv"), &"--out", &hyp]);
    let text = std::fs::read_to_string(&hyp).unwrap();
    assert!(!text.is_empty());
    let out = ok(&[&"eval", &"dcf", &"--ref", &hyp, &"--hyp", &hyp, &"--manifest", &data.join("train.tsv")]);
    assert!(out.starts_with("DCF = 0.00\n"), "{out}");

    // the trained toy model also tracks the true labels
    let out = ok(&[&"eval", &"dcf", &"--ref", &data.join("train.seg"), &"--hyp", &hyp, &"--manifest", &data.join("train.tsv")]);
    let dcf: f64 = out.lines().next().unwrap().trim_start_matches("DCF = ").parse().unwrap();
    assert!(dcf < 20.0, "{out}");
}

#[test]
fn streaming_files_are_byte_identical_to_offline() {
    for (name, cfg) in [("dfsmn", TINY_DFSMN), ("rwkv", TINY_RWKV)] {
        let dir = tempfile::tempdir().unwrap();
        let weights = trained(dir.path(), cfg);
        let manifest = dir.path().join("data/train.tsv");
        let offline = dir.path().join("offline.seg");
        ok(&[&"segment", &"--weights", &weights, &"--input", &manifest, &"--out", &offline]);
        for chunk in ["1", "333", "16000"] {
            let online = dir.path().join(format!("online{chunk}.seg"));
            ok(&[
                &"segment",
                &"--weights",
                &weights,
                &"--input",
                &manifest,
                &"--out",
                &online,
                &"--streaming",
                &"--chunk-samples",
                &chunk,
            ]);
            assert_eq!(std::fs::read(&offline).unwrap(), std::fs::read(&online).unwrap(), "{name} chunk {chunk}");
        }
        // line-by-line stdout output carries the same segments
        let stdout = ok(&[&"segment", &"--weights", &weights, &"--input", &manifest, &"--streaming"]);
        assert_eq!(stdout, std::fs::read_to_string(&offline).unwrap(), "{name}");
    }
}

#[test]
fn offline_only_model_refuses_streaming() {
    let dir = tempfile::tempdir().unwrap();
    let weights = trained(
        dir.path(),
        "[encoder]\ntype = sanm\ndim = 8\nffn_dim = 8\nheads = 2\nblocks = 1\nlmem = 1\nrmem = 1\n[train]\nepochs = 1\n",
    );
    let out = vadkit(&[&"segment", &"--weights", &weights, &"--input", &dir.path().join("data/train.tsv"), &"--streaming"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("sanm"), "{err}");
}

#[test]
fn errors_are_one_line_and_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("bad.cfg"), "[encoder]\ntype = dfsmn\n\nlorder = 3\nwidth = 9\n");
    let out = vadkit(&[&"latency", &"--config", &cfg]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("bad.cfg:5:"), "{err}");
    assert!(out.stdout.is_empty());

    let out = vadkit(&[&"eval", &"cer", &"--ref", &dir.path().join("missing.txt"), &"--hyp", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("missing.txt"));
}

#[test]
fn size_and_latency_of_defaults() {
    let out = ok(&[&"size"]);
    let mb: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("MB = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((17.0..=31.0).contains(&mb), "{out}");
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("off.cfg"), "[encoder]\ntype = dfsmn\nrorder = 10\n[vad]\nsmoothing = trailing\n");
    assert_eq!(
        ok(&[&"latency", &"--config", &cfg]),
        "encoder=dfsmn model_lookahead_ms=2000 smoothing_delay_ms=0 endpoint_delay_ms=300\n"
    );
}

#[test]
fn report_with_baseline_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mk = |name: &str, files: &[(&str, &str)]| {
        let d = dir.path().join(name);
        std::fs::create_dir_all(&d).unwrap();
        for (f, text) in files {
            write(&d.join(f), text);
        }
        d
    };
    // without wav.tsv an utterance ends at its last segment, so u2 supplies the non-speech frames
    let clean = mk(
        "clean",
        &[
            ("ref.seg", "u1\t0\t500\nu2\t900\t1000\n"),
            ("hyp.seg", "u1\t0\t400\nu2\t900\t1000\n"),
            ("ref.txt", "u1\tabcd\n"),
            ("hyp.txt", "u1\tabc\n"),
        ],
    );
    let base = dir.path().join("base.report");
    ok(&[&"eval", &"report", &"--set", &clean, &"--out", &base]);
    write(&clean.join("hyp.seg"), "u1\t0\t500\nu2\t900\t1000\n");
    write(&clean.join("hyp.txt"), "u1\tabcd\n");
    let tsv = ok(&[&"eval", &"report", &"--set", &clean, &"--baseline-report", &base, &"--tsv"]);
    let rows: Vec<&str> = tsv.lines().collect();
    assert_eq!(rows.len(), 3, "{tsv}");
    assert!(rows[0].starts_with("set\tdcf_pct"));
    let avg: Vec<&str> = rows[2].split('\t').collect();
    assert_eq!(avg[0], "AVG");
    assert_eq!(avg[1], "0.00");
    assert_eq!(avg[6], "-100.0");
}

#[test]
fn features_dump_is_a_weight_container() {
    let dir = tempfile::tempdir().unwrap();
    let c = noise_clip("x", 500, 1).unwrap();
    let wav = dir.path().join("x.wav");
    write_wav(&wav, &c.audio).unwrap();
    let out = dir.path().join("x.feats");
    ok(&[&"features", &"--input", &wav, &"--out", &out]);
    let t = vadkit::weights::load(&out).unwrap();
    assert_eq!(t.len(), 1);
    assert_eq!((t[0].name.as_str(), t[0].dims.as_slice()), ("x", &[48usize, 80][..]));
}

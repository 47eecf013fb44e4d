//! Command-line behaviour through `cli::run`.

use std::path::Path;

use beta_dereverb::audio::{read_wav, write_wav};
use beta_dereverb::cli::run;
use beta_dereverb::experiments::{apply_reverb, speech_like, synth_rir};
use beta_dereverb::model::FactorDump;

fn args(dir: &Path, list: &[&str]) -> Vec<String> {
    let d = dir.to_str().unwrap();
    std::iter::once("beta-dereverb".to_string())
        .chain(list.iter().map(|a| a.replace("{}", d)))
        .collect()
}

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let clean = speech_like(1.0, 16_000, 4).unwrap();
    let rir = synth_rir(0.3, 0.5, 16_000, 4).unwrap();
    write_wav(&clean, dir.path().join("clean.wav")).unwrap();
    write_wav(&apply_reverb(&clean, &rir).unwrap(), dir.path().join("in.wav")).unwrap();
    dir
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn dereverb_writes_audio_factors_trace_and_report() {
    let dir = fixture();
    let d = dir.path();
    let code = run(args(
        d,
        &[
            "--trace={}/trace.csv", "dereverb", "{}/in.wav", "{}/out.wav", "--atoms", "12", "--kernel-frames", "6",
            "--dump-factors", "{}/f", "--report", "{}/r.json",
        ],
    ));
    assert_eq!(code, 0);
    let input = read_wav(d.join("in.wav")).unwrap();
    let output = read_wav(d.join("out.wav")).unwrap();
    assert_eq!(input.len(), output.len());
    assert_eq!(output.sample_rate, 16_000);

    let dump = FactorDump::read(d.join("f/factors.json")).unwrap();
    assert_eq!((dump.k, dump.j, dump.m), (257, 12, 6));
    assert_eq!(dump.w.len(), dump.k * dump.j);
    assert_eq!(dump.u.len(), dump.j * dump.n);
    assert_eq!(dump.h.len(), dump.k * dump.m);

    let trace = std::fs::read_to_string(d.join("trace.csv")).unwrap();
    assert!(trace.starts_with("stage,iteration,cost\n1,0,"));
    assert!(trace.contains("\n2,0,"));

    let report = json(d.join("r.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["config"]["atoms"], 12);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = fixture();
    let d = dir.path();
    std::fs::write(d.join("c.toml"), "atoms = 10\nkernel_frames = 5\nlambda_u_rule = \"recording\"\n").unwrap();
    let code = run(args(
        d,
        &["dereverb", "{}/in.wav", "{}/out.wav", "--config", "{}/c.toml", "--atoms", "9", "--report", "{}/r.json"],
    ));
    assert_eq!(code, 0);
    let report = json(d.join("r.json"));
    assert_eq!(report["config"]["atoms"], 9);
    assert_eq!(report["config"]["kernel_frames"], 5);
    assert_eq!(report["config"]["lambda_u_rule"], "recording");
    assert_eq!(report["config"]["beta1"], 0.75);
}

#[test]
fn recording_mode_with_highpass_runs() {
    let dir = fixture();
    let d = dir.path();
    let code = run(args(d, &["dereverb", "{}/in.wav", "{}/out.wav", "--mode", "recording", "--highpass", "--atoms", "8"]));
    assert_eq!(code, 0);
    assert!(read_wav(d.join("out.wav")).unwrap().samples.iter().all(|s| s.is_finite()));
}

#[test]
fn metrics_json_on_identical_files() {
    let dir = fixture();
    let d = dir.path();
    assert_eq!(run(args(d, &["metrics", "{}/clean.wav", "{}/clean.wav", "--output", "{}/m.json"])), 0);
    let m = json(d.join("m.json"));
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["fwssnr"], 35.0);
    assert_eq!(m["cepstral_distance"], 0.0);
    assert!(m.get("fwssnr_frames").is_none());
}

#[test]
fn quick_grid_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(args(d, &["beta-grid", "--quick", "--png", "--output-dir", "{}"])), 0);
    let csv = std::fs::read_to_string(d.join("beta_grid.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "beta1,beta_star,mean_cepstral_distance");
    assert_eq!(rows.len() - 1, 16);
    assert_eq!(json(d.join("beta_grid.json"))["schema_version"], 1);
    let png = image::open(d.join("beta_grid.png")).unwrap();
    assert_eq!(png.width(), png.height());
}

#[test]
fn custom_grid_axes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = run(args(
        d,
        &["beta-grid", "--quick", "--beta1-axis", "0.5,1", "--beta-star-axis", "1,1.5,2", "--output-dir", "{}"],
    ));
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(d.join("beta_grid.csv")).unwrap();
    assert_eq!(csv.lines().count() - 1, 6);
}

#[test]
fn quick_benchmark_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(args(d, &["benchmark", "--quick", "--png", "--t60", "0,0.4", "--output-dir", "{}"])), 0);
    let report = json(d.join("benchmark.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["conditions"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(d.join("benchmark.csv")).unwrap().lines().count() > 1);
    assert!(d.join("benchmark.png").exists());
}

#[test]
fn benchmark_from_wav_directory() {
    let dir = fixture();
    let d = dir.path();
    std::fs::create_dir(d.join("corpus")).unwrap();
    std::fs::copy(d.join("clean.wav"), d.join("corpus/a.wav")).unwrap();
    let code = run(args(d, &["benchmark", "--quick", "--wav-dir", "{}/corpus", "--output-dir", "{}/out"]));
    assert_eq!(code, 0);
    let report = json(d.join("out/benchmark.json"));
    assert_eq!(report["conditions"][0]["trials"].as_array().unwrap().len(), 1);
}

#[test]
fn spectrogram_csv_and_png_shapes() {
    let dir = fixture();
    let d = dir.path();
    assert_eq!(run(args(d, &["spectrogram", "{}/in.wav", "--csv", "{}/s.csv", "--png", "{}/s.png"])), 0);
    let csv = std::fs::read_to_string(d.join("s.csv")).unwrap();
    let png = image::open(d.join("s.png")).unwrap();
    assert_eq!(png.height(), 257);
    assert!(csv.lines().count() >= 257);
}

#[test]
fn exit_codes() {
    let dir = fixture();
    let d = dir.path();
    assert_eq!(run(args(d, &["dereverb", "{}/in.wav"])), 1);
    assert_eq!(run(args(d, &["dereverb", "{}/in.wav", "{}/o.wav", "--beta2", "-0.5"])), 1);
    assert_eq!(run(args(d, &["dereverb", "{}/in.wav", "{}/o.wav", "--kernel-frames", "0"])), 1);
    assert_eq!(run(args(d, &["dereverb", "{}/in.wav", "{}/o.wav", "--mode", "live"])), 1);
    std::fs::write(d.join("bad.toml"), "atoms = \"many\"\n").unwrap();
    assert_eq!(run(args(d, &["dereverb", "{}/in.wav", "{}/o.wav", "--config", "{}/bad.toml"])), 1);
    assert_eq!(run(args(d, &["benchmark", "--quick", "--t60", "-1", "--output-dir", "{}"])), 1);

    assert_eq!(run(args(d, &["dereverb", "{}/missing.wav", "{}/o.wav"])), 2);
    std::fs::write(d.join("junk.wav"), b"not a wav file").unwrap();
    assert_eq!(run(args(d, &["metrics", "{}/junk.wav", "{}/clean.wav"])), 2);
    let short = beta_dereverb::audio::AudioSignal::new(vec![0.1; 100], 16_000).unwrap();
    write_wav(&short, d.join("short.wav")).unwrap();
    assert_eq!(run(args(d, &["dereverb", "{}/short.wav", "{}/o.wav"])), 2);
}

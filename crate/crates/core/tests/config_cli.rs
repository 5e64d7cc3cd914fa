use std::fs;
use std::path::Path;
use std::process::Command;

use jopeq::codec::Baseline;
use jopeq::config::{resolve_gamma, ExperimentConfig, GammaRule};
use jopeq::flsim::MechanismConfig;
use jopeq::lattice::LatticeFamily;
use jopeq::privacy::{solve_t_params, MechanismKind, UNIT_BALL_SENSITIVITY};
use jopeq::sweep::{run_sweep, snr_sweep, CURVE_SCHEMA, SNR_SCHEMA};
use jopeq::Error;

const BIN: &str = env!("CARGO_BIN_EXE_jopeq");

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig { rounds: 15, ..Default::default() };
    cfg.sweep.rates = vec![1, 2, 3];
    cfg.sweep.epsilons = vec![4.0];
    cfg.sweep.snr_dim = 60;
    cfg.sweep.snr_rounds = 2;
    cfg.sweep.snr_repeats = 1;
    cfg
}

#[test]
fn text_format_round_trips() {
    let mut cfg = small();
    cfg.set("lattice.family", "hex").unwrap();
    cfg.set("lattice.rate", "3").unwrap();
    cfg.set("fl.schedule", "fixed:0.05").unwrap();
    cfg.set("mechanism.kind", "multivariate-t").unwrap();
    cfg.set("run.jobs", "2").unwrap();
    let back: ExperimentConfig = cfg.to_text().parse().unwrap();
    assert_eq!(back, cfg);
    let def: ExperimentConfig = ExperimentConfig::default().to_text().parse().unwrap();
    assert_eq!(def, ExperimentConfig::default());
}

#[test]
fn parser_handles_comments_users_and_errors() {
    let cfg: ExperimentConfig = "# header\ntask.samples = 50\ntask.users = 4  # trailing\n\nfl.rounds=7\n".parse().unwrap();
    assert_eq!(cfg.task.samples, vec![50; 4]);
    assert_eq!(cfg.rounds, 7);
    let cfg: ExperimentConfig = "sweep.baselines = all\nlattice.gamma = auto\n".parse().unwrap();
    assert_eq!(cfg.sweep.baselines, Baseline::ALL.to_vec());
    assert_eq!(cfg.gamma, GammaRule::Auto);

    for bad in [
        "nope.key = 1",
        "fl.rounds",
        "fl.rounds = many",
        "fl.tau = 0",
        "mechanism.epsilon = -1",
        "lattice.family = cubic",
        "sweep.rates = ",
        "task.samples = 5,0,5",
        "fl.schedule = sometimes",
        "lattice.family = square\nmechanism.nu = 2",
    ] {
        assert!(
            matches!(bad.parse::<ExperimentConfig>(), Err(Error::Config(_) | Error::InfeasibleParameters(_))),
            "{bad:?} accepted"
        );
    }
}

#[test]
fn gamma_rule_examples() {
    let lap = MechanismConfig { kind: MechanismKind::Laplace, epsilon: 3.0, nu: 3.0 };
    assert_eq!(resolve_gamma(GammaRule::Auto, LatticeFamily::Scalar, 4, 4.0, &lap).unwrap(), 8.25);
    assert_eq!(resolve_gamma(GammaRule::Auto, LatticeFamily::Scalar, 1, 0.5, &lap).unwrap(), 4.0);
    assert_eq!(resolve_gamma(GammaRule::Fixed(1.25), LatticeFamily::Hexagonal, 4, 4.0, &lap).unwrap(), 1.25);
    let t = MechanismConfig { kind: MechanismKind::MultivariateT, epsilon: 3.0, nu: 3.0 };
    let s2 = solve_t_params(3.0, 2, UNIT_BALL_SENSITIVITY, 3.0).unwrap();
    let got = resolve_gamma(GammaRule::Auto, LatticeFamily::Square, 6, 3.0, &t).unwrap();
    assert!((got - 1.5 * (1.0 + 3.0 * s2)).abs() < 1e-9, "{got}");
    assert!((got - 209.58).abs() < 0.01, "{got}");
}

#[test]
fn auto_mechanism_follows_lattice_dimension() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.mechanism_kind(LatticeFamily::Scalar), MechanismKind::Laplace);
    assert_eq!(cfg.mechanism_kind(LatticeFamily::Hexagonal), MechanismKind::MultivariateT);
}

#[test]
fn sweep_output_is_independent_of_worker_count() {
    let mut a = small();
    a.jobs = Some(1);
    let mut b = small();
    b.jobs = Some(3);
    let (ra, rb) = (run_sweep(&a).unwrap(), run_sweep(&b).unwrap());
    assert_eq!(ra.snr_csv(), rb.snr_csv());
    assert_eq!(ra.curve_csv(), rb.curve_csv());
    assert_eq!(ra.summary_json().unwrap(), rb.summary_json().unwrap());
    assert_eq!(ra.snr.len(), 3 * Baseline::ALL.len());
    assert!(ra.snr_csv().starts_with(SNR_SCHEMA));
    assert!(ra.curve_csv().starts_with(CURVE_SCHEMA));
    assert_eq!(ra.curve_csv().lines().count(), 2 + Baseline::ALL.len() * 15);
    let plain = ra.snr.iter().find(|p| p.baseline == Baseline::Plain).unwrap();
    assert_eq!(plain.snr_db, f64::INFINITY);
    assert!(ra.snr_csv().contains(",plain,inf,0"));
}

#[test]
fn snr_rises_with_rate_for_quantizing_baselines() {
    let mut cfg = ExperimentConfig::default();
    cfg.sweep.epsilons = vec![3.0, 4.0];
    cfg.sweep.baselines = vec![Baseline::SdqOnly, Baseline::Separate, Baseline::Jopeq, Baseline::PpnOnly];
    cfg.sweep.snr_rounds = 5;
    cfg.sweep.snr_repeats = 2;
    let pts = snr_sweep(&cfg).unwrap();
    for &eps in &cfg.sweep.epsilons {
        for &b in &cfg.sweep.baselines {
            let curve: Vec<f64> = (1..=8)
                .map(|r| pts.iter().find(|p| p.rate == r && p.epsilon == eps && p.baseline == b).unwrap().snr_db)
                .collect();
            // the privacy noise is fixed, so these two only fluctuate around a level
            let slack = if matches!(b, Baseline::Jopeq | Baseline::PpnOnly) { 0.25 } else { 0.0 };
            for w in curve.windows(2) {
                assert!(w[1] >= w[0] - slack, "{} eps={eps}: {curve:?}", b.name());
            }
        }
    }
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let p = dir.join("exp.cfg");
    let text = format!(
        "fl.rounds = 12\nsweep.rates = 1,2\nsweep.epsilons = 4\nsweep.snr_dim = 40\nsweep.snr_rounds = 2\nsweep.snr_repeats = 1\n{extra}"
    );
    fs::write(&p, text).unwrap();
    p
}

fn jopeq(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).env_remove("JOPEQ_CONFIG").env_remove("JOPEQ_OUT").output().unwrap()
}

#[test]
fn cli_run_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("run");
    let o = jopeq(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# jopeq-metrics v1"));
    assert!(lines.next().unwrap().starts_with("round,t,loss_gap"));
    assert_eq!(lines.count(), 12);
    assert!(out.join("sampler.txt").exists());

    // same seed, same bytes
    let out2 = dir.path().join("run2");
    let o = jopeq(&["run", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(csv, fs::read_to_string(out2.join("metrics.csv")).unwrap());
}

#[test]
fn cli_sweep_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("sweep");
    let o = Command::new(BIN)
        .args(["sweep", "--config", cfg.to_str().unwrap()])
        .env("JOPEQ_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["snr.csv", "curve.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["snr"].as_array().unwrap().len(), 2 * Baseline::ALL.len());
}

#[test]
fn cli_codec_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fl.baseline = sdq-only\nlattice.rate = 8\n");
    let input = dir.path().join("h.txt");
    let h = [0.3, -0.1, 0.05, 0.0, 0.2, -0.25, 0.125];
    fs::write(&input, h.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")).unwrap();
    let (enc, dec) = (dir.path().join("h.bin"), dir.path().join("h.out"));
    let c = cfg.to_str().unwrap();
    let o = jopeq(&["codec", "encode", "--config", c, "--input", input.to_str().unwrap(), "--output", enc.to_str().unwrap(), "--user", "3", "--round", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = jopeq(&["codec", "decode", "--config", c, "--input", enc.to_str().unwrap(), "--output", dec.to_str().unwrap(), "--user", "3", "--round", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let back: Vec<f64> = fs::read_to_string(&dec).unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(back.len(), h.len());
    // half a step of 2γ/2^R, γ = 2R + 1/ε, mapped back through ζ
    let zeta = 7f64.sqrt() / (3.0 * h.iter().map(|v| v * v).sum::<f64>().sqrt());
    let step = 2.0 * (16.0 + 1.0 / 3.0) / 256.0;
    for (a, b) in back.iter().zip(&h) {
        assert!((a - b).abs() <= step / (2.0 * zeta) + 1e-12, "{a} vs {b}");
    }
    // the dither is keyed by (user, round)
    let o = jopeq(&["codec", "decode", "--config", c, "--input", enc.to_str().unwrap(), "--output", dec.to_str().unwrap(), "--user", "4", "--round", "5"]);
    assert!(o.status.success());
    let other: Vec<f64> = fs::read_to_string(&dec).unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_ne!(other, back);
}

#[test]
fn cli_reports_errors_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "fl.rounds = -3\n").unwrap();
    let o = jopeq(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fl.rounds"));
    let o = jopeq(&["run", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let garbage = dir.path().join("g.bin");
    fs::write(&garbage, [0u8]).unwrap();
    let o = jopeq(&["codec", "decode", "--input", garbage.to_str().unwrap(), "--output", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cli_verify_single_criterion() {
    let o = jopeq(&["verify", "--only", "1", "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS"), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");
}

use std::path::PathBuf;

use frame_denoise::signals::{make_signal, read_signal_csv, SignalName};

fn fixture(name: &str, n: usize) -> Vec<f64> {
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(format!("{name}_{n}.csv"));
    read_signal_csv(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn check(name: SignalName, n: usize) {
    let expected = fixture(name.as_str(), n);
    let got = make_signal(name, n).unwrap();
    assert_eq!(got.len(), expected.len());
    let worst = got.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{} n={n}: max deviation {worst:e}", name.as_str());
}

#[test]
fn mishmash_matches_reference() {
    check(SignalName::MishMash, 1280);
    check(SignalName::MishMash, 1024);
}

#[test]
fn werner_sorrows_matches_reference() {
    check(SignalName::WernerSorrows, 1280);
    check(SignalName::WernerSorrows, 1024);
}

#[test]
fn lo_sine_matches_reference() {
    check(SignalName::LoSine, 1280);
    check(SignalName::LoSine, 1024);
}

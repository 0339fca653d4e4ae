//! Criteria 1 to 10 against the committed calibration constants.

use std::path::Path;

use torus_walk::calibration::{calibrate, Constants};
use torus_walk::verify::{run_suite, Suite, VerifyOptions};

fn constants() -> Constants {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../calibration/constants.toml");
    if path.exists() {
        Constants::load(&path).expect("constants file is readable and untampered")
    } else {
        calibrate().expect("calibration sweep").constants
    }
}

#[test]
fn acceptance() {
    let opts = VerifyOptions::default();
    let report = run_suite(Suite::All, &opts, &constants()).unwrap();
    for c in &report.criteria {
        println!("{}", c.summary_line());
        if let Some(note) = &c.notes {
            println!("    note: {note}");
        }
    }
    let failed: Vec<u32> = report
        .criteria
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.id)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

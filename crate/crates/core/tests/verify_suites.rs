use std::time::Instant;

use consol_lab::verify::{run_suite, Suite};

#[test]
fn every_suite_passes_quickly() {
    for suite in Suite::ALL {
        let start = Instant::now();
        let report = run_suite(suite, 7).unwrap();
        print!("{report}");
        assert!(report.passed(), "{suite} failed:\n{report}");
        assert!(start.elapsed().as_secs() < 60, "{suite} took {:?}", start.elapsed());
    }
}

#![no_main]

use libfuzzer_sys::fuzz_target;

use dfe_core::parse_results_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_results_csv(data) {
        for row in rows {
            // The parser enforces finite floats and a consistent
            // residual column.
            assert!(row.estimate.is_finite());
            assert_eq!(row.residual, row.estimate - row.true_fidelity);
        }
    }
});

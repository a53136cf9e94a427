#![no_main]

use libfuzzer_sys::fuzz_target;

use dfe_core::CoefficientTable;

fuzz_target!(|data: &[u8]| {
    // Arbitrary bytes must parse cleanly or fail cleanly.
    if let Ok(table) = CoefficientTable::from_csv_bytes(data) {
        // Accepted tables serialize and parse back to themselves.
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let again = CoefficientTable::from_csv_bytes(&buf).unwrap();
        assert_eq!(again, table);
    }
});

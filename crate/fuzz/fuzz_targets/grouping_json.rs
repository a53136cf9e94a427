#![no_main]

use libfuzzer_sys::fuzz_target;

use dfe_core::Grouping;

fuzz_target!(|data: &[u8]| {
    if let Ok(grouping) = Grouping::from_json_bytes(data) {
        // Accepted documents satisfy the grouping invariants other than
        // total normalization (arbitrary subsets need not sum to 1), and
        // they round-trip.
        for group in grouping.groups() {
            assert!(group.is_pairwise_commuting(grouping.mode()).unwrap());
            let (sq, l1) = group.recompute_norms();
            assert!((sq - group.norm_sq()).abs() <= 1e-12);
            assert!((l1 - group.norm_l1()).abs() <= 1e-12);
        }
        let json = grouping.to_json();
        assert_eq!(
            Grouping::from_json_bytes(json.as_bytes()).unwrap(),
            grouping
        );
    }
});

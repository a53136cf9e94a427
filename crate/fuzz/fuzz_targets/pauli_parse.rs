#![no_main]

use libfuzzer_sys::fuzz_target;

use dfe_core::PauliString;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Must never panic, and printing must invert parsing.
    if let Ok(pauli) = text.parse::<PauliString>() {
        let printed = pauli.to_string();
        assert_eq!(printed, text);
        assert_eq!(printed.parse::<PauliString>().unwrap(), pauli);
    }
});

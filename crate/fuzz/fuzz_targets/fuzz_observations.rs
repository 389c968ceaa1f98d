#![no_main]

use adjoint_pde::Observations;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(obs) = Observations::from_csv(text) {
        let back = Observations::from_csv(&obs.to_csv()).expect("round trip");
        assert_eq!(back.states.len(), obs.states.len());
    }
});

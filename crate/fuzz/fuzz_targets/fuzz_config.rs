#![no_main]

use adjoint_pde::config::parse_pairs;
use adjoint_pde::{ExampleId, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_pairs(text);
    for ex in ExampleId::ALL {
        if let Ok(cfg) = ExperimentConfig::load(ex, Some(text), &[]) {
            // a loaded config must survive its own serialization
            let again = ExperimentConfig::load(ex, Some(&cfg.to_text()), &[]).expect("round trip");
            assert_eq!(again.to_text(), cfg.to_text());
        }
    }
});

#![no_main]

use adjoint_pde::config::parse_override;
use adjoint_pde::{ExampleId, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let overrides: Vec<String> = text.split('\n').map(str::to_owned).collect();
    for o in &overrides {
        let _ = parse_override(o);
    }
    let _ = ExperimentConfig::load(ExampleId::Ex1, None, &overrides);
    let _ = ExperimentConfig::load(ExampleId::Ex9, None, &overrides);
});

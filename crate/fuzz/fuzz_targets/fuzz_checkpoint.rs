#![no_main]

use adjoint_pde_core::surrogate::Mlp;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = Mlp::from_json(text) {
        assert_eq!(net.params().len(), Mlp::param_count(net.layers()));
        let _ = Mlp::from_json(&net.to_json()).expect("round trip");
    }
});

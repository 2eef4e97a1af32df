#![no_main]
use libfuzzer_sys::fuzz_target;
use pim_gemv::e2e::parse_catalog;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(models) = parse_catalog(text) {
        for m in &models {
            m.validate().unwrap();
            for s in m.layer_gemvs().iter().chain([&m.lm_head()]) {
                assert!(s.m > 0 && s.k > 0);
            }
        }
    }
});

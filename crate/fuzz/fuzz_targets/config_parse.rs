#![no_main]
use libfuzzer_sys::fuzz_target;
use pim_gemv::config::SystemConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = SystemConfig::parse(text) {
        // Anything accepted must stay valid on re-check.
        cfg.validate().unwrap();
    }
});

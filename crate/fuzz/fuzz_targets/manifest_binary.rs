#![no_main]
use libfuzzer_sys::fuzz_target;
use pim_gemv::planner::manifest::Manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Manifest::from_bytes(data) {
        assert_eq!(m.to_bytes(), data);
    }
});

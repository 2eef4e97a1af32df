#![no_main]
use libfuzzer_sys::fuzz_target;
use pim_gemv::planner::manifest::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::from_json(text) {
        // The binary form drops fields JSON may carry (output scale bits), so
        // compare encodings rather than structs.
        let bytes = m.to_bytes();
        assert_eq!(Manifest::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
});

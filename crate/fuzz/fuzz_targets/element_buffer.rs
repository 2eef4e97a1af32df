#![no_main]
use libfuzzer_sys::fuzz_target;
use pim_gemv::codec;

// First byte picks the width, the rest is the packed buffer.
fuzz_target!(|data: &[u8]| {
    let Some((&sel, bytes)) = data.split_first() else { return };
    let bits = [4, 8, 16, 3][sel as usize % 4];
    if let Ok(vals) = codec::decode_all(bytes, bits) {
        assert_eq!(codec::encode(&vals, bits).unwrap(), bytes);
        let n = vals.len();
        assert_eq!(codec::decode(bytes, bits, n).unwrap(), vals);
    }
    let _ = codec::decode_i64(bytes);
});

#![no_main]
use frontalize::metrics::similarity::parse_remote_score;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(body) = serde_json::from_slice::<serde_json::Value>(data) else { return };
    if let Ok(score) = parse_remote_score(&body) {
        assert!((0.0..=100.0).contains(&score));
    }
});

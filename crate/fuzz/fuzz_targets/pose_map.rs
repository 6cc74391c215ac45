#![no_main]
use frontalize::data::{PoseMap, Side};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(map) = PoseMap::parse(text) else { return };
    // Every accepted code must resolve, with angle and side agreeing.
    for code in map.codes() {
        let label = map.parse_code(code).expect("listed code resolves");
        assert!((0.0..=90.0).contains(&label.angle_degrees));
        assert_eq!(label.angle_degrees == 0.0, label.side == Side::Frontal);
    }
});

#![no_main]
use frontalize::data::DatasetManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = DatasetManifest::from_jsonl(text) {
        let again = m.to_jsonl();
        let back = DatasetManifest::from_jsonl(&again).expect("re-serialized manifest parses");
        assert_eq!(back.to_jsonl(), again);
    }
});

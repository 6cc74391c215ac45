#![no_main]
use frontalize::losses::Preset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = Preset::parse(text) {
        let back = Preset::parse(&p.to_text()).expect("rendered preset parses");
        assert_eq!(back.to_text(), p.to_text());
    }
});

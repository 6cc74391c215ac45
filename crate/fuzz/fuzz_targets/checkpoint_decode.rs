#![no_main]
use frontalize::nn::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        let back = Checkpoint::decode(&ck.encode()).expect("re-encoded checkpoint decodes");
        assert_eq!(back.encode(), ck.encode());
    }
});

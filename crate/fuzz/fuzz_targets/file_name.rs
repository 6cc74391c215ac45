#![no_main]
use frontalize::data::manifest::DEFAULT_FILENAME_PATTERN;
use frontalize::data::{parse_file_name, PoseMap};
use libfuzzer_sys::fuzz_target;
use regex::RegexBuilder;

// First line is the pattern, the rest is the file name. Without a usable
// pattern line the default corpus pattern is used.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (pat, name) = text.split_once('\n').unwrap_or((DEFAULT_FILENAME_PATTERN, text));
    let Ok(re) = RegexBuilder::new(pat).size_limit(1 << 16).build() else { return };
    let _ = parse_file_name(&re, name, &PoseMap::color_feret());
});

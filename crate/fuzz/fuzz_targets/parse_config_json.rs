#![no_main]

use libfuzzer_sys::fuzz_target;
use opgp::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_json_str(text) {
        let _ = cfg.build();
    }
});

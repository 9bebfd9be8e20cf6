#![no_main]

use libfuzzer_sys::fuzz_target;
use opgp::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = ExperimentConfig::from_toml_str(text) else {
        return;
    };
    if let Ok(exp) = cfg.build() {
        assert_eq!(exp.functionals().len(), exp.values().len());
        assert!(exp.values().iter().all(|v| v.is_finite()));
    }
    // Whatever parsed must survive a round trip through the serializer.
    if let Ok(again) = cfg.to_toml_string() {
        let reparsed = ExperimentConfig::from_toml_str(&again).expect("serialized config must parse");
        assert_eq!(reparsed.batches.len(), cfg.batches.len());
    }
});

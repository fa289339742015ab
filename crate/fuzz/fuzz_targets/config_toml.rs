//! Fuzzes the pipeline configuration loader: must never panic on arbitrary
//! TOML, and any accepted config must survive a serialize -> parse round trip.
#![no_main]
use libfuzzer_sys::fuzz_target;
use strokegen::config::PipelineConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = PipelineConfig::from_toml(data) {
        let text = cfg.to_toml().expect("accepted config serializes");
        PipelineConfig::from_toml(&text).expect("serialized config re-parses");
    }
});

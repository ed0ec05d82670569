#![no_main]
use libfuzzer_sys::fuzz_target;

use diddml_cli::config::RunConfig;

// Config parsing must reject malformed TOML with an error, never a panic;
// configs that parse must re-serialize.
fuzz_target!(|data: &str| {
    if let Ok(cfg) = RunConfig::from_toml_str(data) {
        let _ = cfg.to_toml();
    }
});

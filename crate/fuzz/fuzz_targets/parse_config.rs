//! Fuzz the TOML run-config parser and model construction: arbitrary input
//! must produce either a validated config or a structured error, never a
//! panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = halfstrip::config::parse_config(text) {
            // A config that validates must also build its model.
            let _ = halfstrip::config::build_model(&config.model);
        }
    }
});

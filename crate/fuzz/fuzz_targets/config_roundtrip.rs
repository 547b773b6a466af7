//! Render-parse stability: any config that parses must re-parse from its
//! canonical rendering to an equal value.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = halfstrip::config::parse_config(text) {
            let rendered =
                halfstrip::config::render_config(&config).expect("valid configs render");
            let reparsed = halfstrip::config::parse_config(&rendered)
                .expect("rendered configs re-parse");
            assert_eq!(config, reparsed);
        }
    }
});

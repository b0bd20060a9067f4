use odmr_core::io_formats::ConfigDoc;
use serde_json::Value;

/// Key prefixes each subcommand reads.
const READS: &[(&str, &[&str])] = &[
    (
        "spectrum",
        &[
            "spin.", "field.bx_t", "field.by_t", "sample_preset", "lineshape.", "drive.",
            "lockin.mod_freq_hz", "lockin.time_constant_s", "sweep.dwell_s", "noise.shot_noise", "spectrum.",
        ],
    ),
    (
        "simulate",
        &[
            "spin.", "field.", "sample_preset", "lineshape.", "detector.", "drive.", "lockin.mod_freq_hz",
            "lockin.sample_rate_hz", "lockin.time_constant_s", "lockin.filter_order", "lockin.ref_phase_rad",
            "sweep.", "noise.shot_noise",
        ],
    ),
    (
        "fit",
        &["spin.g_factor", "spin.hyperfine_offset_hz", "spin.hyperfine_rel_amp", "lineshape.hyperfine", "detector."],
    ),
    (
        "map",
        &[
            "spin.", "field.", "sample_preset", "lineshape.", "detector.", "lockin.mod_freq_hz",
            "lockin.sample_rate_hz", "lockin.time_constant_s", "lockin.filter_order", "lockin.ref_phase_rad",
            "sweep.", "noise.shot_noise", "map.",
        ],
    ),
    (
        "steps",
        &["spin.", "field.", "sample_preset", "lineshape.", "detector.", "drive.", "lockin.", "schedule.", "noise."],
    ),
];

fn flatten(prefix: &str, v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        _ => out.push(prefix.to_owned()),
    }
}

/// Every key of the configuration document, dotted.
pub fn config_keys() -> Vec<String> {
    let mut doc = ConfigDoc::default();
    doc.resolve().expect("defaults are valid");
    let mut keys = Vec::new();
    flatten("", &doc.snapshot(), &mut keys);
    keys.sort();
    keys
}

/// Config keys read by `command`, sorted.
pub fn keys_for(command: &str) -> Vec<String> {
    let prefixes = READS
        .iter()
        .find(|(name, _)| *name == command)
        .map_or(&[][..], |(_, p)| p);
    config_keys()
        .into_iter()
        .filter(|k| {
            prefixes
                .iter()
                .any(|p| if p.ends_with('.') { k.starts_with(p) } else { k == p })
        })
        .collect()
}

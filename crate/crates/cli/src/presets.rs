/// A config shipped with the binary.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    /// Subcommand the preset is written for.
    pub command: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

macro_rules! preset {
    ($name:literal, $command:literal, $summary:literal) => {
        Preset {
            name: $name,
            command: $command,
            summary: $summary,
            text: include_str!(concat!("../../../presets/", $name, ".toml")),
        }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("catrot-entropy", "estimate", "unstable entropy of cat x rotation"),
    preset!("catrot-cocycle-neg", "estimate", "cocycle exponent -1, pressure 0"),
    preset!("cocycle-line", "sweep", "cocycle exponents on the line (1 + t) log lambda"),
    preset!("variational", "verify", "variational certificate with Haar and the center circle"),
    preset!("definition-equivalence", "verify", "packing, covering and greedy rows bracket each other"),
    preset!("oracle-suite", "oracle", "interval DPs against brute force"),
    preset!("shift-law", "verify", "pressure laws, exact rows and estimates"),
    preset!("power-rule", "verify", "pressure of the square against twice the pressure"),
    preset!("stage-limit", "verify", "additive stage pressures decrease to the estimate"),
    preset!("log-sum", "verify", "random log-sum inequality instances"),
    preset!("cover-pressure", "verify", "open-cover pressure sub-additivity"),
    preset!("delta-independence", "sweep", "estimates at two leaf radii"),
    preset!("perturbed-entropy", "verify", "perturbed system against its linear part"),
    preset!("fixed-point-gap", "verify", "cat map with a fixed point only"),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

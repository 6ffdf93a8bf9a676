//! Built-in scenarios, one per regime of the contraction estimates.

pub const NAMES: [&str; 6] = [
    "finite-speed-burgers",
    "linear-duhamel-cauchy",
    "linear-duhamel-heat",
    "stefan-tempered-headline",
    "stefan-local-headline",
    "burgers-fractional",
];

pub fn text(name: &str) -> Option<&'static str> {
    Some(match name {
        "finite-speed-burgers" => include_str!("../presets/finite-speed-burgers.toml"),
        "linear-duhamel-cauchy" => include_str!("../presets/linear-duhamel-cauchy.toml"),
        "linear-duhamel-heat" => include_str!("../presets/linear-duhamel-heat.toml"),
        "stefan-tempered-headline" => include_str!("../presets/stefan-tempered-headline.toml"),
        "stefan-local-headline" => include_str!("../presets/stefan-local-headline.toml"),
        "burgers-fractional" => include_str!("../presets/burgers-fractional.toml"),
        _ => return None,
    })
}

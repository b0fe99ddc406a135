//! The benchmark sketches shipped with the crate.

use crate::lang::{parse_sketch, MechanismSketch, SketchError};

/// `(file stem, source)` for every shipped sketch, in table order.
pub const SOURCES: [(&str, &str); 9] = [
    ("sum", include_str!("../../../benchmarks/sum.dpm")),
    ("histogram", include_str!("../../../benchmarks/histogram.dpm")),
    ("noisymax1", include_str!("../../../benchmarks/noisymax1.dpm")),
    ("noisymax2", include_str!("../../../benchmarks/noisymax2.dpm")),
    ("expnoisymax", include_str!("../../../benchmarks/expnoisymax.dpm")),
    ("abovet1", include_str!("../../../benchmarks/abovet1.dpm")),
    ("abovet2", include_str!("../../../benchmarks/abovet2.dpm")),
    ("svt", include_str!("../../../benchmarks/svt.dpm")),
    ("smartsum", include_str!("../../../benchmarks/smartsum.dpm")),
];

pub fn source(stem: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(s, _)| s.eq_ignore_ascii_case(stem)).map(|(_, src)| *src)
}

/// Parses a shipped sketch by file stem or mechanism name.
pub fn load(name: &str) -> Option<Result<MechanismSketch, SketchError>> {
    let stem = name.to_ascii_lowercase();
    source(&stem).map(parse_sketch)
}

//! The two sort3 listings shipped with the crate.

/// 14 instructions with a loop; sorts under signed order.
pub const LISTING1: &str = include_str!("../../assets/listing1.s");

/// 15 instructions, branchless; its carry-flag index chain sorts under
/// unsigned order.
pub const LISTING2: &str = include_str!("../../assets/listing2.s");

/// Looks up an embedded listing by file or short name.
pub fn embedded(name: &str) -> Option<&'static str> {
    match name {
        "listing1.s" | "listing1" => Some(LISTING1),
        "listing2.s" | "listing2" => Some(LISTING2),
        _ => None,
    }
}

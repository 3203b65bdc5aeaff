//! Built-in test systems.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::system::{BranchSource, MarkovSystem, SystemSpec};

fn branch(expr: &str, lo: usize, hi: usize) -> BranchSource {
    BranchSource { expr: expr.to_string(), image: [lo, hi] }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn doubling_spec(roof: &str) -> SystemSpec {
    SystemSpec {
        partition: vec![0.0, 0.5, 1.0],
        branches: vec![branch("2*x", 0, 2), branch("2*x-1", 0, 2)],
        roof: strings(&[roof]),
        potential: strings(&["0"]),
        alpha: 1.0,
    }
}

fn three_element_spec(roof: &str) -> SystemSpec {
    SystemSpec {
        partition: vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
        branches: vec![branch("3*x", 0, 3), branch("2*x-1/3", 1, 3), branch("2*x-4/3", 0, 2)],
        roof: strings(&[roof]),
        potential: strings(&["0"]),
        alpha: 1.0,
    }
}

/// Specification of a named preset.
pub fn spec(name: &str) -> Option<SystemSpec> {
    Some(match name {
        "SYS-A" => doubling_spec("1"),
        "SYS-B" => doubling_spec("(2+cos(2*pi*x))/3"),
        "SYS-C" => three_element_spec("1"),
        "SYS-C-NL" => three_element_spec("(2+sin(2*pi*x))/3"),
        "DOUBLING-LINEAR" => doubling_spec("1-x/2"),
        "BERNOULLI" => {
            let mut s = doubling_spec("1");
            s.potential = strings(&["log(0.3)", "log(0.7)"]);
            s
        }
        _ => return None,
    })
}

/// Names accepted by [`spec`].
pub const NAMES: [&str; 6] = ["SYS-A", "SYS-B", "SYS-C", "SYS-C-NL", "DOUBLING-LINEAR", "BERNOULLI"];

fn build(name: &str) -> MarkovSystem {
    spec(name).expect("known preset").build().expect("preset builds")
}

/// Doubling map, zero potential, unit roof.
pub fn sys_a() -> MarkovSystem {
    build("SYS-A")
}

/// Doubling map with roof `(2 + cos 2 pi x)/3`.
pub fn sys_b() -> MarkovSystem {
    build("SYS-B")
}

/// Three-element map that is Markov but not full branch, unit roof.
pub fn sys_c() -> MarkovSystem {
    build("SYS-C")
}

/// [`sys_c`] with roof `(2 + sin 2 pi x)/3`.
pub fn sys_c_nl() -> MarkovSystem {
    build("SYS-C-NL")
}

/// Doubling map with roof `1 - x/2`, cohomologous to a step function.
pub fn doubling_linear_roof() -> MarkovSystem {
    build("DOUBLING-LINEAR")
}

/// Doubling map with the Bernoulli(0.3, 0.7) potential.
pub fn bernoulli() -> MarkovSystem {
    build("BERNOULLI")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for name in NAMES {
            spec(name).unwrap().build().unwrap().validate(2048).unwrap();
        }
        assert!(spec("SYS-Z").is_none());
    }
}

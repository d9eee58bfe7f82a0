#![allow(dead_code)]

use crossbif::poincare::Hamiltonian;
use crossbif::ShearFamily;

/// `g = eps q - q^2`.
pub fn transcritical() -> ShearFamily {
    ShearFamily::shear(&[(1, 1, 1.0), (2, 0, -1.0)])
}

/// `g = eps q - q^3`.
pub fn fork() -> ShearFamily {
    ShearFamily::shear(&[(1, 1, 1.0), (3, 0, -1.0)])
}

/// `g = q^2 + eps^2`.
pub fn definite() -> ShearFamily {
    ShearFamily::shear(&[(2, 0, 1.0), (0, 2, 1.0)])
}

/// `g = eps - q^2`.
pub fn rank2() -> ShearFamily {
    ShearFamily::shear(&[(0, 1, 1.0), (2, 0, -1.0)])
}

/// `g = eps q - q^2 + 0.3 q^3`.
pub fn transcritical_cubic() -> ShearFamily {
    ShearFamily::shear(&[(1, 1, 1.0), (2, 0, -1.0), (3, 0, 0.3)])
}

/// `g = eps q - 2 q^3`.
pub fn fork_scaled() -> ShearFamily {
    ShearFamily::shear(&[(1, 1, 1.0), (3, 0, -2.0)])
}

pub fn builtins() -> Vec<(&'static str, ShearFamily)> {
    vec![
        ("transcritical", transcritical()),
        ("fork", fork()),
        ("definite", definite()),
        ("rank2", rank2()),
        ("transcritical_cubic", transcritical_cubic()),
        ("fork_scaled", fork_scaled()),
    ]
}

pub const DEMO_LAMBDA: f64 = 1.0;
pub const DEMO_OMEGA: f64 = 1.1;
pub const DEMO_ALPHA: f64 = 1.5;
pub const DEMO_E_REF: f64 = 0.2;

pub fn demo() -> Hamiltonian {
    Hamiltonian::demo(DEMO_LAMBDA, DEMO_OMEGA, DEMO_ALPHA)
}

/// `V = x^2/2 + y^2/2`.
pub fn decoupled() -> Hamiltonian {
    Hamiltonian::new(crossbif::poly::Polynomial::new([([2, 0], 0.5), ([0, 2], 0.5)])).unwrap()
}

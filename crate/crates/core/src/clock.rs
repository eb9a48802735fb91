//! Time source abstraction.
//!
//! The core has no access to a system clock. Solvers that report wall time or
//! honor time limits take a [`Clock`]; the std companion crate supplies one
//! backed by `std::time::Instant`.

/// Monotonic seconds since an arbitrary origin.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// A clock that never advances. Time limits are never hit and every reported
/// duration is zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn seconds(&self) -> f64 {
        (**self).seconds()
    }
}

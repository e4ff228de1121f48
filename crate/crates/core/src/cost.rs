//! Multiply-add counter used for measured FLOP figures.
//!
//! Kernels report the number of real multiply-adds they execute. Only
//! linear-algebra work is counted: convolutions, matrix products, filter-bank
//! taps and FFT butterflies. Elementwise nonlinearities, normalization and
//! softmax are not counted. One complex multiply counts as 4 multiply-adds.
//! Reported FLOPs are `2 * multadds`.
//!
//! The counter is thread-local, so measurements of work done on one thread
//! are never polluted by another.

use std::cell::Cell;

thread_local! {
    static MULTADDS: Cell<u64> = const { Cell::new(0) };
}

/// FLOPs per counted multiply-add.
pub const FLOPS_PER_MULTADD: u64 = 2;

#[inline]
pub fn record(multadds: u64) {
    MULTADDS.with(|c| c.set(c.get().wrapping_add(multadds)));
}

/// Runs `f` and returns its result along with the multiply-adds it executed.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = MULTADDS.with(|c| c.get());
    let out = f();
    let after = MULTADDS.with(|c| c.get());
    (out, after.wrapping_sub(before))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_measurements() {
        let ((_, inner), outer) = measure(|| {
            record(3);
            measure(|| record(5))
        });
        assert_eq!(inner, 5);
        assert_eq!(outer, 8);
    }
}

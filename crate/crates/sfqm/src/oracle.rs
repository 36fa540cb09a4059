//! Brute-force cross-check: composes one explicit 2x2 matrix per barrier
//! over the full layout, never touching the Chebyshev/Bloch closed forms.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::geometry::{build_layout_with_max, PotentialSpec};
use crate::scalar::Scalar;
use crate::scattering::{
    barrier_matrix, scattering_coefficients, ScatteringResult, TransferMatrix, WaveContext,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedBarrier<S> {
    pub start: S,
    pub width: S,
    pub height: S,
}

/// Transfer matrix of the same barrier translated to start at `x0`:
/// `D M D^-1` with `D = diag(e^{-i k x0}, e^{i k x0})`.
pub fn shift_matrix<S: Scalar>(
    m: &TransferMatrix<S>,
    ctx: &WaveContext<S>,
    x0: S,
) -> TransferMatrix<S> {
    let d2 = Complex::from_polar(S::one(), -(ctx.k_free + ctx.k_free) * x0);
    TransferMatrix { m11: m.m11, m12: m.m12 * d2, m21: m.m21 * d2.finv(), m22: m.m22 }
}

pub fn brute_force_matrix<S: Scalar>(
    barriers: &[PlacedBarrier<S>],
    ctx: &WaveContext<S>,
) -> Result<TransferMatrix<S>> {
    let mut end = S::neg_infinity();
    let mut total = TransferMatrix::identity();
    for b in barriers {
        if !(b.width > S::zero()) {
            return Err(Error::InvalidInput(format!("barrier width must be > 0; got {}", b.width)));
        }
        if b.start < end {
            return Err(Error::InvalidInput(format!(
                "barriers overlap or are unsorted near x = {}",
                b.start
            )));
        }
        end = b.start + b.width;
        let m = shift_matrix(&barrier_matrix(ctx, b.height, b.width)?, ctx, b.start);
        total = total.mul(&m);
    }
    Ok(total)
}

/// Scattering result from the raw left-to-right matrix product.
pub fn brute_force_transmission<S: Scalar>(
    barriers: &[PlacedBarrier<S>],
    ctx: &WaveContext<S>,
) -> Result<ScatteringResult<S>> {
    scattering_coefficients(&brute_force_matrix(barriers, ctx)?)
}

/// Expands a spec into placed barriers and runs the brute-force product.
pub fn oracle_transmission<S: Scalar>(
    spec: &PotentialSpec<S>,
    ctx: &WaveContext<S>,
) -> Result<ScatteringResult<S>> {
    brute_force_transmission(&placed_barriers(spec)?, ctx)
}

pub fn placed_barriers<S: Scalar>(spec: &PotentialSpec<S>) -> Result<Vec<PlacedBarrier<S>>> {
    let layout = build_layout_with_max(spec, 20)?;
    Ok(layout
        .segments
        .iter()
        .map(|&(a, b)| PlacedBarrier { start: a, width: b - a, height: layout.height })
        .collect())
}

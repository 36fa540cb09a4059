//! Transfer-matrix scattering for the fractional Schrödinger equation.
//!
//! Plane waves `e^{±ikx}` outside the barriers, `e^{±iqx}` inside, matched by
//! continuity of the wavefunction and its derivative. A stage-`G` layout is a
//! depth-`G` super-periodic system with every repetition count equal to 2, so
//! its transmission collapses to the Bloch-phase product
//! `T_G = 1 / (1 + 4^G |m12|^2 prod zeta_i^2)`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::geometry::{
    barrier_height, gap_length, segment_length, spacing, PotentialSpec,
};
use crate::scalar::{lit, Scalar};

/// How the free-space wavevector relates to energy.
///
/// `Fractional` uses the Levy dispersion `E = D_a hbar^a k^a` and propagates
/// plane waves with the given `k`. `Quadratic` reads `k` as a standard-QM
/// wavevector (`E = k^2`) and converts to the fractional plane-wave number
/// `k_a = (E / D_a hbar^a)^{1/a}`; the two agree at `alpha = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dispersion {
    #[default]
    Fractional,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveContext<S> {
    pub alpha: S,
    pub k: S,
    pub d_alpha: S,
    pub hbar: S,
    pub dispersion: Dispersion,
    /// Energy implied by `k` under the chosen dispersion.
    pub energy: S,
    /// Plane-wave wavevector outside the barriers.
    pub k_free: S,
}

impl<S: Scalar> WaveContext<S> {
    pub fn new(alpha: S, k: S) -> Result<Self> {
        Self::with_dispersion(alpha, k, Dispersion::Fractional)
    }

    pub fn with_dispersion(alpha: S, k: S, dispersion: Dispersion) -> Result<Self> {
        Self::full(alpha, k, S::one(), S::one(), dispersion)
    }

    pub fn full(alpha: S, k: S, d_alpha: S, hbar: S, dispersion: Dispersion) -> Result<Self> {
        if !(alpha > S::one() && alpha <= lit(2.0)) {
            return Err(Error::InvalidInput(format!("alpha must lie in (1, 2]; got {alpha}")));
        }
        if !(k > S::zero()) {
            return Err(Error::InvalidInput(format!("k must be > 0; got {k}")));
        }
        if !(d_alpha > S::zero()) || !(hbar > S::zero()) {
            return Err(Error::InvalidInput("d_alpha and hbar must be > 0".into()));
        }
        let scale = d_alpha * hbar.powf(alpha);
        let (energy, k_free) = match dispersion {
            Dispersion::Fractional => (scale * k.powf(alpha), k),
            Dispersion::Quadratic => {
                let energy = k * k;
                (energy, (energy / scale).powf(alpha.recip()))
            }
        };
        Ok(Self { alpha, k, d_alpha, hbar, dispersion, energy, k_free })
    }
}

/// In-barrier wavevector `q` solving `D_a hbar^a q^a = E - V` on the
/// principal branch: real for `E > V`, `|V-E|^{1/a} e^{i pi/a}` for `E < V`
/// (which is `i kappa` at `alpha = 2`), zero at `E = V`.
pub fn wavevector_inside<S: Scalar>(ctx: &WaveContext<S>, v: S) -> Complex<S> {
    let scale = ctx.d_alpha * ctx.hbar.powf(ctx.alpha);
    let diff = (ctx.energy - v) / scale;
    let inv_alpha = ctx.alpha.recip();
    if diff > S::zero() {
        Complex::new(diff.powf(inv_alpha), S::zero())
    } else if diff < S::zero() {
        Complex::from_polar((-diff).powf(inv_alpha), S::PI() * inv_alpha)
    } else {
        Complex::new(S::zero(), S::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix<S> {
    pub m11: Complex<S>,
    pub m12: Complex<S>,
    pub m21: Complex<S>,
    pub m22: Complex<S>,
}

impl<S: Scalar> TransferMatrix<S> {
    pub fn identity() -> Self {
        let one = Complex::new(S::one(), S::zero());
        let zero = Complex::new(S::zero(), S::zero());
        Self { m11: one, m12: zero, m21: zero, m22: one }
    }

    pub fn det(&self) -> Complex<S> {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    /// `self * rhs`; with amplitudes ordered left-to-right this composes
    /// `rhs`'s region to the right of `self`'s.
    pub fn mul(&self, rhs: &Self) -> Self {
        Self {
            m11: self.m11 * rhs.m11 + self.m12 * rhs.m21,
            m12: self.m11 * rhs.m12 + self.m12 * rhs.m22,
            m21: self.m21 * rhs.m11 + self.m22 * rhs.m21,
            m22: self.m21 * rhs.m12 + self.m22 * rhs.m22,
        }
    }

    /// Largest deviation from the unit-determinant and conjugate-symmetry
    /// identities; meaningful when `q` is real or purely imaginary.
    pub fn invariant_residual(&self) -> S {
        let det = (self.det() - Complex::new(S::one(), S::zero())).norm();
        let conj = (self.m11 - self.m22.conj()).norm().max((self.m21 - self.m12.conj()).norm());
        let norm = (self.m22.norm_sqr() - self.m12.norm_sqr() - S::one()).abs();
        det.max(conj).max(norm)
    }
}

/// Transfer matrix of a rectangular barrier of height `v` on `[0, b]`.
pub fn barrier_matrix<S: Scalar>(ctx: &WaveContext<S>, v: S, b: S) -> Result<TransferMatrix<S>> {
    if !(b > S::zero()) {
        return Err(Error::InvalidInput(format!("barrier width must be > 0; got {b}")));
    }
    if v == S::zero() {
        // free propagation; identity exactly, not up to rounding in q = k
        return Ok(TransferMatrix::identity());
    }
    let k = ctx.k_free;
    let q = wavevector_inside(ctx, v);
    let i = Complex::new(S::zero(), S::one());
    let qb = q * b;
    // sin(qb)/q with the removable q -> 0 singularity expanded
    let sinc = if qb.norm() < lit(1e-4) {
        let qb2 = qb * qb;
        (Complex::new(S::one(), S::zero()) - qb2 / lit::<S>(6.0)
            + qb2 * qb2 / lit::<S>(120.0))
            * b
    } else {
        qb.sin() / q
    };
    let cos = qb.cos();
    let half = lit::<S>(0.5);
    // u sin(qb) and v sin(qb) with u = (q/k + k/q)/2, v = (k/q - q/k)/2
    let us = (q * q * sinc / k + sinc * k) * half;
    let vs = (sinc * k - q * q * sinc / k) * half;
    let phase = Complex::from_polar(S::one(), k * b);
    Ok(TransferMatrix {
        m11: phase * (cos - i * us),
        m12: i * vs * phase.conj(),
        m21: -(i * vs * phase),
        m22: phase.conj() * (cos + i * us),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringResult<S> {
    pub t: Complex<S>,
    pub r: Complex<S>,
    pub transmission: S,
    pub reflection: S,
}

pub fn scattering_coefficients<S: Scalar>(m: &TransferMatrix<S>) -> Result<ScatteringResult<S>> {
    if m.m22.norm() == S::zero() {
        return Err(Error::Invariant("transfer matrix has m22 = 0".into()));
    }
    let t = m.m22.finv();
    let r = -(m.m21 / m.m22);
    Ok(ScatteringResult { t, r, transmission: t.norm_sqr(), reflection: r.norm_sqr() })
}

/// Chebyshev polynomial of the second kind by forward recurrence;
/// `U_{-1} = 0`, `U_0 = 1`.
pub fn chebyshev_u<S: Scalar>(n: i64, x: S) -> S {
    if n < 0 {
        return S::zero();
    }
    let mut prev = S::zero();
    let mut cur = S::one();
    let two_x = lit::<S>(2.0) * x;
    for _ in 0..n {
        let next = two_x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Bloch phase `zeta = Re[m22] cos(ks) - Im[m22] sin(ks)` of the infinite
/// periodic extension of the unit cell `m` repeated with spacing `s`.
pub fn bloch_phase<S: Scalar>(m: &TransferMatrix<S>, ctx: &WaveContext<S>, s: S) -> S {
    let ks = ctx.k_free * s;
    m.m22.re * ks.cos() - m.m22.im * ks.sin()
}

/// Closed form for the unit cell `m` repeated `n` times with spacing `s`.
pub fn periodic_matrix<S: Scalar>(
    m: &TransferMatrix<S>,
    n: u32,
    ctx: &WaveContext<S>,
    s: S,
) -> Result<TransferMatrix<S>> {
    if n < 1 {
        return Err(Error::InvalidInput("repetition count must be >= 1".into()));
    }
    if !(s > S::zero()) {
        return Err(Error::InvalidInput(format!("spacing must be > 0; got {s}")));
    }
    let zeta = bloch_phase(m, ctx, s);
    let u1 = Complex::new(chebyshev_u(n as i64 - 1, zeta), S::zero());
    let u2 = Complex::new(chebyshev_u(n as i64 - 2, zeta), S::zero());
    let ks = ctx.k_free * s;
    let e = Complex::from_polar(S::one(), ks);
    let e_n = Complex::from_polar(S::one(), ks * lit(n as f64));
    let e_n1 = Complex::from_polar(S::one(), ks * lit((n - 1) as f64));
    Ok(TransferMatrix {
        m11: (m.m11 * e.conj() * u1 - u2) * e_n,
        m12: m.m12 * u1 * e_n1.conj(),
        m21: m.m21 * u1 * e_n1,
        m22: (m.m22 * e * u1 - u2) * e_n.conj(),
    })
}

/// `eta_1(j) = -(l_G + g_{G-j+1})`, via the family closed forms where they
/// exist.
pub fn eta1<S: Scalar>(spec: &PotentialSpec<S>, j: u32) -> Result<S> {
    use crate::geometry::{q_pochhammer, PotentialFamily};
    if j == 0 || j > spec.stage {
        return Err(Error::InvalidInput(format!("eta1 index j={j} out of range 1..={}", spec.stage)));
    }
    let g = spec.stage;
    match spec.family {
        PotentialFamily::Cantor => {
            let x = (spec.rho - S::one()) / (lit::<S>(2.0) * spec.rho);
            Ok(-(x.powi(g as i32) + x.powi((g - j) as i32) / spec.rho) * spec.length)
        }
        PotentialFamily::Svc => {
            let inv_rho = spec.rho.recip();
            let a = spec.length / lit::<S>(2f64.powi(g as i32)) * q_pochhammer(inv_rho, inv_rho, g);
            let b = spec.length / lit::<S>(2f64.powi((g - j) as i32))
                * q_pochhammer(inv_rho, inv_rho, g - j)
                * spec.rho.powi(-((g - j + 1) as i32));
            Ok(-(a + b))
        }
        PotentialFamily::General { .. } => {
            Ok(-(segment_length(spec) + gap_length(spec, g - j + 1)?))
        }
    }
}

/// `eta_2(j, r) = eta_1(j) - eta_1(r) = g_{G-r+1} - g_{G-j+1}`; negative for
/// `r < j`.
pub fn eta2<S: Scalar>(spec: &PotentialSpec<S>, j: u32, r: u32) -> Result<S> {
    if r > j {
        return Err(Error::InvalidInput(format!("eta2 requires r <= j; got j={j}, r={r}")));
    }
    Ok(eta1(spec, j)? - eta1(spec, r)?)
}

/// Bloch-phase sequence by the level-by-level recursion
/// `(m22)_j = 2 (m22)_{j-1} zeta_j e^{-i k s_j} - e^{-2 i k s_j}`.
pub fn zeta_sequence_recursive<S: Scalar>(
    spec: &PotentialSpec<S>,
    ctx: &WaveContext<S>,
) -> Result<Vec<S>> {
    Ok(compose(spec, ctx)?.zetas)
}

/// Same sequence by the closed series form in `eta_1`, `eta_2`:
/// `zeta_j = 2^{j-1}|m22| cos(phi - k eta_1(j)) prod zeta_p
///  - sum_r 2^{j-r-1} cos(k eta_2(j,r)) prod_{p>r} zeta_p`.
pub fn zeta_sequence_series<S: Scalar>(
    spec: &PotentialSpec<S>,
    ctx: &WaveContext<S>,
) -> Result<Vec<S>> {
    let unit = unit_cell(spec, ctx)?;
    let modulus = unit.m22.norm();
    let phi = unit.m22.arg();
    let k = ctx.k_free;
    let g = spec.stage as usize;
    let mut zetas: Vec<S> = Vec::with_capacity(g);
    for j in 1..=spec.stage {
        let mut lead = modulus * (phi - k * eta1(spec, j)?).cos();
        for &z in &zetas {
            lead = lead * lit::<S>(2.0) * z;
        }
        let mut value = lead;
        for r in 1..j {
            let mut term = (k * eta2(spec, j, r)?).cos();
            for &z in &zetas[r as usize..] {
                term = term * lit::<S>(2.0) * z;
            }
            value = value - term;
        }
        zetas.push(value);
    }
    Ok(zetas)
}

/// Unit cell of the stage-`G` composition: one barrier of width `l_G` and
/// height `V_G`.
fn unit_cell<S: Scalar>(spec: &PotentialSpec<S>, ctx: &WaveContext<S>) -> Result<TransferMatrix<S>> {
    barrier_matrix(ctx, barrier_height(spec), segment_length(spec))
}

struct Composition<S> {
    zetas: Vec<S>,
    /// ln of `4^G |m12|^2 prod zeta_i^2`, i.e. `ln(1/T - 1)`.
    ln_p: S,
    /// Final transfer matrix up to an overall positive rescaling (enough for
    /// the phases of `t` and the ratio `r = -m21/m22`).
    matrix: TransferMatrix<S>,
}

/// Runs the recursion once, tracking the Bloch phases, the log-domain
/// transmission product, and the (rescaled) full matrix together.
fn compose<S: Scalar>(spec: &PotentialSpec<S>, ctx: &WaveContext<S>) -> Result<Composition<S>> {
    let unit = unit_cell(spec, ctx)?;
    let g = spec.stage;
    let m12_norm = unit.m12.norm();
    let mut ln_p = if m12_norm > S::zero() {
        lit::<S>(4f64.ln()) * lit(g as f64) + lit::<S>(2.0) * m12_norm.ln()
    } else {
        S::neg_infinity()
    };
    let mut matrix = unit;
    let mut log_scale = S::zero();
    let mut zetas = Vec::with_capacity(g as usize);
    let two = lit::<S>(2.0);
    for j in 1..=g {
        let s = spacing(spec, j)?;
        let ks = ctx.k_free * s;
        // Bloch phase of the current (scaled) cell; the true value carries
        // the accumulated scale.
        let zeta_hat = matrix.m22.re * ks.cos() - matrix.m22.im * ks.sin();
        zetas.push(zeta_hat * log_scale.exp());
        ln_p = ln_p + two * (zeta_hat.abs().ln() + log_scale);
        // n = 2 closed form, factored as e^{2 log_scale} * (products - shrunk
        // additive term); the additive e^{+-2iks} piece underflows harmlessly
        // once the scale is large.
        let e = Complex::from_polar(S::one(), ks);
        let e2 = e * e;
        let zc = Complex::new(two * zeta_hat, S::zero());
        let shrink = (-two * log_scale).exp();
        let next = TransferMatrix {
            m11: matrix.m11 * zc * e - e2 * shrink,
            m12: matrix.m12 * zc * e.conj(),
            m21: matrix.m21 * zc * e,
            m22: matrix.m22 * zc * e.conj() - e2.conj() * shrink,
        };
        let norm = next
            .m11
            .norm()
            .max(next.m12.norm())
            .max(next.m21.norm())
            .max(next.m22.norm());
        if norm > S::zero() && norm.is_finite() {
            let inv = norm.recip();
            matrix = TransferMatrix {
                m11: next.m11 * inv,
                m12: next.m12 * inv,
                m21: next.m21 * inv,
                m22: next.m22 * inv,
            };
            log_scale = two * log_scale + norm.ln();
        } else {
            matrix = next;
            log_scale = two * log_scale;
        }
    }
    Ok(Composition { zetas, ln_p, matrix })
}

/// `-ln T` for the full stage-`G` potential, exact in the log domain so deep
/// valleys below double-precision underflow stay finite.
pub fn neg_ln_transmission<S: Scalar>(spec: &PotentialSpec<S>, ctx: &WaveContext<S>) -> Result<S> {
    let ln_p = if spec.stage == 0 {
        let unit = unit_cell(spec, ctx)?;
        let n = unit.m12.norm();
        if n > S::zero() { lit::<S>(2.0) * n.ln() } else { S::neg_infinity() }
    } else {
        compose(spec, ctx)?.ln_p
    };
    Ok(neg_ln_from_lnp(ln_p))
}

/// `-ln T = ln(1 + P) = ln(1 + e^{ln P})`
fn neg_ln_from_lnp<S: Scalar>(ln_p: S) -> S {
    if ln_p == S::neg_infinity() {
        S::zero()
    } else if ln_p > lit(700.0) {
        ln_p
    } else {
        ln_p.exp().ln_1p()
    }
}

/// `(T, R)` with both values computed in the log domain, so `R` keeps full
/// relative accuracy even when `T` is within an ulp of 1.
pub fn transmission_pair<S: Scalar>(
    spec: &PotentialSpec<S>,
    ctx: &WaveContext<S>,
) -> Result<(S, S)> {
    let ln_p = if spec.stage == 0 {
        let n = unit_cell(spec, ctx)?.m12.norm();
        if n > S::zero() { lit::<S>(2.0) * n.ln() } else { S::neg_infinity() }
    } else {
        compose(spec, ctx)?.ln_p
    };
    let neg_ln = neg_ln_from_lnp(ln_p);
    // T = 1/(1+P), R = P/(1+P)
    Ok(((-neg_ln).exp(), (ln_p - neg_ln).exp()))
}

/// `-log10 T`; the saturation diagnostic takes `log10` of this.
pub fn neg_log10_transmission<S: Scalar>(
    spec: &PotentialSpec<S>,
    ctx: &WaveContext<S>,
) -> Result<S> {
    Ok(neg_ln_transmission(spec, ctx)? / lit::<S>(10f64.ln()))
}

/// Full scattering result for the stage-`G` potential. `transmission` and
/// `reflection` come from the log-domain product; `t` and `r` keep the
/// phases of the composed matrix.
pub fn transmission<S: Scalar>(
    spec: &PotentialSpec<S>,
    ctx: &WaveContext<S>,
) -> Result<ScatteringResult<S>> {
    if spec.stage == 0 {
        return scattering_coefficients(&unit_cell(spec, ctx)?);
    }
    let comp = compose(spec, ctx)?;
    let t_mag = (-neg_ln_from_lnp(comp.ln_p) * lit::<S>(0.5)).exp();
    let m22 = comp.matrix.m22;
    if m22.norm() == S::zero() {
        return Err(Error::Invariant("composed transfer matrix has m22 = 0".into()));
    }
    let t = Complex::from_polar(t_mag, -m22.arg());
    let r = -(comp.matrix.m21 / m22);
    let transmission = t_mag * t_mag;
    Ok(ScatteringResult { t, r, transmission, reflection: S::one() - transmission })
}

/// Transmission of a general super-periodic arrangement: the unit cell `m`
/// repeated `ns[0]` times with spacing `ss[0]`, that block repeated `ns[1]`
/// times with spacing `ss[1]`, and so on.
pub fn transmission_general<S: Scalar>(
    m: &TransferMatrix<S>,
    ns: &[u32],
    ss: &[S],
    ctx: &WaveContext<S>,
) -> Result<S> {
    if ns.len() != ss.len() {
        return Err(Error::InvalidInput(format!(
            "repetition and spacing lists differ in length: {} vs {}",
            ns.len(),
            ss.len()
        )));
    }
    let mut current = *m;
    let mut product = S::one();
    for (&n, &s) in ns.iter().zip(ss) {
        let zeta = bloch_phase(&current, ctx, s);
        product = product * chebyshev_u(n as i64 - 1, zeta);
        current = periodic_matrix(&current, n, ctx, s)?;
    }
    let p = m.m12.norm_sqr() * product * product;
    Ok((S::one() + p).recip())
}

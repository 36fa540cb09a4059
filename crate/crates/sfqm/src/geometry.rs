//! Cantor-family barrier layouts.
//!
//! A stage-`G` potential starts from a single barrier on `[0, L]` and removes
//! a middle fraction from every remaining segment at each stage. The removed
//! fraction at stage `j` is `rho^-(a1 + a2 j)`; `(a1, a2) = (1, 0)` is the
//! general Cantor family, `(0, 1)` the general Smith-Volterra-Cantor family.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Hard cap on the construction stage unless explicitly overridden; the
/// explicit layout has `2^G` segments.
pub const DEFAULT_MAX_STAGE: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialFamily<S> {
    Cantor,
    Svc,
    General { a1: S, a2: S },
}

impl<S: Scalar> PotentialFamily<S> {
    /// Fraction removed from the middle of every segment at stage `j >= 1`.
    pub fn removal_fraction(&self, rho: S, j: u32) -> S {
        let exponent = match self {
            PotentialFamily::Cantor => S::one(),
            PotentialFamily::Svc => lit(j as f64),
            PotentialFamily::General { a1, a2 } => *a1 + *a2 * lit::<S>(j as f64),
        };
        rho.powf(-exponent)
    }

    pub fn label(&self) -> String {
        match self {
            PotentialFamily::Cantor => "cantor".to_owned(),
            PotentialFamily::Svc => "svc".to_owned(),
            PotentialFamily::General { a1, a2 } => format!("general({a1},{a2})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightPolicy {
    Fixed,
    AreaPreserving,
}

/// Full description of one barrier arrangement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec<S> {
    pub family: PotentialFamily<S>,
    pub rho: S,
    pub length: S,
    pub v0: S,
    pub stage: u32,
    pub height_policy: HeightPolicy,
}

impl<S: Scalar> PotentialSpec<S> {
    pub fn new(
        family: PotentialFamily<S>,
        rho: S,
        length: S,
        v0: S,
        stage: u32,
        height_policy: HeightPolicy,
    ) -> Result<Self> {
        if !(rho > S::one()) {
            return Err(Error::InvalidInput(format!(
                "rho must be > 1 so the removed fraction lies in (0,1); got {rho}"
            )));
        }
        if !(length > S::zero()) {
            return Err(Error::InvalidInput(format!("total length must be > 0; got {length}")));
        }
        if !(v0 >= S::zero()) {
            return Err(Error::InvalidInput(format!("barrier height must be >= 0; got {v0}")));
        }
        if let PotentialFamily::General { a1, a2 } = family {
            if a1 < S::zero() || a2 < S::zero() {
                return Err(Error::InvalidInput("a1 and a2 must be >= 0".into()));
            }
            if a1 == S::zero() && a2 == S::zero() {
                return Err(Error::InvalidInput("a1 and a2 must not both be zero".into()));
            }
        }
        Ok(Self { family, rho, length, v0, stage, height_policy })
    }

    fn check_stage_index(&self, j: u32) -> Result<()> {
        if j == 0 || j > self.stage {
            return Err(Error::InvalidInput(format!(
                "stage index j={j} out of range 1..={}",
                self.stage
            )));
        }
        Ok(())
    }
}

/// q-Pochhammer symbol `q(a; lambda)_n = prod_{i=0}^{n-1} (1 - a lambda^i)`.
pub fn q_pochhammer<S: Scalar>(a: S, lambda: S, n: u32) -> S {
    let mut product = S::one();
    let mut factor = a;
    for _ in 0..n {
        product = product * (S::one() - factor);
        factor = factor * lambda;
    }
    product
}

/// Segment length at stage `j` obtained by iterating
/// `l_j = (l_{j-1}/2)(1 - f_j)` from `l_0 = L`. Valid for every family.
pub fn segment_length_recursive<S: Scalar>(spec: &PotentialSpec<S>, stage: u32) -> S {
    let half = lit::<S>(0.5);
    let mut len = spec.length;
    for j in 1..=stage {
        len = len * half * (S::one() - spec.family.removal_fraction(spec.rho, j));
    }
    len
}

/// Segment length `l_G`, using the closed form where one exists.
pub fn segment_length<S: Scalar>(spec: &PotentialSpec<S>) -> S {
    let g = spec.stage;
    match spec.family {
        PotentialFamily::Cantor => {
            let x = (spec.rho - S::one()) / (lit::<S>(2.0) * spec.rho);
            x.powi(g as i32) * spec.length
        }
        PotentialFamily::Svc => {
            let inv_rho = spec.rho.recip();
            spec.length / lit::<S>(2f64.powi(g as i32)) * q_pochhammer(inv_rho, inv_rho, g)
        }
        PotentialFamily::General { .. } => segment_length_recursive(spec, g),
    }
}

/// Gap opened at stage `j`: the fraction `f_j` removed from a stage-`j-1`
/// segment, `g_j = l_{j-1} f_j`.
pub fn gap_length<S: Scalar>(spec: &PotentialSpec<S>, j: u32) -> Result<S> {
    spec.check_stage_index(j)?;
    let prev = segment_length_recursive(spec, j - 1);
    Ok(prev * spec.family.removal_fraction(spec.rho, j))
}

/// Separation `s_j` between the starting points of the two copies that the
/// `j`-th doubling places side by side.
pub fn spacing<S: Scalar>(spec: &PotentialSpec<S>, j: u32) -> Result<S> {
    spec.check_stage_index(j)?;
    let g = spec.stage;
    match spec.family {
        PotentialFamily::Cantor => {
            let two_rho = lit::<S>(2.0) * spec.rho;
            let x = (spec.rho - S::one()) / two_rho;
            let y = (spec.rho + S::one()) / two_rho;
            Ok(x.powi((g - j) as i32) * y * spec.length)
        }
        PotentialFamily::Svc => {
            let inv_rho = spec.rho.recip();
            let m = g + 1 - j;
            let scale = spec.length / lit::<S>(2f64.powi(m as i32));
            Ok(scale * (S::one() + spec.rho.powi(-(m as i32))) * q_pochhammer(inv_rho, inv_rho, g - j))
        }
        PotentialFamily::General { .. } => {
            // s_j = sum_{p<j} s_p + l_G + g_{G-j+1}, unrolled from s_1 up.
            let l_g = segment_length(spec);
            let mut sum = S::zero();
            let mut s_j = S::zero();
            for p in 1..=j {
                s_j = sum + l_g + gap_length(spec, g - p + 1)?;
                sum = sum + s_j;
            }
            Ok(s_j)
        }
    }
}

/// Barrier height after applying the spec's height policy.
pub fn barrier_height<S: Scalar>(spec: &PotentialSpec<S>) -> S {
    match spec.height_policy {
        HeightPolicy::Fixed => spec.v0,
        HeightPolicy::AreaPreserving => {
            let l_g = segment_length(spec);
            spec.length * spec.v0 / (lit::<S>(2f64.powi(spec.stage as i32)) * l_g)
        }
    }
}

/// Explicit stage-`G` layout: sorted half-open segments plus the derived
/// per-stage gap and spacing lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentLayout<S> {
    pub segments: Vec<(S, S)>,
    pub segment_length: S,
    pub gaps: Vec<S>,
    pub spacings: Vec<S>,
    pub height: S,
}

pub fn build_layout<S: Scalar>(spec: &PotentialSpec<S>) -> Result<SegmentLayout<S>> {
    build_layout_with_max(spec, DEFAULT_MAX_STAGE)
}

pub fn build_layout_with_max<S: Scalar>(
    spec: &PotentialSpec<S>,
    max_stage: u32,
) -> Result<SegmentLayout<S>> {
    if spec.stage > max_stage {
        return Err(Error::ResourceLimit(format!(
            "stage G={} exceeds the configured maximum {max_stage} (2^G segments)",
            spec.stage
        )));
    }
    let half = lit::<S>(0.5);
    let mut segments = vec![(S::zero(), spec.length)];
    let mut gaps = Vec::with_capacity(spec.stage as usize);
    let mut len = spec.length;
    for j in 1..=spec.stage {
        let fraction = spec.family.removal_fraction(spec.rho, j);
        let next_len = len * half * (S::one() - fraction);
        gaps.push(len * fraction);
        let mut next = Vec::with_capacity(segments.len() * 2);
        for (a, b) in segments {
            next.push((a, a + next_len));
            next.push((b - next_len, b));
        }
        segments = next;
        len = next_len;
    }
    let spacings = (1..=spec.stage).map(|j| spacing(spec, j)).collect::<Result<Vec<_>>>()?;
    Ok(SegmentLayout {
        segments,
        segment_length: len,
        gaps,
        spacings,
        height: barrier_height(spec),
    })
}

/// JSON export of a layout; field names are part of the file format.
#[derive(Debug, Serialize)]
pub struct LayoutJson<S> {
    pub family: String,
    pub rho: S,
    #[serde(rename = "L")]
    pub length: S,
    #[serde(rename = "V_G")]
    pub height: S,
    #[serde(rename = "G")]
    pub stage: u32,
    #[serde(rename = "l_G")]
    pub segment_length: S,
    pub gaps: Vec<S>,
    pub spacings: Vec<S>,
    pub segments: Vec<[S; 2]>,
}

impl<S: Scalar> LayoutJson<S> {
    pub fn new(spec: &PotentialSpec<S>, layout: &SegmentLayout<S>) -> Self {
        Self {
            family: spec.family.label(),
            rho: spec.rho,
            length: spec.length,
            height: layout.height,
            stage: spec.stage,
            segment_length: layout.segment_length,
            gaps: layout.gaps.clone(),
            spacings: layout.spacings.clone(),
            segments: layout.segments.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

/// CSV export with columns `index,start,end`.
pub fn layout_csv<S: Scalar>(layout: &SegmentLayout<S>) -> String {
    let mut out = String::from("index,start,end\n");
    for (i, (a, b)) in layout.segments.iter().enumerate() {
        out.push_str(&format!("{i},{a:.16e},{b:.16e}\n"));
    }
    out
}

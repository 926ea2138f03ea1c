//! Eigenvalue structure of the non-diffusive bilayer system.
//!
//! At a state point `(H_s, H_b, U_s, U_b)` the quasilinear matrix
//!
//! ```text
//!     | U_s   0    H_s  0   |
//! A = | 0     U_b  0    H_b |
//!     | 1     1    U_s  0   |
//!     | ρ     1    0    U_b |        ρ = ρ_s/ρ_b
//! ```
//!
//! has characteristic polynomial
//! `P(λ) = ((U_b-λ)² - H_b)((U_s-λ)² - H_s) - ρ H_s H_b`.
//! Depending on the scaled shear `|U_b - U_s|/√H_b` relative to two
//! thresholds `Fr_- < Fr_+` (functions of `H_s/H_b` and `ρ` only) the four
//! roots are real, two real plus a conjugate pair, or real again.
//!
//! In the first regime the matrix `S^λ` built from a shift `λ` between the
//! two middle roots is symmetric positive definite and makes `S^λ A`
//! symmetric.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Matrix4, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for treating a root as real.
pub const REAL_ROOT_TOL: f64 = 1e-9;

/// Default absolute tolerance of the Froude-threshold bisection.
pub const FROUDE_TOL: f64 = 1e-10;

/// Densities, depths and velocities of both layers at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    pub rho_s: f64,
    pub rho_b: f64,
    pub h_s: f64,
    pub h_b: f64,
    pub u_s: f64,
    pub u_b: f64,
}

impl StatePoint {
    /// Checks positivity of `rho_b` and of both depths; `rho_s` may be zero
    /// (decoupled layers) but not negative.
    pub fn new(rho_s: f64, rho_b: f64, h_s: f64, h_b: f64, u_s: f64, u_b: f64) -> Result<Self> {
        let p = StatePoint {
            rho_s,
            rho_b,
            h_s,
            h_b,
            u_s,
            u_b,
        };
        p.validate()?;
        Ok(p)
    }

    /// Point with `ρ_s/ρ_b = rho_ratio`, `rho_b = 1`.
    pub fn with_ratio(rho_ratio: f64, h_s: f64, h_b: f64, u_s: f64, u_b: f64) -> Result<Self> {
        Self::new(rho_ratio, 1.0, h_s, h_b, u_s, u_b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.rho_s, self.rho_b, self.h_s, self.h_b, self.u_s, self.u_b];
        if let Some(index) = all.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if self.rho_b <= 0.0 || self.rho_s < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "densities must satisfy rho_s >= 0, rho_b > 0 (got {}, {})",
                self.rho_s, self.rho_b
            )));
        }
        if self.h_s <= 0.0 || self.h_b <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "layer depths must be positive (got {}, {})",
                self.h_s, self.h_b
            )));
        }
        Ok(())
    }

    pub fn rho_ratio(&self) -> f64 {
        self.rho_s / self.rho_b
    }

    pub fn depth_ratio(&self) -> f64 {
        self.h_s / self.h_b
    }

    /// `|U_b - U_s| / √H_b`
    pub fn scaled_shear(&self) -> f64 {
        (self.u_b - self.u_s).abs() / self.h_b.sqrt()
    }

    fn require_stable(&self) -> Result<()> {
        self.validate()?;
        let r = self.rho_ratio();
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::UnstableStratification(r));
        }
        Ok(())
    }

    /// The quasilinear matrix `A(U)`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let r = self.rho_ratio();
        Matrix4::new(
            self.u_s, 0.0, self.h_s, 0.0, //
            0.0, self.u_b, 0.0, self.h_b, //
            1.0, 1.0, self.u_s, 0.0, //
            r, 1.0, 0.0, self.u_b,
        )
    }

    fn shifted(&self, shift: f64) -> StatePoint {
        StatePoint {
            u_s: self.u_s - shift,
            u_b: self.u_b - shift,
            ..*self
        }
    }

    fn mean_velocity(&self) -> f64 {
        0.5 * (self.u_s + self.u_b)
    }
}

/// Monic quartic `c0 + c1 λ + c2 λ² + c3 λ³ + λ⁴`, coefficients lowest first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartic {
    pub coeffs: [f64; 5],
}

impl Quartic {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    fn eval_derivative_complex(&self, z: Complex64) -> Complex64 {
        let c = &self.coeffs;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in (1..5).rev() {
            acc = acc * z + c[k] * k as f64;
        }
        acc
    }

    /// Companion matrix whose characteristic polynomial is `self`.
    pub fn companion(&self) -> Matrix4<f64> {
        let c = &self.coeffs;
        Matrix4::new(
            0.0, 0.0, 0.0, -c[0], //
            1.0, 0.0, 0.0, -c[1], //
            0.0, 1.0, 0.0, -c[2], //
            0.0, 0.0, 1.0, -c[3],
        )
    }

    /// Roots as companion-matrix eigenvalues, each refined by one Newton step
    /// when that step reduces the residual.
    ///
    /// The QR iteration can stall on defective companion matrices (repeated
    /// roots); after a bounded number of sweeps the roots are obtained by
    /// Aberth iteration instead.
    pub fn roots(&self) -> [Complex64; 4] {
        let eig = match Schur::try_new(self.companion(), f64::EPSILON, 500) {
            Some(schur) => {
                let e = schur.complex_eigenvalues();
                [e[0], e[1], e[2], e[3]].map(|z| Complex64::new(z.re, z.im))
            }
            None => self.aberth_roots(),
        };
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (slot, &z) in out.iter_mut().zip(eig.iter()) {
            let dp = self.eval_derivative_complex(z);
            let p = self.eval_complex(z);
            let polished = if dp.norm() > 0.0 { z - p / dp } else { z };
            *slot = if polished.is_finite() && self.eval_complex(polished).norm() < p.norm() {
                polished
            } else {
                z
            };
        }
        sort_roots(&mut out);
        out
    }
}

impl Quartic {
    fn aberth_roots(&self) -> [Complex64; 4] {
        let c = &self.coeffs;
        // Cauchy bound on the root moduli
        let radius = 1.0 + c[..4].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut z: [Complex64; 4] = std::array::from_fn(|k| {
            Complex64::from_polar(0.5 * radius, 0.4 + k as f64 * std::f64::consts::FRAC_PI_2)
        });
        for _ in 0..500 {
            let mut moved = 0.0_f64;
            for k in 0..4 {
                let p = self.eval_complex(z[k]);
                if p.norm() == 0.0 {
                    continue;
                }
                let ratio = p / self.eval_derivative_complex(z[k]);
                let repulsion: Complex64 = (0..4)
                    .filter(|&j| j != k)
                    .map(|j| Complex64::new(1.0, 0.0) / (z[k] - z[j]))
                    .sum();
                let w = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
                if w.is_finite() {
                    z[k] -= w;
                    moved = moved.max(w.norm());
                }
            }
            if moved < 1e-15 * radius {
                break;
            }
        }
        z
    }
}

fn sort_roots(roots: &mut [Complex64; 4]) {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Monomial coefficients of `P(λ)`.
pub fn characteristic_polynomial(p: &StatePoint) -> Result<Quartic> {
    p.validate()?;
    Ok(quartic_unchecked(p))
}

fn quartic_unchecked(p: &StatePoint) -> Quartic {
    // P = (λ² + a1 λ + a0)(λ² + b1 λ + b0) - ρ H_s H_b
    let a1 = -2.0 * p.u_b;
    let a0 = p.u_b * p.u_b - p.h_b;
    let b1 = -2.0 * p.u_s;
    let b0 = p.u_s * p.u_s - p.h_s;
    Quartic {
        coeffs: [
            a0 * b0 - p.rho_ratio() * p.h_s * p.h_b,
            a1 * b0 + a0 * b1,
            a0 + b0 + a1 * b1,
            a1 + b1,
            1.0,
        ],
    }
}

/// Eigenvalue regime of the bilayer system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Four real roots, subcritical shear.
    Hyperbolic,
    /// Two real roots and a complex-conjugate pair.
    Elliptic,
    /// Four real roots, supercritical shear.
    FastHyperbolic,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Regime::Hyperbolic => "Hyperbolic",
            Regime::Elliptic => "Elliptic",
            Regime::FastHyperbolic => "FastHyperbolic",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub coefficients: [f64; 5],
    /// `[re, im]` pairs sorted by real part.
    pub roots: [[f64; 2]; 4],
    pub regime: Regime,
    pub real_roots: usize,
    pub fr_minus: f64,
    pub fr_plus: f64,
    /// `Fr_- - |U_b - U_s|/√H_b`
    pub margin: f64,
    /// Absolute imaginary-part threshold used to call a root real.
    pub root_tolerance: f64,
    /// Two roots closer than `1e-6` times the root scale.
    pub near_degenerate: bool,
}

impl HyperbolicityReport {
    pub fn complex_roots(&self) -> [Complex64; 4] {
        self.roots.map(|[re, im]| Complex64::new(re, im))
    }

    /// Real parts of the roots when all four are real.
    pub fn real_roots_sorted(&self) -> Option<[f64; 4]> {
        (self.real_roots == 4).then(|| self.roots.map(|[re, _]| re))
    }

    pub fn max_speed(&self) -> f64 {
        self.complex_roots().iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// Roots of `P` computed about the mean velocity so that Galilean shifts
/// only move the result, plus the number of real roots.
struct RootSet {
    roots: [Complex64; 4],
    real: usize,
    tol: f64,
    near_degenerate: bool,
}

fn root_set(p: &StatePoint) -> RootSet {
    let m = p.mean_velocity();
    let centred = quartic_unchecked(&p.shifted(m)).roots();
    let scale = 1.0 + centred.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    let tol = REAL_ROOT_TOL * scale;
    let mut roots = centred;
    let mut real = 0;
    for z in roots.iter_mut() {
        if z.im.abs() <= tol {
            z.im = 0.0;
            real += 1;
        }
        z.re += m;
    }
    sort_roots(&mut roots);
    let mut min_gap = f64::INFINITY;
    for i in 0..4 {
        for j in i + 1..4 {
            min_gap = min_gap.min((roots[i] - roots[j]).norm());
        }
    }
    RootSet {
        roots,
        real,
        tol,
        near_degenerate: min_gap < 1e-6 * scale,
    }
}

/// Number of real roots of `P` at a point (tolerance [`REAL_ROOT_TOL`]).
pub fn real_root_count(p: &StatePoint) -> usize {
    root_set(p).real
}

fn normalised_count(h_ratio: f64, rho_ratio: f64, intercept: f64) -> usize {
    real_root_count(&StatePoint {
        rho_s: rho_ratio,
        rho_b: 1.0,
        h_s: h_ratio,
        h_b: 1.0,
        u_s: 0.0,
        u_b: intercept,
    })
}

/// Full classification of a stably stratified point.
pub fn classify(p: &StatePoint) -> Result<HyperbolicityReport> {
    p.require_stable()?;
    let roots = root_set(p);
    let h = p.depth_ratio();
    let shear = p.scaled_shear();
    let (fr_minus, fr_plus) = critical_froude(h, p.rho_ratio())?;
    // The line through the corner (-1, 1) of the unit box never meets the
    // quartic curve's oval or the adjacent branch: 1 + √h is always elliptic.
    let regime = if roots.real == 4 {
        if shear < 1.0 + h.sqrt() {
            Regime::Hyperbolic
        } else {
            Regime::FastHyperbolic
        }
    } else {
        Regime::Elliptic
    };
    let coeffs = quartic_unchecked(p).coeffs;
    Ok(HyperbolicityReport {
        coefficients: coeffs,
        roots: roots.roots.map(|z| [z.re, z.im]),
        regime,
        real_roots: roots.real,
        fr_minus,
        fr_plus,
        margin: fr_minus - shear,
        root_tolerance: roots.tol,
        near_degenerate: roots.near_degenerate,
    })
}

/// Controls the Froude-threshold search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FroudeSearch {
    /// Width of the final bisection bracket.
    pub tolerance: f64,
    /// Number of uniform cells used to locate each transition before
    /// bisecting (1 bisects the analytic bracket directly).
    pub scan_cells: usize,
}

impl Default for FroudeSearch {
    fn default() -> Self {
        FroudeSearch {
            tolerance: FROUDE_TOL,
            scan_cells: 1,
        }
    }
}

/// Critical Froude numbers `(Fr_-, Fr_+)` for `H_s/H_b = h_ratio` and
/// `ρ_s/ρ_b = rho_ratio`, by bisection on the real-root count.
pub fn critical_froude(h_ratio: f64, rho_ratio: f64) -> Result<(f64, f64)> {
    critical_froude_with(h_ratio, rho_ratio, FroudeSearch::default())
}

pub fn critical_froude_with(
    h_ratio: f64,
    rho_ratio: f64,
    search: FroudeSearch,
) -> Result<(f64, f64)> {
    if !(rho_ratio > 0.0 && rho_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho_ratio must lie in (0, 1), got {rho_ratio}"
        )));
    }
    if !(h_ratio > 0.0 && h_ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "h_ratio must be positive, got {h_ratio}"
        )));
    }
    if !(search.tolerance > 0.0) || search.scan_cells == 0 {
        return Err(Error::InvalidParameter("bad Froude search settings".into()));
    }
    let count = |c: f64| normalised_count(h_ratio, rho_ratio, c);
    let corner = 1.0 + h_ratio.sqrt();

    // Fr_-: first 4 -> 2 transition on [0, corner].
    let (lo, hi) = scan_bracket(0.0, corner, search.scan_cells, |c| count(c) == 4)?;
    let fr_minus = bisect(lo, hi, search.tolerance, |c| count(c) == 4);

    // Fr_+: first 2 -> 4 transition above the corner.
    let mut top = 2.0 * corner;
    let mut tries = 0;
    while count(top) != 4 {
        top *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::InvalidParameter(
                "could not bracket Fr_+".to_string(),
            ));
        }
    }
    let (lo, hi) = scan_bracket(corner, top, search.scan_cells, |c| count(c) != 4)?;
    let fr_plus = bisect(lo, hi, search.tolerance, |c| count(c) != 4);
    Ok((fr_minus, fr_plus))
}

/// Finds the first cell `[a, b]` of a uniform scan with `inside(a)` and
/// `!inside(b)`.
fn scan_bracket(
    start: f64,
    end: f64,
    cells: usize,
    inside: impl Fn(f64) -> bool,
) -> Result<(f64, f64)> {
    if !inside(start) {
        return Err(Error::InvalidParameter(format!(
            "bracket start {start} does not have the expected root count"
        )));
    }
    let step = (end - start) / cells as f64;
    let mut a = start;
    for i in 1..=cells {
        let b = if i == cells { end } else { start + step * i as f64 };
        if !inside(b) {
            return Ok((a, b));
        }
        a = b;
    }
    Err(Error::InvalidParameter(format!(
        "no root-count transition in [{start}, {end}]"
    )))
}

fn bisect(mut lo: f64, mut hi: f64, tol: f64, inside: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The symmetric matrix `S^λ(U)`.
pub fn symmetrizer_matrix(p: &StatePoint, lambda: f64) -> Matrix4<f64> {
    let r = p.rho_ratio();
    let a = p.u_s - lambda;
    let b = p.u_b - lambda;
    Matrix4::new(
        r, r, r * a, 0.0, //
        r, 1.0, 0.0, b, //
        r * a, 0.0, r * p.h_s, 0.0, //
        0.0, b, 0.0, p.h_b,
    )
}

/// Leading principal minors of a 4×4 matrix, smallest block first.
pub fn leading_minors(m: &Matrix4<f64>) -> [f64; 4] {
    let m2: Matrix2<f64> = m.fixed_view::<2, 2>(0, 0).into_owned();
    let m3: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    [m[(0, 0)], m2.determinant(), m3.determinant(), m.determinant()]
}

fn smallest_eigenvalue(m: &Matrix4<f64>) -> f64 {
    m.symmetric_eigenvalues().min()
}

/// How the shift `λ` was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftSelection {
    /// Midpoint of the two middle roots, already inside the velocity interval.
    Midpoint,
    /// Midpoint clipped into `[min(U_s,U_b), max(U_s,U_b)]`.
    Clipped,
    /// Golden-section maximisation of the smallest eigenvalue of `S^λ`.
    GoldenSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Symmetrizer {
    pub lambda: f64,
    pub s: Matrix4<f64>,
    pub sa: Matrix4<f64>,
    pub minors: [f64; 4],
    pub certified: bool,
    pub selection: ShiftSelection,
    /// The two middle roots `(λ₂, λ₃)`.
    pub window: (f64, f64),
}

impl Symmetrizer {
    /// `max |(S A)_{ij} - (S A)_{ji}|`
    pub fn asymmetry(&self) -> f64 {
        (self.sa - self.sa.transpose()).amax()
    }
}

/// Builds and certifies `S^λ` at a hyperbolic point.
pub fn symmetrizer(p: &StatePoint) -> Result<Symmetrizer> {
    p.require_stable()?;
    let roots = root_set(p);
    if roots.real != 4 {
        return Err(Error::NotHyperbolic {
            regime: Regime::Elliptic.to_string(),
            margin: f64::NAN,
        });
    }
    let (fr_minus, _) = critical_froude(p.depth_ratio(), p.rho_ratio())?;
    let margin = fr_minus - p.scaled_shear();
    if margin <= 0.0 {
        return Err(Error::NotHyperbolic {
            regime: if p.scaled_shear() < 1.0 + p.depth_ratio().sqrt() {
                Regime::Hyperbolic.to_string()
            } else {
                Regime::FastHyperbolic.to_string()
            },
            margin,
        });
    }
    let l2 = roots.roots[1].re;
    let l3 = roots.roots[2].re;
    let u_lo = p.u_s.min(p.u_b);
    let u_hi = p.u_s.max(p.u_b);
    let mid = 0.5 * (l2 + l3);
    let clipped = mid.clamp(u_lo, u_hi);
    let quartic = quartic_unchecked(p);

    let build = |lambda: f64, selection| {
        let s = symmetrizer_matrix(p, lambda);
        let sa = s * p.matrix();
        let minors = leading_minors(&s);
        Symmetrizer {
            lambda,
            s,
            sa,
            minors,
            certified: minors.iter().all(|&m| m > 0.0),
            selection,
            window: (l2, l3),
        }
    };

    if clipped > l2 && clipped < l3 && quartic.eval(clipped) > 0.0 {
        let selection = if clipped == mid {
            ShiftSelection::Midpoint
        } else {
            ShiftSelection::Clipped
        };
        let sym = build(clipped, selection);
        if sym.certified {
            return Ok(sym);
        }
    }
    let a = l2.max(u_lo);
    let b = l3.min(u_hi);
    if !(a < b) {
        return Err(Error::NoAdmissibleShift(format!(
            "({l2}, {l3}) does not meet [{u_lo}, {u_hi}]"
        )));
    }
    let lambda = golden_section_max(a, b, 1e-12 * (1.0 + b.abs()), |l| {
        smallest_eigenvalue(&symmetrizer_matrix(p, l))
    });
    Ok(build(lambda, ShiftSelection::GoldenSection))
}

fn golden_section_max(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Membership in the compact hyperbolic set with margin `sigma`:
/// `σ/2 ≤ ρ ≤ 1-σ/2`, `σ ≤ H_s/H_b ≤ 1/σ`, `H_s+H_b ≥ σ` and
/// `Fr_- - |U_b-U_s|/√H_b ≥ σ`.
pub fn in_hyperbolic_set(p: &StatePoint, sigma: f64) -> bool {
    if p.validate().is_err() || !(sigma > 0.0 && sigma < 1.0) {
        return false;
    }
    let r = p.rho_ratio();
    let h = p.depth_ratio();
    if !(sigma / 2.0 <= r && r <= 1.0 - sigma / 2.0) {
        return false;
    }
    if !(sigma <= h && h <= 1.0 / sigma) || p.h_s + p.h_b < sigma {
        return false;
    }
    match critical_froude(h, r) {
        Ok((fr_minus, _)) => fr_minus - p.scaled_shear() >= sigma,
        Err(_) => false,
    }
}

/// One traced piece of the quartic curve or one straight line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub id: String,
    pub closed: bool,
    /// `(p_s, p_b)` samples.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtlasOptions {
    pub samples: usize,
    /// Half-width of the square window `[-extent, extent]²`.
    pub extent: f64,
}

impl Default for AtlasOptions {
    fn default() -> Self {
        AtlasOptions {
            samples: 2000,
            extent: 20.0,
        }
    }
}

/// Samples of `(p_s² - 1)(p_b² - 1) = ρ` and of the lines
/// `p_b = √(H_s/H_b) p_s + c` for each intercept `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    pub h_ratio: f64,
    pub rho_ratio: f64,
    pub curve: Vec<Polyline>,
    pub lines: Vec<(f64, Polyline)>,
}

impl Atlas {
    pub fn slope(&self) -> f64 {
        self.h_ratio.sqrt()
    }

    /// Number of sign changes of `p_b - slope·p_s - c` along the curve.
    pub fn crossings(&self, intercept: f64) -> usize {
        let slope = self.slope();
        let g = |(ps, pb): (f64, f64)| pb - slope * ps - intercept;
        let mut total = 0;
        for line in &self.curve {
            let pts = &line.points;
            let mut segments: Vec<((f64, f64), (f64, f64))> =
                pts.windows(2).map(|w| (w[0], w[1])).collect();
            if line.closed && pts.len() > 2 {
                segments.push((pts[pts.len() - 1], pts[0]));
            }
            total += segments
                .into_iter()
                .filter(|&(a, b)| (g(a) < 0.0) != (g(b) < 0.0))
                .count();
        }
        total
    }
}

pub fn atlas(h_ratio: f64, rho_ratio: f64, intercepts: &[f64], opts: AtlasOptions) -> Result<Atlas> {
    if !(rho_ratio > 0.0 && rho_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho_ratio must lie in (0, 1), got {rho_ratio}"
        )));
    }
    if !(h_ratio > 0.0) || opts.samples < 8 || !(opts.extent > 2.0) {
        return Err(Error::InvalidParameter("bad atlas settings".into()));
    }
    let r = rho_ratio;
    let n = opts.samples;
    let mut curve = Vec::with_capacity(5);

    // Inner oval: |p_s| ≤ √(1-ρ), parametrised by an angle so that the
    // vertical tangents at p_b = 0 are sampled evenly.
    let a = (1.0 - r).sqrt();
    let upper: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let theta = -PI / 2.0 + PI * i as f64 / n as f64;
            let ps = a * theta.sin();
            let pb = (1.0 - r / (1.0 - ps * ps)).max(0.0).sqrt();
            (ps, pb)
        })
        .collect();
    let mut oval = upper.clone();
    oval.extend(upper.iter().rev().skip(1).take(n - 1).map(|&(ps, pb)| (ps, -pb)));
    curve.push(Polyline {
        id: "oval".into(),
        closed: true,
        points: oval,
    });

    // Hyperbolic branches: half traced in p_s from the diagonal point
    // (q, q), the other half by the p_s <-> p_b symmetry.
    let q = (1.0 + r.sqrt()).sqrt();
    let half: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let ps = q + (opts.extent - q) * t * t;
            let pb = (1.0 + r / (ps * ps - 1.0)).sqrt();
            (ps, pb)
        })
        .collect();
    let mut branch: Vec<(f64, f64)> = half.iter().rev().map(|&(x, y)| (y, x)).collect();
    branch.extend(half.iter().skip(1).copied());
    for (id, sx, sy) in [
        ("branch_ne", 1.0, 1.0),
        ("branch_nw", -1.0, 1.0),
        ("branch_sw", -1.0, -1.0),
        ("branch_se", 1.0, -1.0),
    ] {
        curve.push(Polyline {
            id: id.into(),
            closed: false,
            points: branch.iter().map(|&(x, y)| (sx * x, sy * y)).collect(),
        });
    }

    let slope = h_ratio.sqrt();
    let lines = intercepts
        .iter()
        .map(|&c| {
            let points = [-opts.extent, opts.extent]
                .iter()
                .map(|&ps| (ps, slope * ps + c))
                .collect();
            (
                c,
                Polyline {
                    id: format!("line_{c}"),
                    closed: false,
                    points,
                },
            )
        })
        .collect();
    Ok(Atlas {
        h_ratio,
        rho_ratio,
        curve,
        lines,
    })
}

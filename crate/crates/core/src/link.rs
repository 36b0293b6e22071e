//! Built-in link functions and the structural constants derived from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{gauss_expect, std_normal_cdf, std_normal_pdf, sup_expect_over_scale, QuadratureRule};

/// `2·315^{1/4}`, the factor in the convex-basin radius condition.
pub fn basin_factor() -> f64 {
    2.0 * 315f64.powf(0.25)
}

/// Lower clamp on the scale window `[1 − R, 1 + R]`.
pub const MIN_SCALE: f64 = 0.001;

/// Golden-section tolerance on the scale for every supremum below.
pub const SCALE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkName {
    Logistic,
    Tanh,
    Probit,
    Square,
    Gelu,
    Swish,
    Geglu,
    Swiglu,
}

impl LinkName {
    pub const ALL: [LinkName; 8] = [
        LinkName::Logistic,
        LinkName::Tanh,
        LinkName::Probit,
        LinkName::Square,
        LinkName::Gelu,
        LinkName::Swish,
        LinkName::Geglu,
        LinkName::Swiglu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkName::Logistic => "logistic",
            LinkName::Tanh => "tanh",
            LinkName::Probit => "probit",
            LinkName::Square => "square",
            LinkName::Gelu => "gelu",
            LinkName::Swish => "swish",
            LinkName::Geglu => "geglu",
            LinkName::Swiglu => "swiglu",
        }
    }

    /// Human-readable label used in the constants table.
    pub fn label(self) -> &'static str {
        match self {
            LinkName::Logistic => "Logistic/Sigmoid",
            LinkName::Tanh => "Tanh",
            LinkName::Probit => "Probit",
            LinkName::Square => "Phase Retrieval",
            LinkName::Gelu => "GeLU",
            LinkName::Swish => "Swish",
            LinkName::Geglu => "GeGLU",
            LinkName::Swiglu => "SwiGLU",
        }
    }
}

impl fmt::Display for LinkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        let name = match key.as_str() {
            "logistic" | "sigmoid" => LinkName::Logistic,
            "tanh" => LinkName::Tanh,
            "probit" => LinkName::Probit,
            "square" | "phase_retrieval" | "phase-retrieval" => LinkName::Square,
            "gelu" => LinkName::Gelu,
            "swish" | "silu" => LinkName::Swish,
            "geglu" => LinkName::Geglu,
            "swiglu" => LinkName::Swiglu,
            _ => return Err(Error::UnknownLink(s.to_string())),
        };
        Ok(name)
    }
}

/// A scalar link with hand-coded derivatives up to third order.
#[derive(Clone, Copy)]
pub struct LinkFunction {
    pub name: LinkName,
    pub f: fn(f64) -> f64,
    pub d1: fn(f64) -> f64,
    pub d2: fn(f64) -> f64,
    pub d3: fn(f64) -> f64,
    /// `f(−z) = f(z)` for all `z`; the sign of β* is then unidentifiable.
    pub even_symmetric: bool,
}

impl fmt::Debug for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinkFunction")
            .field("name", &self.name)
            .field("even_symmetric", &self.even_symmetric)
            .finish()
    }
}

impl PartialEq for LinkFunction {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl LinkFunction {
    /// `(f, f', f'', f''')` at `z`.
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64, f64, f64) {
        ((self.f)(z), (self.d1)(z), (self.d2)(z), (self.d3)(z))
    }
}

impl From<LinkName> for LinkFunction {
    fn from(name: LinkName) -> Self {
        builtin(name)
    }
}

// σ(z) evaluated without overflow for either sign.
#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// σ, σ', σ'', σ''' sharing one evaluation of σ.
#[inline]
fn sigmoid_derivs(z: f64) -> (f64, f64, f64, f64) {
    let s = sigmoid(z);
    let c = sigmoid(-z);
    let s1 = s * c;
    let s2 = s1 * (c - s);
    let s3 = s1 * (1.0 - 6.0 * s * c);
    (s, s1, s2, s3)
}

mod defs {
    use super::*;

    pub fn logistic(z: f64) -> f64 {
        sigmoid(z)
    }
    pub fn logistic_d1(z: f64) -> f64 {
        sigmoid_derivs(z).1
    }
    pub fn logistic_d2(z: f64) -> f64 {
        sigmoid_derivs(z).2
    }
    pub fn logistic_d3(z: f64) -> f64 {
        sigmoid_derivs(z).3
    }

    pub fn tanh(z: f64) -> f64 {
        z.tanh()
    }
    pub fn tanh_d1(z: f64) -> f64 {
        let t = z.tanh();
        1.0 - t * t
    }
    pub fn tanh_d2(z: f64) -> f64 {
        let t = z.tanh();
        -2.0 * t * (1.0 - t * t)
    }
    pub fn tanh_d3(z: f64) -> f64 {
        let t = z.tanh();
        (1.0 - t * t) * (6.0 * t * t - 2.0)
    }

    pub fn probit(z: f64) -> f64 {
        std_normal_cdf(z)
    }
    pub fn probit_d1(z: f64) -> f64 {
        std_normal_pdf(z)
    }
    pub fn probit_d2(z: f64) -> f64 {
        -z * std_normal_pdf(z)
    }
    pub fn probit_d3(z: f64) -> f64 {
        (z * z - 1.0) * std_normal_pdf(z)
    }

    pub fn square(z: f64) -> f64 {
        z * z
    }
    pub fn square_d1(z: f64) -> f64 {
        2.0 * z
    }
    pub fn square_d2(_: f64) -> f64 {
        2.0
    }
    pub fn square_d3(_: f64) -> f64 {
        0.0
    }

    pub fn gelu(z: f64) -> f64 {
        z * std_normal_cdf(z)
    }
    pub fn gelu_d1(z: f64) -> f64 {
        std_normal_cdf(z) + z * std_normal_pdf(z)
    }
    pub fn gelu_d2(z: f64) -> f64 {
        (2.0 - z * z) * std_normal_pdf(z)
    }
    pub fn gelu_d3(z: f64) -> f64 {
        (z * z * z - 4.0 * z) * std_normal_pdf(z)
    }

    pub fn swish(z: f64) -> f64 {
        z * sigmoid(z)
    }
    pub fn swish_d1(z: f64) -> f64 {
        let (s, s1, _, _) = sigmoid_derivs(z);
        s + z * s1
    }
    pub fn swish_d2(z: f64) -> f64 {
        let (_, s1, s2, _) = sigmoid_derivs(z);
        2.0 * s1 + z * s2
    }
    pub fn swish_d3(z: f64) -> f64 {
        let (_, _, s2, s3) = sigmoid_derivs(z);
        3.0 * s2 + z * s3
    }

    pub fn geglu(z: f64) -> f64 {
        z * z * std_normal_cdf(z)
    }
    pub fn geglu_d1(z: f64) -> f64 {
        2.0 * z * std_normal_cdf(z) + z * z * std_normal_pdf(z)
    }
    pub fn geglu_d2(z: f64) -> f64 {
        2.0 * std_normal_cdf(z) + (4.0 * z - z * z * z) * std_normal_pdf(z)
    }
    pub fn geglu_d3(z: f64) -> f64 {
        let z2 = z * z;
        (z2 * z2 - 7.0 * z2 + 6.0) * std_normal_pdf(z)
    }

    pub fn swiglu(z: f64) -> f64 {
        z * z * sigmoid(z)
    }
    pub fn swiglu_d1(z: f64) -> f64 {
        let (s, s1, _, _) = sigmoid_derivs(z);
        2.0 * z * s + z * z * s1
    }
    pub fn swiglu_d2(z: f64) -> f64 {
        let (s, s1, s2, _) = sigmoid_derivs(z);
        2.0 * s + 4.0 * z * s1 + z * z * s2
    }
    pub fn swiglu_d3(z: f64) -> f64 {
        let (_, s1, s2, s3) = sigmoid_derivs(z);
        6.0 * s1 + 6.0 * z * s2 + z * z * s3
    }
}

type Scalar = fn(f64) -> f64;

/// Looks up a built-in link.
pub fn builtin(name: LinkName) -> LinkFunction {
    use defs::*;
    let (f, d1, d2, d3): (Scalar, Scalar, Scalar, Scalar) = match name {
        LinkName::Logistic => (logistic, logistic_d1, logistic_d2, logistic_d3),
        LinkName::Tanh => (tanh, tanh_d1, tanh_d2, tanh_d3),
        LinkName::Probit => (probit, probit_d1, probit_d2, probit_d3),
        LinkName::Square => (square, square_d1, square_d2, square_d3),
        LinkName::Gelu => (gelu, gelu_d1, gelu_d2, gelu_d3),
        LinkName::Swish => (swish, swish_d1, swish_d2, swish_d3),
        LinkName::Geglu => (geglu, geglu_d1, geglu_d2, geglu_d3),
        LinkName::Swiglu => (swiglu, swiglu_d1, swiglu_d2, swiglu_d3),
    };
    LinkFunction {
        name,
        f,
        d1,
        d2,
        d3,
        even_symmetric: name == LinkName::Square,
    }
}

/// Looks up a built-in link by its textual name.
pub fn builtin_link(name: &str) -> Result<LinkFunction> {
    name.parse().map(builtin)
}

/// Expected squared convexity `E[f'(Z)² + f(Z)f''(Z)]`.
pub fn esc(link: &LinkFunction, rule: &QuadratureRule) -> Result<f64> {
    gauss_expect(
        |z| {
            let (f, d1, d2, _) = link.eval(z);
            d1 * d1 + f * d2
        },
        1.0,
        rule,
    )
}

/// `(μ, μ₁) = (min, max)` of `E[f'(Z)²]` and `E[Z² f'(Z)²]`.
pub fn curvature_proxies(link: &LinkFunction, rule: &QuadratureRule) -> Result<(f64, f64)> {
    let a = gauss_expect(|z| (link.d1)(z).powi(2), 1.0, rule)?;
    let b = gauss_expect(|z| z * z * (link.d1)(z).powi(2), 1.0, rule)?;
    let (mu, mu1) = if a <= b { (a, b) } else { (b, a) };
    if mu <= 1e-12 {
        return Err(Error::DegenerateLink {
            name: link.name.to_string(),
            value: mu,
        });
    }
    Ok((mu, mu1))
}

/// `g(z) = 18 f'(z)² f''(z)² + 2 f'''(z)² f(z)²`.
#[inline]
pub fn lipschitz_integrand(link: &LinkFunction, z: f64) -> f64 {
    let (f, d1, d2, d3) = link.eval(z);
    18.0 * d1 * d1 * d2 * d2 + 2.0 * d3 * d3 * f * f
}

fn scale_window(radius: f64) -> (f64, f64) {
    ((1.0 - radius).max(MIN_SCALE), 1.0 + radius)
}

/// `C_lip(R) = sup_{s ∈ [max(0.001, 1−R), 1+R]} E[g(Z_s)]`.
///
/// This is the quantity tabulated alongside R (the supremum of the
/// expectation itself); the root-mean-square variant is [`c_lip_rms`].
pub fn c_lip(link: &LinkFunction, radius: f64, rule: &QuadratureRule) -> Result<f64> {
    if !(radius >= 0.0) {
        return Err(invalid(format!("radius must be non-negative, got {radius}")));
    }
    let (lo, hi) = scale_window(radius);
    let (_, v) = sup_expect_over_scale(|z| lipschitz_integrand(link, z), lo, hi, rule, SCALE_TOL)?;
    Ok(v)
}

/// `sqrt` of [`c_lip`]: the root-mean-square form of the Lipschitz proxy.
pub fn c_lip_rms(link: &LinkFunction, radius: f64, rule: &QuadratureRule) -> Result<f64> {
    c_lip(link, radius, rule).map(f64::sqrt)
}

/// Root of `h(R) = R − μ / (2·315^{1/4}·C_lip(R))`.
///
/// Bracketing starts at `[1e-6, 5]`; on equal signs it moves to `[1e-9, 1e-6]`
/// (both positive) or `[5, 100]` (both negative). Brent's method then runs
/// until `R·2·315^{1/4}·C_lip(R)` is within a relative `solver_tol` of μ or
/// the bracket collapses.
pub fn basin_radius(link: &LinkFunction, solver_tol: f64, rule: &QuadratureRule) -> Result<f64> {
    let (mu, _) = curvature_proxies(link, rule)?;
    basin_radius_with_mu(link, mu, solver_tol, rule)
}

fn basin_radius_with_mu(link: &LinkFunction, mu: f64, solver_tol: f64, rule: &QuadratureRule) -> Result<f64> {
    let factor = basin_factor();
    let h = |r: f64| -> Result<f64> {
        if r <= 0.0 {
            return Ok(-1.0);
        }
        // same root as R − μ/(factor·C), scaled so the tolerance is relative
        let c = c_lip(link, r, rule)?.max(1e-9);
        Ok(r * factor * c / mu - 1.0)
    };
    let (low, high) = (1e-6, 5.0);
    let (f_low, f_high) = (h(low)?, h(high)?);
    let (a, b) = if f_low.signum() != f_high.signum() {
        (low, high)
    } else if f_low > 0.0 {
        if h(1e-9)?.signum() == f_low.signum() {
            return Err(Error::SolverFailure { clamp: 1e-9 });
        }
        (1e-9, low)
    } else {
        if h(100.0)?.signum() == f_high.signum() {
            return Err(Error::SolverFailure { clamp: 100.0 });
        }
        (high, 100.0)
    };
    let r = brent_root(h, a, b, solver_tol)?;
    Ok(r.clamp(1e-9, 100.0))
}

/// Brent's root finder on a sign-changing bracket.
pub(crate) fn brent_root<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64, ftol: f64) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(invalid("root is not bracketed"));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 1e-300;
        let xm = 0.5 * (c - b);
        if fb.abs() <= ftol || xm.abs() <= tol1 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}

/// `(φ₁, φ₂)`: suprema over the scale window of `E[f'^16]^{1/4}` and
/// `E[f'^4]^{1/2}`.
pub fn phi_constants(link: &LinkFunction, radius: f64, rule: &QuadratureRule) -> Result<(f64, f64)> {
    if !(radius > 0.0) {
        return Err(invalid(format!("radius must be positive, got {radius}")));
    }
    let (lo, hi) = scale_window(radius);
    let (_, m16) = sup_expect_over_scale(|z| (link.d1)(z).powi(16), lo, hi, rule, SCALE_TOL)?;
    let (_, m4) = sup_expect_over_scale(|z| (link.d1)(z).powi(4), lo, hi, rule, SCALE_TOL)?;
    Ok((m16.powf(0.25), m4.sqrt()))
}

/// `C₄ = 4(E[f(Z)^8]^{1/8} + K₄)/σ`.
pub fn c4_hypercontractivity(link: &LinkFunction, sigma: f64, k4: f64, rule: &QuadratureRule) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(k4 >= sigma) {
        return Err(invalid(format!("K4 = {k4} must dominate sigma = {sigma}")));
    }
    let m8 = gauss_expect(|z| (link.f)(z).powi(8), 1.0, rule)?;
    Ok(4.0 * (m8.powf(0.125) + k4) / sigma)
}

/// One row of structural constants for a link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub link: LinkName,
    pub esc: f64,
    pub mu: f64,
    pub mu1: f64,
    #[serde(rename = "R")]
    pub basin_radius: f64,
    pub c_lip: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Undefined (`None`) for noiseless models.
    pub c4: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl ConstantsReport {
    /// The seven tabulated constants, in table order.
    pub fn table_values(&self) -> [(&'static str, f64); 7] {
        [
            ("ESC", self.esc),
            ("mu", self.mu),
            ("mu1", self.mu1),
            ("R", self.basin_radius),
            ("C_lip", self.c_lip),
            ("phi1", self.phi1),
            ("phi2", self.phi2),
        ]
    }

    /// Contraction factor `(α − γ)/(α + γ)` of one gradient step.
    pub fn contraction(&self) -> f64 {
        (self.alpha - self.gamma) / (self.alpha + self.gamma)
    }
}

pub const DEFAULT_SOLVER_TOL: f64 = 1e-12;

/// Computes every constant for `link`; `sigma` and `k4` only enter `C₄`,
/// which is left undefined when `sigma = 0`.
pub fn constants_report(link: &LinkFunction, sigma: f64, k4: f64, rule: &QuadratureRule) -> Result<ConstantsReport> {
    let esc = esc(link, rule)?;
    let (mu, mu1) = curvature_proxies(link, rule)?;
    let radius = basin_radius_with_mu(link, mu, DEFAULT_SOLVER_TOL, rule)?;
    let c_lip = c_lip(link, radius, rule)?;
    let (phi1, phi2) = phi_constants(link, radius, rule)?;
    let c4 = if sigma > 0.0 {
        Some(c4_hypercontractivity(link, sigma, k4, rule)?)
    } else {
        None
    };
    let alpha = mu / 2.0 + mu1;
    let gamma = mu / 2.0;
    Ok(ConstantsReport {
        link: link.name,
        esc,
        mu,
        mu1,
        basin_radius: radius,
        c_lip,
        phi1,
        phi2,
        c4,
        alpha,
        gamma,
        eta: 2.0 / (alpha + gamma),
    })
}

/// Table layout: one row per link, three significant figures.
pub fn render_table(reports: &[ConstantsReport]) -> String {
    let header = ["Function", "ESC", "mu", "mu1", "R", "C_lip(R)", "phi1", "phi2"];
    let mut out = format!(
        "{:<18}{}\n",
        header[0],
        header[1..].iter().map(|h| format!("{h:>11}")).collect::<String>()
    );
    for r in reports {
        out.push_str(&format!("{:<18}", r.link.label()));
        for (_, v) in r.table_values() {
            out.push_str(&format!("{:>11}", format!("{v:.2e}")));
        }
        out.push('\n');
    }
    out
}

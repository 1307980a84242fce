//! Construction parameters: derivation, validation, and reporting.
//!
//! Two modes exist. `PaperFaithful` derives every parameter from the single
//! knob `delta` (the query-budget exponent: the game grants `n^{2-delta}`
//! queries). `Toy` decouples the structural parameters so that desk-scale
//! instances can be built; all exact matching-size identities hold for any
//! parameter set that validates, so toy instances remain exactly checkable.

use num::bigint::{BigInt, Sign};
use num::rational::BigRational;
use num::{BigUint, Integer, One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    PaperFaithful,
    Toy,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::PaperFaithful => write!(f, "paper"),
            Mode::Toy => write!(f, "toy"),
        }
    }
}

/// Which of the two instance distributions a graph is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Yes,
    No,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Yes => write!(f, "yes"),
            Side::No => write!(f, "no"),
        }
    }
}

/// Complete parameter set. Sizes are kept exact (arbitrary precision):
/// paper-faithful settings are astronomically large and are still useful
/// as values to validate and report against, even though only toy-scale
/// sets can be materialized into instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub mode: Mode,
    /// Query-budget exponent; absent in toy mode.
    pub delta: Option<f64>,
    /// Number of levels in the recursive hierarchy (L).
    pub levels: u32,
    /// Number of layers per level (r).
    pub layers: u64,
    pub zeta: BigRational,
    pub xi: BigRational,
    pub gamma: BigRational,
    pub tau: BigRational,
    /// sigma_1..sigma_{L+1} with sigma_{L+1} = 1; empty in toy mode.
    pub sigma: Vec<f64>,
    /// Block degrees d_1..d_L.
    pub block_degrees: Vec<BigUint>,
    /// Width parameter N_1 of the base level.
    pub base_width: BigUint,
    /// Width parameters N_1..N_L.
    pub widths: Vec<BigUint>,
    /// Exact vertex counts n_1..n_L of each level graph.
    pub level_counts: Vec<BigUint>,
    /// Dummy vertex count tau * n_L (exact).
    pub dummy_count: BigUint,
    /// Total vertex count n = n_L + dummy_count.
    pub total_vertices: BigUint,
    /// Additive-error unit: the guaranteed matching-size gap is N_1/2 =
    /// epsilon * n in toy mode; paper mode uses the closed form in `delta`.
    pub epsilon: f64,
    /// ln(epsilon); finite even when epsilon underflows f64.
    pub epsilon_ln: f64,
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("parameter {name} = {value} rounds to {rounded} (shift beyond 0.5%)")]
    NonIntegralParameter {
        name: &'static str,
        value: f64,
        rounded: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parameter set does not fit buildable limits: {0}")]
    InfeasibleScale(String),
    #[error("validation failed: {0}")]
    ValidationFailed(Box<ValidationReport>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Informational findings that do not invalidate the set (degenerate
    /// rounded-to-zero quotas, clamped delusive fillers, closed-form
    /// cross-check deviations).
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, constraint: &str, detail: String) {
        self.violations.push(Violation {
            constraint: constraint.to_string(),
            detail,
        });
    }

    pub fn note(&mut self, detail: String) {
        self.notes.push(detail);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            write!(f, "ok")?;
        } else {
            writeln!(f, "{} violation(s):", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  [{}] {}", v.constraint, v.detail)?;
            }
        }
        for n in &self.notes {
            writeln!(f,"  note: {n}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// rational helpers

/// Convenience rational constructor (used throughout for toy parameters).
pub fn br(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub(crate) fn br_uint(u: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from_biguint(Sign::Plus, u.clone()))
}

pub(crate) fn br_u64(u: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(u))
}

/// Round half away from zero.
pub(crate) fn round_rational(x: &BigRational) -> BigInt {
    (x + br(1, 2)).floor().to_integer()
}

pub(crate) fn rational_to_uint(x: &BigRational) -> Option<BigUint> {
    if x.is_integer() && !x.is_negative() {
        x.to_integer().to_biguint()
    } else {
        None
    }
}

fn fmt_ratio(x: &BigRational) -> String {
    if x.is_integer() {
        x.to_integer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

fn parse_ratio(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        Some(BigRational::new(n, d))
    } else if let Ok(i) = s.parse::<BigInt>() {
        Some(BigRational::from_integer(i))
    } else {
        let f: f64 = s.parse().ok()?;
        BigRational::from_float(f)
    }
}

/// log2 of a positive BigUint, with fractional part.
pub(crate) fn log2_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 52 {
        return (x.to_u64().unwrap() as f64).log2();
    }
    let shift = bits - 52;
    let top = (x >> shift).to_u64().unwrap() as f64;
    top.log2() + shift as f64
}

// ---------------------------------------------------------------------------
// derivation

/// Inputs for a toy-mode parameter set.
#[derive(Debug, Clone)]
pub struct ToySpec {
    pub levels: u32,
    pub layers: u64,
    pub block_degrees: Vec<u64>,
    pub base_width: u64,
    pub zeta: BigRational,
    pub xi: BigRational,
    pub gamma: BigRational,
    pub tau: BigRational,
}

/// Derive a paper-faithful parameter set from `delta`, choosing the smallest
/// even `N_1` that satisfies every divisibility constraint and is at least
/// `scale_hint`.
pub fn derive_paper_params(delta: f64, scale_hint: u64) -> Result<ParamSet, ParamError> {
    if !(delta > 0.0 && delta <= 2.0) {
        return Err(ParamError::Precondition(format!(
            "delta must be in (0, 2], got {delta}"
        )));
    }
    let levels_f = 4.0 / delta;
    let levels = levels_f.round();
    if levels < 1.0 || (levels_f - levels).abs() / levels_f > 0.005 {
        return Err(ParamError::NonIntegralParameter {
            name: "L = 4/delta",
            value: levels_f,
            rounded: levels,
        });
    }
    let levels = levels as u32;

    let layers_f = (10.0 / delta).powi(levels as i32 + 1);
    let layers = layers_f.round();
    if (layers_f - layers).abs() / layers_f > 0.005 {
        return Err(ParamError::NonIntegralParameter {
            name: "r = (10/delta)^(L+1)",
            value: layers_f,
            rounded: layers,
        });
    }
    if layers < 2.0 || layers >= u64::MAX as f64 {
        return Err(ParamError::InfeasibleScale(format!(
            "layer count {layers} out of supported range"
        )));
    }
    let layers = layers as u64;
    let r = BigInt::from(layers);

    let zeta = BigRational::new(BigInt::one(), &r * &r);
    let xi = zeta.clone();
    let gamma = BigRational::new(BigInt::one(), &r * &r * &r);
    // tau = (20 r^3)^{-L}
    let tau_den = (BigInt::from(20) * &r * &r * &r).pow(levels);
    let tau = BigRational::new(BigInt::one(), tau_den);

    let mut sigma: Vec<f64> = (1..=levels)
        .map(|i| (delta / 10.0).powi((levels + 1 - i) as i32))
        .collect();
    sigma.push(1.0);

    // Size coefficients c_l with n_l = c_l * N_1.
    let coeffs = size_coefficients(levels, layers, &zeta, &xi);

    // Smallest even N_1 with: 4 r^2 | N_1 (delusive quarters and xi-sizes),
    // every n_l even, and tau * n_L an even integer.
    let mut modulus = BigInt::from(4) * &r * &r;
    for c in &coeffs {
        modulus = modulus.lcm(&even_denominator(c));
    }
    let tau_cl = &tau * coeffs.last().unwrap();
    modulus = modulus.lcm(&even_denominator(&tau_cl));

    let hint = BigInt::from(scale_hint.max(1));
    let k = (&hint + &modulus - BigInt::one()) / &modulus;
    let n1 = (&modulus * k.max(BigInt::one())).to_biguint().unwrap();

    // Block degrees: d_1 is forced to a multiple of r^2 so the xi-structure
    // of the base layer r has integral degrees; above that the ladder tracks
    // n^{sigma_l} subject to strict ordering.
    let n_estimate = {
        let nl = coeffs.last().unwrap() * br_uint(&n1);
        (BigRational::one() + &tau) * nl
    };
    let log2_n = {
        let v = rational_to_uint(&n_estimate)
            .ok_or_else(|| ParamError::Precondition("internal: n not integral".into()))?;
        log2_biguint(&v)
    };
    let mut block_degrees: Vec<BigUint> = Vec::with_capacity(levels as usize);
    let r2 = (&r * &r).to_biguint().unwrap();
    for (i, s) in sigma.iter().take(levels as usize).enumerate() {
        let log2_d = s * log2_n;
        let want = if log2_d < 62.0 {
            BigUint::from(2f64.powf(log2_d).round().max(1.0) as u64)
        } else {
            // beyond buildable scale anyway; a faithful huge value
            BigUint::one() << (log2_d as u64)
        };
        let d = if i == 0 {
            let m = (&want + (&r2 >> 1u32)) / &r2;
            (&r2 * m.max(BigUint::one())).max(r2.clone())
        } else {
            let floor = &block_degrees[i - 1] + BigUint::one();
            want.max(floor)
        };
        block_degrees.push(d);
    }

    let epsilon_ln = (100.0 / (delta * delta)) * (delta / 400.0).ln();
    let epsilon = epsilon_ln.exp();

    finish_params(
        Mode::PaperFaithful,
        Some(delta),
        levels,
        layers,
        zeta,
        xi,
        gamma,
        tau,
        sigma,
        block_degrees,
        n1,
        epsilon,
        epsilon_ln,
    )
}

/// Build a toy-mode parameter set. Fails with the full validation report if
/// any structural constraint does not hold.
pub fn toy_params(spec: ToySpec) -> Result<ParamSet, ParamError> {
    if spec.block_degrees.len() != spec.levels as usize {
        return Err(ParamError::Precondition(format!(
            "expected {} block degrees, got {}",
            spec.levels,
            spec.block_degrees.len()
        )));
    }
    let p = match finish_params(
        Mode::Toy,
        None,
        spec.levels,
        spec.layers,
        spec.zeta,
        spec.xi,
        spec.gamma,
        spec.tau,
        Vec::new(),
        spec.block_degrees.iter().map(|&d| BigUint::from(d)).collect(),
        BigUint::from(spec.base_width),
        0.0,
        0.0,
    ) {
        Ok(p) => p,
        // Non-integral derived sizes are reported as validation failures,
        // not hard errors.
        Err(ParamError::Precondition(msg)) => {
            let mut rep = ValidationReport::default();
            rep.push("size-integral", msg);
            return Err(ParamError::ValidationFailed(Box::new(rep)));
        }
        Err(e) => return Err(e),
    };
    let report = validate(&p);
    if !report.ok() {
        return Err(ParamError::ValidationFailed(Box::new(report)));
    }
    Ok(p)
}

/// n_l / N_1 for l = 1..L, exact. Uses the true base count, which is smaller
/// than the nominal (2+4r+zeta r) N_1 by 2 xi N_1 because the two A_r subsets
/// of the base level are shrunk.
fn size_coefficients(levels: u32, layers: u64, zeta: &BigRational, xi: &BigRational) -> Vec<BigRational> {
    let r = br_u64(layers);
    let mut coeffs = Vec::with_capacity(levels as usize);
    let c1 = br_u64(2) + br_u64(4) * &r + &r * zeta - br_u64(2) * xi;
    coeffs.push(c1);
    for _ in 2..=levels {
        let prev = coeffs.last().unwrap().clone();
        // N_l = n_{l-1} / (2 zeta); n_l = (8 + 16 r + 4 zeta r) N_l
        let width = prev / (br_u64(2) * zeta);
        coeffs.push((br_u64(8) + br_u64(16) * &r + br_u64(4) * zeta * &r) * width);
    }
    coeffs
}

/// Denominator q such that q | x implies rho * x is an even integer.
fn even_denominator(rho: &BigRational) -> BigInt {
    let half = rho / br(2, 1);
    half.denom().clone()
}

#[allow(clippy::too_many_arguments)]
fn finish_params(
    mode: Mode,
    delta: Option<f64>,
    levels: u32,
    layers: u64,
    zeta: BigRational,
    xi: BigRational,
    gamma: BigRational,
    tau: BigRational,
    sigma: Vec<f64>,
    block_degrees: Vec<BigUint>,
    base_width: BigUint,
    epsilon: f64,
    epsilon_ln: f64,
) -> Result<ParamSet, ParamError> {
    if levels == 0 {
        return Err(ParamError::Precondition("levels must be >= 1".into()));
    }
    let coeffs = size_coefficients(levels, layers, &zeta, &xi);
    let n1r = br_uint(&base_width);
    let mut widths = Vec::with_capacity(levels as usize);
    let mut level_counts = Vec::with_capacity(levels as usize);
    widths.push(base_width.clone());
    for (l, c) in coeffs.iter().enumerate() {
        let count = c * &n1r;
        let count = rational_to_uint(&count).ok_or_else(|| {
            ParamError::Precondition(format!("level {} vertex count is not integral", l + 1))
        })?;
        if l >= 1 {
            let w = br_uint(&level_counts[l - 1]) / (br_u64(2) * &zeta);
            widths.push(rational_to_uint(&w).ok_or_else(|| {
                ParamError::Precondition(format!("width N_{} is not integral", l + 1))
            })?);
        }
        level_counts.push(count);
    }
    let n_top = level_counts.last().unwrap().clone();
    let dummy = &tau * br_uint(&n_top);
    let dummy_count = rational_to_uint(&dummy)
        .ok_or_else(|| ParamError::Precondition("dummy count tau*n_L is not integral".into()))?;
    let total_vertices = &n_top + &dummy_count;

    let (epsilon, epsilon_ln) = if mode == Mode::Toy {
        // Expressed so that the guaranteed gap N_1/2 equals epsilon * n.
        let e = br_uint(&base_width) / (br_u64(2) * br_uint(&total_vertices));
        let ef = e.to_f64().unwrap_or(0.0);
        (ef, ef.ln())
    } else {
        (epsilon, epsilon_ln)
    };

    Ok(ParamSet {
        mode,
        delta,
        levels,
        layers,
        zeta,
        xi,
        gamma,
        tau,
        sigma,
        block_degrees,
        base_width,
        widths,
        level_counts,
        dummy_count,
        total_vertices,
        epsilon,
        epsilon_ln,
    })
}

// ---------------------------------------------------------------------------
// the g function

/// Level-indexed exponent budget:
/// g(l) = (L-l+2) delta - 5 sum_{i=l}^{L} sigma_i/sigma_{i+1} - 5 sum_{i=l}^{L-1} sigma_i.
pub fn g(ell: u32, p: &ParamSet) -> Result<f64, ParamError> {
    let delta = p
        .delta
        .ok_or_else(|| ParamError::Precondition("g is undefined in toy mode".into()))?;
    if ell < 1 || ell > p.levels {
        return Err(ParamError::Precondition(format!(
            "level {ell} outside 1..={}",
            p.levels
        )));
    }
    let l = p.levels as usize;
    let i0 = ell as usize;
    let ratio_sum: f64 = (i0..=l).map(|i| p.sigma[i - 1] / p.sigma[i]).sum();
    let sigma_sum: f64 = (i0..l).map(|i| p.sigma[i - 1]).sum();
    Ok((l as f64 - ell as f64 + 2.0) * delta - 5.0 * ratio_sum - 5.0 * sigma_sum)
}

impl ParamSet {
    /// Query budget n^{2-delta} (paper mode), as f64.
    pub fn query_budget_estimate(&self) -> Option<f64> {
        let d = self.delta?;
        let log2n = log2_biguint(&self.total_vertices);
        Some(2f64.powf((2.0 - d) * log2n))
    }

    pub fn base_width_u64(&self) -> Option<u64> {
        self.base_width.to_u64()
    }

    pub fn total_vertices_u64(&self) -> Option<u64> {
        self.total_vertices.to_u64()
    }
}

// ---------------------------------------------------------------------------
// validation

pub fn validate(p: &ParamSet) -> ValidationReport {
    let mut rep = ValidationReport::default();

    for (name, v) in [
        ("zeta", &p.zeta),
        ("xi", &p.xi),
        ("gamma", &p.gamma),
        ("tau", &p.tau),
    ] {
        if !(v > &BigRational::zero() && v < &BigRational::one()) {
            rep.push("fraction-range", format!("{name} = {} not in (0,1)", fmt_ratio(v)));
        }
    }
    if p.layers < 2 {
        rep.push("layers-min", format!("r = {} must be at least 2", p.layers));
    }
    if p.block_degrees.len() != p.levels as usize {
        rep.push(
            "degree-count",
            format!(
                "{} block degrees for {} levels",
                p.block_degrees.len(),
                p.levels
            ),
        );
        return rep;
    }

    // Strict degree ladder, bounded by the total size.
    for w in p.block_degrees.windows(2) {
        if w[0] >= w[1] {
            rep.push("d-order", format!("block degrees not strictly increasing: {} >= {}", w[0], w[1]));
        }
    }
    if let Some(last) = p.block_degrees.last() {
        if last >= &p.total_vertices {
            rep.push("d-order", format!("d_L = {last} >= n = {}", p.total_vertices));
        }
    }

    // Embedded copy count must be integral (4/zeta copies per family).
    let copies = br_u64(4) / &p.zeta;
    if !copies.is_integer() {
        rep.push(
            "embed-div",
            format!("embedded copy count 4/zeta = {} not integral", fmt_ratio(&copies)),
        );
    }

    // xi <= 1/4 keeps the dummy layer from eating the guaranteed gap.
    if &p.xi > &br(1, 4) {
        rep.push("xi-range", format!("xi = {} exceeds 1/4", fmt_ratio(&p.xi)));
    }

    // Subset sizes: integral and even where named.
    let n1 = br_uint(&p.base_width);
    let quarter = &p.zeta * &n1 / br_u64(4);
    if !quarter.is_integer() {
        rep.push(
            "size-integral",
            format!("delusive quarter zeta*N_1/4 = {} not integral", fmt_ratio(&quarter)),
        );
    }
    let ar = (BigRational::one() - &p.xi) * &n1;
    match rational_to_uint(&ar) {
        Some(v) => {
            if v.is_odd() {
                rep.push("subset-even", format!("|A_r| = (1-xi) N_1 = {v} is odd"));
            }
        }
        None => rep.push("size-integral", format!("(1-xi) N_1 = {} not integral", fmt_ratio(&ar))),
    }
    if p.base_width.is_odd() {
        rep.push("subset-even", format!("N_1 = {} is odd", p.base_width));
    }
    if let Some(d) = (&p.zeta * &n1).to_integer().to_biguint() {
        if d.is_odd() {
            rep.push("subset-even", format!("|D_i| = zeta N_1 = {d} is odd"));
        }
    }

    // Level sizes must be even so the next level's width is integral.
    for (l, count) in p.level_counts.iter().enumerate() {
        if count.is_odd() {
            rep.push("subset-even", format!("n_{} = {} is odd", l + 1, count));
        }
    }

    // Dummy layer: even count, small enough to keep the exact gap.
    if p.dummy_count.is_odd() {
        rep.push("tau-even", format!("dummy count {} is odd", p.dummy_count));
    }
    let n_top = br_uint(p.level_counts.last().unwrap());
    let dummies = br_uint(&p.dummy_count);
    let bound1 = &n1 / br_u64(2);
    let bound2 = (BigRational::one() - br_u64(2) * &p.xi) * &n1;
    if dummies > bound1 || dummies > bound2 {
        rep.push(
            "tau-bound",
            format!(
                "dummy count {} exceeds min(N_1/2, (1-2xi)N_1) = {}",
                p.dummy_count,
                fmt_ratio(&bound1.min(bound2))
            ),
        );
    }
    let tau_check = &p.tau * &n_top;
    if !tau_check.is_integer() {
        rep.push("tau-even", format!("tau*n_L = {} not integral", fmt_ratio(&tau_check)));
    }

    // Base xi-structure degrees must be exact.
    let d1 = br_uint(&p.block_degrees[0]);
    let xi_deg = &p.xi * &d1;
    match rational_to_uint(&xi_deg) {
        Some(v) if v >= BigUint::one() => {}
        Some(v) => rep.push("xi-degree", format!("xi d_1 = {v} must be >= 1")),
        None => rep.push(
            "xi-degree",
            format!("xi d_1 = {} not integral", fmt_ratio(&xi_deg)),
        ),
    }
    if !((BigRational::one() - &p.xi) * &d1).is_integer() {
        rep.push(
            "xi-degree",
            format!("(1-xi) d_1 = {} not integral", fmt_ratio(&((BigRational::one() - &p.xi) * &d1))),
        );
    }

    // Block feasibility and the delusive degree table, level by level.
    crate::table::check_table(p, &mut rep);

    rep
}

// ---------------------------------------------------------------------------
// flat key=value parameter files

impl ParamSet {
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("mode = {}\n", self.mode));
        if let Some(d) = self.delta {
            s.push_str(&format!("delta = {d}\n"));
        }
        s.push_str(&format!("L = {}\n", self.levels));
        s.push_str(&format!("r = {}\n", self.layers));
        s.push_str(&format!("zeta = {}\n", fmt_ratio(&self.zeta)));
        s.push_str(&format!("xi = {}\n", fmt_ratio(&self.xi)));
        s.push_str(&format!("gamma = {}\n", fmt_ratio(&self.gamma)));
        s.push_str(&format!("tau = {}\n", fmt_ratio(&self.tau)));
        let ds: Vec<String> = self.block_degrees.iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("d = {}\n", ds.join(",")));
        s.push_str(&format!("N1 = {}\n", self.base_width));
        s
    }

    /// Parse a flat key=value block, with optional overrides applied on top
    /// (overrides win). Unknown keys are rejected.
    pub fn from_kv(text: &str, overrides: &[(String, String)]) -> Result<ParamSet, ParamError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ParamError::Precondition(format!("line {}: expected key = value", lineno + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        let get = |k: &str| -> Result<String, ParamError> {
            map.get(k)
                .cloned()
                .ok_or_else(|| ParamError::Precondition(format!("missing key {k}")))
        };
        let known = [
            "mode", "delta", "L", "r", "zeta", "xi", "gamma", "tau", "d", "N1", "scale_hint",
        ];
        for k in map.keys() {
            if !known.contains(&k.as_str()) {
                return Err(ParamError::Precondition(format!("unknown key {k}")));
            }
        }
        let mode = get("mode")?;
        match mode.as_str() {
            "paper" => {
                let delta: f64 = get("delta")?
                    .parse()
                    .map_err(|_| ParamError::Precondition("bad delta".into()))?;
                let hint: u64 = map
                    .get("scale_hint")
                    .map(|s| s.parse().unwrap_or(1))
                    .unwrap_or(1);
                derive_paper_params(delta, hint)
            }
            "toy" => {
                let ratio = |k: &str| -> Result<BigRational, ParamError> {
                    parse_ratio(&get(k)?)
                        .ok_or_else(|| ParamError::Precondition(format!("bad rational for {k}")))
                };
                let degrees: Result<Vec<u64>, _> = get("d")?
                    .split(',')
                    .map(|s| s.trim().parse::<u64>())
                    .collect();
                toy_params(ToySpec {
                    levels: get("L")?
                        .parse()
                        .map_err(|_| ParamError::Precondition("bad L".into()))?,
                    layers: get("r")?
                        .parse()
                        .map_err(|_| ParamError::Precondition("bad r".into()))?,
                    block_degrees: degrees
                        .map_err(|_| ParamError::Precondition("bad d list".into()))?,
                    base_width: get("N1")?
                        .parse()
                        .map_err(|_| ParamError::Precondition("bad N1".into()))?,
                    zeta: ratio("zeta")?,
                    xi: ratio("xi")?,
                    gamma: ratio("gamma")?,
                    tau: ratio("tau")?,
                })
            }
            other => Err(ParamError::Precondition(format!("unknown mode {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset_l1() -> ParamSet {
        toy_params(ToySpec {
            levels: 1,
            layers: 3,
            block_degrees: vec![4],
            base_width: 72,
            zeta: br(1, 9),
            xi: br(1, 4),
            gamma: br(1, 1000),
            tau: br(3, 83),
        })
        .expect("preset L1 must validate")
    }

    #[test]
    fn paper_delta_2_values() {
        let p = derive_paper_params(2.0, 1).unwrap();
        assert_eq!(p.levels, 2);
        assert_eq!(p.layers, 125);
        assert_eq!(p.zeta, br(1, 15625));
        assert_eq!(p.xi, br(1, 15625));
        assert_eq!(p.gamma, br(1, 1953125));
        assert!((p.sigma[0] - 0.04).abs() < 1e-12);
        assert!((p.sigma[1] - 0.2).abs() < 1e-12);
        assert!((p.sigma[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn paper_delta_1_values() {
        let p = derive_paper_params(1.0, 1).unwrap();
        assert_eq!(p.levels, 4);
        assert_eq!(p.layers, 100_000);
        assert_eq!(p.gamma, BigRational::new(BigInt::one(), BigInt::from(10u64).pow(15)));
        let tau_den = (BigInt::from(20) * BigInt::from(10u64).pow(15)).pow(4);
        assert_eq!(p.tau, BigRational::new(BigInt::one(), tau_den));
    }

    #[test]
    fn paper_delta_zero_rejected() {
        assert!(derive_paper_params(0.0, 1).is_err());
    }

    #[test]
    fn paper_minimal_sets_validate() {
        for delta in [2.0, 4.0 / 3.0, 1.0] {
            let p = derive_paper_params(delta, 1).unwrap();
            let rep = validate(&p);
            assert!(rep.ok(), "delta={delta}: {rep}");
        }
    }

    #[test]
    fn paper_tau_bound_holds() {
        // dummy count <= N_1 / 2
        for delta in [2.0, 1.0] {
            let p = derive_paper_params(delta, 1).unwrap();
            assert!(br_uint(&p.dummy_count) <= br_uint(&p.base_width) / br_u64(2));
        }
    }

    #[test]
    fn toy_parity_rejected() {
        // Odd N_1 violates subset evenness.
        let r = toy_params(ToySpec {
            levels: 1,
            layers: 3,
            block_degrees: vec![4],
            base_width: 35,
            zeta: br(1, 5),
            xi: br(1, 5),
            gamma: br(1, 27),
            tau: br(1, 20),
        });
        match r {
            Err(ParamError::ValidationFailed(rep)) => {
                assert!(rep.violations.iter().any(|v| v.constraint == "subset-even"
                    || v.constraint == "size-integral"));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn toy_preset_sizes() {
        let p = preset_l1();
        // n_1 = (2 + 4r + zeta r - 2 xi) N_1 = (2 + 12 + 1/3 - 1/2) * 72 = 996
        assert_eq!(p.level_counts[0], BigUint::from(996u64));
        assert_eq!(p.dummy_count, BigUint::from(36u64));
        assert_eq!(p.total_vertices, BigUint::from(1032u64));
        // toy epsilon: N_1 / (2n) so that eps * n = N_1 / 2
        assert!((p.epsilon * 1032.0 - 36.0).abs() < 1e-9);
    }

    #[test]
    fn toy_nonintegral_copy_count_rejected() {
        // zeta = 3/8 keeps every size integral but makes 4/zeta = 32/3.
        let r = toy_params(ToySpec {
            levels: 2,
            layers: 2,
            block_degrees: vec![4, 16],
            base_width: 48,
            zeta: br(3, 8),
            xi: br(1, 4),
            gamma: br(1, 1000),
            tau: br(1, 4),
        });
        match r {
            Err(ParamError::ValidationFailed(rep)) => {
                assert!(rep.violations.iter().any(|v| v.constraint == "embed-div"), "{rep}");
            }
            other => panic!("expected embed-div failure, got {other:?}"),
        }
    }

    #[test]
    fn toy_l2_widths() {
        let p = toy_params(ToySpec {
            levels: 2,
            layers: 2,
            block_degrees: vec![4, 16],
            base_width: 48,
            zeta: br(1, 4),
            xi: br(1, 4),
            gamma: br(1, 1000),
            tau: br(24, 40320),
        })
        .unwrap();
        // n_1 = (2 + 8 + 1/2 - 1/2) * 48 = 480; N_2 = n_1/(2 zeta) = 960
        assert_eq!(p.level_counts[0], BigUint::from(480u64));
        assert_eq!(p.widths[1], BigUint::from(960u64));
        assert_eq!(p.level_counts[1], BigUint::from(40320u64));
        assert_eq!(p.dummy_count, BigUint::from(24u64));
    }

    #[test]
    fn g_function_identities() {
        let p = derive_paper_params(2.0, 1).unwrap();
        // g(L) = 2 delta - 5 sigma_L
        let gl = g(2, &p).unwrap();
        assert!((gl - (4.0 - 5.0 * 0.2)).abs() < 1e-12);
        // recurrence g(l-1) = g(l) + delta - 5 s_{l-1}/s_l - 5 s_{l-1}
        let g1 = g(1, &p).unwrap();
        let expect = gl + 2.0 - 5.0 * (0.04 / 0.2) - 5.0 * 0.04;
        assert!((g1 - expect).abs() < 1e-12);
        // g(1) > 2 for paper-faithful parameters
        assert!(g1 > 2.0);
        for delta in [1.0, 4.0 / 3.0] {
            let p = derive_paper_params(delta, 1).unwrap();
            assert!(g(1, &p).unwrap() > 2.0, "delta={delta}");
        }
    }

    #[test]
    fn g_undefined_in_toy_mode() {
        let p = preset_l1();
        assert!(g(1, &p).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let p = preset_l1();
        let text = p.to_kv();
        let q = ParamSet::from_kv(&text, &[]).unwrap();
        assert_eq!(p, q);
        // override wins
        let q2 = ParamSet::from_kv(&text, &[("N1".into(), "144".into())]).unwrap();
        assert_eq!(q2.base_width, BigUint::from(144u64));
    }

    #[test]
    fn global_handshake_parity() {
        // Sum over subsets of size * total skeleton degree must be even
        // (it equals twice the edge count).
        let p = preset_l1();
        let table = crate::table::DegreeTable::build(&p).unwrap();
        for lt in &table.levels {
            let mut total = BigUint::zero();
            for (kind, size) in lt.subsets() {
                total += size * lt.skeleton_total(kind);
            }
            assert!(total.is_even(), "level {} parity", lt.level);
        }
    }
}

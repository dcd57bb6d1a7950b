//! PDE coefficients, their validation, and classification of a parameter set
//! against the known global-boundedness results.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used to decide that `mu` sits exactly on the critical
/// line `(n-2)/n * chi * alpha`.
const BORDERLINE_RTOL: f64 = 1e-12;

/// Upper end of the boundary exponents accepted for exploration.
pub const P_EXPLORATION_MAX: f64 = 3.0;

/// The critical boundary exponent for quadratic damping.
pub const P_CRITICAL: f64 = 1.5;

/// Boundary exponent limit of the three-dimensional parabolic–parabolic result.
pub const P_LIMIT_3D: f64 = 1.4;

/// Whether the signal equation is quasi-static or evolves in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalRegime {
    /// `0 = Δv + αu − βv` (τ = 0).
    ParabolicElliptic,
    /// `v_t = Δv + αu − βv` (τ = 1).
    ParabolicParabolic,
}

impl SignalRegime {
    pub fn tau(self) -> u8 {
        match self {
            Self::ParabolicElliptic => 0,
            Self::ParabolicParabolic => 1,
        }
    }
}

/// Raw parameter record as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModelParams {
    pub chi: f64,
    pub a: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub p: f64,
    pub dim: usize,
    /// Admit `mu = 0` and `p` in `[3/2, 3)`.
    #[serde(default)]
    pub exploration: bool,
}

/// Validated coefficients of the chemotaxis system.
///
/// Fields are public so tests and studies can build parameter sets outside
/// the validated range (e.g. pure diffusion with `a = mu = 0`); anything read
/// from configuration goes through [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub chi: f64,
    pub a: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub regime: SignalRegime,
    pub p: f64,
    pub dim: usize,
    pub exploration: bool,
}

/// Coefficients of the scalar problem `U_t = ΔU − μU^Q`, `∂U/∂ν = U^P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbcParams {
    pub mu: f64,
    pub q: f64,
    pub p: f64,
}

impl NbcParams {
    pub fn new(mu: f64, q: f64, p: f64) -> Result<Self, ValidationError> {
        let mut v = Vec::new();
        if !(mu > 0.0 && mu.is_finite()) {
            v.push(Violation::NonPositiveRate { name: "mu", value: mu });
        }
        if !(q > 1.0 && q.is_finite()) {
            v.push(Violation::BadExponent { name: "q", value: q, constraint: "q > 1" });
        }
        if !(p > 1.0 && p.is_finite()) {
            v.push(Violation::BadExponent { name: "p", value: p, constraint: "p > 1" });
        }
        if v.is_empty() {
            Ok(Self { mu, q, p })
        } else {
            Err(ValidationError(v))
        }
    }

    /// Boundary exponent separating global boundedness from blow-up, `(Q+1)/2`.
    pub fn critical_p(&self) -> f64 {
        (self.q + 1.0) / 2.0
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("{name} must be positive, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("{name} = {value} violates {constraint}")]
    BadExponent { name: &'static str, value: f64, constraint: &'static str },
    #[error("tau must be 0 or 1, got {0}")]
    BadTau(f64),
    #[error("mu must be nonnegative, got {0}")]
    NegativeDamping(f64),
    #[error("{what} is only admitted with exploration = true")]
    ExplorationRequired { what: String },
    #[error("dimension must be 1, 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
}

/// Structured rejection listing every violated constraint.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationError(pub Vec<Violation>);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid parameters: ")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate(raw: &RawModelParams) -> Result<ModelParams, ValidationError> {
    let mut v = Vec::new();
    for (name, value) in [
        ("chi", raw.chi),
        ("a", raw.a),
        ("mu", raw.mu),
        ("alpha", raw.alpha),
        ("beta", raw.beta),
        ("p", raw.p),
    ] {
        if !value.is_finite() {
            v.push(Violation::NonFinite { name, value });
        }
    }
    for (name, value) in [("a", raw.a), ("alpha", raw.alpha), ("beta", raw.beta)] {
        if value.is_finite() && value <= 0.0 {
            v.push(Violation::NonPositiveRate { name, value });
        }
    }
    if raw.mu < 0.0 {
        v.push(Violation::NegativeDamping(raw.mu));
    } else if raw.mu == 0.0 && !raw.exploration {
        v.push(Violation::ExplorationRequired { what: "mu = 0".into() });
    }
    let regime = if raw.tau == 0.0 {
        Some(SignalRegime::ParabolicElliptic)
    } else if raw.tau == 1.0 {
        Some(SignalRegime::ParabolicParabolic)
    } else {
        v.push(Violation::BadTau(raw.tau));
        None
    };
    if raw.p.is_finite() {
        if raw.p <= 1.0 {
            v.push(Violation::BadExponent { name: "p", value: raw.p, constraint: "p > 1" });
        } else if raw.p >= P_EXPLORATION_MAX {
            v.push(Violation::BadExponent { name: "p", value: raw.p, constraint: "p < 3" });
        } else if raw.p >= P_CRITICAL && !raw.exploration {
            v.push(Violation::ExplorationRequired { what: format!("p = {} >= 3/2", raw.p) });
        }
    }
    if !(1..=3).contains(&raw.dim) {
        v.push(Violation::BadDimension(raw.dim));
    }
    match regime {
        Some(regime) if v.is_empty() => Ok(ModelParams {
            chi: raw.chi,
            a: raw.a,
            mu: raw.mu,
            alpha: raw.alpha,
            beta: raw.beta,
            regime,
            p: raw.p,
            dim: raw.dim,
            exploration: raw.exploration,
        }),
        _ => Err(ValidationError(v)),
    }
}

impl ModelParams {
    pub fn to_raw(&self) -> RawModelParams {
        RawModelParams {
            chi: self.chi,
            a: self.a,
            mu: self.mu,
            alpha: self.alpha,
            beta: self.beta,
            tau: f64::from(self.regime.tau()),
            p: self.p,
            dim: self.dim,
            exploration: self.exploration,
        }
    }
}

/// `(n-2)/n * chi * alpha`, the damping threshold of the parabolic–elliptic system.
pub fn mu_critical_pe(n: usize, chi: f64, alpha: f64) -> f64 {
    debug_assert!(n >= 2);
    (n as f64 - 2.0) / n as f64 * chi * alpha
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("mu0 needs chi > -2, got chi = {chi}")]
pub struct DegenerateDenominator {
    pub chi: f64,
}

/// Explicit damping level above which the 3D parabolic–parabolic system is
/// bounded: `max{1/3, 2(a+1)/(2+χ), 3(χ/(2+χ) + 7α² + (χ²+2)/2)}`.
pub fn mu0_3d(chi: f64, a: f64, alpha: f64) -> Result<f64, DegenerateDenominator> {
    if chi <= -2.0 || !chi.is_finite() {
        return Err(DegenerateDenominator { chi });
    }
    let denom = 2.0 + chi;
    let second = 2.0 * (a + 1.0) / denom;
    let third = 3.0 * (chi / denom + 7.0 * alpha * alpha + (chi * chi + 2.0) / 2.0);
    Ok((1.0f64 / 3.0).max(second).max(third))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeVerdict {
    GuaranteedBounded,
    BorderlineBounded,
    NoGuarantee,
}

impl fmt::Display for RegimeVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GuaranteedBounded => "GuaranteedBounded",
            Self::BorderlineBounded => "BorderlineBounded",
            Self::NoGuarantee => "NoGuarantee",
        })
    }
}

/// Which boundedness result a classification refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Citation {
    /// Parabolic–elliptic, `n >= 2`, `μ > (n−2)/n χα`, `1 < p < 3/2`.
    ParabolicEllipticStrict,
    /// Parabolic–elliptic, `n >= 3`, `μ = (n−2)/n χα`, `1 < p < 1 + 1/n`.
    ParabolicEllipticBorderline,
    /// Parabolic–parabolic, `n = 2`, `1 < p < 3/2`.
    ParabolicParabolic2d,
    /// Parabolic–parabolic, `n = 3`, `1 < p < 7/5`, `μ > μ₀`.
    ParabolicParabolic3d,
}

impl Citation {
    pub fn label(self) -> &'static str {
        match self {
            Self::ParabolicEllipticStrict => "parabolic-elliptic, mu above the critical line",
            Self::ParabolicEllipticBorderline => "parabolic-elliptic, mu on the critical line",
            Self::ParabolicParabolic2d => "parabolic-parabolic, n = 2",
            Self::ParabolicParabolic3d => "parabolic-parabolic, n = 3, mu above mu0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Thresholds {
    pub mu_crit: Option<f64>,
    pub mu0: Option<f64>,
    pub p_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub verdict: RegimeVerdict,
    pub citation: Option<Citation>,
    pub thresholds: Thresholds,
    /// Which hypothesis failed, or which one is nearest, in words.
    pub note: String,
}

pub fn classify_regime(params: &ModelParams) -> RegimeClassification {
    let n = params.dim;
    let p = params.p;
    let mu = params.mu;
    let no = |thresholds: Thresholds, note: String| RegimeClassification {
        verdict: RegimeVerdict::NoGuarantee,
        citation: None,
        thresholds,
        note,
    };

    if n < 2 {
        return no(
            Thresholds { p_limit: Some(P_CRITICAL), ..Default::default() },
            "n = 1 is a testing device; boundedness results assume n >= 2".into(),
        );
    }
    if mu <= 0.0 {
        return no(
            Thresholds { p_limit: Some(P_CRITICAL), ..Default::default() },
            "all boundedness results assume mu > 0".into(),
        );
    }

    match params.regime {
        SignalRegime::ParabolicElliptic => {
            let mu_crit = mu_critical_pe(n, params.chi, params.alpha);
            let on_line = (mu - mu_crit).abs() <= BORDERLINE_RTOL * mu_crit.abs().max(f64::MIN_POSITIVE);
            if n >= 3 && on_line {
                let p_limit = 1.0 + 1.0 / n as f64;
                let thresholds = Thresholds { mu_crit: Some(mu_crit), mu0: None, p_limit: Some(p_limit) };
                return if p > 1.0 && p < p_limit {
                    RegimeClassification {
                        verdict: RegimeVerdict::BorderlineBounded,
                        citation: Some(Citation::ParabolicEllipticBorderline),
                        thresholds,
                        note: format!("mu on the critical line, p < 1 + 1/{n}"),
                    }
                } else {
                    no(thresholds, format!("mu on the critical line needs p < {p_limit}"))
                };
            }
            let thresholds = Thresholds { mu_crit: Some(mu_crit), mu0: None, p_limit: Some(P_CRITICAL) };
            match (mu > mu_crit, p > 1.0 && p < P_CRITICAL) {
                (true, true) => RegimeClassification {
                    verdict: RegimeVerdict::GuaranteedBounded,
                    citation: Some(Citation::ParabolicEllipticStrict),
                    thresholds,
                    note: format!("mu > {mu_crit} and p < 3/2"),
                },
                (true, false) => no(thresholds, format!("p = {p} >= 3/2 (boundedness open)")),
                (false, _) => no(thresholds, format!("mu = {mu} <= mu_crit = {mu_crit}")),
            }
        }
        SignalRegime::ParabolicParabolic => match n {
            2 => {
                let thresholds = Thresholds { mu_crit: None, mu0: None, p_limit: Some(P_CRITICAL) };
                if p > 1.0 && p < P_CRITICAL {
                    RegimeClassification {
                        verdict: RegimeVerdict::GuaranteedBounded,
                        citation: Some(Citation::ParabolicParabolic2d),
                        thresholds,
                        note: "n = 2, mu > 0, p < 3/2".into(),
                    }
                } else {
                    no(thresholds, format!("p = {p} >= 3/2 (boundedness open)"))
                }
            }
            3 => {
                let mu0 = mu0_3d(params.chi, params.a, params.alpha).ok();
                let thresholds = Thresholds { mu_crit: None, mu0, p_limit: Some(P_LIMIT_3D) };
                let Some(mu0) = mu0 else {
                    return no(thresholds, "mu0 undefined for chi <= -2".into());
                };
                match (p > 1.0 && p < P_LIMIT_3D, mu > mu0) {
                    (true, true) => RegimeClassification {
                        verdict: RegimeVerdict::GuaranteedBounded,
                        citation: Some(Citation::ParabolicParabolic3d),
                        thresholds,
                        note: format!("p < 7/5 and mu > mu0 = {mu0}"),
                    },
                    (false, _) => no(thresholds, format!("p = {p} >= 7/5")),
                    (true, false) => no(thresholds, format!("mu = {mu} <= mu0 = {mu0}")),
                }
            }
            _ => no(Thresholds::default(), format!("no result for tau = 1, n = {n}")),
        },
    }
}

//! Economic primitives: Cobb-Douglas utility, consumption share, fertility
//! weighting, family utility and the mortality hazard.
//!
//! With `alpha + beta = 1` every utility here is homogeneous of degree one, so
//! the utility-maximising number of children does not depend on how much an
//! agent works or consumes. [`choose_k`] exploits that.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hours available to an agent in one generation.
pub const DAY_HOURS: f64 = 24.0;

/// Taste parameters of one agent. `beta` is always `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    alpha: f64,
    sigma: f64,
}

impl Preferences {
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if !(0.0..1.0).contains(&sigma) {
            return Err(Error::param("sigma", format!("must lie in [0, 1), got {sigma}")));
        }
        Ok(Self { alpha, sigma })
    }

    /// Leisure exponent.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Consumption exponent.
    pub fn beta(&self) -> f64 {
        1.0 - self.alpha
    }

    /// Weight on offspring utility.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u64,
    pub prefs: Preferences,
    /// Hours worked over the agent's whole life so far.
    pub cumulative_labor: f64,
    pub labor: f64,
    pub leisure: f64,
    pub fertility: u32,
    pub consumption: f64,
    pub alive: bool,
    pub birth_generation: u32,
}

impl Agent {
    pub fn newborn(id: u64, prefs: Preferences, birth_generation: u32) -> Self {
        Self {
            id,
            prefs,
            cumulative_labor: 0.0,
            labor: 0.0,
            leisure: DAY_HOURS,
            fertility: 0,
            consumption: 0.0,
            alive: true,
            birth_generation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocietyParams {
    /// Returns-to-scale exponent of the society's production function.
    pub gamma: f64,
    /// Cumulative labor at which the per-generation death hazard is one half.
    pub mortality_mid: f64,
    pub mortality_scale: f64,
    pub k_max: u32,
    pub initial_population: usize,
}

impl SocietyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be finite and > 1, got {}", self.gamma)));
        }
        if !(self.mortality_mid > 0.0 && self.mortality_mid.is_finite()) {
            return Err(Error::param("mortality_mid", "must be finite and > 0"));
        }
        if !(self.mortality_scale > 0.0 && self.mortality_scale.is_finite()) {
            return Err(Error::param("mortality_scale", "must be finite and > 0"));
        }
        if self.k_max < 1 {
            return Err(Error::param("k_max", "must be >= 1"));
        }
        if self.initial_population < 2 {
            return Err(Error::param("initial_population", "must be >= 2"));
        }
        Ok(())
    }
}

/// Cobb-Douglas utility `z^alpha * c^beta`. Zero whenever either input is zero.
pub fn utility(leisure: f64, consumption: f64, prefs: &Preferences) -> Result<f64> {
    if !(leisure >= 0.0) || !(consumption >= 0.0) {
        return Err(Error::Domain(format!(
            "utility needs non-negative inputs, got leisure={leisure}, consumption={consumption}"
        )));
    }
    Ok(cobb_douglas(leisure, consumption, prefs.alpha()))
}

#[inline]
pub(crate) fn cobb_douglas(leisure: f64, consumption: f64, alpha: f64) -> f64 {
    if leisure == 0.0 || consumption == 0.0 {
        return 0.0;
    }
    leisure.powf(alpha) * consumption.powf(1.0 - alpha)
}

/// Consumption share `l * (l + others)^(gamma - 1)`: proportional to own labor.
pub fn consumption(labor: f64, others_labor: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=DAY_HOURS).contains(&labor) {
        return Err(Error::Domain(format!("labor must lie in [0, 24], got {labor}")));
    }
    if !(others_labor >= 0.0) {
        return Err(Error::Domain(format!("others' labor must be >= 0, got {others_labor}")));
    }
    if !(gamma > 1.0) {
        return Err(Error::Domain(format!("gamma must be > 1, got {gamma}")));
    }
    Ok(consumption_unchecked(labor, labor + others_labor, gamma))
}

#[inline]
pub(crate) fn consumption_unchecked(labor: f64, total_labor: f64, gamma: f64) -> f64 {
    if labor == 0.0 {
        return 0.0;
    }
    labor * total_labor.powf(gamma - 1.0)
}

/// Geometric offspring weighting `sum_{j=1..k} sigma^j`.
pub fn sigma_weight(sigma: f64, k: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::param("sigma", format!("must lie in [0, 1), got {sigma}")));
    }
    Ok(sigma_weight_unchecked(sigma, k))
}

fn sigma_weight_unchecked(sigma: f64, k: u32) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 0..k {
        term *= sigma;
        sum += term;
    }
    sum
}

/// Household utility with `k` children: own share of leisure and consumption
/// plus the sigma-weighted utility the children are expected to enjoy.
pub fn family_utility(leisure: f64, consumption: f64, prefs: &Preferences, k: u32) -> Result<f64> {
    let share = f64::from(k) + 1.0;
    let own = utility(leisure / share, consumption / share, prefs)?;
    let full = utility(leisure, consumption, prefs)?;
    Ok(own + sigma_weight_unchecked(prefs.sigma(), k) * full)
}

/// `U*(z, c, k) / U(z, c)`: the multiplier the number of children applies to
/// plain utility.
pub fn fertility_bracket(sigma: f64, k: u32) -> f64 {
    1.0 / (f64::from(k) + 1.0) + sigma_weight_unchecked(sigma, k)
}

/// Utility-maximising number of children in `0..=k_max`, ties to the smaller k.
pub fn choose_k(prefs: &Preferences, k_max: u32) -> u32 {
    let mut best_k = 0;
    let mut best = fertility_bracket(prefs.sigma(), 0);
    for k in 1..=k_max {
        let b = fertility_bracket(prefs.sigma(), k);
        if b > best {
            best = b;
            best_k = k;
        }
    }
    best_k
}

/// Per-generation death probability, logistic in cumulative labor.
pub fn mortality(cumulative_labor: f64, params: &SocietyParams) -> f64 {
    let x = (cumulative_labor - params.mortality_mid) / params.mortality_scale;
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    // keep the open interval even where the logistic saturates in f64
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prefs(alpha: f64, sigma: f64) -> Preferences {
        Preferences::new(alpha, sigma).unwrap()
    }

    fn params() -> SocietyParams {
        SocietyParams { gamma: 1.5, mortality_mid: 240.0, mortality_scale: 60.0, k_max: 10, initial_population: 100 }
    }

    #[test]
    fn beta_is_complement() {
        let p = prefs(0.3, 0.2);
        assert_eq!(p.alpha() + p.beta(), 1.0);
        assert!(Preferences::new(0.0, 0.5).is_err());
        assert!(Preferences::new(1.0, 0.5).is_err());
        assert!(Preferences::new(0.5, 1.0).is_err());
    }

    #[test]
    fn utility_examples() {
        assert_eq!(utility(1.0, 1.0, &prefs(0.3, 0.0)).unwrap(), 1.0);
        assert!((utility(4.0, 9.0, &prefs(0.5, 0.0)).unwrap() - 6.0).abs() < 1e-12);
        assert!((utility(16.0, 1.0, &prefs(0.5, 0.0)).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(utility(0.0, 5.0, &prefs(0.5, 0.0)).unwrap(), 0.0);
        assert!(utility(-1.0, 1.0, &prefs(0.5, 0.0)).is_err());
    }

    #[test]
    fn consumption_examples() {
        assert_eq!(consumption(0.0, 5.0, 1.7).unwrap(), 0.0);
        assert!((consumption(2.0, 2.0, 2.0).unwrap() - 8.0).abs() < 1e-12);
        // 12^1.5 = 41.569219381653056...
        assert!((consumption(12.0, 0.0, 1.5).unwrap() - 41.569_219_381_653_056).abs() < 1e-10);
        assert!(consumption(25.0, 0.0, 1.5).is_err());
        assert!(consumption(2.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn sigma_weight_examples() {
        assert_eq!(sigma_weight(0.7, 0).unwrap(), 0.0);
        assert!((sigma_weight(0.5, 2).unwrap() - 0.75).abs() < 1e-15);
        assert!((sigma_weight(0.9, 3).unwrap() - 2.439).abs() < 1e-12);
        assert!(sigma_weight(1.0, 2).is_err());
    }

    #[test]
    fn family_utility_examples() {
        for sigma in [0.0, 0.3, 0.9] {
            assert!((family_utility(4.0, 9.0, &prefs(0.5, sigma), 0).unwrap() - 6.0).abs() < 1e-12);
        }
        // U(2, 4.5) = 3 plus 0.5 * 6
        assert!((family_utility(4.0, 9.0, &prefs(0.5, 0.5), 1).unwrap() - 6.0).abs() < 1e-12);
        let p = prefs(0.37, 0.6);
        let a = family_utility(3.0, 11.0, &p, 4).unwrap();
        let b = family_utility(6.0, 22.0, &p, 4).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
    }

    /// Brute-force argmax of the bracket over k, computed independently.
    fn brute_k(sigma: f64, k_max: u32) -> u32 {
        let vals: Vec<f64> = (0..=k_max)
            .map(|k| 1.0 / (k as f64 + 1.0) + (1..=k).map(|j| sigma.powi(j as i32)).sum::<f64>())
            .collect();
        let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        vals.iter().position(|&v| v == best).unwrap() as u32
    }

    #[test]
    fn choose_k_examples() {
        assert_eq!(choose_k(&prefs(0.5, 0.4), 10), 0);
        assert_eq!(choose_k(&prefs(0.5, 0.6), 3), 3);
        assert_eq!(brute_k(0.6, 3), 3);
        // B(0) = B(1) = 1 at sigma = 0.5, but B(2..) are larger: B(4) = 0.2 + 0.9375.
        assert_eq!(brute_k(0.5, 10), 4);
        assert_eq!(choose_k(&prefs(0.5, 0.5), 10), 4);
        assert_eq!(choose_k(&prefs(0.5, 0.5), 1), 0);
        assert_eq!(choose_k(&prefs(0.5, 0.0), 10), 0);
    }

    #[test]
    fn one_child_threshold_at_half() {
        // B(1) - B(0) = sigma - 1/2
        assert!(fertility_bracket(0.5, 1) == fertility_bracket(0.5, 0));
        assert!(fertility_bracket(0.51, 1) > fertility_bracket(0.51, 0));
        assert!(fertility_bracket(0.49, 1) < fertility_bracket(0.49, 0));
    }

    #[test]
    fn mortality_examples() {
        let p = params();
        assert!((mortality(240.0, &p) - 0.5).abs() < 1e-15);
        let expected = 1.0 / (1.0 + 4f64.exp());
        assert!((mortality(0.0, &p) - expected).abs() < 1e-15);
        assert!((mortality(0.0, &p) - 0.01799).abs() < 1e-5);
        assert!(mortality(1e6, &p) < 1.0);
        assert!(mortality(-1e6, &p) > 0.0);
    }
}

//! The four allocation strategies and their objectives.
//!
//! | kind  | who chooses labor         | consumption accounting   | maximand  |
//! |-------|---------------------------|--------------------------|-----------|
//! | `S0`  | each agent for themselves | myopic                   | own U*    |
//! | `SA`  | central planner           | self-consistent          | mean U*   |
//! | `Sb`  | central evaluator         | myopic                   | min U*    |
//! | `SAb` | central planner           | self-consistent          | min U*    |
//!
//! Myopic accounting values agent `i`'s consumption as `l_i (l_i + L)^(g-1)`
//! with `L` a belief about everybody else's labor taken from the previous
//! generation. Self-consistent accounting uses the realised total labor.
//!
//! The number of children does not interact with labor (see
//! [`economy::choose_k`]), so fertility is solved exactly first and only the
//! labor vector is searched.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::economy::{self, choose_k, fertility_bracket, Agent, SocietyParams, DAY_HOURS};
use crate::error::{Error, Result};
use crate::optimizer::{
    from_bounded, maximize, nelder_mead_max, to_bounded, BlockObjective, FnObjective, Objective, SimplexOptions,
};
use crate::stochastics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "0")]
    S0,
    #[serde(rename = "A")]
    SA,
    #[serde(rename = "b")]
    Sb,
    #[serde(rename = "Ab")]
    SAb,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [StrategyKind::S0, StrategyKind::SA, StrategyKind::Sb, StrategyKind::SAb];

    pub fn tag(self) -> u8 {
        match self {
            StrategyKind::S0 => 0,
            StrategyKind::SA => 1,
            StrategyKind::Sb => 2,
            StrategyKind::SAb => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::S0 => "0",
            StrategyKind::SA => "A",
            StrategyKind::Sb => "b",
            StrategyKind::SAb => "Ab",
        }
    }

    fn accounting_is_self_consistent(self) -> bool {
        matches!(self, StrategyKind::SA | StrategyKind::SAb)
    }

    fn aggregate(self) -> Aggregate {
        match self {
            StrategyKind::S0 | StrategyKind::SA => Aggregate::Mean,
            StrategyKind::Sb | StrategyKind::SAb => Aggregate::Min,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "S0" => Ok(StrategyKind::S0),
            "A" | "SA" => Ok(StrategyKind::SA),
            "b" | "Sb" => Ok(StrategyKind::Sb),
            "Ab" | "SAb" => Ok(StrategyKind::SAb),
            other => Err(Error::param("strategy", format!("unknown strategy `{other}` (expected 0, A, b or Ab)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub labor: Vec<f64>,
    pub fertility: Vec<u32>,
    pub utilities: Vec<f64>,
    pub consumptions: Vec<f64>,
    pub objective_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationOptions {
    pub simplex: SimplexOptions,
    /// Hours per other agent assumed when the previous generation's economy
    /// is smaller than that.
    pub myopic_floor_hours: f64,
    /// Start the planner problems from the per-agent (Strategy 0) solution.
    pub warm_start: bool,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        Self { simplex: SimplexOptions::default(), myopic_floor_hours: 12.0, warm_start: true }
    }
}

/// Everybody else's labor as believed by a myopic agent in a society of `n`.
pub fn myopic_others_labor(prev_total_labor: f64, n: usize, floor_hours: f64) -> f64 {
    let n = n as f64;
    (prev_total_labor - prev_total_labor / n).max(floor_hours * (n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Aggregate {
    Mean,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Accounting {
    SelfConsistent,
    /// Others' labor is a fixed belief.
    Myopic(f64),
}

#[derive(Debug, Clone, Copy)]
struct Terms {
    alpha: f64,
    beta: f64,
    ln_bracket: f64,
}

impl Terms {
    /// `ln(B z^alpha l^beta)`: log utility without the production factor.
    #[inline]
    fn ln_base(&self, labor: f64) -> f64 {
        self.ln_bracket + self.alpha * (DAY_HOURS - labor).ln() + self.beta * labor.ln()
    }
}

/// Labor allocation problem over the unconstrained coordinates `u`, with
/// `labor = 24 * logistic(u)`.
struct LaborProblem {
    terms: Vec<Terms>,
    gamma: f64,
    accounting: Accounting,
    aggregate: Aggregate,
}

impl LaborProblem {
    #[inline]
    fn exponent(&self, t: &Terms) -> f64 {
        (self.gamma - 1.0) * t.beta
    }

    fn utilities_at(&self, labor: &[f64]) -> Vec<f64> {
        match self.accounting {
            Accounting::SelfConsistent => {
                let ln_total = labor.iter().sum::<f64>().ln();
                self.terms.iter().zip(labor).map(|(t, &l)| (t.ln_base(l) + self.exponent(t) * ln_total).exp()).collect()
            }
            Accounting::Myopic(others) => self
                .terms
                .iter()
                .zip(labor)
                .map(|(t, &l)| (t.ln_base(l) + self.exponent(t) * (l + others).ln()).exp())
                .collect(),
        }
    }

    fn aggregate(&self, values: impl Iterator<Item = f64>, n: usize) -> f64 {
        match self.aggregate {
            Aggregate::Mean => values.sum::<f64>() / n as f64,
            Aggregate::Min => values.fold(f64::INFINITY, f64::min),
        }
    }
}

impl Objective for LaborProblem {
    fn arity(&self) -> usize {
        self.terms.len()
    }

    fn evaluate(&self, u: &[f64]) -> f64 {
        let labor: Vec<f64> = u.iter().map(|&v| to_bounded(v, 0.0, DAY_HOURS)).collect();
        let utilities = self.utilities_at(&labor);
        self.aggregate(utilities.into_iter(), self.terms.len())
    }
}

impl BlockObjective for LaborProblem {
    fn restrict<'a>(&'a self, u: &'a [f64], block: Range<usize>) -> Box<dyn Objective + 'a> {
        let labor: Vec<f64> = u.iter().map(|&v| to_bounded(v, 0.0, DAY_HOURS)).collect();
        let n = self.terms.len();
        let rest = || (0..n).filter(|i| !block.contains(i));
        match (self.accounting, self.aggregate) {
            (Accounting::Myopic(others), agg) => {
                // utilities are separable: the rest of the society is a constant
                let rest_values = rest().map(|i| {
                    let t = &self.terms[i];
                    (t.ln_base(labor[i]) + self.exponent(t) * (labor[i] + others).ln()).exp()
                });
                let rest_agg = match agg {
                    Aggregate::Mean => rest_values.sum::<f64>(),
                    Aggregate::Min => rest_values.fold(f64::INFINITY, f64::min),
                };
                Box::new(FnObjective::new(block.len(), move |b: &[f64]| {
                    let vals = b.iter().zip(&self.terms[block.clone()]).map(|(&v, t)| {
                        let l = to_bounded(v, 0.0, DAY_HOURS);
                        (t.ln_base(l) + self.exponent(t) * (l + others).ln()).exp()
                    });
                    match agg {
                        Aggregate::Mean => (rest_agg + vals.sum::<f64>()) / n as f64,
                        Aggregate::Min => vals.fold(rest_agg, f64::min),
                    }
                }))
            }
            (Accounting::SelfConsistent, agg) => {
                let rest_total: f64 = rest().map(|i| labor[i]).sum();
                let block_total: f64 = labor[block.clone()].iter().sum();
                let ln_total0 = (rest_total + block_total).ln();
                let lines: Vec<(f64, f64)> =
                    rest().map(|i| (self.terms[i].ln_base(labor[i]), self.exponent(&self.terms[i]))).collect();
                let rest_fn = match agg {
                    Aggregate::Mean => RestAggregate::Sum(ExpSum::new(lines, ln_total0)),
                    Aggregate::Min => RestAggregate::Min(LowerEnvelope::new(lines)),
                };
                Box::new(FnObjective::new(block.len(), move |b: &[f64]| {
                    let mut block_labor = [0.0f64; 64];
                    let mut heap_labor = Vec::new();
                    let bl: &mut [f64] = if b.len() <= 64 {
                        &mut block_labor[..b.len()]
                    } else {
                        heap_labor.resize(b.len(), 0.0);
                        &mut heap_labor
                    };
                    let mut total = rest_total;
                    for (slot, &v) in bl.iter_mut().zip(b) {
                        *slot = to_bounded(v, 0.0, DAY_HOURS);
                        total += *slot;
                    }
                    let ln_total = total.ln();
                    let vals = bl
                        .iter()
                        .zip(&self.terms[block.clone()])
                        .map(|(&l, t)| (t.ln_base(l) + self.exponent(t) * ln_total).exp());
                    match &rest_fn {
                        RestAggregate::Sum(s) => (s.eval(ln_total) + vals.sum::<f64>()) / n as f64,
                        RestAggregate::Min(env) => vals.fold(env.min_exp(ln_total), f64::min),
                    }
                }))
            }
        }
    }
}

enum RestAggregate {
    Sum(ExpSum),
    Min(LowerEnvelope),
}

/// `sum_i exp(a_i + e_i s)` for `s` near `s0`, evaluated through the power
/// moments of the slopes when the truncation error is below rounding and
/// directly otherwise.
struct ExpSum {
    lines: Vec<(f64, f64)>,
    s0: f64,
    max_slope: f64,
    moments: Vec<f64>,
}

const MOMENT_TERMS: usize = 40;

impl ExpSum {
    fn new(lines: Vec<(f64, f64)>, s0: f64) -> Self {
        let max_slope = lines.iter().map(|l| l.1).fold(0.0, f64::max);
        let mut moments = vec![0.0; MOMENT_TERMS];
        if lines.len() > 64 {
            for &(a, e) in &lines {
                let mut w = (a + e * s0).exp();
                for m in moments.iter_mut() {
                    *m += w;
                    w *= e;
                }
            }
        }
        Self { lines, s0, max_slope, moments }
    }

    fn eval(&self, s: f64) -> f64 {
        let d = s - self.s0;
        let x = self.max_slope * d.abs();
        if self.lines.len() > 64 && x <= 1.0 {
            // remainder after term m is at most M0 * x^(m+1)/(m+1)! * e^x
            let mut sum = 0.0;
            let mut pow = 1.0;
            let mut bound = std::f64::consts::E;
            for (m, &mom) in self.moments.iter().enumerate() {
                sum += mom * pow;
                pow *= d / (m + 1) as f64;
                bound *= x / (m + 1) as f64;
                if bound <= 1e-17 {
                    return sum;
                }
            }
        }
        self.lines.iter().map(|&(a, e)| (a + e * s).exp()).sum()
    }
}

/// Pointwise minimum of lines `a_i + e_i s`, queried in O(log n).
struct LowerEnvelope {
    /// Hull lines by decreasing slope.
    hull: Vec<(f64, f64)>,
    /// `breaks[j]` is where `hull[j + 1]` takes over from `hull[j]`.
    breaks: Vec<f64>,
}

impl LowerEnvelope {
    fn new(mut lines: Vec<(f64, f64)>) -> Self {
        lines.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.total_cmp(&y.0)));
        lines.dedup_by(|next, kept| next.1 == kept.1);
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(lines.len());
        let cross = |p: (f64, f64), q: (f64, f64)| (q.0 - p.0) / (p.1 - q.1);
        for line in lines {
            while hull.len() >= 2 {
                let k = hull.len();
                if cross(hull[k - 2], line) <= cross(hull[k - 2], hull[k - 1]) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(line);
        }
        let breaks = hull.windows(2).map(|w| cross(w[0], w[1])).collect();
        Self { hull, breaks }
    }

    fn min_exp(&self, s: f64) -> f64 {
        if self.hull.is_empty() {
            return f64::INFINITY;
        }
        let j = self.breaks.partition_point(|&b| b <= s);
        let (a, e) = self.hull[j];
        (a + e * s).exp()
    }
}

fn terms_for(agents: &[&Agent], k_max: u32) -> (Vec<Terms>, Vec<u32>) {
    let fertility: Vec<u32> = agents.iter().map(|a| choose_k(&a.prefs, k_max)).collect();
    let terms = agents
        .iter()
        .zip(&fertility)
        .map(|(a, &k)| Terms {
            alpha: a.prefs.alpha(),
            beta: a.prefs.beta(),
            ln_bracket: fertility_bracket(a.prefs.sigma(), k).ln(),
        })
        .collect();
    (terms, fertility)
}

fn consumptions_for(kind: StrategyKind, labor: &[f64], others_belief: f64, gamma: f64) -> Vec<f64> {
    if kind.accounting_is_self_consistent() {
        let total: f64 = labor.iter().sum();
        labor.iter().map(|&l| economy::consumption_unchecked(l, total, gamma)).collect()
    } else {
        labor.iter().map(|&l| economy::consumption_unchecked(l, l + others_belief, gamma)).collect()
    }
}

fn family_utilities(agents: &[&Agent], labor: &[f64], consumptions: &[f64], fertility: &[u32]) -> Result<Vec<f64>> {
    agents
        .iter()
        .zip(labor)
        .zip(consumptions.iter().zip(fertility))
        .map(|((a, &l), (&c, &k))| economy::family_utility(DAY_HOURS - l, c, &a.prefs, k))
        .collect()
}

fn aggregate_values(kind: StrategyKind, values: &[f64]) -> f64 {
    match kind.aggregate() {
        Aggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregate::Min => values.iter().cloned().fold(f64::INFINITY, f64::min),
    }
}

/// Mean U* (S0, SA) or min U* (Sb, SAb) of a labor vector under the kind's
/// consumption accounting.
pub fn objective_value(
    kind: StrategyKind,
    labor: &[f64],
    agents: &[Agent],
    params: &SocietyParams,
    prev_total_labor: f64,
    myopic_floor_hours: f64,
) -> Result<f64> {
    if labor.len() != agents.len() {
        return Err(Error::param("labor", format!("expected {} entries, got {}", agents.len(), labor.len())));
    }
    if agents.is_empty() {
        return Err(Error::EmptySociety);
    }
    if labor.iter().any(|l| !(0.0..=DAY_HOURS).contains(l)) {
        return Err(Error::Domain("labor must lie in [0, 24]".into()));
    }
    let refs: Vec<&Agent> = agents.iter().collect();
    let fertility: Vec<u32> = refs.iter().map(|a| choose_k(&a.prefs, params.k_max)).collect();
    let others = myopic_others_labor(prev_total_labor, agents.len(), myopic_floor_hours);
    let consumptions = consumptions_for(kind, labor, others, params.gamma);
    let utilities = family_utilities(&refs, labor, &consumptions, &fertility)?;
    Ok(aggregate_values(kind, &utilities))
}

/// Solves one generation's labor and fertility under `kind`.
pub fn allocate(
    kind: StrategyKind,
    agents: &[Agent],
    params: &SocietyParams,
    prev_total_labor: f64,
    opts: &AllocationOptions,
    rng: &mut RngStream,
) -> Result<AllocationResult> {
    allocate_with_start(kind, agents, params, prev_total_labor, opts, rng, None)
}

/// Like [`allocate`], but a planner strategy is warm-started from `warm_labor`
/// (in input order) instead of the Strategy 0 solution.
pub fn allocate_with_start(
    kind: StrategyKind,
    agents: &[Agent],
    params: &SocietyParams,
    prev_total_labor: f64,
    opts: &AllocationOptions,
    rng: &mut RngStream,
    warm_labor: Option<&[f64]>,
) -> Result<AllocationResult> {
    if agents.is_empty() {
        return Err(Error::EmptySociety);
    }
    if !(prev_total_labor >= 0.0) {
        return Err(Error::param("prev_total_labor", "must be >= 0"));
    }
    let others = myopic_others_labor(prev_total_labor, agents.len(), opts.myopic_floor_hours);
    allocate_given_belief(kind, agents, params, others, opts, rng, warm_labor)
}

/// Allocation with the myopic belief about everybody else's labor given
/// directly rather than derived from the previous generation.
pub fn allocate_given_belief(
    kind: StrategyKind,
    agents: &[Agent],
    params: &SocietyParams,
    others: f64,
    opts: &AllocationOptions,
    rng: &mut RngStream,
    warm_labor: Option<&[f64]>,
) -> Result<AllocationResult> {
    if agents.is_empty() {
        return Err(Error::EmptySociety);
    }
    if !(others >= 0.0) {
        return Err(Error::param("others", "must be >= 0"));
    }
    if let Some(w) = warm_labor {
        if w.len() != agents.len() || w.iter().any(|l| !(*l > 0.0 && *l < DAY_HOURS)) {
            return Err(Error::param("warm_labor", "needs one entry strictly inside (0, 24) per agent"));
        }
    }

    // canonical order by id, so the result does not depend on input order
    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by_key(|&i| agents[i].id);
    let sorted: Vec<&Agent> = order.iter().map(|&i| &agents[i]).collect();
    let n = sorted.len();
    let (terms, fertility) = terms_for(&sorted, params.k_max);

    let score = |labor: &[f64]| -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let consumptions = consumptions_for(kind, labor, others, params.gamma);
        let utilities = family_utilities(&sorted, labor, &consumptions, &fertility)?;
        Ok((aggregate_values(kind, &utilities), consumptions, utilities))
    };

    let labor = match kind {
        StrategyKind::S0 => individual_labor(&terms, params.gamma, others, &opts.simplex, rng)?,
        _ => {
            let problem = LaborProblem {
                terms,
                gamma: params.gamma,
                accounting: if kind.accounting_is_self_consistent() {
                    Accounting::SelfConsistent
                } else {
                    Accounting::Myopic(others)
                },
                aggregate: kind.aggregate(),
            };
            let mut starts: Vec<Vec<f64>> = Vec::new();
            if let Some(w) = warm_labor {
                starts.push(order.iter().map(|&i| w[i]).collect());
            } else if opts.warm_start && kind.accounting_is_self_consistent() {
                starts.push(individual_labor(&problem.terms, params.gamma, others, &opts.simplex, rng)?);
            }
            starts.push(vec![DAY_HOURS / 2.0; n]);

            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut consider = |labor: Vec<f64>| -> Result<()> {
                let (v, _, _) = score(&labor)?;
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, labor));
                }
                Ok(())
            };
            for start in starts {
                let u0: Vec<f64> = start.iter().map(|&l| from_bounded(l, 0.0, DAY_HOURS)).collect();
                let r = maximize(&problem, &u0, &opts.simplex, rng)?;
                // the exact start competes too, so a warm start is never lost to
                // round-off in the coordinate transform
                consider(start)?;
                consider(r.argmax.iter().map(|&v| to_bounded(v, 0.0, DAY_HOURS)).collect())?;
            }
            best.expect("at least one start").1
        }
    };

    let (objective_value, consumptions, utilities) = score(&labor)?;
    let mut result = AllocationResult {
        labor: vec![0.0; n],
        fertility: vec![0; n],
        utilities: vec![0.0; n],
        consumptions: vec![0.0; n],
        objective_value,
    };
    for (pos, &i) in order.iter().enumerate() {
        result.labor[i] = labor[pos];
        result.fertility[i] = fertility[pos];
        result.utilities[i] = utilities[pos];
        result.consumptions[i] = consumptions[pos];
    }
    Ok(result)
}

/// Each agent maximises their own U* with myopic consumption.
fn individual_labor(terms: &[Terms], gamma: f64, others: f64, opts: &SimplexOptions, rng: &mut RngStream) -> Result<Vec<f64>> {
    // A value spread of 1e-8 still leaves ~1e-3 h of slack in the argument on
    // these flat optima. One dimension is cheap, so converge to the argument.
    let opts = &SimplexOptions { tolerance: opts.tolerance.min(1e-15), ..*opts };
    terms
        .iter()
        .map(|t| {
            let e = (gamma - 1.0) * t.beta;
            let obj = FnObjective::new(1, |u: &[f64]| {
                let l = to_bounded(u[0], 0.0, DAY_HOURS);
                (t.ln_base(l) + e * (l + others).ln()).exp()
            });
            let r = nelder_mead_max(&obj, &[0.0], opts, rng)?;
            Ok(to_bounded(r.argmax[0], 0.0, DAY_HOURS))
        })
        .collect()
}

/// Single-agent mixed search over labor and a relaxed, continuous number of
/// children, rounded to the better integer neighbour. Kept as an independent
/// check on solving fertility separately.
pub fn joint_search_single(
    agent: &Agent,
    params: &SocietyParams,
    others_labor: f64,
    opts: &SimplexOptions,
    rng: &mut RngStream,
) -> Result<(f64, u32, f64)> {
    let sigma = agent.prefs.sigma();
    let k_max = f64::from(params.k_max);
    let relaxed_bracket = |k: f64| 1.0 / (k + 1.0) + if sigma == 0.0 { 0.0 } else { sigma * (1.0 - sigma.powf(k)) / (1.0 - sigma) };
    let plain = |l: f64| {
        let c = economy::consumption_unchecked(l, l + others_labor, params.gamma);
        economy::cobb_douglas(DAY_HOURS - l, c, agent.prefs.alpha())
    };
    let obj = FnObjective::new(2, |u: &[f64]| {
        let l = to_bounded(u[0], 0.0, DAY_HOURS);
        let k = to_bounded(u[1], -0.5, k_max + 0.5).clamp(0.0, k_max);
        plain(l) * relaxed_bracket(k)
    });
    let r = nelder_mead_max(&obj, &[0.0, 0.0], opts, rng)?;
    let labor = to_bounded(r.argmax[0], 0.0, DAY_HOURS);
    let k_cont = to_bounded(r.argmax[1], -0.5, k_max + 0.5).clamp(0.0, k_max);
    let c = economy::consumption_unchecked(labor, labor + others_labor, params.gamma);
    let value_at = |k: u32| economy::family_utility(DAY_HOURS - labor, c, &agent.prefs, k);
    let (lo, hi) = (k_cont.floor() as u32, k_cont.ceil() as u32);
    let (v_lo, v_hi) = (value_at(lo)?, value_at(hi)?);
    Ok(if v_hi > v_lo { (labor, hi, v_hi) } else { (labor, lo, v_lo) })
}

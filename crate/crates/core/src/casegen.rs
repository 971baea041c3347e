//! Lock-down control of an SIS-type epidemic in a population of `N` users.
//!
//! The state is the number of infected users. In a slot with contact rate
//! `L`, each susceptible user is infected with probability
//! `q = 1 - exp(-L x)` and each infected user recovers with probability `r`,
//! independently, so `x' = x + Bin(N - x, q) - Bin(x, r)`. A typical user
//! survives the slot with probability `exp(-L x)`; the survival probability
//! over the horizon is the expected product of these factors.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::error::{Error, Result};
use crate::model::{Cmdp, CostComponent};
use crate::occupancy::{evaluate_direct, MarkovPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    pub population: usize,
    pub horizon: usize,
    /// Contact rate of each action.
    pub contact_rates: Vec<f64>,
    pub recovery_prob: f64,
    /// Economic cost of each action, per slot.
    pub econ_cost: Vec<f64>,
    /// Weight of the survival probability in the objective; negative values
    /// reward survival.
    pub alpha: f64,
    pub initial_infected: usize,
    /// Optional bound on the expected number of new infections.
    pub infection_bound: Option<f64>,
}

impl Default for EpidemicParams {
    fn default() -> Self {
        EpidemicParams {
            population: 4,
            horizon: 4,
            contact_rates: vec![0.02, 0.1, 0.3],
            recovery_prob: 0.3,
            econ_cost: vec![0.3, 0.1, 0.0],
            alpha: -2.0,
            initial_infected: 1,
            infection_bound: None,
        }
    }
}

impl EpidemicParams {
    fn check(&self, max_states: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Precondition(msg));
        if self.population == 0 || self.horizon == 0 {
            return bad("population and horizon must be positive".into());
        }
        if self.contact_rates.is_empty() {
            return bad("at least one contact rate is required".into());
        }
        if self.contact_rates.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return bad("contact rates must be finite and nonnegative".into());
        }
        if self.econ_cost.len() != self.contact_rates.len() || self.econ_cost.iter().any(|g| !g.is_finite()) {
            return bad("one finite economic cost per contact rate is required".into());
        }
        if !(0.0..=1.0).contains(&self.recovery_prob) {
            return bad(format!("recovery probability {} outside [0, 1]", self.recovery_prob));
        }
        if self.initial_infected > self.population {
            return bad("initial infected count exceeds the population".into());
        }
        if !self.alpha.is_finite() || self.infection_bound.is_some_and(|b| b.is_nan()) {
            return bad("alpha and the infection bound must be numbers".into());
        }
        let size = (self.population + 1) * self.contact_rates.len();
        if size > max_states {
            return Err(Error::SizeLimit(format!("{size} state-action pairs exceed the cap of {max_states}")));
        }
        Ok(())
    }

    /// Action with the largest contact rate.
    pub fn zero_lockdown_action(&self) -> usize {
        argmax(&self.contact_rates)
    }

    /// Action with the smallest contact rate.
    pub fn full_lockdown_action(&self) -> usize {
        argmax(&self.contact_rates.iter().map(|l| -l).collect::<Vec<_>>())
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > values[best] { i } else { best })
}

/// `1 - exp(-rate * infected)`.
pub fn infection_probability(rate: f64, infected: usize) -> f64 {
    -(-rate * infected as f64).exp_m1()
}

pub const DEFAULT_MAX_STATE_ACTIONS: usize = 10_000;

pub fn generate(params: &EpidemicParams) -> Result<Cmdp> {
    generate_with_cap(params, DEFAULT_MAX_STATE_ACTIONS)
}

pub fn generate_with_cap(params: &EpidemicParams, max_state_actions: usize) -> Result<Cmdp> {
    params.check(max_state_actions)?;
    let big_n = params.population;
    let m = big_n + 1;
    let n = params.contact_rates.len();
    let binomial = |p: f64, trials: usize| {
        Binomial::new(p.clamp(0.0, 1.0), trials as u64)
            .map_err(|e| Error::Precondition(format!("binomial({trials}, {p}): {e}")))
    };

    let mut kernel = vec![vec![vec![0.0; m]; n]; m];
    for x in 0..m {
        let recover = binomial(params.recovery_prob, x)?;
        for (a, &rate) in params.contact_rates.iter().enumerate() {
            let infect = binomial(infection_probability(rate, x), big_n - x)?;
            for new in 0..=big_n - x {
                let p_new = infect.pmf(new as u64);
                if p_new == 0.0 {
                    continue;
                }
                for rec in 0..=x {
                    kernel[x][a][x + new - rec] += p_new * recover.pmf(rec as u64);
                }
            }
        }
    }

    let per_action = |value: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<Vec<f64>>> {
        (0..m).map(|x| (0..n).map(|a| vec![value(x, a); m]).collect()).collect()
    };
    let econ = per_action(&|_, a| params.econ_cost[a]);
    let survival = per_action(&|x, a| (-params.contact_rates[a] * x as f64).exp());
    let mut components = vec![CostComponent::time_invariant(params.horizon, econ, survival, params.alpha, None)];
    if let Some(bound) = params.infection_bound {
        let infections = per_action(&|x, a| (big_n - x) as f64 * infection_probability(params.contact_rates[a], x));
        components.push(CostComponent::additive_only(
            params.horizon,
            m,
            n,
            vec![infections; params.horizon],
            Some(bound),
        ));
    }
    Ok(Cmdp {
        num_states: m,
        num_actions: n,
        horizon: params.horizon,
        initial_state: params.initial_infected,
        kernel,
        components,
    })
}

/// Copy of `cmdp` whose objective is the bare product `prod_t f_t`
/// (additive part zeroed, `alpha = 1`), e.g. for Monte-Carlo checks.
pub fn survival_model(cmdp: &Cmdp) -> Cmdp {
    let mut survival_only = cmdp.clone();
    let comp = &mut survival_only.components[0];
    for v in comp.additive.iter_mut().flatten().flatten().flatten() {
        *v = 0.0;
    }
    comp.alpha = 1.0;
    survival_only
}

/// `E[prod_t exp(-L_t X_t)]` under `policy`, i.e. the expected product of
/// the objective's multiplicative factors.
pub fn survival_probability(cmdp: &Cmdp, policy: &MarkovPolicy) -> f64 {
    evaluate_direct(&survival_model(cmdp), policy, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    fn params(rates: Vec<f64>) -> EpidemicParams {
        let k = rates.len();
        EpidemicParams {
            population: 2,
            horizon: 1,
            contact_rates: rates,
            recovery_prob: 0.4,
            econ_cost: vec![0.0; k],
            alpha: 1.0,
            initial_infected: 1,
            infection_bound: Some(1.0),
        }
    }

    #[test]
    fn infection_probability_values() {
        assert_eq!(infection_probability(0.0, 3), 0.0);
        assert_eq!(infection_probability(0.7, 0), 0.0);
        assert!((infection_probability(0.5, 1) - 0.393_469_340_287_366_6).abs() < 1e-15);
    }

    #[test]
    fn generated_model_is_admissible() {
        let model = generate(&EpidemicParams::default()).unwrap();
        assert!(validate(&model).is_empty(), "{:?}", validate(&model));
        assert!(model.components[0].multiplicative.iter().flatten().flatten().flatten().all(|f| *f > 0.0 && *f <= 1.0));
    }

    #[test]
    fn zero_contact_is_pure_recovery() {
        let model = generate(&params(vec![0.0])).unwrap();
        // from x = 1: recover w.p. 0.4, no new infections
        assert!((model.kernel[1][0][0] - 0.4).abs() < 1e-15);
        assert!((model.kernel[1][0][1] - 0.6).abs() < 1e-15);
        assert_eq!(model.kernel[1][0][2], 0.0);
        assert!(model.components[0].multiplicative[0].iter().flatten().flatten().all(|f| *f == 1.0));
        assert_eq!(survival_probability(&model, &MarkovPolicy::uniform(1, 3, 1)), 1.0);
    }

    #[test]
    fn healthy_state_is_absorbing() {
        let model = generate(&params(vec![0.5, 2.0])).unwrap();
        for a in 0..2 {
            assert_eq!(model.kernel[0][a], vec![1.0, 0.0, 0.0]);
            assert_eq!(model.components[0].f(0, 0, a, 0), 1.0);
            assert_eq!(model.components[1].r(0, 0, a, 0), 0.0);
        }
    }

    #[test]
    fn one_step_survival() {
        let mut p = params(vec![0.5]);
        p.recovery_prob = 0.0;
        let model = generate(&p).unwrap();
        let policy = MarkovPolicy::uniform(1, 3, 1);
        assert!((survival_probability(&model, &policy) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn lockdown_actions() {
        let p = params(vec![0.3, 0.05, 0.9]);
        assert_eq!(p.zero_lockdown_action(), 2);
        assert_eq!(p.full_lockdown_action(), 1);
    }

    #[test]
    fn parameter_checks() {
        let mut p = params(vec![0.1]);
        p.initial_infected = 5;
        assert!(generate(&p).is_err());
        let mut p = params(vec![-0.1]);
        p.econ_cost = vec![0.0];
        assert!(generate(&p).is_err());
        assert!(matches!(generate_with_cap(&params(vec![0.1, 0.2]), 5), Err(Error::SizeLimit(_))));
    }
}

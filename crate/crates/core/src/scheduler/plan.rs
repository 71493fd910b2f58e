use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RungPlan {
    /// Configurations trained at this rung.
    pub n: u64,
    /// Cumulative resource each of them has received by the end of the rung.
    pub r: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BracketPlan {
    pub s: u32,
    pub n_gov: u64,
    pub r_gov: u64,
    pub rungs: Vec<RungPlan>,
    /// `⌊(s+1)·n_gov·R / η^s⌋`, the most a bracket may consume.
    pub budget_bound: u64,
}

impl BracketPlan {
    /// Resource consumed when every rung retrains from scratch.
    pub fn fresh_consumption(&self) -> u64 {
        self.rungs.iter().map(|r| r.n * r.r).sum()
    }

    /// Resource consumed when each rung resumes the previous rung's run.
    pub fn resumed_consumption(&self) -> u64 {
        let mut prev = 0;
        self.rungs
            .iter()
            .map(|r| {
                let c = r.n * (r.r - prev);
                prev = r.r;
                c
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    /// `R`, the maximum resource of one configuration in this round.
    pub budget: u64,
    pub s_max: u32,
    /// `B = (s_max + 1)·R`.
    pub bracket_budget: u64,
    pub brackets: Vec<BracketPlan>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPlan {
    pub total: u64,
    pub rounds: u32,
    pub eta: u64,
    pub round_budgets: Vec<u64>,
    pub round_plans: Vec<RoundPlan>,
}

/// `⌊log_η R⌋` in integers.
pub fn floor_log(r: u64, eta: u64) -> u32 {
    let mut s = 0;
    let mut p = eta;
    while p <= r {
        s += 1;
        match p.checked_mul(eta) {
            Some(next) => p = next,
            None => break,
        }
    }
    s
}

fn check_eta(eta: u64) -> Result<()> {
    if eta < 2 {
        return Err(Error::InvalidBudget(format!("eta {eta} must be at least 2")));
    }
    Ok(())
}

/// Materializes every bracket of one round with maximum resource `r`.
pub fn plan_round(r: u64, eta: u64) -> Result<RoundPlan> {
    check_eta(eta)?;
    if r == 0 {
        return Err(Error::InvalidBudget("round budget is zero".into()));
    }
    let s_max = floor_log(r, eta);
    let overflow = || Error::InvalidBudget(format!("budget {r} with eta {eta} overflows"));
    let bracket_budget = (s_max as u64 + 1).checked_mul(r).ok_or_else(overflow)?;
    let mut brackets = Vec::new();
    for s in (0..=s_max).rev() {
        let eta_s = eta.checked_pow(s).ok_or_else(overflow)?;
        let n_gov = (s_max as u64 + 1)
            .checked_mul(eta_s)
            .ok_or_else(overflow)?
            .div_ceil(s as u64 + 1);
        let r_gov = r / eta_s;
        let rungs = (0..=s)
            .map(|j| RungPlan {
                n: n_gov / eta.pow(j),
                r: r * eta.pow(j) / eta_s,
            })
            .collect();
        let budget_bound = ((s as u128 + 1) * n_gov as u128 * r as u128 / eta_s as u128) as u64;
        brackets.push(BracketPlan {
            s,
            n_gov,
            r_gov,
            rungs,
            budget_bound,
        });
    }
    Ok(RoundPlan {
        budget: r,
        s_max,
        bracket_budget,
        brackets,
    })
}

/// Round budgets `T·i/N_r` for `i` in `1..=N_r`, largest first, each with
/// its brackets.
pub fn plan_rounds(total: u64, rounds: u32, eta: u64) -> Result<SearchPlan> {
    check_eta(eta)?;
    if total < eta {
        return Err(Error::InvalidBudget(format!(
            "total budget {total} is below eta {eta}"
        )));
    }
    if rounds == 0 {
        return Err(Error::InvalidBudget("at least one round is required".into()));
    }
    let mut round_budgets: Vec<u64> = (1..=rounds as u64)
        .map(|i| (total as u128 * i as u128 / rounds as u128) as u64)
        .collect();
    round_budgets.reverse();
    if round_budgets.contains(&0) {
        return Err(Error::InvalidBudget(format!(
            "{rounds} rounds leave a zero budget out of {total}"
        )));
    }
    let round_plans = round_budgets
        .iter()
        .map(|&r| plan_round(r, eta))
        .collect::<Result<_>>()?;
    Ok(SearchPlan {
        total,
        rounds,
        eta,
        round_budgets,
        round_plans,
    })
}

//! Fixed candidate sets used by the optimality comparisons.

use std::sync::Arc;

use super::InferenceFn;
use crate::model::ModelRef;

/// Odd functions of `u = x - theta`, centered under every density symmetric
/// about `theta`, plus the model score (which needs `z`).
pub fn location_battery(model: ModelRef) -> Vec<InferenceFn> {
    let u = |x: &[f64], t: f64| x[0] - t;
    vec![
        InferenceFn::score_of(model).renamed("score"),
        InferenceFn::scalar("x-theta", move |x, t| u(x, t)),
        InferenceFn::scalar("3(x-theta)", move |x, t| 3.0 * u(x, t)),
        InferenceFn::scalar("(x-theta)^3", move |x, t| u(x, t).powi(3)),
        InferenceFn::scalar("tanh(x-theta)", move |x, t| u(x, t).tanh()),
        InferenceFn::scalar("(x-theta)+0.5(x-theta)^3", move |x, t| u(x, t) + 0.5 * u(x, t).powi(3)),
        InferenceFn::scalar("(x-theta)/sqrt(1+(x-theta)^2)", move |x, t| u(x, t) / (1.0 + u(x, t).powi(2)).sqrt()),
        InferenceFn::scalar("tanh(5(x-theta))", move |x, t| (5.0 * u(x, t)).tanh()),
    ]
}

/// `pi = theta / (1 + theta)`: the success probability of `x2` given `t`.
fn pi(theta: f64) -> f64 {
    theta / (1.0 + theta)
}

/// `x2 / theta - t / (1 + theta)`, the score of the binomial law of `x2`
/// given `t = x1 + x2`.
pub fn conditional_score() -> InferenceFn {
    InferenceFn::scalar("conditional score", |x, t| x[1] / t - (x[0] + x[1]) / (1.0 + t))
}

/// Functions of a Poisson pair that have mean zero given `t = x1 + x2`, so
/// they are unbiased whatever the nuisance, plus the z-dependent score.
pub fn poisson_pair_battery() -> Vec<InferenceFn> {
    let d = |x: &[f64], t: f64| x[1] - t * x[0];
    vec![
        conditional_score(),
        InferenceFn::with_nuisance("score", 1, |x, t, z| vec![x[1] / t[0] - z[0]]),
        InferenceFn::scalar("x2-theta*x1", move |x, t| d(x, t)),
        InferenceFn::scalar("(x2-theta*x1)/(1+t)", move |x, t| d(x, t) / (1.0 + x[0] + x[1])),
        InferenceFn::scalar("t*(x2-theta*x1)", move |x, t| (x[0] + x[1]) * d(x, t)),
        InferenceFn::scalar("x2^2-E[x2^2|t]", |x, t| {
            let (n, p) = (x[0] + x[1], pi(t));
            x[1] * x[1] - n * p * (1.0 - p) - n * n * p * p
        }),
        InferenceFn::scalar("(x2-t*pi)^3-E[.|t]", |x, t| {
            let (n, p) = (x[0] + x[1], pi(t));
            (x[1] - n * p).powi(3) - n * p * (1.0 - p) * (1.0 - 2.0 * p)
        }),
        InferenceFn::scalar("1{x2=0}-P(x2=0|t)", |x, t| {
            let (n, p) = (x[0] + x[1], pi(t));
            let ind = if x[1] == 0.0 { 1.0 } else { 0.0 };
            ind - (1.0 - p).powf(n)
        }),
    ]
}

/// Battery matched to a builtin model; other models get their score only.
pub fn battery_for(model: ModelRef) -> Vec<InferenceFn> {
    match model.name() {
        "normal-mean" | "symmetric-location" => location_battery(model),
        "poisson-pair" => poisson_pair_battery(),
        _ => vec![InferenceFn::score_of(Arc::clone(&model)).renamed("score")],
    }
}

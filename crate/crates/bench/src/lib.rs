//! Fixtures shared by the benchmarks.

use jumpfb::models::{maser_model, qubit_model, work_weights, MaserParams, QubitParams, QubitProtocol};
use jumpfb::{CountingWeights, FeedbackModel};

/// Feedback maser in the narrow-coupling regime with work weights.
pub fn maser() -> (FeedbackModel, CountingWeights) {
    let p = MaserParams::symmetric(0.3, 8.0, 0.025, 1.0, 8.0, 2.0, true);
    (maser_model(&p).expect("valid maser"), work_weights(&p))
}

/// Feedback-cooled qubit with heat-flow weights.
pub fn qubit() -> (FeedbackModel, CountingWeights) {
    let p = QubitParams {
        nbar: 0.5,
        gamma: 1.0,
        lam: 4.0,
        delta: 0.0,
    };
    let model = qubit_model(&p, QubitProtocol::Feedback).expect("valid qubit");
    (
        model,
        CountingWeights::per_channel(&[-1.0, 1.0]).expect("finite weights"),
    )
}

pub fn grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
        .collect()
}

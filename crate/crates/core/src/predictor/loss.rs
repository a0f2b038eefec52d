/// Pairwise margin ranking loss `max(0, -label * (score_a - score_b) + margin)`.
///
/// `label` is `+1.0` when `a` should score higher than `b`, `-1.0` otherwise.
pub fn ranking_loss(score_a: f64, score_b: f64, label: f64, margin: f64) -> f64 {
    (-label * (score_a - score_b) + margin).max(0.0)
}

/// Subgradient of [`ranking_loss`] with respect to `(score_a, score_b)`.
/// Zero at the hinge point.
pub fn ranking_loss_grad(score_a: f64, score_b: f64, label: f64, margin: f64) -> (f64, f64) {
    if -label * (score_a - score_b) + margin > 0.0 {
        (-label, label)
    } else {
        (0.0, 0.0)
    }
}

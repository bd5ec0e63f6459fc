/// Logistic sigmoid, evaluated on the branch that cannot overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy on logits.
///
/// Per element: `max(z, 0) - z*y + ln(1 + exp(-|z|))`, which is finite for any
/// finite logit. Returns the loss and its gradient with respect to the logits,
/// `(sigmoid(z) - y) / n`.
///
/// Panics if the slices differ in length.
pub fn bce_loss(logits: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(logits.len(), targets.len(), "bce_loss length mismatch");
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - y) / n);
    }
    (total / n, grad)
}

/// Mean squared error and its gradient `2 (pred - target) / n`.
///
/// Panics if the slices differ in length.
pub fn mse_loss(preds: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(preds.len(), targets.len(), "mse_loss length mismatch");
    let n = preds.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(preds.len());
    for (&p, &t) in preds.iter().zip(targets) {
        let d = p - t;
        total += d * d;
        grad.push(2.0 * d / n);
    }
    (total / n, grad)
}
